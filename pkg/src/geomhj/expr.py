"""Exact symbolic scalar expressions.

Everything downstream (forms, fields, brackets, residuals) is built out of
these trees.  The node set is deliberately tiny: numbers (exact rationals or
binary floats), symbols, n-ary sums and products, powers with *constant*
exponent, and the four transcendental heads exp/log/sin/cos.  Simplification
is conservative — constant folding, 0/1 identities, flattening, like-term and
like-factor collection, and the exp/power rewrites needed so that the worked
closed forms in the scenario suite come out *exactly* zero.  Anything fancier
(trig identities, factorization) is out of scope on purpose.

Construction goes through the smart constructors ``add``/``mul``/``pw``/
``fn``; the operator overloads on :class:`Expr` call them, so ``p**2/2 +
q**2/2`` builds a normalized tree.  Trees are immutable and hashable;
evaluation is pure.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction

__all__ = [
    "Expr", "Expression", "Num", "Sym", "Add", "Mul", "Pow", "Fn",
    "num", "sym", "symbols", "add", "mul", "pw", "fn", "sqrt",
    "diff", "evaluate", "substitute", "canonical", "is_zero", "zero_status",
    "equivalent",
    "free_symbols", "to_str", "parse", "compile_expr",
    "Chart", "point_on",
    "ExprError", "ParseError", "UndeclaredSymbolError",
    "UnboundSymbolError", "DomainError",
]

FUNCTIONS = ("exp", "log", "sin", "cos")


class ExprError(Exception):
    """Base class for everything this module raises on purpose."""


class ParseError(ExprError):
    """Malformed source text; ``offset`` is the 0-based position."""

    def __init__(self, message, offset):
        super().__init__("%s (offset %d)" % (message, offset))
        self.offset = offset


class UndeclaredSymbolError(ParseError):
    """A symbol outside chart coordinates and declared parameters."""

    def __init__(self, name, offset):
        ParseError.__init__(self, "undeclared symbol '%s'" % name, offset)
        self.name = name


class UnboundSymbolError(ExprError):
    def __init__(self, name):
        super().__init__("unbound symbol '%s'" % name)
        self.name = name


class DomainError(ExprError):
    """Evaluation left the real domain (log of non-positive, 0^-1, ...).

    Carries the offending subexpression so reports can point at it.
    """

    def __init__(self, reason, subexpr):
        super().__init__("%s in '%s'" % (reason, to_str(subexpr)))
        self.reason = reason
        self.subexpr = subexpr


# ---------------------------------------------------------------------------
# nodes


class Expr:
    __slots__ = ("_hash",)

    # -- operator sugar ------------------------------------------------
    # non-numbers defer (NotImplemented) so forms/fields can absorb the
    # product from their side

    def __add__(self, other):
        if not _expr_like(other):
            return NotImplemented
        return add(self, _as_expr(other))

    def __radd__(self, other):
        if not _expr_like(other):
            return NotImplemented
        return add(_as_expr(other), self)

    def __sub__(self, other):
        if not _expr_like(other):
            return NotImplemented
        return add(self, mul(_NEG_ONE, _as_expr(other)))

    def __rsub__(self, other):
        if not _expr_like(other):
            return NotImplemented
        return add(_as_expr(other), mul(_NEG_ONE, self))

    def __mul__(self, other):
        if not _expr_like(other):
            return NotImplemented
        return mul(self, _as_expr(other))

    def __rmul__(self, other):
        if not _expr_like(other):
            return NotImplemented
        return mul(_as_expr(other), self)

    def __truediv__(self, other):
        if not _expr_like(other):
            return NotImplemented
        return mul(self, pw(_as_expr(other), -1))

    def __rtruediv__(self, other):
        if not _expr_like(other):
            return NotImplemented
        return mul(_as_expr(other), pw(self, -1))

    def __pow__(self, e):
        return pw(self, e)

    def __neg__(self):
        return mul(_NEG_ONE, self)

    def __pos__(self):
        return self

    def __repr__(self):
        return to_str(self)

    def __hash__(self):
        h = getattr(self, "_hash", None)
        if h is None:
            h = self._compute_hash()
            object.__setattr__(self, "_hash", h)
        return h


class Num(Expr):
    """A constant: exact ``Fraction`` or binary float."""

    __slots__ = ("value",)

    def __init__(self, value):
        if isinstance(value, int):
            value = Fraction(value)
        if not isinstance(value, (Fraction, float)):
            raise TypeError("Num wants int/Fraction/float, got %r" % (value,))
        object.__setattr__(self, "value", value)

    def _compute_hash(self):
        return hash(("Num", self.value))

    def __eq__(self, other):
        return (isinstance(other, Num) and type(self.value) is type(other.value)
                and self.value == other.value)

    __hash__ = Expr.__hash__


class Sym(Expr):
    __slots__ = ("name",)

    def __init__(self, name):
        object.__setattr__(self, "name", name)

    def _compute_hash(self):
        return hash(("Sym", self.name))

    def __eq__(self, other):
        return isinstance(other, Sym) and self.name == other.name

    __hash__ = Expr.__hash__


class Add(Expr):
    """Flattened n-ary sum; built only via :func:`add`."""

    __slots__ = ("terms",)

    def __init__(self, terms):
        object.__setattr__(self, "terms", tuple(terms))

    def _compute_hash(self):
        return hash(("Add", self.terms))

    def __eq__(self, other):
        return isinstance(other, Add) and self.terms == other.terms

    __hash__ = Expr.__hash__


class Mul(Expr):
    """Flattened n-ary product; a numeric coefficient, if any, comes first."""

    __slots__ = ("factors",)

    def __init__(self, factors):
        object.__setattr__(self, "factors", tuple(factors))

    def _compute_hash(self):
        return hash(("Mul", self.factors))

    def __eq__(self, other):
        return isinstance(other, Mul) and self.factors == other.factors

    __hash__ = Expr.__hash__


class Pow(Expr):
    """base**exponent with a *constant* exponent (Fraction or float)."""

    __slots__ = ("base", "exponent")

    def __init__(self, base, exponent):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exponent", exponent)

    def _compute_hash(self):
        return hash(("Pow", self.base, self.exponent))

    def __eq__(self, other):
        return (isinstance(other, Pow) and self.exponent == other.exponent
                and type(self.exponent) is type(other.exponent)
                and self.base == other.base)

    __hash__ = Expr.__hash__


class Fn(Expr):
    __slots__ = ("name", "arg")

    def __init__(self, name, arg):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "arg", arg)

    def _compute_hash(self):
        return hash(("Fn", self.name, self.arg))

    def __eq__(self, other):
        return (isinstance(other, Fn) and self.name == other.name
                and self.arg == other.arg)

    __hash__ = Expr.__hash__


Expression = Expr  # public alias

_ZERO = Num(0)
_ONE = Num(1)
_NEG_ONE = Num(-1)


def _expr_like(x):
    return isinstance(x, (Expr, int, float, Fraction))


def _as_expr(x):
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, Fraction)):
        return Num(x)
    raise TypeError("cannot treat %r as an expression" % (x,))


def num(v):
    return Num(v)


def sym(name):
    return Sym(name)


def symbols(names):
    """symbols("q p z") -> (Sym('q'), Sym('p'), Sym('z'))"""
    return tuple(Sym(n) for n in names.split())


# ---------------------------------------------------------------------------
# ordering — a deterministic total order used to sort commutative operands.


def _key(e):
    if isinstance(e, Num):
        return (0, "", (), float(e.value), repr(e.value))
    if isinstance(e, Sym):
        return (1, e.name, (), 0.0, "")
    if isinstance(e, Pow):
        return (2, "", (_key(e.base),), float(e.exponent), repr(e.exponent))
    if isinstance(e, Fn):
        return (3, e.name, (_key(e.arg),), 0.0, "")
    if isinstance(e, Mul):
        return (4, "", tuple(_key(f) for f in e.factors), 0.0, "")
    if isinstance(e, Add):
        return (5, "", tuple(_key(t) for t in e.terms), 0.0, "")
    raise TypeError(e)


# ---------------------------------------------------------------------------
# smart constructors


def _coeff_split(t):
    """Split a term into (numeric coefficient, symbolic part or None)."""
    if isinstance(t, Num):
        return t.value, None
    if isinstance(t, Mul) and isinstance(t.factors[0], Num):
        rest = t.factors[1:]
        body = rest[0] if len(rest) == 1 else Mul(rest)
        return t.factors[0].value, body
    return Fraction(1), t


def add(*terms):
    """Sum with flattening, constant folding and like-term collection."""
    const = Fraction(0)
    bykey = {}   # _key(body) -> [coeff, body]
    stack = list(terms)
    stack.reverse()
    while stack:
        t = _as_expr(stack.pop())
        if isinstance(t, Add):
            stack.extend(reversed(t.terms))
            continue
        c, body = _coeff_split(t)
        if body is None:
            const = const + c if _both_exact(const, c) else _fsum(const, c)
            continue
        k = _key(body)
        if k in bykey:
            old = bykey[k][0]
            bykey[k][0] = old + c if _both_exact(old, c) else _fsum(old, c)
        else:
            bykey[k] = [c, body]
    out = []
    for k in sorted(bykey):
        c, body = bykey[k]
        if c == 0:
            continue
        out.append(body if c == 1 else mul(Num(c), body))
    if const != 0 or not out:
        out.insert(0, Num(const))
    if len(out) == 1:
        return out[0]
    out.sort(key=_key)
    return Add(out)


def _both_exact(a, b):
    return not (isinstance(a, float) or isinstance(b, float))


def _fsum(a, b):
    return float(a) + float(b)


def _fprod(a, b):
    return float(a) * float(b)


def mul(*factors):
    """Product with flattening, coefficient folding and exponent collection.

    Equal bases merge by summing exponents (so sqrt(w)*sqrt(w) -> w and
    w^(1/2)*w^(-1/2) -> 1), and exp factors merge by summing arguments
    (exp(a)*exp(b) -> exp(a+b)); both rewrites are load-bearing for the
    closed-form scenario checks.
    """
    coeff = Fraction(1)
    bases = {}      # _key(base) -> [base, exponent]
    exp_args = []   # arguments of exp factors, to be merged
    stack = list(factors)
    stack.reverse()
    while stack:
        f = _as_expr(stack.pop())
        if isinstance(f, Mul):
            stack.extend(reversed(f.factors))
            continue
        if isinstance(f, Num):
            v = f.value
            if v == 0:
                return _ZERO
            coeff = coeff * v if _both_exact(coeff, v) else _fprod(coeff, v)
            continue
        if isinstance(f, Fn) and f.name == "exp":
            exp_args.append(f.arg)
            continue
        if isinstance(f, Pow):
            base, e = f.base, f.exponent
        else:
            base, e = f, Fraction(1)
        k = _key(base)
        if k in bases:
            old = bases[k][1]
            bases[k][1] = old + e if _both_exact(old, e) else _fsum(old, e)
        else:
            bases[k] = [base, e]
    out = []
    rerun = False
    for k in sorted(bases):
        base, e = bases[k]
        piece = pw(base, e)
        if isinstance(piece, Num):
            v = piece.value
            if v == 0:
                return _ZERO
            coeff = coeff * v if _both_exact(coeff, v) else _fprod(coeff, v)
        elif isinstance(piece, Fn) and piece.name == "exp":
            exp_args.append(piece.arg)
        elif isinstance(piece, Mul):
            # exponent merging distributed a power over an inner product;
            # run the whole normalization again over the flattened pieces
            rerun = True
            out.append(piece)
        else:
            out.append(piece)
    if exp_args:
        merged = fn("exp", add(*exp_args))
        if isinstance(merged, Num):
            coeff = (coeff * merged.value if _both_exact(coeff, merged.value)
                     else _fprod(coeff, merged.value))
        else:
            out.append(merged)
    if coeff == 0:
        return _ZERO
    if rerun:
        return mul(Num(coeff), *out)
    if not out:
        return Num(coeff)
    if (len(out) == 1 and isinstance(out[0], Add)
            and (coeff != 1 or isinstance(coeff, float))):
        # numbers distribute over bare sums: keeps -(a+b) cancellable
        return add(*(mul(Num(coeff), t) for t in out[0].terms))
    out.sort(key=_key)
    if coeff != 1:
        out.insert(0, Num(coeff))
    elif isinstance(coeff, float):
        out.insert(0, Num(coeff))  # keep 1.0 — float contamination is real
    if len(out) == 1:
        return out[0]
    return Mul(out)


def _norm_exponent(e):
    if isinstance(e, Num):
        e = e.value
    if isinstance(e, int):
        return Fraction(e)
    if isinstance(e, Fraction):
        return e
    if isinstance(e, float):
        if e.is_integer():
            return Fraction(int(e))
        return e
    if isinstance(e, Expr):
        raise ExprError("pow exponent must be a constant; rewrite f^g as "
                        "exp(g*log(f))")
    raise TypeError("bad exponent %r" % (e,))


def _iroot(n, k):
    """Exact integer k-th root of n >= 0, or None."""
    if n in (0, 1):
        return n
    r = round(n ** (1.0 / k))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand ** k == n:
            return cand
    return None


def pw(base, e):
    """Power with constant exponent; applies the safe rewrites only."""
    base = _as_expr(base)
    e = _norm_exponent(e)
    if e == 0:
        return _ONE
    if e == 1:
        return base
    is_int = isinstance(e, Fraction) and e.denominator == 1
    if isinstance(base, Num):
        v = base.value
        if isinstance(v, float):
            try:
                r = v ** float(e)
            except (ValueError, OverflowError, ZeroDivisionError):
                return Pow(base, e)
            if isinstance(r, float) and math.isfinite(r):
                return Num(r)
            return Pow(base, e)
        # exact rational base
        if is_int:
            n = int(e)
            if v == 0 and n < 0:
                return Pow(base, e)   # 0^-n surfaces as a domain error later
            return Num(v ** n)
        if isinstance(e, Fraction) and v >= 0:
            rn = _iroot(v.numerator, e.denominator)
            rd = _iroot(v.denominator, e.denominator)
            if rn is not None and rd is not None:
                return Num(Fraction(rn, rd) ** e.numerator)
        if isinstance(e, float) and v >= 0:
            try:
                r = float(v) ** e
            except OverflowError:
                return Pow(base, e)
            if math.isfinite(r):
                return Num(r)
        return Pow(base, e)
    if isinstance(base, Pow):
        if is_int:
            return pw(base.base, _scale_exponent(base.exponent, e))
        return Pow(base, e)
    if isinstance(base, Fn) and base.name == "exp":
        return fn("exp", mul(Num(e), base.arg))
    if isinstance(base, Mul) and is_int:
        return mul(*(pw(f, e) for f in base.factors))
    return Pow(base, e)


def _scale_exponent(e1, e2):
    if isinstance(e1, float) or isinstance(e2, float):
        return float(e1) * float(e2)
    return e1 * e2


def fn(name, arg):
    if name == "sqrt":
        return pw(arg, Fraction(1, 2))
    if name not in FUNCTIONS:
        raise ExprError("unknown function '%s'" % name)
    arg = _as_expr(arg)
    if isinstance(arg, Num):
        v = arg.value
        if name == "exp" and v == 0:
            return _ONE
        if name == "log" and v == 1:
            return _ZERO
        if name == "sin" and v == 0:
            return _ZERO
        if name == "cos" and v == 0:
            return _ONE
        if isinstance(v, float):
            try:
                r = getattr(math, name)(v)
            except (ValueError, OverflowError):
                return Fn(name, arg)
            return Num(r)
    if name == "log" and isinstance(arg, Fn) and arg.name == "exp":
        return arg.arg
    if name == "exp" and isinstance(arg, Fn) and arg.name == "log":
        return arg.arg
    return Fn(name, arg)


def sqrt(x):
    return pw(x, Fraction(1, 2))


# ---------------------------------------------------------------------------
# calculus / evaluation


def diff(e, x):
    """Exact partial derivative with respect to the symbol named ``x``."""
    if isinstance(x, Sym):
        x = x.name
    if isinstance(e, Num):
        return _ZERO
    if isinstance(e, Sym):
        return _ONE if e.name == x else _ZERO
    if isinstance(e, Add):
        return add(*(diff(t, x) for t in e.terms))
    if isinstance(e, Mul):
        parts = []
        fs = e.factors
        for i, f in enumerate(fs):
            df = diff(f, x)
            if df is _ZERO or (isinstance(df, Num) and df.value == 0):
                continue
            parts.append(mul(*(fs[:i] + (df,) + fs[i + 1:])))
        return add(*parts) if parts else _ZERO
    if isinstance(e, Pow):
        db = diff(e.base, x)
        if isinstance(db, Num) and db.value == 0:
            return _ZERO
        return mul(Num(e.exponent), pw(e.base, _shift_exponent(e.exponent)),
                   db)
    if isinstance(e, Fn):
        da = diff(e.arg, x)
        if isinstance(da, Num) and da.value == 0:
            return _ZERO
        if e.name == "exp":
            outer = fn("exp", e.arg)
        elif e.name == "log":
            outer = pw(e.arg, -1)
        elif e.name == "sin":
            outer = fn("cos", e.arg)
        else:  # cos
            outer = mul(_NEG_ONE, fn("sin", e.arg))
        return mul(outer, da)
    raise TypeError(e)


def _shift_exponent(e):
    if isinstance(e, float):
        return e - 1.0
    return e - 1


def free_symbols(e):
    out = set()
    stack = [e]
    while stack:
        t = stack.pop()
        if isinstance(t, Sym):
            out.add(t.name)
        elif isinstance(t, Add):
            stack.extend(t.terms)
        elif isinstance(t, Mul):
            stack.extend(t.factors)
        elif isinstance(t, Pow):
            stack.append(t.base)
        elif isinstance(t, Fn):
            stack.append(t.arg)
    return frozenset(out)


def evaluate(e, pt, params=None):
    """Evaluate at a point (a name->number map); params, if given, are merged.

    NaN/Inf is an error, not a value; raises :class:`DomainError` with the
    offending subexpression, or :class:`UnboundSymbolError`.
    """
    env = dict(pt)
    if params:
        env.update(params)
    return _eval(e, env)


def _eval(e, env):
    if isinstance(e, Num):
        return float(e.value)
    if isinstance(e, Sym):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnboundSymbolError(e.name) from None
    if isinstance(e, Add):
        return math.fsum(_eval(t, env) for t in e.terms)
    if isinstance(e, Mul):
        r = 1.0
        for f in e.factors:
            r *= _eval(f, env)
        if math.isinf(r) or math.isnan(r):
            raise DomainError("non-finite product", e)
        return r
    if isinstance(e, Pow):
        b = _eval(e.base, env)
        ex = float(e.exponent)
        if b == 0.0 and ex < 0:
            raise DomainError("division by zero", e)
        if b < 0 and not float(ex).is_integer():
            raise DomainError("fractional power of a negative", e)
        try:
            r = b ** ex
        except (OverflowError, ValueError, ZeroDivisionError):
            raise DomainError("power left the real domain", e) from None
        if math.isinf(r) or math.isnan(r):
            raise DomainError("non-finite power", e)
        return r
    if isinstance(e, Fn):
        a = _eval(e.arg, env)
        if e.name == "log" and a <= 0:
            raise DomainError("log of a non-positive value", e)
        try:
            r = getattr(math, e.name)(a)
        except (OverflowError, ValueError):
            raise DomainError("function left the real domain", e) from None
        if math.isinf(r) or math.isnan(r):
            raise DomainError("non-finite value", e)
        return r
    raise TypeError(e)


def substitute(e, bindings):
    """Simultaneous substitution symbol-name -> Expression (or number).

    Rebuilds through the smart constructors, so compositions simplify as they
    are formed (this is what makes H∘γ exact for the closed-form sections).
    """
    b = {k: _as_expr(v) for k, v in bindings.items()}
    return _subst(e, b)


def _subst(e, b):
    if isinstance(e, Num):
        return e
    if isinstance(e, Sym):
        return b.get(e.name, e)
    if isinstance(e, Add):
        return add(*(_subst(t, b) for t in e.terms))
    if isinstance(e, Mul):
        return mul(*(_subst(f, b) for f in e.factors))
    if isinstance(e, Pow):
        return pw(_subst(e.base, b), e.exponent)
    if isinstance(e, Fn):
        return fn(e.name, _subst(e.arg, b))
    raise TypeError(e)


# ---------------------------------------------------------------------------
# canonical polynomial form and zero-testing


_EXPAND_POW_CAP = 16


def canonical(e):
    """Expanded normal form: a sum of monomials over opaque atoms.

    Polynomial structure is fully distributed and collected; Fn applications,
    fractional powers and negative powers of sums stay as atoms (with
    canonical innards).  Equal expressions that differ by polynomial identity
    map to the same tree.
    """
    if isinstance(e, (Num, Sym)):
        return e
    if isinstance(e, Add):
        return add(*(canonical(t) for t in e.terms))
    if isinstance(e, Mul):
        return _expand_product([canonical(f) for f in e.factors])
    if isinstance(e, Pow):
        cb = canonical(e.base)
        ex = e.exponent
        if (isinstance(ex, Fraction) and ex.denominator == 1 and ex > 1
                and isinstance(cb, Add) and int(ex) <= _EXPAND_POW_CAP):
            out = cb
            for _ in range(int(ex) - 1):
                out = _expand_product([out, cb])
            return out
        return pw(cb, ex)
    if isinstance(e, Fn):
        return fn(e.name, canonical(e.arg))
    raise TypeError(e)


def _expand_product(factors):
    acc = [_ONE]
    for f in factors:
        ts = f.terms if isinstance(f, Add) else (f,)
        acc = [mul(a, t) for a in acc for t in ts]
        # products of sums re-flatten: distribute any Add that mul() produced
        flat = []
        for a in acc:
            if isinstance(a, Add):
                flat.extend(a.terms)
            else:
                flat.append(a)
        acc = flat
    return add(*acc)


def _denominator_atoms(e):
    """Bases raised to negative powers anywhere at the top product level."""
    need = {}
    terms = e.terms if isinstance(e, Add) else (e,)
    for t in terms:
        factors = t.factors if isinstance(t, Mul) else (t,)
        for f in factors:
            if isinstance(f, Pow):
                ex = f.exponent
                if (isinstance(ex, Fraction) and ex < 0):
                    k = _key(f.base)
                    cur = need.get(k)
                    if cur is None or -ex > cur[1]:
                        need[k] = (f.base, -ex)
    return [need[k] for k in sorted(need)]


def is_zero(e, seed=42, points=20, tol=1e-9, box=None):
    """Decide whether ``e`` is identically zero (bool; see zero_status)."""
    return zero_status(e, seed=seed, points=points, tol=tol, box=box) != "no"


def zero_status(e, seed=42, points=20, tol=1e-9, box=None):
    """Classify an expression: "symbolic" / "numeric" / "no".

    Symbolic first: canonical form, then bounded denominator-clearing rounds
    (multiply through by the negative-power atoms and re-expand).  If algebra
    does not settle it, fall back to evaluation at seeded sample points —
    uniform over ``box`` (name -> (lo, hi), default (0.25, 1.75)) — with
    tolerance ``tol`` times a conditioning scale.
    """
    c = canonical(e)
    for _ in range(4):
        if isinstance(c, Num):
            return "symbolic" if c.value == 0 else "no"
        dens = _denominator_atoms(c)
        if not dens:
            break
        multiplier = mul(*(pw(b, p) for b, p in dens))
        c2 = canonical(mul(multiplier, c))
        if c2 == c:
            break
        c = c2
    if isinstance(c, Num):
        return "symbolic" if c.value == 0 else "no"
    if _numerically_zero(c, seed, points, tol, box):
        return "numeric"
    return "no"


def _numerically_zero(c, seed, points, tol, box=None):
    names = sorted(free_symbols(c))
    if not names:
        try:
            return abs(_eval(c, {})) <= tol
        except DomainError:
            return False
    rng = random.Random(seed)
    box = box or {}
    ranges = {n: box.get(n, (0.25, 1.75)) for n in names}
    terms = c.terms if isinstance(c, Add) else (c,)
    good = 0
    for _ in range(points):
        for _attempt in range(60):
            env = {n: rng.uniform(*ranges[n]) for n in names}
            try:
                v = _eval(c, env)
                scale = 1.0 + math.fsum(abs(_eval(t, env)) for t in terms)
            except (DomainError, UnboundSymbolError):
                continue
            if abs(v) > tol * scale:
                return False
            good += 1
            break
    return good >= max(5, points // 2)


def equivalent(a, b, seed=42):
    return is_zero(add(_as_expr(a), mul(_NEG_ONE, _as_expr(b))), seed=seed)


# ---------------------------------------------------------------------------
# parsing


class _Token:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind, text, pos):
        self.kind = kind
        self.text = text
        self.pos = pos


def _tokenize(src):
    toks = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            seen_dot = seen_exp = False
            while j < n:
                c = src[j]
                if c.isdigit():
                    j += 1
                elif c == "." and not seen_dot and not seen_exp:
                    seen_dot = True
                    j += 1
                elif c in "eE" and not seen_exp and j + 1 < n and (
                        src[j + 1].isdigit() or
                        (src[j + 1] in "+-" and j + 2 < n and src[j + 2].isdigit())):
                    seen_exp = True
                    j += 2 if src[j + 1] in "+-" else 1
                else:
                    break
            toks.append(_Token("num", src[i:j], i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(_Token("name", src[i:j], i))
            i = j
            continue
        if ch in "+-*/^()":
            toks.append(_Token(ch, ch, i))
            i += 1
            continue
        raise ParseError("unexpected character '%s'" % ch, i)
    toks.append(_Token("end", "", n))
    return toks


class _Parser:
    def __init__(self, toks, allowed):
        self.toks = toks
        self.i = 0
        self.allowed = allowed  # None means anything goes

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expr(self):
        e = self.term()
        while self.peek().kind in ("+", "-"):
            op = self.take().kind
            rhs = self.term()
            e = add(e, rhs) if op == "+" else add(e, mul(_NEG_ONE, rhs))
        return e

    def term(self):
        e = self.unary()
        while self.peek().kind in ("*", "/"):
            op = self.take().kind
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else mul(e, pw(rhs, -1))
        return e

    def unary(self):
        t = self.peek()
        if t.kind == "-":
            self.take()
            return mul(_NEG_ONE, self.unary())
        if t.kind == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().kind == "^":
            self.take()
            expo = self.unary()
            if isinstance(expo, Num):
                return pw(base, expo.value)
            # general f^g: rewrite through exp/log (keeps the rule set total)
            return fn("exp", mul(expo, fn("log", base)))
        return base

    def atom(self):
        t = self.take()
        if t.kind == "num":
            if "." in t.text or "e" in t.text or "E" in t.text:
                return Num(float(t.text))
            return Num(Fraction(int(t.text)))
        if t.kind == "(":
            e = self.expr()
            self._expect(")")
            return e
        if t.kind == "name":
            if self.peek().kind == "(":
                if t.text not in FUNCTIONS and t.text != "sqrt":
                    raise ParseError("unknown function '%s'" % t.text, t.pos)
                self.take()
                arg = self.expr()
                self._expect(")")
                return fn(t.text, arg)
            if t.text in FUNCTIONS or t.text == "sqrt":
                raise ParseError("function '%s' needs an argument list"
                                 % t.text, t.pos)
            if self.allowed is not None and t.text not in self.allowed:
                raise UndeclaredSymbolError(t.text, t.pos)
            return Sym(t.text)
        raise ParseError("expected a value", t.pos)

    def _expect(self, kind):
        t = self.take()
        if t.kind != kind:
            raise ParseError("expected '%s'" % kind, t.pos)


def parse(src, chart=None, params=()):
    """Parse infix source over a chart's coordinates plus declared params.

    ``chart`` may be a :class:`Chart`, an iterable of names, or None (any
    symbol allowed — internal use).  Undeclared symbols and syntax errors
    raise with a 0-based offset.
    """
    if chart is None:
        allowed = None
    else:
        coords = chart.coords if isinstance(chart, Chart) else tuple(chart)
        allowed = set(coords) | set(params)
    p = _Parser(_tokenize(src), allowed)
    e = p.expr()
    t = p.peek()
    if t.kind != "end":
        raise ParseError("unexpected trailing input", t.pos)
    return e


# ---------------------------------------------------------------------------
# printing (round-trips through parse)


_PREC_ADD, _PREC_MUL, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4


def to_str(e):
    return _print(e, _PREC_ADD)


def _print(e, ctx):
    s, prec = _render(e)
    if prec < ctx:
        return "(" + s + ")"
    return s


def _render(e):
    if isinstance(e, Num):
        v = e.value
        if isinstance(v, float):
            return repr(v), (_PREC_ATOM if v >= 0 else _PREC_ADD)
        if v.denominator == 1:
            return (str(v.numerator),
                    _PREC_ATOM if v >= 0 else _PREC_ADD)
        s = "%d/%d" % (v.numerator, v.denominator)
        return s, (_PREC_MUL if v >= 0 else _PREC_ADD)
    if isinstance(e, Sym):
        return e.name, _PREC_ATOM
    if isinstance(e, Fn):
        return "%s(%s)" % (e.name, to_str(e.arg)), _PREC_ATOM
    if isinstance(e, Pow):
        ex = e.exponent
        if ex == Fraction(1, 2) and isinstance(ex, Fraction):
            return "sqrt(%s)" % to_str(e.base), _PREC_ATOM
        base = _print(e.base, _PREC_ATOM)
        if isinstance(ex, Fraction) and ex.denominator == 1:
            if ex > 0:
                return "%s^%d" % (base, int(ex)), _PREC_POW
            return "%s^(%d)" % (base, int(ex)), _PREC_POW
        if isinstance(ex, float):
            return "%s^(%s)" % (base, repr(ex)), _PREC_POW
        return ("%s^(%d/%d)" % (base, ex.numerator, ex.denominator),
                _PREC_POW)
    if isinstance(e, Mul):
        return _render_product(e.factors)
    if isinstance(e, Add):
        parts = []
        for i, t in enumerate(e.terms):
            c, _body = _coeff_split(t)
            if i > 0 and c < 0:
                parts.append(" - " + _print(_negate(t), _PREC_MUL))
            elif i > 0:
                parts.append(" + " + _print(t, _PREC_MUL))
            else:
                parts.append(_print(t, _PREC_MUL if c >= 0 else _PREC_ADD))
        return "".join(parts), _PREC_ADD
    raise TypeError(e)


def _negate(t):
    return mul(_NEG_ONE, t)


def _render_product(factors):
    neg = False
    numer, denom = [], []
    for f in factors:
        if isinstance(f, Num):
            v = f.value
            if isinstance(v, Fraction):
                if v < 0:
                    neg = True
                    v = -v
                if v.numerator != 1:
                    numer.append(_print(Num(v.numerator), _PREC_MUL))
                if v.denominator != 1:
                    denom.append(_print(Num(v.denominator), _PREC_POW))
            else:
                if v < 0:
                    neg = True
                    v = -v
                numer.append(_print(Num(v), _PREC_MUL))
        elif (isinstance(f, Pow) and isinstance(f.exponent, Fraction)
                and f.exponent < 0):
            inv = pw(f.base, -f.exponent)
            denom.append(_print(inv, _PREC_POW))
        else:
            numer.append(_print(f, _PREC_MUL))
    if not numer:
        numer = ["1"]
    s = "*".join(numer)
    for d in denom:
        s += "/" + d
    if neg:
        return "-" + s, _PREC_ADD
    return s, _PREC_MUL


# ---------------------------------------------------------------------------
# compilation (used by the integrator's hot loop)


def compile_expr(e, order):
    """Compile to a Python callable f(values_sequence) -> float.

    ``order`` fixes the coordinate layout.  Domain violations surface as the
    interpreter's ValueError/ZeroDivisionError/OverflowError; callers that
    need typed errors keep using :func:`evaluate`.
    """
    index = {name: i for i, name in enumerate(order)}
    src = _pycode(e, index)
    return eval("lambda _v: " + src, {"_m": math})


def _pycode(e, index):
    if isinstance(e, Num):
        v = e.value
        if isinstance(v, float):
            return repr(v)
        if v.denominator == 1:
            return "(%d.0)" % v.numerator
        return "(%d/%d)" % (v.numerator, v.denominator)
    if isinstance(e, Sym):
        try:
            return "_v[%d]" % index[e.name]
        except KeyError:
            raise UnboundSymbolError(e.name) from None
    if isinstance(e, Add):
        return "(" + "+".join(_pycode(t, index) for t in e.terms) + ")"
    if isinstance(e, Mul):
        return "(" + "*".join(_pycode(f, index) for f in e.factors) + ")"
    if isinstance(e, Pow):
        ex = e.exponent
        if isinstance(ex, Fraction) and ex.denominator == 1:
            return "(%s**(%d))" % (_pycode(e.base, index), int(ex))
        if isinstance(ex, Fraction):
            return "(%s**(%d/%d))" % (_pycode(e.base, index),
                                      ex.numerator, ex.denominator)
        return "(%s**(%s))" % (_pycode(e.base, index), repr(ex))
    if isinstance(e, Fn):
        return "_m.%s(%s)" % (e.name, _pycode(e.arg, index))
    raise TypeError(e)


# ---------------------------------------------------------------------------
# charts and points


class Chart:
    """An ordered list of coordinate names; the space fields live on."""

    def __init__(self, name, coords):
        coords = tuple(coords.split() if isinstance(coords, str) else coords)
        if len(coords) < 1:
            raise ValueError("chart needs at least one coordinate")
        if len(set(coords)) != len(coords):
            raise ValueError("duplicate coordinate names in chart %r" % name)
        self.name = name
        self.coords = coords

    @property
    def dim(self):
        return len(self.coords)

    def index(self, coord):
        return self.coords.index(coord)

    def syms(self):
        return tuple(Sym(c) for c in self.coords)

    def __eq__(self, other):
        return (isinstance(other, Chart) and self.name == other.name
                and self.coords == other.coords)

    def __hash__(self):
        return hash((self.name, self.coords))

    def __repr__(self):
        return "Chart(%r, %r)" % (self.name, " ".join(self.coords))


def point_on(chart, values):
    """Validate and return a point (name -> float) on the chart."""
    pt = {k: float(v) for k, v in values.items()}
    if set(pt) != set(chart.coords):
        missing = set(chart.coords) - set(pt)
        extra = set(pt) - set(chart.coords)
        raise ValueError("point/chart mismatch: missing %s, extra %s"
                         % (sorted(missing), sorted(extra)))
    return pt

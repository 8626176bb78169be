"""Coordinate exterior calculus and multivector algebra on a chart.

Differential forms and multivector fields are stored sparsely: a map from
strictly increasing index tuples to scalar expressions, with sign
normalization at insertion.  Vector fields carry one component per
coordinate.  Everything is exact symbolic algebra on top of ``expr``;
nothing here samples points except the explicit ``*_at`` evaluators.
"""

from __future__ import annotations

from fractions import Fraction

from .expr import (
    Chart, Expr, Num, add, mul, pw, _as_expr, _expr_like,
    diff, substitute, evaluate, is_zero, to_str,
)

__all__ = [
    "KForm", "OneForm", "TwoForm", "Multivector", "Bivector", "Trivector",
    "VectorField", "SectionMap",
    "kform", "one_form", "two_form", "scalar_kform", "multivector",
    "vector_field", "zero_vector_field", "coordinate_field",
    "differential", "wedge", "exterior_derivative", "interior_product",
    "lie_bracket", "lie_derivative", "schouten",
    "musical_flat", "musical_sharp", "vertical_lift",
    "pullback", "pushforward",
    "determinant", "solve_linear", "form_matrix", "matrix_at",
    "ChartMismatchError", "DegenerateFormError",
]

_ZERO = Num(0)
_ONE = Num(1)


class ChartMismatchError(ValueError):
    pass


class DegenerateFormError(ValueError):
    def __init__(self, message, det=None, point=None):
        if det is not None:
            message += " (determinant %s)" % (to_str(det) if isinstance(det, Expr) else det)
        if point is not None:
            message += " at %s" % (point,)
        super().__init__(message)
        self.det = det
        self.point = point


def _sort_sign(idx):
    """Sort an index tuple; return (sorted tuple, permutation sign).

    Duplicate indices mean the component vanishes: returns (None, 0).
    """
    idx = list(idx)
    sign = 1
    for i in range(1, len(idx)):
        j = i
        while j > 0 and idx[j - 1] > idx[j]:
            idx[j - 1], idx[j] = idx[j], idx[j - 1]
            sign = -sign
            j -= 1
    for a, b in zip(idx, idx[1:]):
        if a == b:
            return None, 0
    return tuple(idx), sign


def _is_strict_zero(e):
    return isinstance(e, Num) and e.value == 0


class _Tensor:
    """Shared machinery of KForm (covariant) and Multivector (contravariant)."""

    __slots__ = ("chart", "degree", "comps")

    def __init__(self, chart, degree, comps):
        # degrees above the dimension are allowed but necessarily zero
        # (no strictly increasing index tuple exists), so that d of a
        # top-degree form is the zero form rather than an error
        if degree < 0:
            raise ValueError("negative degree")
        norm = {}
        for idx, e in comps.items():
            idx = tuple(idx)
            if len(idx) != degree:
                raise ValueError("index %r does not match degree %d"
                                 % (idx, degree))
            for i in idx:
                if not 0 <= i < chart.dim:
                    raise ValueError("index %r out of chart range" % (idx,))
            sidx, sign = _sort_sign(idx)
            if sign == 0:
                continue
            e = _as_expr(e) if sign == 1 else mul(Num(-1), _as_expr(e))
            if sidx in norm:
                norm[sidx] = add(norm[sidx], e)
            else:
                norm[sidx] = e
        self.chart = chart
        self.degree = degree
        self.comps = {k: v for k, v in norm.items() if not _is_strict_zero(v)}

    # components ---------------------------------------------------------
    def comp(self, idx):
        """Component for any index tuple, with the antisymmetry sign."""
        sidx, sign = _sort_sign(idx)
        if sign == 0:
            return _ZERO
        e = self.comps.get(sidx, _ZERO)
        return e if sign == 1 else mul(Num(-1), e)

    def scalar(self):
        if self.degree != 0:
            raise ValueError("not a degree-0 object")
        return self.comps.get((), _ZERO)

    def is_zero(self, seed=42):
        return all(is_zero(e, seed=seed) for e in self.comps.values())

    def _base_cls(self):
        return KForm if isinstance(self, KForm) else Multivector

    def map_comps(self, f):
        return self._base_cls()(self.chart, self.degree,
                                {k: f(v) for k, v in self.comps.items()})

    def comps_at(self, pt, params=None):
        return {k: evaluate(v, pt, params) for k, v in self.comps.items()}

    # algebra --------------------------------------------------------------
    def _check_peer(self, other):
        if not isinstance(other, self._base_cls()):
            raise TypeError("cannot combine %s with %s"
                            % (type(self).__name__, type(other).__name__))
        if other.chart != self.chart:
            raise ChartMismatchError("charts differ: %r vs %r"
                                     % (self.chart, other.chart))
        if other.degree != self.degree:
            raise ValueError("degrees differ: %d vs %d"
                             % (self.degree, other.degree))

    def __add__(self, other):
        self._check_peer(other)
        out = dict(self.comps)
        for k, v in other.comps.items():
            out[k] = add(out[k], v) if k in out else v
        return self._base_cls()(self.chart, self.degree, out)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return self.map_comps(lambda e: mul(Num(-1), e))

    def __mul__(self, other):
        if _expr_like(other):
            f = _as_expr(other)
            return self.map_comps(lambda e: mul(f, e))
        return NotImplemented

    __rmul__ = __mul__

    def __eq__(self, other):
        return (isinstance(other, _Tensor)
                and other._base_cls() is self._base_cls()
                and other.chart == self.chart
                and other.degree == self.degree and other.comps == self.comps)

    def __hash__(self):
        return hash((type(self).__name__, self.chart,
                     self.degree, frozenset(self.comps.items())))

    def _names(self, idx):
        return [self.chart.coords[i] for i in idx]


class KForm(_Tensor):
    """Antisymmetric covariant tensor (differential form) on a chart."""

    __slots__ = ()

    def __str__(self):
        if not self.comps:
            return "0"
        bits = []
        for idx in sorted(self.comps):
            basis = "∧".join("d" + n for n in self._names(idx)) or "1"
            bits.append(_coef_str(self.comps[idx], basis))
        return " + ".join(bits).replace("+ -", "- ")

    __repr__ = __str__

    def __call__(self, *fields):
        """Evaluate on ``degree`` vector fields -> scalar expression."""
        if len(fields) != self.degree:
            raise ValueError("expected %d fields" % self.degree)
        for x in fields:
            if x.chart != self.chart:
                raise ChartMismatchError("field chart differs from form chart")
        total = []
        for idx, coef in self.comps.items():
            total.append(mul(coef, _det_of([[x.components[i] for i in idx]
                                            for x in fields])))
        return add(*total) if total else _ZERO


class Multivector(_Tensor):
    """Antisymmetric contravariant tensor on a chart."""

    __slots__ = ()

    def __str__(self):
        if not self.comps:
            return "0"
        bits = []
        for idx in sorted(self.comps):
            basis = "∧".join("∂" + n for n in self._names(idx)) or "1"
            bits.append(_coef_str(self.comps[idx], basis))
        return " + ".join(bits).replace("+ -", "- ")

    __repr__ = __str__

    def __call__(self, *forms):
        """Evaluate on ``degree`` one-forms -> scalar expression."""
        if len(forms) != self.degree:
            raise ValueError("expected %d one-forms" % self.degree)
        total = []
        for idx, coef in self.comps.items():
            total.append(mul(coef, _det_of([[a.comp((i,)) for i in idx]
                                            for a in forms])))
        return add(*total) if total else _ZERO

    def as_field(self):
        if self.degree != 1:
            raise ValueError("only degree-1 multivectors are vector fields")
        return VectorField(self.chart,
                           [self.comp((i,)) for i in range(self.chart.dim)])


def _det_of(rows):
    n = len(rows)
    if n == 0:
        return _ONE
    if n == 1:
        return rows[0][0]
    total = []
    sign = 1
    for c in range(n):
        minor = [r[:c] + r[c + 1:] for r in rows[1:]]
        total.append(mul(Num(sign), rows[0][c], _det_of(minor)))
        sign = -sign
    return add(*total)


def _coef_str(e, basis):
    if e == _ONE:
        return basis
    if e == Num(-1):
        return "-" + basis
    s = to_str(e)
    if isinstance(e, (Num,)) or (not ("+" in s or " - " in s)):
        return "%s %s" % (s, basis)
    return "(%s) %s" % (s, basis)


# degree-pinned aliases (factories, not subclasses — arithmetic would
# otherwise have to guess constructor signatures)

def OneForm(chart, comps):
    return KForm(chart, 1, comps)


def TwoForm(chart, comps):
    return KForm(chart, 2, comps)


def Bivector(chart, comps):
    return Multivector(chart, 2, comps)


def Trivector(chart, comps):
    return Multivector(chart, 3, comps)


class VectorField:
    """X = Xⁱ ∂/∂xⁱ; one expression per chart coordinate."""

    __slots__ = ("chart", "components")

    def __init__(self, chart, components):
        components = tuple(_as_expr(c) for c in components)
        if len(components) != chart.dim:
            raise ValueError("need %d components, got %d"
                             % (chart.dim, len(components)))
        self.chart = chart
        self.components = components

    def component(self, coord):
        return self.components[self.chart.index(coord)]

    def derive(self, f):
        """Directional derivative X(f) of a scalar expression."""
        f = _as_expr(f)
        return add(*(mul(c, diff(f, n))
                     for c, n in zip(self.components, self.chart.coords)))

    def at(self, pt, params=None):
        return [evaluate(c, pt, params) for c in self.components]

    def is_zero(self, seed=42):
        return all(is_zero(c, seed=seed) for c in self.components)

    def __add__(self, other):
        if not isinstance(other, VectorField):
            return NotImplemented
        if other.chart != self.chart:
            raise ChartMismatchError("charts differ")
        return VectorField(self.chart, [add(a, b) for a, b in
                                        zip(self.components, other.components)])

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return VectorField(self.chart,
                           [mul(Num(-1), c) for c in self.components])

    def __mul__(self, other):
        if _expr_like(other):
            f = _as_expr(other)
            return VectorField(self.chart,
                               [mul(f, c) for c in self.components])
        return NotImplemented

    __rmul__ = __mul__

    def __eq__(self, other):
        return (isinstance(other, VectorField) and other.chart == self.chart
                and other.components == self.components)

    def __hash__(self):
        return hash((self.chart, self.components))

    def as_multivector(self):
        return Multivector(self.chart, 1,
                           {(i,): c for i, c in enumerate(self.components)})

    def __str__(self):
        bits = [_coef_str(c, "∂" + n)
                for c, n in zip(self.components, self.chart.coords)
                if not _is_strict_zero(c)]
        return " + ".join(bits).replace("+ -", "- ") if bits else "0"

    __repr__ = __str__


# ---------------------------------------------------------------------------
# convenience constructors


def kform(chart, degree, comps_by_name):
    """Build a form from coordinate *names*: {("q","p"): expr, ...}."""
    out = {}
    for names, e in comps_by_name.items():
        if isinstance(names, str):
            names = (names,)
        idx = tuple(chart.index(n) for n in names)
        key = idx
        if key in out:
            out[key] = add(out[key], _as_expr(e))
        else:
            out[key] = _as_expr(e)
    return KForm(chart, degree, out)


def one_form(chart, comps_by_name):
    return kform(chart, 1, comps_by_name)


def two_form(chart, comps_by_name):
    return kform(chart, 2, comps_by_name)


def scalar_kform(chart, f):
    return KForm(chart, 0, {(): _as_expr(f)})


def multivector(chart, degree, comps_by_name):
    out = {}
    for names, e in comps_by_name.items():
        if isinstance(names, str):
            names = (names,)
        idx = tuple(chart.index(n) for n in names)
        if idx in out:
            out[idx] = add(out[idx], _as_expr(e))
        else:
            out[idx] = _as_expr(e)
    return Multivector(chart, degree, out)


def vector_field(chart, comps_by_name):
    """comps_by_name: {"q": expr, ...}; omitted coordinates are zero."""
    comps = [_ZERO] * chart.dim
    for n, e in comps_by_name.items():
        comps[chart.index(n)] = _as_expr(e)
    return VectorField(chart, comps)


def zero_vector_field(chart):
    return VectorField(chart, [_ZERO] * chart.dim)


def coordinate_field(chart, name):
    return vector_field(chart, {name: _ONE})


# ---------------------------------------------------------------------------
# core operations


def exterior_derivative(omega):
    """d: k-forms -> (k+1)-forms; top-degree input gives the zero form."""
    if isinstance(omega, Expr):
        raise TypeError("wrap scalars with scalar_kform(chart, f) or use "
                        "differential(chart, f)")
    chart = omega.chart
    out = {}
    for idx, coef in omega.comps.items():
        for l in range(chart.dim):
            if l in idx:
                continue
            dcoef = diff(coef, chart.coords[l])
            if _is_strict_zero(dcoef):
                continue
            key = (l,) + idx
            if key in out:
                out[key] = add(out[key], dcoef)
            else:
                out[key] = dcoef
    return KForm(chart, omega.degree + 1, out)


def differential(chart, f):
    """df as a one-form."""
    return exterior_derivative(scalar_kform(chart, _as_expr(f)))


def wedge(a, b):
    """Wedge product of two forms or two multivectors on one chart."""
    if isinstance(a, VectorField):
        a = a.as_multivector()
    if isinstance(b, VectorField):
        b = b.as_multivector()
    if isinstance(a, KForm) != isinstance(b, KForm):
        raise TypeError("cannot wedge %s with %s"
                        % (type(a).__name__, type(b).__name__))
    if a.chart != b.chart:
        raise ChartMismatchError("charts differ")
    cls = KForm if isinstance(a, KForm) else Multivector
    out = {}
    for ia, ca in a.comps.items():
        for ib, cb in b.comps.items():
            key = ia + ib
            sidx, sign = _sort_sign(key)
            if sign == 0:
                continue
            e = mul(Num(sign), ca, cb)
            if sidx in out:
                out[sidx] = add(out[sidx], e)
            else:
                out[sidx] = e
    return cls(a.chart, a.degree + b.degree, out)


def interior_product(x, omega):
    """ι_X ω — contraction in the first slot."""
    if x.chart != omega.chart:
        raise ChartMismatchError("field and form live on different charts")
    if omega.degree < 1:
        raise ValueError("cannot contract a degree-0 form")
    chart = omega.chart
    out = {}
    for idx, coef in omega.comps.items():
        for t, i in enumerate(idx):
            xi = x.components[i]
            if _is_strict_zero(xi):
                continue
            rest = idx[:t] + idx[t + 1:]
            e = mul(Num((-1) ** t), xi, coef)
            if rest in out:
                out[rest] = add(out[rest], e)
            else:
                out[rest] = e
    return KForm(chart, omega.degree - 1, out)


def lie_bracket(x, y):
    """[X,Y]ⁱ = Xʲ ∂_j Yⁱ − Yʲ ∂_j Xⁱ."""
    if x.chart != y.chart:
        raise ChartMismatchError("fields live on different charts")
    chart = x.chart
    comps = []
    for i in range(chart.dim):
        terms = []
        for j, nj in enumerate(chart.coords):
            terms.append(mul(x.components[j], diff(y.components[i], nj)))
            terms.append(mul(Num(-1), y.components[j],
                             diff(x.components[i], nj)))
        comps.append(add(*terms))
    return VectorField(chart, comps)


def _lie_derivative_multivector(x, a):
    """(L_X A)^J = X^l ∂_l A^J − Σ_t (∂_l X^{J_t}) A^{J with J_t -> l}."""
    chart = a.chart
    out = {}
    for idx in _increasing_tuples(chart.dim, a.degree):
        terms = []
        aj = a.comps.get(idx, _ZERO)
        for l, nl in enumerate(chart.coords):
            if not _is_strict_zero(aj):
                terms.append(mul(x.components[l], diff(aj, nl)))
            for t in range(a.degree):
                swapped = idx[:t] + (l,) + idx[t + 1:]
                comp = a.comp(swapped)
                if _is_strict_zero(comp):
                    continue
                terms.append(mul(Num(-1), diff(x.components[idx[t]], nl),
                                 comp))
        e = add(*terms) if terms else _ZERO
        if not _is_strict_zero(e):
            out[idx] = e
    return Multivector(chart, a.degree, out)


def lie_derivative(x, target):
    """L_X of a scalar, form, vector field, or multivector."""
    if isinstance(target, (Expr, int, float, Fraction)):
        return x.derive(target)
    if isinstance(target, VectorField):
        return lie_bracket(x, target)
    if x.chart != target.chart:
        raise ChartMismatchError("charts differ")
    if isinstance(target, Multivector):
        return _lie_derivative_multivector(x, target)
    if isinstance(target, KForm):
        if target.degree == 0:
            return scalar_kform(target.chart, x.derive(target.scalar()))
        return (exterior_derivative(interior_product(x, target))
                + interior_product(x, exterior_derivative(target)))
    raise TypeError("cannot take a Lie derivative of %r" % (target,))


def _increasing_tuples(n, k):
    if k == 0:
        yield ()
        return
    def rec(start, depth):
        if depth == 0:
            yield ()
            return
        for i in range(start, n - depth + 1):
            for rest in rec(i + 1, depth - 1):
                yield (i,) + rest
    yield from rec(0, k)


def schouten(a, b):
    """Schouten bracket of multivector fields (degrees 1 and 2 supported).

    Degree table: (1,1) -> vector-field bracket; (1,2)/(2,1) -> Lie
    derivative of the bivector; (2,2) -> trivector whose pairing against
    three exact one-forms gives twice the bracket Jacobiator.
    """
    fields_in = isinstance(a, VectorField) and isinstance(b, VectorField)
    av = a.as_multivector() if isinstance(a, VectorField) else a
    bv = b.as_multivector() if isinstance(b, VectorField) else b
    if av.chart != bv.chart:
        raise ChartMismatchError("charts differ")
    p, q = av.degree, bv.degree
    if (p, q) == (1, 1):
        out = lie_bracket(_field_of(av), _field_of(bv))
        return out if fields_in else out.as_multivector()
    if (p, q) == (1, 2):
        return _lie_derivative_multivector(_field_of(av), bv)
    if (p, q) == (2, 1):
        return -_lie_derivative_multivector(_field_of(bv), av)
    if (p, q) == (2, 2):
        return _schouten_22(av, bv)
    raise ValueError("schouten bracket implemented for degrees 1 and 2 only")


def _field_of(mv):
    return mv.as_field()


def _schouten_22(a, b):
    chart = a.chart
    n = chart.dim
    out = {}
    for idx in _increasing_tuples(n, 3):
        i, j, k = idx
        terms = []
        for l, nl in enumerate(chart.coords):
            for (u, v, w) in ((i, j, k), (j, k, i), (k, i, j)):
                terms.append(mul(a.comp((u, l)), diff(b.comp((v, w)), nl)))
                terms.append(mul(b.comp((u, l)), diff(a.comp((v, w)), nl)))
        e = add(*terms)
        if not _is_strict_zero(e):
            out[idx] = e
    return Multivector(chart, 3, out)


# ---------------------------------------------------------------------------
# musical maps


def form_matrix(omega):
    """Full (antisymmetric) component matrix M[i][j] = ω(∂i, ∂j)."""
    n = omega.chart.dim
    return [[omega.comp((i, j)) for j in range(n)] for i in range(n)]


def matrix_at(omega, pt, params=None):
    m = form_matrix(omega)
    return [[evaluate(e, pt, params) for e in row] for row in m]


def musical_flat(omega, x):
    """♭(X) = ι_X ω for a two-form ω."""
    if omega.degree != 2:
        raise ValueError("flat expects a two-form")
    return interior_product(x, omega)


def determinant(matrix):
    return _det_of([list(r) for r in matrix])


def solve_linear(matrix, rhs):
    """Solve M v = rhs symbolically (Gauss-Jordan with zero-tested pivots)."""
    n = len(matrix)
    rows = [list(r) + [rhs[i]] for i, r in enumerate(matrix)]
    for col in range(n):
        piv = None
        for r in range(col, n):
            e = rows[r][col]
            if isinstance(e, Num) and e.value != 0:
                piv = r
                break
        if piv is None:
            for r in range(col, n):
                if not is_zero(rows[r][col]):
                    piv = r
                    break
        if piv is None:
            raise DegenerateFormError("singular linear system",
                                      det=determinant(matrix))
        rows[col], rows[piv] = rows[piv], rows[col]
        inv = pw(rows[col][col], -1)
        rows[col] = [mul(inv, e) for e in rows[col]]
        for r in range(n):
            if r == col:
                continue
            f = rows[r][col]
            if _is_strict_zero(f):
                continue
            rows[r] = [add(e, mul(Num(-1), f, g))
                       for e, g in zip(rows[r], rows[col])]
    return [rows[i][n] for i in range(n)]


def musical_sharp(omega, alpha):
    """♯(α): the field X with ι_X ω = α, for a nondegenerate two-form ω."""
    if omega.degree != 2:
        raise ValueError("sharp expects a two-form")
    if alpha.degree != 1:
        raise ValueError("sharp expects a one-form")
    if omega.chart != alpha.chart:
        raise ChartMismatchError("charts differ")
    n = omega.chart.dim
    # (ι_X ω)_j = X^i ω_{ij}: coefficient matrix M[j][i] = ω_{ij}
    m = [[omega.comp((i, j)) for i in range(n)] for j in range(n)]
    rhs = [alpha.comp((j,)) for j in range(n)]
    try:
        sol = solve_linear(m, rhs)
    except DegenerateFormError:
        raise DegenerateFormError("two-form is degenerate",
                                  det=determinant(form_matrix(omega))) from None
    return VectorField(omega.chart, sol)


def vertical_lift(alpha, total_chart):
    """Lift a one-form on the base to a vertical field on the phase chart.

    Convention: the phase chart lists the n base coordinates first and the
    n conjugate momenta second, in matching order.  The lift of α = αᵢ dqⁱ
    is −αᵢ ∂/∂pᵢ, i.e. the field whose contraction with dq∧dp gives α back.
    """
    base = alpha.chart
    n = base.dim
    if total_chart.dim != 2 * n or total_chart.coords[:n] != base.coords:
        raise ChartMismatchError(
            "phase chart must extend the base chart with momenta")
    comps = [_ZERO] * (2 * n)
    for (i,), e in alpha.comps.items():
        comps[n + i] = mul(Num(-1), e)
    return VectorField(total_chart, comps)


# ---------------------------------------------------------------------------
# maps between charts (sections, projections)


class SectionMap:
    """A map base -> total chart that fixes the shared base coordinates.

    ``fiber`` assigns an expression over the base coordinates to every
    total-chart coordinate that is not a base coordinate.  Sections of
    bundles (γ: Q -> T*Q), one-jet prolongations and constraint embeddings
    are all of this shape.
    """

    __slots__ = ("base_chart", "total_chart", "fiber")

    def __init__(self, base_chart, total_chart, fiber, params=()):
        base = set(base_chart.coords)
        total = set(total_chart.coords)
        if not base <= total:
            raise ChartMismatchError("base coordinates %s missing from the "
                                     "total chart" % sorted(base - total))
        want = total - base
        got = set(fiber)
        if want != got:
            raise ChartMismatchError(
                "fiber components must cover exactly %s (got %s)"
                % (sorted(want), sorted(got)))
        fiber = {k: _as_expr(v) for k, v in fiber.items()}
        allowed = base | set(params)
        for k, v in fiber.items():
            bad = free_names(v) - allowed
            if bad:
                raise ChartMismatchError(
                    "component %s uses non-base symbols %s"
                    % (k, sorted(bad)))
        self.base_chart = base_chart
        self.total_chart = total_chart
        self.fiber = fiber

    def components(self):
        """Every total coordinate as an expression over the base."""
        from .expr import Sym
        out = {}
        for c in self.total_chart.coords:
            out[c] = self.fiber.get(c, Sym(c))
        return out

    def component(self, name):
        from .expr import Sym
        return self.fiber.get(name, Sym(name))

    def compose_scalar(self, f):
        """f ∘ φ for a scalar on the total chart."""
        return substitute(f, self.fiber)

    def at(self, base_pt, params=None):
        out = dict(base_pt)
        for k, v in self.fiber.items():
            out[k] = evaluate(v, base_pt, params)
        return out

    def __repr__(self):
        body = ", ".join("%s=%s" % (k, to_str(v))
                         for k, v in sorted(self.fiber.items()))
        return "SectionMap(%s -> %s; %s)" % (self.base_chart.name,
                                             self.total_chart.name, body)


def free_names(e):
    from .expr import free_symbols
    return set(free_symbols(e))


def pullback(phi, omega):
    """φ*ω: substitute the section components and apply the chain rule."""
    if omega.chart != phi.total_chart:
        raise ChartMismatchError("form does not live on the map's target")
    base = phi.base_chart
    comps = phi.components()
    if omega.degree == 0:
        return scalar_kform(base, substitute(omega.scalar(), phi.fiber))
    out = {}
    for idx, coef in omega.comps.items():
        pulled_coef = substitute(coef, phi.fiber)
        # d(φ^{j})  for each target index j in this component
        diffs = []
        for j in idx:
            cj = comps[omega.chart.coords[j]]
            diffs.append([diff(cj, n) for n in base.coords])
        # expand the wedge of the pulled-back differentials
        for choice in _choices(len(idx), base.dim):
            sidx, sign = _sort_sign(choice)
            if sign == 0:
                continue
            factor = mul(Num(sign), pulled_coef,
                         *(diffs[t][choice[t]] for t in range(len(idx))))
            if _is_strict_zero(factor):
                continue
            if sidx in out:
                out[sidx] = add(out[sidx], factor)
            else:
                out[sidx] = factor
    return KForm(base, omega.degree, out)


def _choices(k, n):
    if k == 0:
        yield ()
        return
    for head in range(n):
        for rest in _choices(k - 1, n):
            yield (head,) + rest


def pushforward(phi, x):
    """Tφ(X) along φ: components in the total chart over base coordinates."""
    if x.chart != phi.base_chart:
        raise ChartMismatchError("field does not live on the map's source")
    comps = phi.components()
    out = []
    for c in phi.total_chart.coords:
        e = comps[c]
        out.append(add(*(mul(x.components[i], diff(e, n))
                         for i, n in enumerate(phi.base_chart.coords))))
    return VectorField(phi.total_chart, out)

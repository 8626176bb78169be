"""Brackets induced by geometric structures, and identity audits.

Every structure in scope induces a binary operation on scalar expressions.
This module realizes each one, measures which of the classical identities
hold for it — antisymmetry, Leibniz, Jacobi — and assigns the matching
classification label.  Identity checking is symbolic whenever the defect
expressions stay polynomial; otherwise it falls back to seeded sample
points, and the verdict records which kind of evidence was obtained.
"""

from __future__ import annotations

import random

from .expr import (
    Add, Mul, Num, Pow, Sym, add, mul, _as_expr, canonical,
    diff, evaluate, free_symbols, sym, to_str, zero_status, DomainError,
)
from .exterior import (
    multivector, differential,
    interior_product, lie_bracket, musical_sharp,
)
from .structures import (
    AlmostPoisson, CheckResult, Contact, Cosymplectic, Jacobi, LCS,
    LinearAlmostPoisson, Poisson, Symplectic,
    contact_sharp, contact_to_jacobi, cosymplectic_sharp, lee_field, reeb,
)

__all__ = [
    "Bracket", "IdentityAudit",
    "bracket_of", "jacobiator", "leibniz_defect",
    "identity_audit", "audit_table",
]

_ZERO = Num(0)
_NEG_ONE = Num(-1)


# ---------------------------------------------------------------------------
# bracket record


class Bracket:
    """A binary operation {F, G} on scalar expressions over one chart.

    ``bivector`` holds the two-vector doing the derivative pairing when the
    realization has one; ``field`` holds the extra first-order term's vector
    field when one enters (contact, LCS and generic bivector-plus-field
    brackets).  ``commutator`` is set on contact brackets only: the same
    bracket computed as the defining field-commutator contraction, kept
    callable for cross-checking.
    """

    def __init__(self, chart, kind, fn, bivector=None, field=None):
        self.chart = chart
        self.kind = kind
        self._fn = fn
        self.bivector = bivector
        self.field = field
        self.commutator = None

    def __call__(self, f, g):
        return self._fn(_as_expr(f), _as_expr(g))

    def __repr__(self):
        return "Bracket(%s on %r)" % (self.kind, self.chart)


# ---------------------------------------------------------------------------
# realizations


def _pairing(omega, x, y):
    """omega(X, Y) as a scalar expression."""
    return interior_product(y, interior_product(x, omega)).scalar()


def _inverse_bivector(omega):
    """The bivector pairing differentials the way ``omega`` pairs sharps.

    Components are omega(sharp dx^i, sharp dx^j); for the canonical
    two-form this is the canonical bivector with {q, p} = 1.
    """
    chart = omega.chart
    sharps = [musical_sharp(omega, differential(chart, sym(n)))
              for n in chart.coords]
    comps = {}
    for i in range(chart.dim):
        for j in range(i + 1, chart.dim):
            # canonical() here: raw solve output drags large unsimplified
            # quotients into every later bracket value
            comps[(chart.coords[i], chart.coords[j])] = \
                canonical(_pairing(omega, sharps[i], sharps[j]))
    return multivector(chart, 2, comps)


def _pair_bracket(chart, lam, field, field_sign):
    """{F, G} = lam(dF, dG) + field_sign * (F field(G) - G field(F))."""
    s = Num(field_sign)

    def fn(f, g):
        terms = [lam(differential(chart, f), differential(chart, g))]
        if field is not None:
            terms.append(mul(s, f, field.derive(g)))
            terms.append(mul(_NEG_ONE, s, g, field.derive(f)))
        return add(*terms)

    return fn


def _hamiltonian_field(s, r, h):
    """Contact Hamiltonian field of ``h``: sharp of dh - (R(h) + h) eta."""
    dh = differential(s.chart, h)
    return contact_sharp(s, dh - s.eta * add(r.derive(h), h))


def _contact_commutator_fn(s, r):
    def fn(f, g):
        xf = _hamiltonian_field(s, r, f)
        xg = _hamiltonian_field(s, r, g)
        return interior_product(lie_bracket(xf, xg), s.eta).scalar()

    return fn


def _cross_check_contact(chart, serve, against, seed=42):
    """Compare two bracket realizations on seeded inputs at seeded points."""
    rng = random.Random(seed)
    pts = [{n: rng.uniform(0.25, 1.75) for n in chart.coords}
           for _ in range(5)]
    for _ in range(3):
        f = _random_polynomial(rng, chart)
        g = _random_polynomial(rng, chart)
        a, b = serve(f, g), against(f, g)
        for pt in pts:
            va, vb = evaluate(a, pt), evaluate(b, pt)
            if abs(va - vb) > 1e-9 * (1.0 + abs(va) + abs(vb)):
                raise ArithmeticError(
                    "contact bracket realizations disagree: %.6g vs %.6g"
                    % (va, vb))


def _jet_pairs(chart):
    """Position/momentum name pairs of a jet-style chart (q.., p.., value).

    Convention as in ``vertical_lift``: the first n coordinates are base
    positions, the next n their momenta, and the last one the value
    coordinate.
    """
    if chart.dim % 2 == 0 or chart.dim < 3:
        raise ValueError("evolution bracket needs an odd chart of dim >= 3, "
                         "got %r" % (chart,))
    n = (chart.dim - 1) // 2
    return list(zip(chart.coords[:n], chart.coords[n:2 * n]))


def _evolution_bracket(s):
    """First-order bracket of evolution dynamics on a jet-style chart.

    {F, G} = F_p G_q - F_q G_p - F_z p G_p + G_z p F_p  (summed over pairs,
    z the value coordinate).  Pure bivector: Leibniz holds, Jacobi fails.
    """
    chart = s.chart
    pairs = _jet_pairs(chart)
    zname = chart.coords[-1]

    def fn(f, g):
        fz, gz = diff(f, zname), diff(g, zname)
        terms = []
        for qn, pn in pairs:
            p = sym(pn)
            terms.append(mul(diff(f, pn), diff(g, qn)))
            terms.append(mul(_NEG_ONE, diff(f, qn), diff(g, pn)))
            terms.append(mul(_NEG_ONE, fz, p, diff(g, pn)))
            terms.append(mul(gz, p, diff(f, pn)))
        return add(*terms)

    comps = {}
    for qn, pn in pairs:
        comps[(pn, qn)] = Num(1)
        comps[(zname, pn)] = mul(_NEG_ONE, sym(pn))
    lam = multivector(chart, 2, comps)
    return Bracket(chart, "evolution", fn, bivector=lam)


def bracket_of(s, variant=None):
    """The bracket a structure induces on scalar expressions.

    ``variant="evolution"`` selects, for a contact structure on a jet-style
    chart, the first-order evolution bracket instead of the contact one.
    The caller is expected to pass a structure that validates (or
    pointwise-passes).
    """
    if variant == "evolution":
        if not isinstance(s, Contact):
            raise ValueError("evolution variant needs a contact structure, "
                             "got %r" % (getattr(s, "kind", s),))
        return _evolution_bracket(s)
    if variant is not None:
        raise ValueError("unknown bracket variant %r" % (variant,))

    if isinstance(s, Symplectic):
        lam = _inverse_bivector(s.omega)
        return Bracket(s.chart, "symplectic",
                       _pair_bracket(s.chart, lam, None, 1), bivector=lam)
    if isinstance(s, (Poisson, AlmostPoisson)):
        return Bracket(s.chart, s.kind,
                       _pair_bracket(s.chart, s.lam, None, 1),
                       bivector=s.lam)
    if isinstance(s, LinearAlmostPoisson):
        lam = s.bivector()
        return Bracket(lam.chart, s.kind,
                       _pair_bracket(lam.chart, lam, None, 1), bivector=lam)
    if isinstance(s, Cosymplectic):
        grads = [cosymplectic_sharp(s, differential(s.chart, sym(n)))
                 for n in s.chart.coords]
        comps = {}
        for i in range(s.chart.dim):
            for j in range(i + 1, s.chart.dim):
                comps[(s.chart.coords[i], s.chart.coords[j])] = \
                    canonical(_pairing(s.omega, grads[i], grads[j]))
        lam = multivector(s.chart, 2, comps)
        return Bracket(s.chart, "cosymplectic",
                       _pair_bracket(s.chart, lam, None, 1), bivector=lam)
    if isinstance(s, Jacobi):
        # Sign pinned by the field-commutator realization on contact-induced
        # pairs; see the leibniz_defect docstring for the defect it implies.
        return Bracket(s.chart, "jacobi",
                       _pair_bracket(s.chart, s.lam, s.z, -1),
                       bivector=s.lam, field=s.z)
    if isinstance(s, LCS):
        lam = _inverse_bivector(s.omega)
        lee = lee_field(s)
        return Bracket(s.chart, "lcs",
                       _pair_bracket(s.chart, lam, lee, 1),
                       bivector=lam, field=lee)
    if isinstance(s, Contact):
        j = contact_to_jacobi(s)
        r = reeb(s, check=False)
        serve = _pair_bracket(s.chart, j.lam, j.z, -1)
        commutator = _contact_commutator_fn(s, r)
        _cross_check_contact(s.chart, serve, commutator)
        b = Bracket(s.chart, "contact", serve, bivector=j.lam, field=j.z)
        b.commutator = commutator
        return b
    raise TypeError("no bracket realization for %r" % (s,))


# ---------------------------------------------------------------------------
# identities


def jacobiator(b, f, g, h):
    """Cyclic identity defect: {F,{H,G}} + {G,{F,H}} + {H,{G,F}}."""
    f, g, h = _as_expr(f), _as_expr(g), _as_expr(h)
    return add(b(f, b(h, g)), b(g, b(f, h)), b(h, b(g, f)))


def leibniz_defect(b, f, g, h):
    """Derivation defect in the second slot: {F,G·H} - G·{F,H} - H·{F,G}.

    Zero for every pure-bivector bracket.  For a bivector-plus-field
    bracket whose extra term is sign*(F·Z(G) - G·Z(F)) the defect comes out
    as sign·G·H·Z(F); with the sign convention used here the Jacobi-pair
    bracket of a contact structure has defect G·H·Reeb(F).
    """
    f, g, h = _as_expr(f), _as_expr(g), _as_expr(h)
    return add(b(f, mul(g, h)),
               mul(_NEG_ONE, g, b(f, h)),
               mul(_NEG_ONE, h, b(f, g)))


# ---------------------------------------------------------------------------
# audits


class IdentityAudit:
    """Verdicts for the three bracket identities plus the resulting label."""

    def __init__(self, name, chart, checks, label):
        self.name = name
        self.chart = chart
        self.checks = list(checks)
        self.label = label

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def verdicts(self):
        return {c.name: c.verdict for c in self.checks}

    def __repr__(self):
        return "IdentityAudit(%s: %s)" % (self.name, self.label)


def _random_polynomial(rng, chart, monomials=3, max_degree=3):
    """Seeded polynomial: constant plus a few small integer monomials."""
    terms = [Num(rng.randint(-3, 3))]
    for _ in range(monomials):
        factors = [Num(rng.choice((-3, -2, -1, 1, 2, 3)))]
        for _ in range(rng.randint(1, max_degree)):
            factors.append(sym(rng.choice(chart.coords)))
        terms.append(mul(*factors))
    return add(*terms)


def _is_polynomial(e):
    if isinstance(e, (Num, Sym)):
        return True
    if isinstance(e, Add):
        return all(_is_polynomial(t) for t in e.terms)
    if isinstance(e, Mul):
        return all(_is_polynomial(t) for t in e.factors)
    if isinstance(e, Pow):
        p = e.exponent
        return p >= 0 and p == int(p) and _is_polynomial(e.base)
    return False


def _sampled_zero(e, seed, box, tol=1e-9, points=20):
    """Pointwise zero test without canonicalization (for transcendental e)."""
    names = sorted(free_symbols(e))
    rng = random.Random(seed)
    box = box or {}
    ranges = {n: box.get(n, (0.25, 1.75)) for n in names}
    terms = e.terms if isinstance(e, Add) else (e,)
    good = 0
    for _ in range(points):
        for _attempt in range(60):
            env = {n: rng.uniform(*ranges[n]) for n in names}
            try:
                v = evaluate(e, env)
                scale = 1.0 + sum(abs(evaluate(t, env)) for t in terms)
            except (DomainError, ZeroDivisionError, OverflowError):
                continue
            if abs(v) > tol * scale:
                return False
            good += 1
            break
        if not names:
            break
    return good >= (1 if not names else max(5, points // 2))


def _witness_text(defect, inputs, seed, box):
    names = sorted(free_symbols(defect))
    rng = random.Random(seed + 1)
    box = box or {}
    ranges = {n: box.get(n, (0.25, 1.75)) for n in names}
    best = None
    for _ in range(40):
        env = {n: rng.uniform(*ranges[n]) for n in names}
        try:
            v = evaluate(defect, env)
        except (DomainError, ZeroDivisionError, OverflowError):
            continue
        if best is None or abs(v) > abs(best[0]):
            best = (v, env)
    heads = ("F", "G", "H")
    what = ", ".join("%s=%s" % (nm, to_str(e))
                     for nm, e in zip(heads, inputs))
    if best is None:
        text = to_str(defect)
        if len(text) > 120:
            text = text[:117] + "..."
        return "%s -> defect %s" % (what, text)
    where = ", ".join("%s=%.3g" % (n, best[1][n]) for n in names)
    return "%s -> defect %.6g at {%s}" % (what, best[0], where)


def _identity_check(name, defect_fn, arity, chart, seed, trials, box):
    rng = random.Random(seed)
    worst = "pass"
    for _ in range(trials):
        inputs = [_random_polynomial(rng, chart) for _ in range(arity)]
        defect = defect_fn(*inputs)
        if _is_polynomial(defect):
            st = zero_status(defect, seed=seed, box=box)
        else:
            st = "numeric" if _sampled_zero(defect, seed, box) else "no"
        if st == "no":
            return CheckResult(name, "fail",
                               _witness_text(defect, inputs, seed, box))
        if st == "numeric":
            worst = "pointwise-pass"
    return CheckResult(name, worst)


def _classify(checks):
    ok = {c.name: c.verdict != "fail" for c in checks}
    if ok["antisymmetry"] and ok["Leibniz"] and ok["Jacobi"]:
        return "Poisson"
    if ok["antisymmetry"] and ok["Jacobi"]:
        return "Jacobi"
    if ok["antisymmetry"] and ok["Leibniz"]:
        return "almost-Poisson"
    return "Leibniz-only"


def identity_audit(s, seed=42, trials=20, box=None, name=None):
    """Audit which identities a structure's bracket satisfies.

    Accepts a structure (bracket built via ``bracket_of``) or a ready-made
    ``Bracket``.  Each identity is checked on ``trials`` seeded random
    polynomials: symbolically when the defect stays polynomial, at seeded
    sample points otherwise.  Failures carry a concrete witness.
    """
    b = s if isinstance(s, Bracket) else bracket_of(s)
    checks = [
        _identity_check("antisymmetry",
                        lambda f, g: add(b(f, g), b(g, f)),
                        2, b.chart, seed, trials, box),
        _identity_check("Leibniz",
                        lambda f, g, h: leibniz_defect(b, f, g, h),
                        3, b.chart, seed, trials, box),
        _identity_check("Jacobi",
                        lambda f, g, h: jacobiator(b, f, g, h),
                        3, b.chart, seed, trials, box),
    ]
    return IdentityAudit(name or b.kind, b.chart, checks, _classify(checks))


def audit_table(audits):
    """Render audits as a text table: identities held, then the label."""
    if isinstance(audits, IdentityAudit):
        audits = [audits]
    header = ("structure", "antisymmetry", "Leibniz", "Jacobi",
              "classification")
    rows, notes = [], []
    for a in audits:
        marks = []
        for key in header[1:4]:
            c = a.check(key)
            marks.append("yes" if c.verdict != "fail" else "no")
            if c.verdict == "fail" and c.witness:
                notes.append("%s / %s: %s" % (a.name, key, c.witness))
        rows.append((a.name,) + tuple(marks) + (a.label,))
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows
              else len(header[i]) for i in range(len(header))]

    def fmt(row):
        return "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()

    lines = [fmt(header), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(r) for r in rows)
    if notes:
        lines.append("")
        lines.extend(notes)
    return "\n".join(lines)

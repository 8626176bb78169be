"""Geometric structures on a chart, their validators and derived fields.

Each structure is a small immutable record over ``exterior`` objects with a
``kind`` tag.  ``validate`` runs the defining identities — symbolically when
the algebra settles them, otherwise at seeded sample points, and the report
distinguishes the two ("pass" vs "pointwise-pass").  ``reeb``/``lee_field``
solve the defining contractions as symbolic linear systems and check their
own answers by back-substitution.
"""

from __future__ import annotations

import random

from .expr import (
    Chart, Expr, Num, Sym, add, mul, pw, _as_expr,
    evaluate, is_zero, zero_status, to_str, DomainError,
)
from .exterior import (
    KForm, Multivector, VectorField, OneForm, TwoForm, Bivector,
    one_form, two_form, vector_field, zero_vector_field, multivector,
    exterior_derivative, interior_product, wedge, schouten, differential,
    musical_flat, musical_sharp, lie_derivative,
    form_matrix, determinant, solve_linear,
    ChartMismatchError, DegenerateFormError,
)

__all__ = [
    "Symplectic", "Poisson", "Cosymplectic", "Contact", "LCS", "Jacobi",
    "AlmostPoisson", "LinearAlmostPoisson",
    "CheckResult", "ValidationReport",
    "validate", "reeb", "lee_field", "canonical_structure",
    "contact_to_jacobi", "contact_sharp", "contact_flat",
    "cosymplectic_sharp",
    "cotangent_chart", "tautological_form", "canonical_two_form",
    "liouville_field",
]

_ZERO = Num(0)
_ONE = Num(1)


# ---------------------------------------------------------------------------
# structure records


class _Structure:
    kind = "?"

    def __repr__(self):
        return "%s on %r" % (type(self).__name__, self.chart)


class Symplectic(_Structure):
    kind = "symplectic"

    def __init__(self, omega):
        if omega.degree != 2:
            raise ValueError("symplectic structure needs a two-form")
        self.omega = omega
        self.chart = omega.chart


class Poisson(_Structure):
    kind = "poisson"

    def __init__(self, lam):
        if lam.degree != 2:
            raise ValueError("poisson structure needs a bivector")
        self.lam = lam
        self.chart = lam.chart


class AlmostPoisson(_Structure):
    """A bivector with no integrability demanded."""

    kind = "almost-poisson"

    def __init__(self, lam):
        if lam.degree != 2:
            raise ValueError("almost-poisson structure needs a bivector")
        self.lam = lam
        self.chart = lam.chart


class Cosymplectic(_Structure):
    kind = "cosymplectic"

    def __init__(self, eta, omega):
        if eta.degree != 1 or omega.degree != 2:
            raise ValueError("cosymplectic structure is (one-form, two-form)")
        if eta.chart != omega.chart:
            raise ChartMismatchError("forms live on different charts")
        self.eta = eta
        self.omega = omega
        self.chart = eta.chart


class Contact(_Structure):
    kind = "contact"

    def __init__(self, eta):
        if eta.degree != 1:
            raise ValueError("contact structure needs a one-form")
        self.eta = eta
        self.chart = eta.chart


class LCS(_Structure):
    """Nondegenerate two-form, closed under the twisted differential."""

    kind = "lcs"

    def __init__(self, omega, theta):
        if omega.degree != 2 or theta.degree != 1:
            raise ValueError("need (two-form, one-form)")
        if omega.chart != theta.chart:
            raise ChartMismatchError("forms live on different charts")
        self.omega = omega
        self.theta = theta
        self.chart = omega.chart


class Jacobi(_Structure):
    kind = "jacobi"

    def __init__(self, lam, z):
        if lam.degree != 2:
            raise ValueError("jacobi structure needs a bivector")
        if lam.chart != z.chart:
            raise ChartMismatchError("bivector and field on different charts")
        self.lam = lam
        self.z = z
        self.chart = lam.chart


class LinearAlmostPoisson(_Structure):
    """Fiberwise-linear bracket data on a dual vector bundle chart.

    ``c[g][a][b]`` are the structure functions (antisymmetric in a,b) and
    ``rho[i][a]`` the anchor components, all expressions over the base
    chart.  The full chart appends one momentum per fiber rank.
    """

    kind = "linear-almost-poisson"

    def __init__(self, c, rho, base_chart, fiber_rank, momentum_names=None):
        k = fiber_rank
        if (len(c) != k or any(len(g) != k for g in c)
                or any(len(row) != k for g in c for row in g)):
            raise ValueError("structure functions must be k×k×k")
        if len(rho) != base_chart.dim or any(len(r) != k for r in rho):
            raise ValueError("anchor must be (base dim)×k")
        self.c = [[[_as_expr(x) for x in row] for row in g] for g in c]
        self.rho = [[_as_expr(x) for x in r] for r in rho]
        self.base_chart = base_chart
        self.fiber_rank = k
        if momentum_names is None:
            momentum_names = tuple("p%d" % (a + 1) for a in range(k))
        clash = set(momentum_names) & set(base_chart.coords)
        if clash or len(momentum_names) != k:
            raise ValueError("bad momentum names %r" % (momentum_names,))
        self.momentum_names = tuple(momentum_names)
        self.chart = Chart(base_chart.name + "*",
                           base_chart.coords + self.momentum_names)

    def bivector(self):
        """The induced fiberwise-linear bivector on the full chart."""
        m = self.base_chart.dim
        comps = {}
        for i in range(m):
            for a in range(self.fiber_rank):
                if not _strict_zero(self.rho[i][a]):
                    comps[(i, m + a)] = self.rho[i][a]
        for a in range(self.fiber_rank):
            for b in range(a + 1, self.fiber_rank):
                e = add(*(mul(Num(-1), self.c[g][a][b],
                              Sym(self.momentum_names[g]))
                          for g in range(self.fiber_rank)))
                if not _strict_zero(e):
                    comps[(m + a, m + b)] = e
        return Multivector(self.chart, 2, comps)


def _strict_zero(e):
    return isinstance(e, Num) and e.value == 0


# ---------------------------------------------------------------------------
# validation report


class CheckResult:
    __slots__ = ("name", "verdict", "witness")

    def __init__(self, name, verdict, witness=None):
        self.name = name
        self.verdict = verdict  # "pass" | "pointwise-pass" | "fail"
        self.witness = witness

    def __repr__(self):
        s = "%s: %s" % (self.name, self.verdict)
        if self.witness is not None:
            s += " [%s]" % (self.witness,)
        return s


class ValidationReport:
    def __init__(self, kind, checks):
        self.kind = kind
        self.checks = list(checks)

    @property
    def passed(self):
        return all(c.verdict != "fail" for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if c.verdict == "fail"]

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __repr__(self):
        return "ValidationReport(%s: %s)" % (
            self.kind, "; ".join(repr(c) for c in self.checks))


def _zero_check(name, obj, seed, box):
    """CheckResult for 'this form/field/expression vanishes identically'."""
    if isinstance(obj, Expr):
        comps = {(): obj}
    elif isinstance(obj, VectorField):
        comps = {(i,): c for i, c in enumerate(obj.components)}
    else:
        comps = obj.comps
    worst = "pass"
    for idx, e in comps.items():
        st = zero_status(e, seed=seed, box=box)
        if st == "no":
            return CheckResult(name, "fail",
                               "component %s = %s" % (idx, to_str(e)))
        if st == "numeric":
            worst = "pointwise-pass"
    return CheckResult(name, worst)


def _sample_points(chart, box, seed, count=20):
    rng = random.Random(seed)
    box = box or {}
    pts = []
    for _ in range(count):
        pts.append({n: rng.uniform(*box.get(n, (0.25, 1.75)))
                    for n in chart.coords})
    return pts


def _nondegenerate_check(name, omega, seed, box):
    """Determinant policy: symbolic constant first, else 20 seeded points."""
    mat = form_matrix(omega)
    n = omega.chart.dim
    det = determinant(mat)
    if isinstance(det, Num):
        if det.value == 0:
            return CheckResult(name, "fail", "determinant vanishes identically")
        return CheckResult(name, "pass")
    if zero_status(det, seed=seed, box=box) != "no":
        return CheckResult(name, "fail", "determinant vanishes identically")
    for pt in _sample_points(omega.chart, box, seed):
        try:
            dv = evaluate(det, pt)
            scale = 1.0 + max(abs(evaluate(e, pt))
                              for row in mat for e in row)
        except DomainError:
            continue
        if abs(dv) <= 1e-12 * scale ** n:
            return CheckResult(name, "fail",
                               "determinant %.3e at %s" % (dv, pt))
    return CheckResult(name, "pointwise-pass")


def _parity(chart, want_even, kind):
    if chart.dim % 2 != (0 if want_even else 1):
        raise ValueError("%s structure needs an %s-dimensional chart, got %d"
                         % (kind, "even" if want_even else "odd", chart.dim))


def validate(s, box=None, seed=42):
    """Run the defining identities of a structure; never raises on failure,
    only on chart-parity violations (those are malformed inputs, not
    failed geometry)."""
    checks = []
    if isinstance(s, Symplectic):
        _parity(s.chart, True, s.kind)
        checks.append(_zero_check("closed", exterior_derivative(s.omega),
                                  seed, box))
        checks.append(_nondegenerate_check("nondegenerate", s.omega,
                                           seed, box))
    elif isinstance(s, Poisson):
        checks.append(CheckResult("antisymmetric", "pass"))
        checks.append(_zero_check("self-commuting", schouten(s.lam, s.lam),
                                  seed, box))
    elif isinstance(s, AlmostPoisson):
        checks.append(CheckResult("antisymmetric", "pass"))
    elif isinstance(s, Cosymplectic):
        _parity(s.chart, False, s.kind)
        checks.append(_zero_check("eta-closed", exterior_derivative(s.eta),
                                  seed, box))
        checks.append(_zero_check("omega-closed",
                                  exterior_derivative(s.omega), seed, box))
        n = (s.chart.dim - 1) // 2
        vol = s.eta
        for _ in range(n):
            vol = wedge(vol, s.omega)
        checks.append(_volume_check("volume", vol, seed, box))
    elif isinstance(s, Contact):
        _parity(s.chart, False, s.kind)
        n = (s.chart.dim - 1) // 2
        deta = exterior_derivative(s.eta)
        vol = s.eta
        for _ in range(n):
            vol = wedge(vol, deta)
        checks.append(_volume_check("volume", vol, seed, box))
    elif isinstance(s, LCS):
        _parity(s.chart, True, s.kind)
        checks.append(_zero_check("theta-closed",
                                  exterior_derivative(s.theta), seed, box))
        twisted = exterior_derivative(s.omega) - wedge(s.theta, s.omega)
        checks.append(_zero_check("twisted-closed", twisted, seed, box))
        checks.append(_nondegenerate_check("nondegenerate", s.omega,
                                           seed, box))
    elif isinstance(s, Jacobi):
        bracket_defect = schouten(s.lam, s.lam) - 2 * wedge(
            s.z.as_multivector(), s.lam)
        checks.append(_zero_check("self-bracket", bracket_defect, seed, box))
        checks.append(_zero_check("invariant-bivector",
                                  schouten(s.z, s.lam), seed, box))
    elif isinstance(s, LinearAlmostPoisson):
        bad = None
        k = s.fiber_rank
        for g in range(k):
            for a in range(k):
                for b in range(k):
                    if not is_zero(add(s.c[g][a][b], s.c[g][b][a]),
                                   seed=seed):
                        bad = (g, a, b)
        if bad:
            checks.append(CheckResult(
                "structure-functions-antisymmetric", "fail",
                "c[%d][%d][%d] + c[%d][%d][%d] != 0"
                % (bad[0], bad[1], bad[2], bad[0], bad[2], bad[1])))
        else:
            checks.append(CheckResult("structure-functions-antisymmetric",
                                      "pass"))
    else:
        raise TypeError("not a structure: %r" % (s,))
    return ValidationReport(s.kind, checks)


def _volume_check(name, vol, seed, box):
    """Top-degree form must be nowhere zero."""
    comps = vol.comps
    if len(comps) != 1:
        return CheckResult(name, "fail", "top form vanishes identically")
    e = next(iter(comps.values()))
    st = zero_status(e, seed=seed, box=box)
    if st != "no":
        return CheckResult(name, "fail", "top form vanishes identically")
    if isinstance(e, Num):
        return CheckResult(name, "pass")
    for pt in _sample_points(vol.chart, box, seed):
        try:
            v = evaluate(e, pt)
        except DomainError:
            continue
        if abs(v) <= 1e-12:
            return CheckResult(name, "fail",
                               "volume coefficient %.3e at %s" % (v, pt))
    return CheckResult(name, "pointwise-pass")


# ---------------------------------------------------------------------------
# distinguished fields


def reeb(s, check=True):
    """The unique field with ι_Rη = 1 and ι_R(dη or Ω) = 0.

    Solved via the auxiliary nondegenerate pairing B = (dη or Ω) + η⊗η,
    under which R is just ♭⁻¹(η).
    """
    if isinstance(s, Contact):
        two = exterior_derivative(s.eta)
    elif isinstance(s, Cosymplectic):
        two = s.omega
    else:
        raise TypeError("reeb field needs a contact or cosymplectic "
                        "structure")
    chart = s.chart
    n = chart.dim
    eta = [s.eta.comp((i,)) for i in range(n)]
    # B_{ij} = two_{ij} + η_i η_j ;  solve Σ_i B_{ij} R^i = η_j
    m = [[add(two.comp((i, j)), mul(eta[i], eta[j])) for i in range(n)]
         for j in range(n)]
    try:
        sol = solve_linear(m, eta)
    except DegenerateFormError as err:
        raise DegenerateFormError(
            "structure admits no Reeb field (degenerate pairing)",
            det=err.det) from None
    r = VectorField(chart, sol)
    if check:
        pairing = add(interior_product(r, s.eta).scalar(), Num(-1))
        if not is_zero(pairing):
            raise ArithmeticError("reeb back-substitution failed: ι_Rη ≠ 1")
        if not interior_product(r, two).is_zero():
            raise ArithmeticError("reeb back-substitution failed: "
                                  "second contraction ≠ 0")
    return r


def lee_field(s, report=False, seed=42, box=None):
    """Z = Ω♯(θ) for an LCS structure; optionally report the invariances."""
    if not isinstance(s, LCS):
        raise TypeError("lee field needs an LCS structure")
    z = musical_sharp(s.omega, s.theta)
    if not report:
        return z
    checks = [
        _zero_check("defining-contraction",
                    musical_flat(s.omega, z) - s.theta, seed, box),
        _zero_check("preserves-theta", lie_derivative(z, s.theta), seed, box),
        _zero_check("preserves-omega", lie_derivative(z, s.omega), seed, box),
    ]
    return z, ValidationReport("lee-field", checks)


# ---------------------------------------------------------------------------
# canonical cotangent-bundle instances


def cotangent_chart(n, with_z=False, with_t=False):
    """Chart (q..., p..., [z]) or (t, q..., p...) with positional names."""
    if n == 1:
        names = ["q", "p"]
    else:
        names = ["q%d" % (i + 1) for i in range(n)] + \
                ["p%d" % (i + 1) for i in range(n)]
    if with_z:
        names.append("z")
    if with_t:
        names.insert(0, "t")
    return Chart("T*Q" + ("xR" if (with_z or with_t) else ""), names)


def _q_p_names(chart, n):
    if n == 1:
        return ["q"], ["p"]
    return (["q%d" % (i + 1) for i in range(n)],
            ["p%d" % (i + 1) for i in range(n)])


def tautological_form(chart, n):
    """Θ = p_i dqⁱ on a chart that starts (q..., p...)."""
    qs, ps = _q_p_names(chart, n)
    return one_form(chart, {q: Sym(p) for q, p in zip(qs, ps)})


def canonical_two_form(chart, n):
    """Ω = dqⁱ∧dp_i = −dΘ."""
    qs, ps = _q_p_names(chart, n)
    return two_form(chart, {(q, p): 1 for q, p in zip(qs, ps)})


def liouville_field(chart, n):
    """Z = p_i ∂/∂p_i (generator of fiber dilation)."""
    _, ps = _q_p_names(chart, n)
    return vector_field(chart, {p: Sym(p) for p in ps})


def canonical_structure(kind, n, h=None, theta=None):
    """Build the standard phase-space structure of the given kind.

    kind: "symplectic" (Ω = dq∧dp on T*Q), "contact-extended"
    (η = dz − p dq on T*Q×R), "cosymplectic-oh" (η = dt, Ω = Ω_Q + dH∧dt
    on R×T*Q; needs h), "lcs" (Ω_θ = Ω_Q + θ∧Θ_Q; needs theta as a
    name->Expression map defining a one-form on the phase chart).
    Returns (chart, structure); the structure carries the tautological
    form and the Liouville field as attributes where they exist.
    """
    if n < 1:
        raise ValueError("need at least one degree of freedom")
    if kind == "symplectic":
        chart = cotangent_chart(n)
        s = Symplectic(canonical_two_form(chart, n))
    elif kind == "contact-extended":
        chart = cotangent_chart(n, with_z=True)
        qs, ps = _q_p_names(chart, n)
        comps = {"z": _ONE}
        for q, p in zip(qs, ps):
            comps[q] = mul(Num(-1), Sym(p))
        s = Contact(one_form(chart, comps))
    elif kind == "cosymplectic-oh":
        if h is None:
            raise ValueError("cosymplectic-oh needs the Hamiltonian "
                             "expression h")
        chart = cotangent_chart(n, with_t=True)
        h = _as_expr(h)
        omega = canonical_two_form(chart, n) + wedge(
            differential(chart, h), one_form(chart, {"t": 1}))
        s = Cosymplectic(one_form(chart, {"t": 1}), omega)
        s.hamiltonian = h
    elif kind == "lcs":
        if theta is None:
            raise ValueError("lcs needs the twist one-form components")
        chart = cotangent_chart(n)
        th = one_form(chart, {k: _as_expr(v) for k, v in theta.items()})
        omega = canonical_two_form(chart, n) + wedge(
            th, tautological_form(chart, n))
        s = LCS(omega, th)
    else:
        raise ValueError("unknown canonical kind %r" % (kind,))
    if kind != "contact-extended":
        s.tautological = tautological_form(chart, n)
        s.liouville = liouville_field(chart, n)
    return chart, s


# ---------------------------------------------------------------------------
# contact ↦ Jacobi


def _contact_pairing_matrix(s):
    """B_{ij} = (dη)_{ij} + η_i η_j — the invertible pairing used by both
    the Reeb solve and the contact musical maps."""
    n = s.chart.dim
    deta = exterior_derivative(s.eta)
    eta = [s.eta.comp((i,)) for i in range(n)]
    return [[add(deta.comp((i, j)), mul(eta[i], eta[j])) for j in range(n)]
            for i in range(n)], deta


def contact_flat(s, x):
    """♭(X) = ι_X dη + η(X)·η on a contact structure."""
    deta = exterior_derivative(s.eta)
    pairing = interior_product(x, s.eta).scalar()
    return interior_product(x, deta) + pairing * s.eta


def contact_sharp(s, alpha):
    """Inverse of contact_flat, by symbolic linear solve."""
    b, _ = _contact_pairing_matrix(s)
    n = s.chart.dim
    # ♭(X)_j = Σ_i X^i B_{ij}
    m = [[b[i][j] for i in range(n)] for j in range(n)]
    rhs = [alpha.comp((j,)) for j in range(n)]
    return VectorField(s.chart, solve_linear(m, rhs))


def cosymplectic_sharp(s, alpha):
    """Raise a one-form through the pairing Ω + η⊗η of a cosymplectic
    structure (the map sending dF to the gradient field of F)."""
    if not isinstance(s, Cosymplectic):
        raise TypeError("need a cosymplectic structure")
    n = s.chart.dim
    eta = [s.eta.comp((i,)) for i in range(n)]
    b = [[add(s.omega.comp((i, j)), mul(eta[i], eta[j])) for j in range(n)]
         for i in range(n)]
    m = [[b[i][j] for i in range(n)] for j in range(n)]
    rhs = [alpha.comp((j,)) for j in range(n)]
    return VectorField(s.chart, solve_linear(m, rhs))


def contact_to_jacobi(s):
    """The bivector/field pair induced by a contact form.

    Λ(α, β) = dη(♯α, ♯β) and Z = −R; the pair satisfies the Jacobi
    compatibility identities (validate of the result checks them).
    """
    if not isinstance(s, Contact):
        raise TypeError("need a contact structure")
    chart = s.chart
    n = chart.dim
    deta = exterior_derivative(s.eta)
    sharps = [contact_sharp(s, one_form(chart, {chart.coords[i]: 1}))
              for i in range(n)]
    comps = {}
    for i in range(n):
        for j in range(i + 1, n):
            pair = interior_product(
                sharps[j], interior_product(sharps[i], deta)).scalar()
            if not _strict_zero(pair):
                comps[(i, j)] = pair
    lam = Multivector(chart, 2, comps)
    z = -reeb(s)
    return Jacobi(lam, z)

"""Linear velocity constraints and the mechanics they induce on momenta.

A constraint set records one-forms psi^a = psi^a_i(q) dq^i on a base chart;
the admissible velocities are their common kernel.  On the momentum side the
same data produces, for a chosen Hamiltonian, the constraint functions
Psi^a = psi^a_i dH/dp_i, the vertical correction fields Z^a = psi^a_i d/dp_i,
the compatibility matrix Z^a(Psi^b), and — when that matrix is invertible —
a projector onto constraint-compatible directions.  The projected Hamiltonian
field and the bracket {F, G} = Omega(P(X_F), P(X_G)) follow.

The module also carries the almost-Lie-algebroid calculus: structure
functions plus an anchor over the base chart, their fiberwise forms, and the
anchored differential that sends functions to fiber one-forms and fiber
one-forms to fiber two-forms.
"""

from __future__ import annotations

from .expr import (
    Num, Sym, add, mul, _as_expr, canonical, diff, evaluate, free_symbols,
    is_zero, parse, substitute, sym, to_str, DomainError,
)
from .exterior import (
    Chart, ChartMismatchError, DegenerateFormError, KForm, VectorField,
    determinant, differential, interior_product, lie_bracket, multivector,
    musical_sharp, one_form, solve_linear, two_form,
)
from .structures import LinearAlmostPoisson, _sample_points
from .brackets import Bracket

__all__ = [
    "ConstraintSet", "Projector", "CompatibilityError",
    "AlmostLieAlgebroid", "AlgebroidForm",
    "orthogonal_fields", "compatibility_matrix",
    "projector", "projected_field", "nonholonomic_bracket",
    "constraint_distribution", "bracket_generating",
    "almost_differential",
    "restricted_hamiltonian", "restricted_hamiltonian_at",
]

_ZERO = Num(0)
_ONE = Num(1)


class CompatibilityError(ValueError):
    """The compatibility matrix Z^a(Psi^b) is singular."""


# ---------------------------------------------------------------------------
# constraint sets


class ConstraintSet:
    """Constraints psi^a_i(q) dq^i = 0, linear in the velocities.

    Each constraint may be given as a one-form on the base chart or as a
    sequence of coefficient expressions (strings are parsed over the base
    chart).  The set builds the phase chart — base coordinates first, one
    conjugate momentum per coordinate — together with the canonical two-form
    on it and the momentum-level lifts of the constraint forms.

    Coefficient rows must stay pointwise linearly independent on the sample
    box, and there must be fewer constraints than base coordinates.
    """

    def __init__(self, base_chart, constraints, momentum_names=None,
                 seed=42, box=None):
        n = base_chart.dim
        self.base_chart = base_chart
        self.coeffs = [self._coeff_row(base_chart, c) for c in constraints]
        self.k = len(self.coeffs)
        if self.k >= n:
            raise ValueError("need fewer constraints than base coordinates "
                             "(%d constraints on a %d-dim chart)"
                             % (self.k, n))
        if momentum_names is None:
            momentum_names = tuple("p" + c for c in base_chart.coords)
        else:
            momentum_names = tuple(momentum_names)
        if (len(momentum_names) != n
                or set(momentum_names) & set(base_chart.coords)):
            raise ValueError("bad momentum names %r" % (momentum_names,))
        self.momentum_names = momentum_names
        self.chart = Chart("T*" + base_chart.name,
                           base_chart.coords + momentum_names)
        self.psi = [one_form(base_chart, dict(zip(base_chart.coords, row)))
                    for row in self.coeffs]
        self.sigma = [one_form(self.chart, dict(zip(base_chart.coords, row)))
                      for row in self.coeffs]
        self.omega = two_form(self.chart,
                              {(q, p): 1 for q, p
                               in zip(base_chart.coords, momentum_names)})
        self._check_independence(seed, box)

    @staticmethod
    def _coeff_row(base_chart, c):
        if isinstance(c, KForm):
            if c.degree != 1 or c.chart != base_chart:
                raise ChartMismatchError(
                    "constraints must be one-forms on the base chart")
            return [c.comp((i,)) for i in range(base_chart.dim)]
        row = [parse(e, base_chart) if isinstance(e, str) else _as_expr(e)
               for e in c]
        if len(row) != base_chart.dim:
            raise ValueError("constraint row needs %d coefficients, got %d"
                             % (base_chart.dim, len(row)))
        return row

    def _check_independence(self, seed, box):
        if self.k == 0:
            return
        for pt in _sample_points(self.base_chart, box, seed, 12):
            try:
                rows = [[evaluate(e, pt) for e in row] for row in self.coeffs]
            except DomainError:
                continue
            if _numeric_rank(rows) < self.k:
                raise ValueError(
                    "constraint forms are linearly dependent at %s"
                    % _point_text(pt))

    def momentum_constraints(self, h):
        """Psi^a = psi^a_i dH/dp_i, the constraints carried to momenta."""
        h = self.scalar(h)
        out = []
        for row in self.coeffs:
            out.append(canonical(add(*(mul(e, diff(h, p))
                                       for e, p in zip(row,
                                                       self.momentum_names)))))
        return out

    def scalar(self, h):
        return parse(h, self.chart) if isinstance(h, str) else _as_expr(h)

    def __repr__(self):
        body = "; ".join(to_str(add(*(mul(e, Sym("d" + q)) for e, q in
                                      zip(row, self.base_chart.coords))))
                         for row in self.coeffs) or "none"
        return "ConstraintSet(%s: %s)" % (self.base_chart.name, body)


def orthogonal_fields(cs):
    """Correction directions Z^a = psi^a_i d/dp_i (one per constraint)."""
    n = cs.base_chart.dim
    out = []
    for row in cs.coeffs:
        out.append(VectorField(cs.chart, [_ZERO] * n + list(row)))
    return out


def compatibility_matrix(cs, h, seed=42, box=None):
    """The matrix C[a][b] = Z^a(Psi^b); singularity is an error.

    An invertible matrix is exactly what makes the constrained dynamics
    single-valued; failure is reported with a sample point as witness.
    """
    psis = cs.momentum_constraints(h)
    zs = orthogonal_fields(cs)
    c = [[canonical(z.derive(p)) for p in psis] for z in zs]
    if cs.k and is_zero(canonical(determinant(c)), seed=seed, box=box):
        pt = _sample_points(cs.chart, box, seed, 1)[0]
        raise CompatibilityError(
            "compatibility matrix Z^a(Psi^b) is singular; witness %s"
            % _point_text(pt))
    return c


class Projector:
    """P(X) = X - C_ab X(Psi^a) Z^b, the projection onto constrained motion.

    Callable on vector fields over the phase chart; linear over functions
    and idempotent wherever the compatibility matrix stays invertible.  The
    corrected field is tangent to every level set of the Psi^a.
    """

    __slots__ = ("chart", "constraints", "fields", "inverse")

    def __init__(self, chart, constraints, fields, inverse):
        self.chart = chart
        self.constraints = list(constraints)
        self.fields = list(fields)
        self.inverse = inverse

    def __call__(self, x):
        if not isinstance(x, VectorField):
            raise TypeError("projector acts on vector fields, got %r" % (x,))
        if x.chart != self.chart:
            raise ChartMismatchError("field chart differs from the "
                                     "projector's phase chart")
        out = x
        rates = [x.derive(p) for p in self.constraints]
        for b, z in enumerate(self.fields):
            coef = canonical(add(*(mul(self.inverse[a][b], rates[a])
                                   for a in range(len(rates)))))
            out = out - z * coef
        return out

    def __repr__(self):
        return "Projector(%d constraints on %r)" % (len(self.fields),
                                                    self.chart)


def projector(cs, h, seed=42, box=None):
    """The tangent projector determined by a constraint set and Hamiltonian."""
    c = compatibility_matrix(cs, h, seed=seed, box=box)
    psis = cs.momentum_constraints(h)
    inv = _inverse_matrix(c)
    return Projector(cs.chart, psis, orthogonal_fields(cs), inv)


def projected_field(cs, h, seed=42, box=None):
    """The constrained Hamiltonian field P(X_H) on the phase chart."""
    h = cs.scalar(h)
    p = projector(cs, h, seed=seed, box=box)
    x = musical_sharp(cs.omega, differential(cs.chart, h))
    return VectorField(cs.chart, [canonical(e) for e in p(x).components])


def nonholonomic_bracket(cs, h, seed=42, box=None):
    """The bracket {F, G} = Omega(P(X_F), P(X_G)) on the phase chart.

    Computed through its component bivector: both slots are linear over
    functions, so pairing the projected coordinate fields once gives the
    whole bracket.  Every momentum constraint Psi^a is a Casimir.
    """
    h = cs.scalar(h)
    p = projector(cs, h, seed=seed, box=box)
    chart = cs.chart
    sharps = [p(musical_sharp(cs.omega, differential(chart, sym(name))))
              for name in chart.coords]
    comps = {}
    for i in range(chart.dim):
        for j in range(i + 1, chart.dim):
            e = canonical(interior_product(
                sharps[j], interior_product(sharps[i], cs.omega)).scalar())
            comps[(chart.coords[i], chart.coords[j])] = e
    lam = multivector(chart, 2, comps)

    def fn(f, g):
        return lam(differential(chart, f), differential(chart, g))

    return Bracket(chart, "nonholonomic", fn, bivector=lam)


# ---------------------------------------------------------------------------
# the constraint distribution and its bracket closure


def constraint_distribution(cs):
    """A generating set for the velocities the constraints allow.

    Kernel basis of the coefficient matrix, as vector fields on the base
    chart; with no constraints this is every coordinate direction.
    """
    n = cs.base_chart.dim
    rows = [list(r) for r in cs.coeffs]
    reduced, pivots = _rref(rows, n)
    free = [j for j in range(n) if j not in pivots]
    out = []
    for f in free:
        comps = [_ZERO] * n
        comps[f] = _ONE
        for r, pcol in enumerate(pivots):
            comps[pcol] = canonical(mul(Num(-1), reduced[r][f]))
        out.append(VectorField(cs.base_chart, comps))
    return out


def bracket_generating(cs, box=None, depth=2, seed=42, points=20):
    """Whether iterated brackets of the allowed velocities span the base.

    Builds the distribution's generators, stacks Lie brackets up to the
    given depth, and rank-tests the collection at seeded sample points.
    True only when the span is full at every point.
    """
    if depth < 1:
        raise ValueError("bracket depth must be at least 1")
    gens = constraint_distribution(cs)
    fields = list(gens)
    layer = gens
    for _ in range(depth - 1):
        layer = [lie_bracket(g, f) for g in gens for f in layer]
        fields.extend(layer)
    n = cs.base_chart.dim
    done = 0
    for pt in _sample_points(cs.base_chart, box, seed, 5 * points):
        try:
            rows = [[evaluate(e, pt) for e in f.components] for f in fields]
        except DomainError:
            continue
        if _numeric_rank(rows) < n:
            return False
        done += 1
        if done == points:
            return True
    raise DomainError("could not evaluate the distribution on the sample box")


# ---------------------------------------------------------------------------
# restriction of the Hamiltonian to the constraint manifold


def _linear_momentum_block(cs, psis):
    """Momentum-coefficient matrix and pivot columns, if Psi is linear.

    Returns ``(None, None)`` when some coefficient still carries a momentum
    (the constraints are not linear in the fiber variables), and
    ``(a, None)`` when they are linear but the rows are dependent.  Both
    elimination routes share this so they solve for the same momenta.
    """
    moms = cs.momentum_names
    a = [[canonical(diff(p, m)) for m in moms] for p in psis]
    for row in a:
        for e in row:
            if free_symbols(e) & set(moms):
                return None, None
    try:
        _, pivots = _rref([row[:] for row in a], len(moms))
    except ValueError:
        return a, None
    return a, pivots


def restricted_hamiltonian(cs, h):
    """H with the constrained momenta eliminated through Psi^a = 0.

    Works when the momentum constraints are linear in the momenta (any
    Hamiltonian quadratic in them qualifies): the solved momenta are
    substituted back, so the result agrees with H on the constraint
    manifold and is constant transverse to it.
    """
    h = cs.scalar(h)
    if cs.k == 0:
        return h
    psis = cs.momentum_constraints(h)
    moms = cs.momentum_names
    a, pivots = _linear_momentum_block(cs, psis)
    if a is None:
        raise ValueError(
            "momentum constraints are not linear in the momenta; "
            "use restricted_hamiltonian_at for a per-point value")
    if pivots is None or len(pivots) < cs.k:
        raise CompatibilityError("momentum constraints are degenerate: "
                                 "no solvable momentum block")
    zero_moms = {m: 0 for m in moms}
    b = [canonical(substitute(p, zero_moms)) for p in psis]
    free = [j for j in range(len(moms)) if j not in pivots]
    system = [[a[i][j] for j in pivots] for i in range(cs.k)]
    rhs = [canonical(add(mul(Num(-1), b[i]),
                         *(mul(Num(-1), a[i][j], Sym(moms[j]))
                           for j in free)))
           for i in range(cs.k)]
    try:
        sol = solve_linear(system, rhs)
    except DegenerateFormError as exc:
        raise CompatibilityError("momentum constraints are degenerate: %s"
                                 % exc) from None
    binding = {moms[p]: canonical(sol[r]) for r, p in enumerate(pivots)}
    return canonical(substitute(h, binding))


def restricted_hamiltonian_at(cs, h, pt, params=None):
    """H on the constraint manifold at one point, found numerically.

    Newton iteration solves Psi^a = 0 for a pivot block of momenta, starting
    from the given values; the remaining coordinates are held fixed.  This
    is the per-point fallback for Hamiltonians whose momentum constraints
    are not linear in the momenta.  When they are linear, the pivot block
    is the one the symbolic elimination uses, so the two routes agree.
    """
    h = cs.scalar(h)
    pt = dict(pt)
    if cs.k == 0:
        return evaluate(h, pt, params)
    psis = cs.momentum_constraints(h)
    moms = cs.momentum_names
    jac = [[diff(p, m) for m in moms] for p in psis]
    _, pivots = _linear_momentum_block(cs, psis)
    if pivots is None:
        rows = [[evaluate(e, pt, params) for e in row] for row in jac]
        pivots = _pivot_columns(rows)
    if len(pivots) < cs.k:
        raise CompatibilityError(
            "momentum constraints are degenerate at %s" % _point_text(pt))
    scale = 1.0 + max(abs(evaluate(p, pt, params)) for p in psis)
    for _ in range(60):
        vals = [evaluate(p, pt, params) for p in psis]
        if max(abs(v) for v in vals) <= 1e-12 * scale:
            return evaluate(h, pt, params)
        m = [[evaluate(jac[i][j], pt, params) for j in pivots]
             for i in range(cs.k)]
        delta = _solve_numeric(m, [-v for v in vals])
        for r, j in enumerate(pivots):
            pt[moms[j]] += delta[r]
    raise ArithmeticError("constraint projection did not converge at %s"
                          % _point_text(pt))


# ---------------------------------------------------------------------------
# almost Lie algebroids and the anchored differential


class AlmostLieAlgebroid:
    """Structure functions C^g_ab and anchor rho^i_a over a base chart.

    The structure functions must be antisymmetric in the lower indices; no
    closure identity is required of them.  ``dual()`` is the same data read
    as a fiberwise-linear bracket on the dual bundle chart.
    """

    def __init__(self, c, rho, base_chart, fiber_rank, section_names=None):
        # the dual-side constructor owns the shape validation
        self._dual = LinearAlmostPoisson(c, rho, base_chart, fiber_rank)
        self.c = self._dual.c
        self.rho = self._dual.rho
        self.base_chart = base_chart
        self.rank = fiber_rank
        for g in range(fiber_rank):
            for i in range(fiber_rank):
                for j in range(i, fiber_rank):
                    if not is_zero(add(self.c[g][i][j], self.c[g][j][i])):
                        raise ValueError("structure functions must be "
                                         "antisymmetric in the lower indices")
        if section_names is None:
            section_names = tuple("X%d" % (a + 1) for a in range(fiber_rank))
        if len(section_names) != fiber_rank:
            raise ValueError("need one section name per fiber dimension")
        self.section_names = tuple(section_names)

    def dual(self):
        return self._dual

    def __repr__(self):
        return "AlmostLieAlgebroid(rank %d over %r)" % (self.rank,
                                                        self.base_chart)


class AlgebroidForm:
    """A skew form on an algebroid's fibers, coefficients over the base.

    Degree-one forms may be given as a full component sequence; otherwise
    components are keyed by ascending index tuples into the dual basis.
    """

    __slots__ = ("algebroid", "degree", "comps")

    def __init__(self, algebroid, degree, comps):
        if not 1 <= degree <= algebroid.rank:
            raise ValueError("degree must lie between 1 and the fiber rank")
        if degree == 1 and isinstance(comps, (list, tuple)):
            if len(comps) != algebroid.rank:
                raise ValueError("need %d components, got %d"
                                 % (algebroid.rank, len(comps)))
            comps = {(i,): e for i, e in enumerate(comps)}
        norm = {}
        for idx, e in comps.items():
            sidx, sign = _sort_indices(idx)
            if len(sidx) != degree or sidx[-1] >= algebroid.rank:
                raise ValueError("bad index %r for a degree-%d form of "
                                 "rank %d" % (idx, degree, algebroid.rank))
            if sign == 0:
                continue
            e = mul(Num(sign), _as_expr(e))
            norm[sidx] = add(norm[sidx], e) if sidx in norm else e
        self.algebroid = algebroid
        self.degree = degree
        self.comps = {i: e for i, e in norm.items()
                      if not (isinstance(e, Num) and e.value == 0)}

    def comp(self, idx):
        sidx, sign = _sort_indices(idx)
        if sign == 0:
            return _ZERO
        e = self.comps.get(sidx, _ZERO)
        return mul(Num(sign), e) if sign < 0 else e

    def is_zero(self):
        return all(is_zero(e) for e in self.comps.values())

    def __eq__(self, other):
        if not isinstance(other, AlgebroidForm):
            return NotImplemented
        if self.algebroid is not other.algebroid or \
                self.degree != other.degree:
            return False
        keys = set(self.comps) | set(other.comps)
        return all(is_zero(add(self.comp(i), mul(Num(-1), other.comp(i))))
                   for i in keys)

    __hash__ = None

    def __repr__(self):
        names = self.algebroid.section_names
        if not self.comps:
            return "AlgebroidForm(0)"
        terms = ["(%s) %s" % (to_str(e), "^".join(names[i] for i in idx))
                 for idx, e in sorted(self.comps.items())]
        return "AlgebroidForm(%s)" % " + ".join(terms)


def almost_differential(a, x):
    """The anchored differential d^D of a function or fiber one-form.

    On functions the anchor carries base derivatives to fiber components;
    on fiber one-forms the structure functions contribute the extra term
    that measures the failure of the dual basis to be closed.
    """
    coords = a.base_chart.coords
    if isinstance(x, (list, tuple)):
        x = AlgebroidForm(a, 1, x)
    if isinstance(x, AlgebroidForm):
        if x.algebroid is not a:
            raise ValueError("form belongs to a different algebroid basis")
        if x.degree != 1:
            raise ValueError("the anchored differential is implemented for "
                             "functions and fiber one-forms")
        comps = {}
        for d in range(a.rank):
            for b in range(d + 1, a.rank):
                terms = []
                for i, q in enumerate(coords):
                    terms.append(mul(a.rho[i][d], diff(x.comp((b,)), q)))
                    terms.append(mul(Num(-1), a.rho[i][b],
                                     diff(x.comp((d,)), q)))
                for g in range(a.rank):
                    terms.append(mul(Num(-1), a.c[g][d][b], x.comp((g,))))
                comps[(d, b)] = canonical(add(*terms))
        return AlgebroidForm(a, 2, comps)
    f = parse(x, a.base_chart) if isinstance(x, str) else _as_expr(x)
    comps = {}
    for al in range(a.rank):
        comps[(al,)] = canonical(add(*(mul(a.rho[i][al], diff(f, q))
                                       for i, q in enumerate(coords))))
    return AlgebroidForm(a, 1, comps)


# ---------------------------------------------------------------------------
# shared linear-algebra helpers


def _point_text(pt):
    return "(%s)" % ", ".join("%s=%.6g" % (k, v)
                              for k, v in sorted(pt.items()))


def _sort_indices(idx):
    idx = list(idx)
    sign = 1
    for i in range(1, len(idx)):
        j = i
        while j > 0 and idx[j] < idx[j - 1]:
            idx[j], idx[j - 1] = idx[j - 1], idx[j]
            sign = -sign
            j -= 1
    if len(set(idx)) != len(idx):
        return tuple(idx), 0
    return tuple(idx), sign


def _inverse_matrix(c):
    k = len(c)
    cols = []
    for j in range(k):
        rhs = [_ONE if i == j else _ZERO for i in range(k)]
        try:
            cols.append(solve_linear([row[:] for row in c], rhs))
        except DegenerateFormError as exc:
            raise CompatibilityError(str(exc)) from None
    return [[canonical(cols[j][i]) for j in range(k)] for i in range(k)]


def _rref(rows, n):
    """Row-reduce in place; returns (rows, pivot columns), preferring
    numeric pivots so polynomial data stays fraction-free where it can."""
    pivots = []
    for row in rows:
        cands = [j for j in range(n) if j not in pivots]
        piv = next((j for j in cands
                    if isinstance(row[j], Num) and row[j].value != 0), None)
        if piv is None:
            piv = next((j for j in cands if not is_zero(row[j])), None)
        if piv is None:
            raise ValueError("constraint rows are linearly dependent")
        inv = canonical(_power_inverse(row[piv]))
        for j in range(n):
            row[j] = canonical(mul(inv, row[j]))
        r = len(pivots)
        for other in rows[:r] + rows[r + 1:]:
            f = other[piv]
            if isinstance(f, Num) and f.value == 0:
                continue
            for j in range(n):
                other[j] = canonical(add(other[j],
                                         mul(Num(-1), f, row[j])))
        pivots.append(piv)
    return rows, pivots


def _power_inverse(e):
    from .expr import pw
    return pw(e, -1)


def _pivot_columns(rows):
    """Greedy column choice by largest magnitude, one per row."""
    used = []
    for row in rows:
        best, mag = None, 0.0
        for j, v in enumerate(row):
            if j not in used and abs(v) > mag:
                best, mag = j, abs(v)
        if best is None or mag <= 1e-12:
            break
        used.append(best)
    return used


def _numeric_rank(rows, tol=1e-9):
    m = [list(r) for r in rows]
    if not m:
        return 0
    ncols = len(m[0])
    scale = max((abs(v) for row in m for v in row), default=0.0)
    if scale == 0.0:
        return 0
    cut = tol * scale
    rank = 0
    for col in range(ncols):
        piv, mag = None, cut
        for r in range(rank, len(m)):
            if abs(m[r][col]) > mag:
                piv, mag = r, abs(m[r][col])
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        lead = m[rank][col]
        for r in range(len(m)):
            if r == rank or abs(m[r][col]) <= cut:
                continue
            f = m[r][col] / lead
            for j in range(ncols):
                m[r][j] -= f * m[rank][j]
        rank += 1
        if rank == len(m):
            break
    return rank


def _solve_numeric(m, rhs):
    n = len(m)
    a = [list(m[i]) + [rhs[i]] for i in range(n)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(a[piv][col]) <= 1e-14:
            raise ArithmeticError("singular constraint Jacobian")
        a[col], a[piv] = a[piv], a[col]
        lead = a[col][col]
        a[col] = [v / lead for v in a[col]]
        for r in range(n):
            if r == col:
                continue
            f = a[r][col]
            if f:
                a[r] = [v - f * w for v, w in zip(a[r], a[col])]
    return [a[i][n] for i in range(n)]

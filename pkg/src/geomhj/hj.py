"""Hamilton-Jacobi residual reports for sections of phase-space bundles.

Every evaluator here takes a Hamiltonian and a section (momenta, and where
relevant the extra fiber directions, expressed over the base coordinates),
composes the two, and produces an :class:`HJReport` with three kinds of
content: the preconditions the section must satisfy for the reduction to
make sense, the residual of the reduced equation itself, and the
relatedness defect — how far the projected dynamics, pushed back through
the section, is from the restriction of the full dynamics.  Residual and
defect vanish together for sections that pass the preconditions; reporting
them separately is what makes a failing report informative.

Chart conventions are positional throughout: the i-th fiber coordinate of
a section's total chart is conjugate to the i-th base coordinate; a lone
time coordinate comes first, a lone contact coordinate comes last.
"""

from .expr import (Chart, DomainError, Num, Sym, _as_expr, add, canonical,
                   diff, evaluate, free_symbols, is_zero, mul, parse,
                   substitute, to_str, zero_status)
from .exterior import (ChartMismatchError, KForm, SectionMap, VectorField,
                       differential, exterior_derivative, musical_sharp,
                       one_form, pullback, pushforward, two_form,
                       vector_field, wedge)
from .structures import _sample_points
from .dynamics import DynamicsSpec
from . import dynamics as _dynamics
from .nonholonomic import (AlgebroidForm, AlmostLieAlgebroid,
                           almost_differential, bracket_generating,
                           constraint_distribution, projected_field)

__all__ = [
    "RESIDUAL_RTOL", "DEFECT_TOL",
    "CheckEntry", "HJReport", "SectionDomainError",
    "relatedness_defect",
    "hj_symplectic", "hj_tdep", "hj_forced", "hj_conformal",
    "hj_cosymplectic", "hj_lcs",
    "hj_contact_I", "hj_contact_II", "hj_evolution_I", "hj_evolution_II",
    "hj_nonholonomic", "complete_solution_check",
]

# Residuals are measured against RESIDUAL_RTOL times (1 + the size of the
# composed Hamiltonian on the sample box); the relatedness defect against
# the absolute DEFECT_TOL, looser because it differentiates the section.
RESIDUAL_RTOL = 1e-8
DEFECT_TOL = 1e-6

_ZERO = Num(0)
_NEG_ONE = Num(-1)


def _sub(a, b):
    return add(a, mul(_NEG_ONE, b))


# ---------------------------------------------------------------------------
# report plumbing


class SectionDomainError(ValueError):
    """Evaluation left the section's domain; carries the sample point."""

    def __init__(self, cause, point):
        super().__init__("%s at %s" % (cause, _point_str(point)))
        self.point = dict(point)


def _point_str(pt):
    return "{%s}" % ", ".join("%s=%.6g" % (k, pt[k]) for k in sorted(pt))


class CheckEntry:
    """One named line of a report: a value, an optional verdict, a detail."""

    __slots__ = ("name", "value", "passed", "detail")

    def __init__(self, name, value, passed=None, detail=""):
        self.name = name
        self.value = value
        self.passed = passed
        self.detail = detail

    def __repr__(self):
        return "CheckEntry(%r, %r, passed=%r)" % (self.name, self.value,
                                                  self.passed)


def _fmt(value):
    if isinstance(value, bool):
        return "pass" if value else "fail"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class HJReport:
    """Ordered named checks plus the residual expressions behind them.

    The overall verdict is the conjunction of every entry that carries a
    verdict; informational entries (``passed is None``) never gate it.
    ``render_flat`` emits one ``name = value`` line per entry for machine
    consumption, ``render_text`` a human-readable block.
    """

    def __init__(self, title):
        self.title = title
        self.entries = []
        self.expressions = []
        self._index = {}

    def add(self, name, value, passed=None, detail=""):
        if name in self._index:
            raise ValueError("duplicate report entry %r" % name)
        self._index[name] = len(self.entries)
        self.entries.append(CheckEntry(name, value, passed, detail))

    def add_expression(self, name, e):
        self.expressions.append((name, e))

    def expression(self, name):
        for n, e in self.expressions:
            if n == name:
                return e
        raise KeyError(name)

    def __getitem__(self, name):
        return self.entries[self._index[name]].value

    def __contains__(self, name):
        return name in self._index

    def entry(self, name):
        return self.entries[self._index[name]]

    @property
    def verdict(self):
        return all(e.passed for e in self.entries if e.passed is not None)

    def render_flat(self):
        lines = ["%s = %s" % (e.name, _fmt(e.value)) for e in self.entries]
        lines.extend("expr.%s = %s" % (n, to_str(e) if not isinstance(e, str)
                                       else e)
                     for n, e in self.expressions)
        lines.append("verdict = %s" % ("pass" if self.verdict else "fail"))
        return "\n".join(lines) + "\n"

    def render_text(self):
        lines = ["%s report" % self.title]
        for e in self.entries:
            mark = "" if e.passed is None else \
                ("  [ok]" if e.passed else "  [FAIL]")
            tail = ("  (%s)" % e.detail) if e.detail else ""
            lines.append("  %-34s %s%s%s" % (e.name, _fmt(e.value),
                                             mark, tail))
        if self.expressions:
            lines.append("  residual expressions:")
            for n, e in self.expressions:
                lines.append("    %s: %s" % (n, to_str(e)
                                             if not isinstance(e, str) else e))
        lines.append("  verdict: %s" % ("PASS" if self.verdict else "FAIL"))
        return "\n".join(lines) + "\n"

    def __repr__(self):
        return "HJReport(%r, %s)" % (self.title,
                                     "pass" if self.verdict else "fail")


# ---------------------------------------------------------------------------
# shared evaluation helpers


def _scalar_on(chart, f, params):
    if isinstance(f, str):
        return parse(f, chart, params=tuple(sorted(params)) if params else ())
    return _as_expr(f)


def _samples(chart, box, seed, count):
    return _sample_points(chart, box, seed, count)


def _eval(e, pt, params):
    try:
        return evaluate(e, pt, params)
    except DomainError as err:
        raise SectionDomainError(err, pt) from None


def _sup(e, pts, params):
    return max(abs(_eval(e, pt, params)) for pt in pts)


def _split_fields(sec):
    base = set(sec.base_chart.coords)
    bases = [c for c in sec.total_chart.coords if c in base]
    fibers = [c for c in sec.total_chart.coords if c not in base]
    return bases, fibers


def _conjugate_pairs(sec):
    bases, fibers = _split_fields(sec)
    if len(bases) != len(fibers):
        raise ChartMismatchError(
            "the total chart must pair one fiber coordinate with each base "
            "coordinate (%d base, %d fiber)" % (len(bases), len(fibers)))
    return list(zip(bases, fibers))


def _pair_two_form(chart, pairs):
    return two_form(chart, {(b, f): 1 for b, f in pairs})


def _pair_tautological(chart, pairs):
    return one_form(chart, {b: Sym(f) for b, f in pairs})


def _base_one_form(sec, pairs):
    return one_form(sec.base_chart, {b: sec.fiber[f] for b, f in pairs})


def _closedness(report, form, box, seed, name="precondition.closedness"):
    """Record whether every component of the two-form vanishes."""
    how = "symbolic"
    bad = None
    for idx in sorted(form.comps):
        st = zero_status(form.comps[idx], seed=seed, box=box)
        if st == "no":
            bad = tuple(form.chart.coords[i] for i in idx)
            break
        if st == "numeric":
            how = "numeric"
    ok = bad is None
    report.add(name, ok, passed=ok,
               detail=how if ok else "nonzero d%s^d%s component" % bad)


def _pairwise_closedness(report, comp_of, qs, box, seed,
                         name="precondition.closedness"):
    """Closedness of gamma_i dq^i in the q directions only."""
    how = "symbolic"
    bad = None
    for i, qi in enumerate(qs):
        for qj in qs[i + 1:]:
            e = canonical(_sub(diff(comp_of[qj], qi), diff(comp_of[qi], qj)))
            st = zero_status(e, seed=seed, box=box)
            if st == "no":
                bad = (qi, qj)
                break
            if st == "numeric":
                how = "numeric"
        if bad:
            break
    ok = bad is None
    if ok and len(qs) < 2:
        how = "trivial (one coordinate)"
    report.add(name, ok, passed=ok,
               detail=how if ok else "nonzero d%s^d%s component" % bad)


def _residual_block(report, named, pts, scale, params):
    tol = RESIDUAL_RTOL * scale
    worst = 0.0
    for name, e in named:
        v = _sup(e, pts, params)
        worst = max(worst, v)
        report.add("residual.%s" % name, v)
        report.add_expression(name, e)
    report.add("residual.max", worst, passed=worst <= tol)
    report.add("residual.scale", scale)
    report.add("residual.tolerance", tol)
    return tol


def _defect_block(report, x, sec, box, points, seed, params):
    d = relatedness_defect(x, sec, box=box, n=points, seed=seed,
                           params=params)
    report.add("defect.relatedness", d,
               detail="equivalence threshold %s" % repr(DEFECT_TOL))
    return d


def _sampling_block(report, seed, points):
    report.add("samples.seed", seed)
    report.add("samples.count", points)


# ---------------------------------------------------------------------------
# relatedness


def relatedness_defect(x, gamma, box=None, n=20, seed=42, params=None):
    """Largest gap between the section-projected flow and the flow itself.

    The field is composed with the section and its base components kept,
    giving the projected field on the base; pushing that forward through
    the section yields a second field along the section.  The return value
    is the largest absolute component difference between the pushforward
    and the composed field over ``n`` seeded points of ``box`` — zero
    exactly when the projected and the full dynamics agree along the
    section.  Sample points outside the section's domain raise
    :class:`SectionDomainError` with the offending point.
    """
    if x.chart != gamma.total_chart:
        raise ChartMismatchError("field and section live on different charts")
    base = gamma.base_chart
    projected = VectorField(base, [
        canonical(substitute(x.component(b), gamma.fiber))
        for b in base.coords])
    lifted = pushforward(gamma, projected)
    gaps = [canonical(_sub(substitute(c, gamma.fiber), l))
            for c, l in zip(x.components, lifted.components)]
    worst = 0.0
    for pt in _samples(base, box, seed, n):
        for g in gaps:
            worst = max(worst, abs(_eval(g, pt, params)))
    return worst


# ---------------------------------------------------------------------------
# symplectic-type charts


def hj_symplectic(h, gamma, energy=None, box=None, seed=42, points=20,
                  params=None):
    """Closed one-form sections of d(H∘γ) = 0 on a conjugate-pair chart.

    Precondition: the section, read as a one-form on the base, is closed.
    Residual: one component of d(H∘γ) per base coordinate.  With
    ``energy`` given, |H∘γ − energy| is checked as well.  The defect is
    measured against the Hamiltonian field of the pairing two-form.
    """
    pairs = _conjugate_pairs(gamma)
    base = gamma.base_chart
    total = gamma.total_chart
    h = _scalar_on(total, h, params)
    report = HJReport("time-independent Hamilton-Jacobi")
    _sampling_block(report, seed, points)
    _closedness(report, exterior_derivative(_base_one_form(gamma, pairs)),
                box, seed)
    hg = canonical(gamma.compose_scalar(h))
    report.add_expression("composition", hg)
    pts = _samples(base, box, seed, points)
    scale = 1.0 + _sup(hg, pts, params)
    named = [(b, canonical(diff(hg, b))) for b, _ in pairs]
    tol = _residual_block(report, named, pts, scale, params)
    if energy is not None:
        e = canonical(_sub(hg, _scalar_on(total, energy, params)))
        v = _sup(e, pts, params)
        report.add("residual.energy", v, passed=v <= tol)
    x = musical_sharp(_pair_two_form(total, pairs), differential(total, h))
    _defect_block(report, x, gamma, box, points, seed, params)
    return report


def hj_tdep(h, gamma, box=None, seed=42, points=20, params=None):
    """Closed sections over time-extended bases: d(H^e∘γ) ∈ ⟨dt⟩.

    The total chart is read as (time, coordinates, conjugate of time,
    momenta) in positional order; the Hamiltonian may depend on time but
    not on the coordinate conjugate to it, which the evaluator adds to
    form the extended function.  Residual: the non-time components of
    d(H^e∘γ); the time component is free and reported informationally.
    """
    pairs = _conjugate_pairs(gamma)
    base = gamma.base_chart
    total = gamma.total_chart
    tname, ename = pairs[0]
    h = _scalar_on(total, h, params)
    if ename in free_symbols(h):
        raise ValueError("the Hamiltonian must not mention the conjugate "
                         "of the time coordinate (%r)" % ename)
    report = HJReport("time-dependent Hamilton-Jacobi")
    _sampling_block(report, seed, points)
    _closedness(report, exterior_derivative(_base_one_form(gamma, pairs)),
                box, seed)
    heg = canonical(gamma.compose_scalar(add(h, Sym(ename))))
    report.add_expression("extended-composition", heg)
    pts = _samples(base, box, seed, points)
    scale = 1.0 + _sup(heg, pts, params)
    named = [(b, canonical(diff(heg, b))) for b, _ in pairs[1:]]
    _residual_block(report, named, pts, scale, params)
    free_part = canonical(diff(heg, tname))
    report.add("info.d%s-component" % tname, _sup(free_part, pts, params),
               detail="free: membership in the time ideal ignores it")
    x = musical_sharp(_pair_two_form(total, pairs),
                      differential(total, add(h, Sym(ename))))
    _defect_block(report, x, gamma, box, points, seed, params)
    return report


def hj_forced(h, beta, sigma, box=None, seed=42, points=20, params=None):
    """Sections against external forcing: d(H∘σ) + σ*β = 0.

    ``beta`` must be a semibasic one-form on the phase chart (no momentum
    components); the defect is measured against the field whose
    contraction with the pairing two-form is dH + β.
    """
    pairs = _conjugate_pairs(sigma)
    base = sigma.base_chart
    total = sigma.total_chart
    h = _scalar_on(total, h, params)
    if not isinstance(beta, KForm) or beta.degree != 1:
        raise TypeError("the force must be a one-form")
    if beta.chart != total:
        raise ChartMismatchError("the force one-form must live on the "
                                 "phase chart")
    fiber_names = {f for _, f in pairs}
    for idx in beta.comps:
        coord = total.coords[idx[0]]
        if coord in fiber_names:
            raise ValueError("the force one-form must be semibasic: found "
                             "a d%s component" % coord)
    report = HJReport("forced Hamilton-Jacobi")
    _sampling_block(report, seed, points)
    _closedness(report, exterior_derivative(_base_one_form(sigma, pairs)),
                box, seed)
    hg = canonical(sigma.compose_scalar(h))
    report.add_expression("composition", hg)
    resid = differential(base, hg) + pullback(sigma, beta)
    pts = _samples(base, box, seed, points)
    scale = 1.0 + _sup(hg, pts, params)
    named = [(b, canonical(resid.comp((i,))))
             for i, b in enumerate(base.coords)]
    _residual_block(report, named, pts, scale, params)
    x = musical_sharp(_pair_two_form(total, pairs),
                      differential(total, h) + beta)
    _defect_block(report, x, sigma, box, points, seed, params)
    return report


def hj_conformal(h, c, gamma, box=None, seed=42, points=20, params=None):
    """Sections of the conformal equation d(H∘γ) = c·γ*(tautological form).

    The conformal factor scales the tautological one-form of the pairing;
    the defect is measured against the field whose contraction with the
    pairing two-form is dH − c·(tautological form).  The residual is also
    cross-checked against the forced evaluator's form with the force set
    to −c times the tautological form.
    """
    pairs = _conjugate_pairs(gamma)
    base = gamma.base_chart
    total = gamma.total_chart
    h = _scalar_on(total, h, params)
    c = _scalar_on(total, c, params)
    theta = _pair_tautological(total, pairs)
    report = HJReport("conformal Hamilton-Jacobi")
    _sampling_block(report, seed, points)
    _closedness(report, exterior_derivative(_base_one_form(gamma, pairs)),
                box, seed)
    hg = canonical(gamma.compose_scalar(h))
    report.add_expression("composition", hg)
    resid = differential(base, hg) - pullback(gamma, theta) * c
    pts = _samples(base, box, seed, points)
    scale = 1.0 + _sup(hg, pts, params)
    named = [(b, canonical(resid.comp((i,))))
             for i, b in enumerate(base.coords)]
    _residual_block(report, named, pts, scale, params)
    forced = differential(base, hg) + pullback(gamma, theta * mul(_NEG_ONE, c))
    agree = all(is_zero(_sub(resid.comp((i,)), forced.comp((i,))),
                        seed=seed, box=box)
                for i in range(base.dim))
    report.add("crosscheck.forced-form", agree, passed=agree,
               detail="force = -c * tautological form")
    x = musical_sharp(_pair_two_form(total, pairs),
                      differential(total, h) - theta * c)
    _defect_block(report, x, gamma, box, points, seed, params)
    return report


# ---------------------------------------------------------------------------
# cosymplectic and twisted charts


def hj_cosymplectic(h, gamma, box=None, seed=42, points=20, params=None):
    """Time-indexed momentum sections: ∂γ/∂t + (∂H/∂p)∘γ·∂γ/∂q + ∂H/∂q∘γ.

    The total chart is (time, coordinates, momenta) with time first; the
    section assigns every momentum an expression over coordinates and
    time.  Precondition: at each frozen time the section is closed in the
    coordinate directions.  The defect is measured against the field that
    advances time at unit rate and follows the canonical equations.
    """
    bases, fibers = _split_fields(gamma)
    if len(bases) != len(fibers) + 1:
        raise ChartMismatchError("need exactly one unpaired time coordinate "
                                 "(%d base, %d fiber)"
                                 % (len(bases), len(fibers)))
    tname, qs = bases[0], bases[1:]
    total = gamma.total_chart
    h = _scalar_on(total, h, params)
    gam = {q: gamma.fiber[p] for q, p in zip(qs, fibers)}
    report = HJReport("cosymplectic Hamilton-Jacobi")
    _sampling_block(report, seed, points)
    _pairwise_closedness(report, gam, qs, box, seed)
    hg = canonical(gamma.compose_scalar(h))
    report.add_expression("composition", hg)
    hp = [canonical(substitute(diff(h, p), gamma.fiber)) for p in fibers]
    hq = [canonical(substitute(diff(h, q), gamma.fiber)) for q in qs]
    named = []
    for j, qj in enumerate(qs):
        e = add(diff(gam[qj], tname),
                *[mul(hp[i], diff(gam[qj], qi)) for i, qi in enumerate(qs)])
        named.append((qj, canonical(add(e, hq[j]))))
    pts = _samples(gamma.base_chart, box, seed, points)
    scale = 1.0 + _sup(hg, pts, params)
    _residual_block(report, named, pts, scale, params)
    comps = {tname: Num(1)}
    for q, p in zip(qs, fibers):
        comps[q] = diff(h, p)
        comps[p] = mul(_NEG_ONE, diff(h, q))
    x = vector_field(total, comps)
    _defect_block(report, x, gamma, box, points, seed, params)
    return report


def hj_lcs(h, twist, gamma, box=None, seed=42, points=20, params=None):
    """Sections of the twisted equation d(H∘γ) − (H∘γ)·ϑ = 0.

    ``twist`` is a closed one-form on the base (a non-closed twist is an
    error, not a failing report).  Precondition: the twisted differential
    of the section vanishes, dγ − ϑ∧γ = 0.  The defect is measured
    against the field of the twisted pairing two-form with right-hand
    side dH − H·ϑ.
    """
    pairs = _conjugate_pairs(gamma)
    base = gamma.base_chart
    total = gamma.total_chart
    h = _scalar_on(total, h, params)
    if not isinstance(twist, KForm) or twist.degree != 1:
        raise TypeError("the twist must be a one-form")
    if twist.chart != base:
        raise ChartMismatchError("the twist one-form must live on the base "
                                 "chart")
    dtwist = exterior_derivative(twist)
    for idx, e in sorted(dtwist.comps.items()):
        if not is_zero(e, seed=seed, box=box):
            names = tuple(base.coords[i] for i in idx)
            raise ValueError("the twist one-form must be closed: nonzero "
                             "d%s^d%s component %s" % (names + (to_str(e),)))
    report = HJReport("locally conformal symplectic Hamilton-Jacobi")
    _sampling_block(report, seed, points)
    alpha = _base_one_form(gamma, pairs)
    _closedness(report, exterior_derivative(alpha) - wedge(twist, alpha),
                box, seed, name="precondition.twisted-closedness")
    hg = canonical(gamma.compose_scalar(h))
    report.add_expression("composition", hg)
    resid = differential(base, hg) - twist * hg
    pts = _samples(base, box, seed, points)
    scale = 1.0 + _sup(hg, pts, params)
    named = [(b, canonical(resid.comp((i,))))
             for i, b in enumerate(base.coords)]
    _residual_block(report, named, pts, scale, params)
    lift = one_form(total, {b: twist.comp((i,))
                            for i, b in enumerate(base.coords)})
    omega = _pair_two_form(total, pairs) + \
        wedge(lift, _pair_tautological(total, pairs))
    x = musical_sharp(omega, differential(total, h) - lift * h)
    _defect_block(report, x, gamma, box, points, seed, params)
    return report


# ---------------------------------------------------------------------------
# contact-type charts


def _contact_names(sec):
    total = sec.total_chart.coords
    if len(total) % 2 == 0:
        raise ChartMismatchError("a contact phase chart is odd-dimensional")
    n = len(total) // 2
    return list(total[:n]), list(total[n:2 * n]), total[-1]


def _contact_field(chart, qs, ps, zname, h, evolution=False):
    """Hamiltonian (or, with ``evolution``, transported) contact dynamics."""
    hz = diff(h, zname)
    comps = {}
    dilation = []
    for q, p in zip(qs, ps):
        hp = diff(h, p)
        comps[q] = hp
        comps[p] = mul(_NEG_ONE, add(diff(h, q), mul(Sym(p), hz)))
        dilation.append(mul(Sym(p), hp))
    zc = add(*dilation)
    comps[zname] = zc if evolution else add(zc, mul(_NEG_ONE, h))
    return vector_field(chart, comps)


def _family_preconditions(report, gamma, qs, ps, zname, box, seed, points,
                          params):
    """Closedness in the coordinate directions plus pointwise z-scaling.

    The z-derivative of the section must be proportional to the section
    itself; the factor is fitted per sample point by least squares and the
    fit residual is the reported precondition value.
    """
    gam = {q: gamma.fiber[p] for q, p in zip(qs, ps)}
    _pairwise_closedness(report, gam, qs, box, seed)
    comps = [gam[q] for q in qs]
    dz = [canonical(diff(e, zname)) for e in comps]
    worst = 0.0
    size = 0.0
    lo = hi = None
    for pt in _samples(gamma.base_chart, box, seed, points):
        g = [_eval(e, pt, params) for e in comps]
        gz = [_eval(e, pt, params) for e in dz]
        den = sum(v * v for v in g)
        factor = sum(a * b for a, b in zip(gz, g)) / den if den > 1e-30 \
            else 0.0
        worst = max(worst, max(abs(a - factor * b)
                               for a, b in zip(gz, g)))
        size = max(size, max(abs(v) for v in g + gz))
        lo = factor if lo is None else min(lo, factor)
        hi = factor if hi is None else max(hi, factor)
    ok = worst <= RESIDUAL_RTOL * (1.0 + size)
    report.add("precondition.z-scaling", worst, passed=ok,
               detail="fitted factor in [%.6g, %.6g]" % (lo, hi))
    return gam


def hj_contact_I(h, gamma, box=None, seed=42, points=20, params=None):
    """Momentum sections over (coordinates, z) against contact dynamics.

    The total chart is (q..., p..., z) with the contact coordinate last;
    the section provides the momenta over (q..., z).  Preconditions: the
    section is closed in the coordinate directions and its z-derivative is
    pointwise proportional to it.  Residual, one component per coordinate:

        ∂H/∂qʲ + ∂H/∂pᵢ·∂γᵢ/∂qʲ + γⱼ(∂H/∂z + ∂H/∂pᵢ·∂γᵢ/∂z) − H·∂γⱼ/∂z

    composed with the section throughout.  A strong-solution flag records
    whether H∘γ − γᵢ·(∂H/∂pᵢ)∘γ vanishes as well.
    """
    qs, ps, zname = _contact_names(gamma)
    if set(gamma.base_chart.coords) != set(qs) | {zname}:
        raise ChartMismatchError("the section family must be based on the "
                                 "coordinates plus %r" % zname)
    total = gamma.total_chart
    h = _scalar_on(total, h, params)
    report = HJReport("contact Hamilton-Jacobi (section family)")
    _sampling_block(report, seed, points)
    gam = _family_preconditions(report, gamma, qs, ps, zname, box, seed,
                                points, params)
    hg = canonical(gamma.compose_scalar(h))
    report.add_expression("composition", hg)
    hp = [canonical(substitute(diff(h, p), gamma.fiber)) for p in ps]
    hzg = canonical(substitute(diff(h, zname), gamma.fiber))
    vertical = add(hzg, *[mul(hp[i], diff(gam[qi], zname))
                          for i, qi in enumerate(qs)])
    named = []
    for j, qj in enumerate(qs):
        e = add(canonical(substitute(diff(h, qj), gamma.fiber)),
                *[mul(hp[i], diff(gam[qi], qj)) for i, qi in enumerate(qs)])
        e = add(e, mul(gam[qj], vertical),
                mul(_NEG_ONE, hg, diff(gam[qj], zname)))
        named.append((qj, canonical(e)))
    pts = _samples(gamma.base_chart, box, seed, points)
    scale = 1.0 + _sup(hg, pts, params)
    tol = _residual_block(report, named, pts, scale, params)
    strong = canonical(_sub(hg, add(*[mul(gam[q], hp[i])
                                      for i, q in enumerate(qs)])))
    v = _sup(strong, pts, params)
    report.add("info.strong-solution", v <= tol,
               detail="max |H∘γ − γ·(∂H/∂p)∘γ| = %s" % repr(v))
    x = _contact_field(total, qs, ps, zname, h)
    _defect_block(report, x, gamma, box, points, seed, params)
    return report


def hj_contact_II(h, gamma, level=None, box=None, seed=42, points=20,
                  params=None):
    """Fixed sections (momenta and z over the coordinates): H∘γ = 0.

    Precondition: the section is the one-jet of its z component, i.e.
    γᵢ = ∂γ_z/∂qⁱ (the Legendrian condition).  Residual: H∘γ itself, or
    H∘γ − level when a level constant is supplied — the plain composition
    is still reported for reference.
    """
    qs, ps, zname = _contact_names(gamma)
    if set(gamma.base_chart.coords) != set(qs):
        raise ChartMismatchError("the section must be based on the "
                                 "coordinates alone")
    total = gamma.total_chart
    h = _scalar_on(total, h, params)
    report = HJReport("contact Hamilton-Jacobi (fixed section)")
    _sampling_block(report, seed, points)
    gz = gamma.fiber[zname]
    jet_defect = {q: canonical(_sub(gamma.fiber[p], diff(gz, q)))
                  for q, p in zip(qs, ps)}
    how = "symbolic"
    bad = None
    for q in qs:
        st = zero_status(jet_defect[q], seed=seed, box=box)
        if st == "no":
            bad = q
            break
        if st == "numeric":
            how = "numeric"
    ok = bad is None
    report.add("precondition.legendrian", ok, passed=ok,
               detail=how if ok else
               "momentum of %s is not the %s-derivative of the z component"
               % (bad, bad))
    hg = canonical(gamma.compose_scalar(h))
    report.add_expression("composition", hg)
    pts = _samples(gamma.base_chart, box, seed, points)
    scale = 1.0 + _sup(hg, pts, params)
    tol = RESIDUAL_RTOL * scale
    value = _sup(hg, pts, params)
    if level is None:
        report.add("residual.value", value, passed=value <= tol)
    else:
        shifted = canonical(_sub(hg, _scalar_on(total, level, params)))
        report.add("residual.value", value,
                   detail="plain composition, for reference")
        v = _sup(shifted, pts, params)
        report.add("residual.value-minus-level", v, passed=v <= tol)
        report.add_expression("level-shift", shifted)
    report.add("residual.scale", scale)
    report.add("residual.tolerance", tol)
    x = _contact_field(total, qs, ps, zname, h)
    _defect_block(report, x, gamma, box, points, seed, params)
    return report


def hj_evolution_I(h, gamma, box=None, seed=42, points=20, params=None):
    """Momentum sections over (coordinates, z) against transported dynamics.

    Same chart reading and preconditions as :func:`hj_contact_I`.
    Residual, one component per coordinate:

        ∂(H∘γ)/∂qʲ + γ_o·γⱼ ,   γ_o = (∂H/∂z + ∂H/∂pᵢ·∂γᵢ/∂z)∘γ

    with the differential read in the coordinate directions only; the
    z-derivative of the composition is reported informationally.  The
    defect is measured against the transported (evolution) contact field.
    """
    qs, ps, zname = _contact_names(gamma)
    if set(gamma.base_chart.coords) != set(qs) | {zname}:
        raise ChartMismatchError("the section family must be based on the "
                                 "coordinates plus %r" % zname)
    total = gamma.total_chart
    h = _scalar_on(total, h, params)
    report = HJReport("evolution Hamilton-Jacobi (section family)")
    _sampling_block(report, seed, points)
    gam = _family_preconditions(report, gamma, qs, ps, zname, box, seed,
                                points, params)
    hg = canonical(gamma.compose_scalar(h))
    report.add_expression("composition", hg)
    hp = [canonical(substitute(diff(h, p), gamma.fiber)) for p in ps]
    gamma_o = canonical(add(substitute(diff(h, zname), gamma.fiber),
                            *[mul(hp[i], diff(gam[qi], zname))
                              for i, qi in enumerate(qs)]))
    report.add_expression("vertical-rate", gamma_o)
    named = [(qj, canonical(add(diff(hg, qj), mul(gamma_o, gam[qj]))))
             for qj in qs]
    pts = _samples(gamma.base_chart, box, seed, points)
    scale = 1.0 + _sup(hg, pts, params)
    _residual_block(report, named, pts, scale, params)
    report.add("info.d%s-component" % zname,
               _sup(canonical(diff(hg, zname)), pts, params),
               detail="the residual reads the differential base-only")
    x = _contact_field(total, qs, ps, zname, h, evolution=True)
    _defect_block(report, x, gamma, box, points, seed, params)
    return report


def hj_evolution_II(h, f, chart, box=None, seed=42, points=20, params=None,
                    base_chart=None):
    """One-jet sections of a base function f: d(H∘j¹f) = 0.

    ``chart`` is the contact phase chart (q..., p..., z); the section is
    built from f as γᵢ = ∂f/∂qⁱ, γ_z = f, so the Legendrian precondition
    holds by construction.  The defect is measured against the transported
    (evolution) contact field.
    """
    total = chart.coords
    if len(total) % 2 == 0:
        raise ChartMismatchError("a contact phase chart is odd-dimensional")
    n = len(total) // 2
    qs, ps, zname = list(total[:n]), list(total[n:2 * n]), total[-1]
    if base_chart is None:
        base_chart = Chart(chart.name + "-base", tuple(qs))
    f = _scalar_on(base_chart, f, params)
    h = _scalar_on(chart, h, params)
    fiber = {p: canonical(diff(f, q)) for q, p in zip(qs, ps)}
    fiber[zname] = f
    jet = SectionMap(base_chart, chart, fiber,
                     params=tuple(sorted(params)) if params else ())
    report = HJReport("evolution Hamilton-Jacobi (jet section)")
    _sampling_block(report, seed, points)
    report.add("precondition.legendrian", True, passed=True,
               detail="one-jet section, holds by construction")
    hg = canonical(jet.compose_scalar(h))
    report.add_expression("composition", hg)
    pts = _samples(base_chart, box, seed, points)
    scale = 1.0 + _sup(hg, pts, params)
    named = [(q, canonical(diff(hg, q))) for q in qs]
    _residual_block(report, named, pts, scale, params)
    x = _contact_field(chart, qs, ps, zname, h, evolution=True)
    _defect_block(report, x, jet, box, points, seed, params)
    return report


# ---------------------------------------------------------------------------
# constrained charts


def _section_of(sigma, cs, params):
    if isinstance(sigma, SectionMap):
        if sigma.total_chart != cs.chart or \
                sigma.base_chart != cs.base_chart:
            raise ChartMismatchError("the section must map the constraint "
                                     "base into its phase chart")
        return sigma
    if isinstance(sigma, KForm) and sigma.degree == 1:
        if sigma.chart != cs.base_chart:
            raise ChartMismatchError("the one-form must live on the "
                                     "constraint base chart")
        fiber = {m: sigma.comp((i,))
                 for i, m in enumerate(cs.momentum_names)}
        return SectionMap(cs.base_chart, cs.chart, fiber,
                          params=tuple(sorted(params)) if params else ())
    raise TypeError("need a one-form on the base chart or a section map")


def hj_nonholonomic(h, sigma, cs, mode="ideal", box=None, seed=42,
                    points=20, params=None):
    """Sections compatible with velocity constraints.

    Preconditions are errors here, not failing report lines: the section
    must land in the constraint momentum set (each momentum constraint
    composes to zero) and its exterior derivative must vanish on pairs of
    allowed directions.  Modes:

    - ``"ideal"``: residual ⟨d(H∘σ), X⟩ for each generator X of the
      allowed directions;
    - ``"complete"``: residual components of d(H∘σ) in every direction,
      with an informational warning when the allowed directions do not
      bracket-generate (the full-differential reading is only conclusive
      when they do);
    - ``"algebroid"``: ``cs`` is an :class:`AlmostLieAlgebroid` and
      ``sigma`` a fiber one-form on it; residual components of the
      anchored differential of H∘ψ, with the anchored closedness of ψ as
      the precondition.

    The defect is measured against the projected Hamiltonian field (the
    bracket-raised field of the dual bundle in algebroid mode).
    """
    if mode == "algebroid":
        return _hj_algebroid(h, sigma, cs, box, seed, points, params)
    if mode not in ("ideal", "complete"):
        raise ValueError("mode must be 'ideal', 'complete' or 'algebroid'")
    sec = _section_of(sigma, cs, params)
    base = cs.base_chart
    h = _scalar_on(cs.chart, h, params)
    psis = [add(*[mul(row[i], diff(h, m))
                  for i, m in enumerate(cs.momentum_names)])
            for row in cs.coeffs]
    report = HJReport("constrained Hamilton-Jacobi (%s)" % mode)
    _sampling_block(report, seed, points)
    pts = _samples(base, box, seed, points)
    how = "symbolic"
    for a, psi in enumerate(psis):
        comp = canonical(substitute(psi, sec.fiber))
        st = zero_status(comp, seed=seed, box=box)
        if st == "no":
            witness = max(pts, key=lambda pt: abs(_eval(comp, pt, params)))
            raise ValueError(
                "the section leaves the constraint momentum set: "
                "constraint %d composes to %s (= %.6g at %s)"
                % (a + 1, to_str(comp), _eval(comp, witness, params),
                   _point_str(witness)))
        if st == "numeric":
            how = "numeric"
    report.add("precondition.constraint-membership", True, passed=True,
               detail=how)
    generators = constraint_distribution(cs)
    alpha = one_form(base, {c: sec.fiber[m]
                            for c, m in zip(base.coords,
                                            cs.momentum_names)})
    dal = exterior_derivative(alpha)
    how = "symbolic"
    for a in range(len(generators)):
        for b in range(a + 1, len(generators)):
            val = canonical(dal(generators[a], generators[b]))
            st = zero_status(val, seed=seed, box=box)
            if st == "no":
                witness = max(pts,
                              key=lambda pt: abs(_eval(val, pt, params)))
                raise ValueError(
                    "the section's differential pairs two allowed "
                    "directions: dσ(X%d, X%d) = %s (= %.6g at %s)"
                    % (a + 1, b + 1, to_str(val),
                       _eval(val, witness, params), _point_str(witness)))
            if st == "numeric":
                how = "numeric"
    report.add("precondition.ideal-membership", True, passed=True,
               detail=how)
    hs = canonical(sec.compose_scalar(h))
    report.add_expression("composition", hs)
    scale = 1.0 + _sup(hs, pts, params)
    if mode == "ideal":
        named = [("direction%d" % (a + 1), canonical(g.derive(hs)))
                 for a, g in enumerate(generators)]
    else:
        named = [(c, canonical(diff(hs, c))) for c in base.coords]
    _residual_block(report, named, pts, scale, params)
    if mode == "complete":
        generating = bracket_generating(cs, box=box, seed=seed)
        report.add("info.bracket-generating", generating,
                   detail="" if generating else
                   "warning: the full-differential reading is only "
                   "conclusive over bracket-generating directions")
    x = projected_field(cs, h, seed=seed)
    _defect_block(report, x, sec, box, points, seed, params)
    return report


def _hj_algebroid(h, psi, algebroid, box, seed, points, params):
    if not isinstance(algebroid, AlmostLieAlgebroid):
        raise TypeError("mode 'algebroid' needs the anchored bracket data")
    if not isinstance(psi, AlgebroidForm):
        psi = AlgebroidForm(algebroid, 1, psi)
    dual = algebroid.dual()
    base = algebroid.base_chart
    h = _scalar_on(dual.chart, h, params)
    report = HJReport("constrained Hamilton-Jacobi (algebroid)")
    _sampling_block(report, seed, points)
    if algebroid.rank < 2:
        report.add("precondition.closedness", True, passed=True,
                   detail="trivial (rank one)")
    else:
        dpsi = almost_differential(algebroid, psi)
        how = "symbolic"
        bad = None
        for idx in sorted(dpsi.comps):
            st = zero_status(dpsi.comps[idx], seed=seed, box=box)
            if st == "no":
                bad = idx
                break
            if st == "numeric":
                how = "numeric"
        ok = bad is None
        report.add("precondition.closedness", ok, passed=ok,
                   detail=how if ok else "nonzero anchored-derivative "
                   "component %s" % (bad,))
    composed = canonical(substitute(
        h, {dual.momentum_names[g]: psi.comp((g,))
            for g in range(algebroid.rank)}))
    report.add_expression("composition", composed)
    danchored = almost_differential(algebroid, composed)
    pts = _samples(base, box, seed, points)
    scale = 1.0 + _sup(composed, pts, params)
    named = [(algebroid.section_names[g],
              canonical(danchored.comp((g,))))
             for g in range(algebroid.rank)]
    _residual_block(report, named, pts, scale, params)
    x = _dynamics.vector_field(DynamicsSpec(dual, h))
    sec = SectionMap(base, dual.chart,
                     {dual.momentum_names[g]: psi.comp((g,))
                      for g in range(algebroid.rank)},
                     params=tuple(sorted(params)) if params else ())
    _defect_block(report, x, sec, box, points, seed, params)
    return report


# ---------------------------------------------------------------------------
# parameter families


def _det_float(a):
    n = len(a)
    a = [row[:] for row in a]
    det = 1.0
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(a[piv][col]) < 1e-300:
            return 0.0
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            det = -det
        det *= a[col][col]
        for r in range(col + 1, n):
            factor = a[r][col] / a[col][col]
            for c in range(col, n):
                a[r][c] -= factor * a[col][c]
    return det


def _solve_float(a, b):
    n = len(a)
    a = [row[:] + [b[i]] for i, row in enumerate(a)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(a[piv][col]) < 1e-13:
            raise ArithmeticError("singular linear system")
        a[col], a[piv] = a[piv], a[col]
        for r in range(n):
            if r == col:
                continue
            factor = a[r][col] / a[col][col]
            for c in range(col, n + 1):
                a[r][c] -= factor * a[col][c]
    return [a[i][n] / a[i][i] for i in range(n)]


def complete_solution_check(family, h, box=None, lam_box=None, seed=42,
                            points=8, step=1e-5, tol=1e-5, params=None):
    """Invert a parameter family of passing sections into commuting maps.

    ``family`` is a section whose fiber components carry one free
    parameter per base coordinate (free symbols that are neither base
    coordinates nor keys of ``params``).  At sampled points the family is
    required to solve the time-independent equation; the parameters are
    then recovered from phase-space points by Newton iteration and the
    canonical bracket of the recovered parameter maps is estimated by
    central differences of size ``step``.  A singular parameter Jacobian
    is an error with a witness point.
    """
    pairs = _conjugate_pairs(family)
    base = family.base_chart
    lam = set()
    for e in family.fiber.values():
        lam |= free_symbols(e)
    lam -= set(base.coords)
    if params:
        lam -= set(params)
    lam = sorted(lam)
    if not lam:
        raise ValueError("the family has no free parameters")
    if len(lam) != base.dim:
        raise ValueError("need one parameter per base coordinate "
                         "(%d parameters, %d coordinates)"
                         % (len(lam), base.dim))
    fibers = [family.fiber[f] for _, f in pairs]
    jac = [[canonical(diff(e, l)) for l in lam] for e in fibers]
    report = HJReport("complete-solution family")
    _sampling_block(report, seed, points)
    report.add("info.parameters", ", ".join(lam))
    lam_chart = Chart("family-parameters", tuple(lam))
    lam_pts = _samples(lam_chart, lam_box, seed, points)
    base_pts = _samples(base, box, seed, points)

    def env_of(base_pt, lam_vals):
        env = dict(base_pt)
        if params:
            env.update(params)
        env.update(zip(lam, lam_vals))
        return env

    sections_ok = True
    worst_resid = 0.0
    for lam_pt in lam_pts[:min(3, len(lam_pts))]:
        bound = {name: Num(lam_pt[name]) for name in lam}
        sec = SectionMap(base, family.total_chart,
                         {f: canonical(substitute(e, bound))
                          for f, e in family.fiber.items()},
                         params=tuple(sorted(params)) if params else ())
        rep = hj_symplectic(h, sec, box=box, seed=seed, points=points,
                            params=params)
        sections_ok = sections_ok and rep.verdict
        worst_resid = max(worst_resid, rep["residual.max"])
    report.add("precondition.sections-pass", sections_ok,
               passed=sections_ok,
               detail="worst residual %s over sampled parameters"
               % repr(worst_resid))

    def recover(base_vals, p_target, guess):
        vals = list(guess)
        scale = 1.0 + max(abs(v) for v in p_target)
        for _ in range(60):
            env = env_of(base_vals, vals)
            r = [_eval(e, env, None) - p_target[i]
                 for i, e in enumerate(fibers)]
            if max(abs(v) for v in r) <= 1e-13 * scale:
                return vals
            rows = [[_eval(jac[i][j], env, None)
                     for j in range(len(lam))]
                    for i in range(len(fibers))]
            try:
                delta = _solve_float(rows, r)
            except ArithmeticError:
                raise ValueError("parameter recovery hit a singular "
                                 "Jacobian at %s" % _point_str(env)) \
                    from None
            vals = [v - d for v, d in zip(vals, delta)]
        raise ValueError("parameter recovery did not converge at %s"
                         % _point_str(dict(base_vals)))

    min_det = None
    worst_bracket = 0.0
    for base_pt, lam_pt in zip(base_pts, lam_pts):
        lam0 = [lam_pt[name] for name in lam]
        env = env_of(base_pt, lam0)
        rows = [[_eval(jac[i][j], env, None) for j in range(len(lam))]
                for i in range(len(fibers))]
        size = max(abs(v) for row in rows for v in row)
        det = _det_float(rows)
        if abs(det) <= 1e-12 * (1.0 + size ** len(lam)):
            raise ValueError("the family is singular in its parameters: "
                             "Jacobian determinant %.3g at %s"
                             % (det, _point_str(env)))
        min_det = abs(det) if min_det is None else min(min_det, abs(det))
        p0 = [_eval(e, env, None) for e in fibers]
        base_names = [b for b, _ in pairs]

        def param_map(base_vals, p_vals):
            return recover(base_vals, p_vals, lam0)

        dq = []
        dp = []
        for l in range(len(base_names)):
            plus = dict(base_pt)
            plus[base_names[l]] += step
            minus = dict(base_pt)
            minus[base_names[l]] -= step
            up = param_map(plus, p0)
            down = param_map(minus, p0)
            dq.append([(u - d) / (2 * step) for u, d in zip(up, down)])
            p_plus = list(p0)
            p_plus[l] += step
            p_minus = list(p0)
            p_minus[l] -= step
            up = param_map(base_pt, p_plus)
            down = param_map(base_pt, p_minus)
            dp.append([(u - d) / (2 * step) for u, d in zip(up, down)])
        for i in range(len(lam)):
            for j in range(i + 1, len(lam)):
                bracket = sum(dq[l][i] * dp[l][j] - dp[l][i] * dq[l][j]
                              for l in range(len(base_names)))
                worst_bracket = max(worst_bracket, abs(bracket))
    report.add("precondition.invertibility", min_det, passed=True,
               detail="smallest |parameter Jacobian determinant|")
    report.add("residual.commutation", worst_bracket,
               passed=worst_bracket <= tol,
               detail="central differences, step %s" % repr(step))
    report.add("residual.tolerance", tol)
    return report

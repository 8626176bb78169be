"""Distinguished vector fields, a fixed-step integrator, and flow laws.

Each structure kind determines one or more vector fields for a given
Hamiltonian: the classical field of a symplectic or (almost-)Poisson
structure, the Hamiltonian/gradient/evolution trio on cosymplectic and
contact phase spaces, and the conformal and externally forced variants
on exact symplectic manifolds.  Every constructor re-verifies its
defining contraction identity by back-substitution before returning —
symbolically when the data stays polynomial, pointwise otherwise.

Flows are integrated with a deterministic fixed-step fourth-order
Runge-Kutta scheme, and per-step diagnostic series measure the
conservation or dissipation law the field is supposed to obey: energy
drift, the contact dissipation law dH/dt = -R(H)H, the log of the
preserved contact volume-energy quantity, and the conformal pullback
scaling law checked through a propagated tangent frame.
"""

from __future__ import annotations

import math

from .expr import (
    Num, add, mul, _as_expr, canonical, compile_expr, diff,
    evaluate, parse, to_str,
)
from .exterior import (
    VectorField, differential, exterior_derivative,
    form_matrix, interior_product, lie_derivative, musical_sharp, one_form,
)
from .structures import (
    AlmostPoisson, Contact, Cosymplectic, Jacobi, LCS, LinearAlmostPoisson,
    Poisson, Symplectic, _zero_check, contact_flat, contact_sharp,
    cosymplectic_sharp, reeb,
)

__all__ = [
    "DynamicsSpec", "Trajectory", "FlowError",
    "vector_field", "integrate", "diagnostics", "export_csv",
]

_VARIANTS = ("hamiltonian", "gradient", "evolution", "conformal", "forced")

_BIVECTOR_KINDS = (Poisson, AlmostPoisson, LinearAlmostPoisson)
_ANY_KINDS = _BIVECTOR_KINDS + (Symplectic, Cosymplectic, Contact, LCS,
                                Jacobi)


class FlowError(RuntimeError):
    """Integration aborted mid-flow; carries the time and state reached."""

    def __init__(self, message, t, state):
        state = tuple(state)
        super().__init__("%s at t = %.9g, state = %s"
                         % (message, t, _state_str(state)))
        self.t = t
        self.state = state


def _state_str(state):
    return "(" + ", ".join("%.9g" % v if not isinstance(v, complex)
                           else repr(v) for v in state) + ")"


# ---------------------------------------------------------------------------
# specification of a dynamics


def _momentum_indices(chart):
    """Indices of the fiber coordinates if the chart follows the standard
    cotangent naming (q/p or q1..qn/p1..pn); None when it does not."""
    names = chart.coords
    if names == ("q", "p"):
        return [1]
    n = len(names) // 2
    if len(names) == 2 * n and n > 0:
        qs = tuple("q%d" % (i + 1) for i in range(n))
        ps = tuple("p%d" % (i + 1) for i in range(n))
        if names == qs + ps:
            return list(range(n, 2 * n))
    return None


def _is_exact_with_liouville(s):
    theta = getattr(s, "tautological", None)
    z = getattr(s, "liouville", None)
    if theta is None or z is None:
        return False
    return (exterior_derivative(theta) + s.omega).is_zero()


class DynamicsSpec:
    """A structure, a Hamiltonian, and which induced field to build.

    ``variant`` is one of hamiltonian | gradient | evolution | conformal |
    forced.  Gradient and evolution fields exist on cosymplectic and
    contact structures; the conformal variant needs an exact symplectic
    structure carrying its primitive one-form and Liouville field (as the
    canonical constructors provide) together with the factor ``c``; the
    forced variant needs a symplectic structure and a semibasic force
    one-form ``beta``.  Semibasicity is decidable only on charts with the
    standard cotangent naming; elsewhere ``semibasic`` reads "unchecked".
    """

    def __init__(self, structure, h, variant="hamiltonian", c=None,
                 beta=None):
        if not isinstance(structure, _ANY_KINDS):
            raise TypeError("no dynamics recipe for %r" % (structure,))
        if variant not in _VARIANTS:
            raise ValueError("unknown variant %r" % (variant,))
        chart = structure.chart
        if isinstance(h, str):
            h = parse(h, chart)
        self.structure = structure
        self.h = _as_expr(h)
        self.variant = variant
        self.c = None if c is None else _as_expr(c)
        self.beta = beta
        self.semibasic = None

        if variant in ("gradient", "evolution"):
            if not isinstance(structure, (Cosymplectic, Contact)):
                raise ValueError("%s fields need a cosymplectic or contact "
                                 "structure" % variant)
        if variant == "conformal":
            if not isinstance(structure, Symplectic):
                raise ValueError("conformal dynamics needs a symplectic "
                                 "structure")
            if self.c is None:
                raise ValueError("conformal dynamics needs the factor c")
            if not _is_exact_with_liouville(structure):
                raise ValueError("conformal dynamics needs an exact "
                                 "symplectic structure with a Liouville "
                                 "field (omega = -d(theta))")
        elif self.c is not None:
            raise ValueError("factor c only applies to the conformal "
                             "variant")
        if variant == "forced":
            if not isinstance(structure, Symplectic):
                raise ValueError("forced dynamics needs a symplectic "
                                 "structure")
            if beta is None:
                raise ValueError("forced dynamics needs the force one-form")
            if beta.chart != chart or beta.degree != 1:
                raise ValueError("force must be a one-form on the "
                                 "structure's chart")
            fiber = _momentum_indices(chart)
            if fiber is None:
                self.semibasic = "unchecked"
            else:
                for i in fiber:
                    if not _strictly_vanishes(beta.comp((i,))):
                        raise ValueError(
                            "force one-form must be semibasic; found a d%s "
                            "component" % chart.coords[i])
                self.semibasic = "ok"
        elif beta is not None:
            raise ValueError("a force one-form only applies to the forced "
                             "variant")

    def __repr__(self):
        return "DynamicsSpec(%s, H = %s, %s)" % (
            type(self.structure).__name__, to_str(self.h), self.variant)


def _strictly_vanishes(e):
    return isinstance(canonical(e), Num) and canonical(e).value == 0


# ---------------------------------------------------------------------------
# vector-field constructors


def _canonical_field(chart, comps):
    return VectorField(chart, [canonical(c) for c in comps])


def _coordinate_one_forms(chart):
    return [one_form(chart, {name: 1}) for name in chart.coords]


def _bivector_pairing_field(chart, lam, h):
    """X with X^i = Λ(dx^i, dH) — the field raised through a bivector."""
    dh = differential(chart, h)
    return _canonical_field(
        chart, [lam(dx, dh) for dx in _coordinate_one_forms(chart)])


def _back_substitute(checks, seed=42):
    """Verify each (name, form-or-field-or-expression) vanishes; raise on a
    definite nonzero.  Symbolic evidence on polynomial data, sampled
    otherwise (the worst verdict is still a pass)."""
    for name, obj in checks:
        result = _zero_check(name, obj, seed, None)
        if result.verdict == "fail":
            raise ArithmeticError("back-substitution failed: %s [%s]"
                                  % (name, result.witness))


def vector_field(spec):
    """The distinguished field of the spec, defining identities re-checked.

    Recipes by (structure, variant): symplectic sharp of dH (hamiltonian),
    of dH - c·theta (conformal), of dH + beta (forced); bivector raising
    for Poisson-like structures; the flat-inverse of dH - R(H)eta / of dH
    on cosymplectic charts (hamiltonian / gradient) and their Reeb shift
    (evolution); the contact trio; the twisted differential on LCS charts;
    Λ♯(dH) + H·Z on a Jacobi pair.
    """
    s, h, variant = spec.structure, spec.h, spec.variant
    chart = s.chart
    dh = differential(chart, h)

    if isinstance(s, Symplectic):
        if variant == "hamiltonian":
            rhs = dh
        elif variant == "conformal":
            rhs = dh - s.tautological * spec.c
        elif variant == "forced":
            rhs = dh + spec.beta
        else:
            raise ValueError("variant %r undefined on a symplectic "
                             "structure" % variant)
        x = _canonical_field(chart, musical_sharp(s.omega, rhs).components)
        _back_substitute([("defining-contraction",
                           interior_product(x, s.omega) - rhs)])
        return x

    if isinstance(s, _BIVECTOR_KINDS):
        lam = s.bivector() if isinstance(s, LinearAlmostPoisson) else s.lam
        x = _bivector_pairing_field(chart, lam, h)
        # the raised field annihilates its own Hamiltonian (antisymmetry)
        _back_substitute([("energy-annihilation", x.derive(h))])
        return x

    if isinstance(s, Jacobi):
        raised = _bivector_pairing_field(chart, s.lam, h)
        x = _canonical_field(chart, (raised + h * s.z).components)
        _back_substitute([("self-derivative",
                           add(x.derive(h), mul(Num(-1), h, s.z.derive(h))))])
        return x

    if isinstance(s, LCS):
        rhs = dh - s.theta * h
        x = _canonical_field(chart, musical_sharp(s.omega, rhs).components)
        _back_substitute([("twisted-contraction",
                           interior_product(x, s.omega) - rhs)])
        return x

    if isinstance(s, Cosymplectic):
        r = reeb(s)
        rh = canonical(r.derive(h))
        if variant == "hamiltonian":
            x = _canonical_field(
                chart, cosymplectic_sharp(s, dh - s.eta * rh).components)
            _back_substitute([
                ("defining-contraction",
                 interior_product(x, s.omega) - (dh - s.eta * rh)),
                ("kernel-of-eta", interior_product(x, s.eta).scalar()),
            ])
            return x
        if variant == "gradient":
            x = _canonical_field(chart, cosymplectic_sharp(s, dh).components)
            eta_x = interior_product(x, s.eta).scalar()
            _back_substitute([
                ("flat-back-substitution",
                 interior_product(x, s.omega) + s.eta * eta_x - dh)])
            return x
        if variant == "evolution":
            ham = vector_field(DynamicsSpec(s, h))
            x = _canonical_field(chart, (r + ham).components)
            _back_substitute([
                ("defining-contraction",
                 interior_product(x, s.omega) - (dh - s.eta * rh)),
                ("unit-pairing",
                 add(interior_product(x, s.eta).scalar(), Num(-1))),
            ])
            return x

    if isinstance(s, Contact):
        r = reeb(s)
        rh = canonical(r.derive(h))
        deta = exterior_derivative(s.eta)
        if variant == "hamiltonian":
            x = _canonical_field(
                chart,
                contact_sharp(s, dh - s.eta * add(rh, h)).components)
            _back_substitute([
                ("eta-pairing",
                 add(interior_product(x, s.eta).scalar(), h)),
                ("d-eta-contraction",
                 interior_product(x, deta) - (dh - s.eta * rh)),
            ])
            return x
        if variant == "gradient":
            x = _canonical_field(chart, contact_sharp(s, dh).components)
            _back_substitute([("flat-back-substitution",
                               contact_flat(s, x) - dh)])
            return x
        if variant == "evolution":
            ham = vector_field(DynamicsSpec(s, h))
            x = _canonical_field(chart, (ham + h * r).components)
            _back_substitute([
                ("transport-of-eta",
                 lie_derivative(x, s.eta) - (dh - s.eta * rh)),
                ("kernel-of-eta", interior_product(x, s.eta).scalar()),
            ])
            return x

    raise ValueError("variant %r undefined on %s"
                     % (variant, type(s).__name__))


# ---------------------------------------------------------------------------
# trajectories


class Trajectory:
    """A sampled flow: strictly increasing time grid, one state per node,
    and any diagnostic series computed afterwards."""

    __slots__ = ("chart", "times", "states", "diagnostics")

    def __init__(self, chart, times, states, diagnostics=None):
        times = [float(t) for t in times]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("time grid must be strictly increasing")
        states = [tuple(float(v) for v in st) for st in states]
        if len(states) != len(times):
            raise ValueError("need exactly one state per grid node")
        for st in states:
            if len(st) != chart.dim:
                raise ValueError("state dimension %d does not match chart %s"
                                 % (len(st), chart.name))
        diagnostics = dict(diagnostics or {})
        for name, series in diagnostics.items():
            if len(series) != len(times):
                raise ValueError("diagnostic series %r has wrong length"
                                 % name)
        self.chart = chart
        self.times = times
        self.states = states
        self.diagnostics = diagnostics

    def __len__(self):
        return len(self.times)

    def column(self, name):
        i = self.chart.index(name)
        return [st[i] for st in self.states]

    def final(self):
        return self.states[-1]

    def __repr__(self):
        return "Trajectory(%s, %d nodes, t in [%g, %g])" % (
            self.chart.name, len(self.times), self.times[0], self.times[-1])


def _coerce_point(chart, x0):
    if isinstance(x0, dict):
        missing = [n for n in chart.coords if n not in x0]
        if missing:
            raise ValueError("initial point misses %s" % ", ".join(missing))
        return [float(x0[n]) for n in chart.coords]
    x0 = [float(v) for v in x0]
    if len(x0) != chart.dim:
        raise ValueError("initial point needs %d components" % chart.dim)
    return x0


def _rk4_step(f, y, h):
    k1 = f(y)
    k2 = f([a + 0.5 * h * b for a, b in zip(y, k1)])
    k3 = f([a + 0.5 * h * b for a, b in zip(y, k2)])
    k4 = f([a + h * b for a, b in zip(y, k3)])
    return [a + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]


def _run_fixed_rk4(f, y0, t1, dt):
    """Uniform-step RK4 from 0 to exactly t1; returns (times, states).

    The step count is round(t1/dt) and the realized step t1/N, so the
    final node lands on t1 itself rather than a rounding of it.
    """
    n = max(1, int(round(t1 / dt)))
    h = t1 / n
    times = [0.0]
    states = [tuple(y0)]
    y = list(y0)
    for k in range(n):
        try:
            y = _rk4_step(f, y, h)
        except (ArithmeticError, ValueError, TypeError) as err:
            raise FlowError("field evaluation failed (%s)" % err,
                            k * h, states[-1]) from err
        bad = any(isinstance(v, complex) for v in y) or \
            not all(math.isfinite(v) for v in y if not isinstance(v, complex))
        if bad:
            raise FlowError("flow left the real domain", (k + 1) * h, y)
        times.append((k + 1) * h)
        states.append(tuple(y))
    return times, states


def integrate(x, x0, t1, dt):
    """Flow the field from x0 for duration t1 with requested step dt."""
    if dt <= 0:
        raise ValueError("step size must be positive")
    if t1 <= 0:
        raise ValueError("duration must be positive")
    chart = x.chart
    y0 = _coerce_point(chart, x0)
    fns = [compile_expr(c, chart.coords) for c in x.components]

    def rhs(y):
        return [fn(y) for fn in fns]

    times, states = _run_fixed_rk4(rhs, y0, t1, dt)
    return Trajectory(chart, times, states)


# ---------------------------------------------------------------------------
# diagnostics


def _fd_derivative(times, values):
    """Second-order finite differences on a uniform grid, one-sided at
    both endpoints."""
    n = len(values)
    if n < 3:
        h = times[1] - times[0]
        d = (values[1] - values[0]) / h
        return [d] * n
    h = times[1] - times[0]
    out = [(-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)]
    for i in range(1, n - 1):
        out.append((values[i + 1] - values[i - 1]) / (2.0 * h))
    out.append((3.0 * values[-1] - 4.0 * values[-2] + values[-3])
               / (2.0 * h))
    return out


def _cumulative_trapezoid(times, values):
    out = [0.0]
    for i in range(1, len(values)):
        h = times[i] - times[i - 1]
        out.append(out[-1] + 0.5 * h * (values[i - 1] + values[i]))
    return out


def _propagated_pairing(spec, traj):
    """Pairing series omega(v1(t), v2(t)) of a tangent pair transported by
    the variational equations along the flow, reintegrated on the grid."""
    s = spec.structure
    chart = s.chart
    dim = chart.dim
    x = vector_field(spec)
    comp_fns = [compile_expr(c, chart.coords) for c in x.components]
    jac_fns = [[compile_expr(canonical(diff(c, name)), chart.coords)
                for name in chart.coords] for c in x.components]
    omega_fns = [[compile_expr(e, chart.coords) for e in row]
                 for row in form_matrix(s.omega)]

    def omega_at(y):
        return [[fn(y) for fn in row] for row in omega_fns]

    # seed the first coordinate pair that the two-form does not annihilate
    m0 = omega_at(traj.states[0])
    b = next((j for j in range(1, dim) if abs(m0[0][j]) > 1e-12), None)
    if b is None:
        raise ValueError("two-form annihilates every pair seeded on the "
                         "first coordinate direction at the initial point")
    v1 = [0.0] * dim
    v2 = [0.0] * dim
    v1[0] = 1.0
    v2[b] = 1.0

    def rhs(y):
        pt, u1, u2 = y[:dim], y[dim:2 * dim], y[2 * dim:]
        jac = [[fn(pt) for fn in row] for row in jac_fns]
        return ([fn(pt) for fn in comp_fns]
                + [sum(jac[i][j] * u1[j] for j in range(dim))
                   for i in range(dim)]
                + [sum(jac[i][j] * u2[j] for j in range(dim))
                   for i in range(dim)])

    t1 = traj.times[-1]
    dt = traj.times[1] - traj.times[0]
    _, states = _run_fixed_rk4(rhs, list(traj.states[0]) + v1 + v2, t1, dt)
    series = []
    for y in states:
        pt, u1, u2 = y[:dim], y[dim:2 * dim], y[2 * dim:]
        m = omega_at(pt)
        series.append(sum(u1[i] * m[i][j] * u2[j]
                          for i in range(dim) for j in range(dim)))
    return series


def diagnostics(spec, traj):
    """Per-step residual series for the laws the spec's flow must obey.

    Always: energy drift H(x(t)) - H(x(0)).  Contact Hamiltonian flows
    add the dissipation-law residual |dH/dt + R(H)H| and the log of the
    preserved quantity H^{-(n+1)}(d eta)^n wedge eta.  Conformal flows add
    the propagated-frame pairing and the scaling residual d/dt(pairing)
    - c*(pairing).  The series are stored on the trajectory and returned.
    """
    s = spec.structure
    order = s.chart.coords
    h_fn = compile_expr(spec.h, order)
    h_series = [h_fn(st) for st in traj.states]
    out = {"energy_drift": [v - h_series[0] for v in h_series]}

    if isinstance(s, Contact) and spec.variant == "hamiltonian":
        rh_fn = compile_expr(canonical(reeb(s).derive(spec.h)), order)
        rh_series = [rh_fn(st) for st in traj.states]
        dh = _fd_derivative(traj.times, h_series)
        out["dissipation_residual"] = [
            abs(a + b * v) for a, v, b in zip(dh, h_series, rh_series)]
        n = (s.chart.dim - 1) // 2
        accumulated = _cumulative_trapezoid(traj.times, rh_series)
        out["log_preserved"] = [
            -(n + 1) * (math.log(abs(v)) + a)
            for v, a in zip(h_series, accumulated)]

    if spec.variant == "conformal":
        pairing = _propagated_pairing(spec, traj)
        c_value = evaluate(spec.c, {})
        dpairing = _fd_derivative(traj.times, pairing)
        out["frame_pairing"] = pairing
        out["scaling_residual"] = [d - c_value * p
                                   for d, p in zip(dpairing, pairing)]

    traj.diagnostics = dict(out)
    return out


# ---------------------------------------------------------------------------
# export


def export_csv(traj, target):
    """Write the trajectory as CSV: t, the coordinates, then each
    diagnostic series, at full double precision."""
    names = ["t"] + list(traj.chart.coords) + list(traj.diagnostics)
    columns = ([traj.times]
               + [traj.column(n) for n in traj.chart.coords]
               + list(traj.diagnostics.values()))
    lines = [",".join(names)]
    for k in range(len(traj)):
        lines.append(",".join("%.17g" % col[k] for col in columns))
    text = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w") as fh:
            fh.write(text)
    return target

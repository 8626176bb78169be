"""Velocity constraints, the momentum projector, and the constrained bracket."""

import random

import pytest

from geomhj.expr import (
    Chart, Num, add, mul, parse, sym, evaluate, is_zero, equivalent,
    free_symbols, to_str,
)
from geomhj.exterior import (
    ChartMismatchError, VectorField, differential, exterior_derivative,
    interior_product, one_form, scalar_kform,
)
from geomhj.structures import Symplectic, _sample_points
from geomhj.brackets import bracket_of, jacobiator, identity_audit
from geomhj.nonholonomic import (
    AlgebroidForm, AlmostLieAlgebroid, CompatibilityError, ConstraintSet,
    almost_differential, bracket_generating, compatibility_matrix,
    constraint_distribution, nonholonomic_bracket, orthogonal_fields,
    projected_field, projector, restricted_hamiltonian,
    restricted_hamiltonian_at,
)

BASE = Chart("Q", "x y z")
PLANE = Chart("plane", "x y")


def _knife_edge():
    """One constraint dz = y dx on a three-dimensional base."""
    return ConstraintSet(BASE, [("-y", "0", "1")])


def _free_h(cs):
    return cs.scalar("(px^2 + py^2 + pz^2)/2")


def _two_constraints():
    return ConstraintSet(BASE, [("-y", "0", "1"), ("0", "1", "x")])


def _epsilon_algebroid():
    c = [[[0, 0, 0], [0, 0, 0], [0, 0, 0]],
         [[0, 0, 0], [0, 0, 0], [0, 0, 0]],
         [[0, 1, 0], [-1, 0, 0], [0, 0, 0]]]
    return AlmostLieAlgebroid(c, [[0, 0, 0]], Chart("pt", ("t",)), 3)


# ---------------------------------------------------------------------------
# constraint sets


def test_constraint_set_builds_phase_chart():
    cs = _knife_edge()
    assert cs.chart.coords == ("x", "y", "z", "px", "py", "pz")
    assert cs.momentum_names == ("px", "py", "pz")
    assert cs.k == 1


def test_constraint_set_accepts_one_forms():
    form = one_form(BASE, {"x": parse("-y", BASE), "z": 1})
    cs = ConstraintSet(BASE, [form])
    rows = _knife_edge().coeffs
    assert all(equivalent(a, b) for a, b in zip(cs.coeffs[0], rows[0]))


def test_constraint_set_validation():
    with pytest.raises(ValueError, match="fewer constraints"):
        ConstraintSet(PLANE, [("1", "0"), ("0", "1")])
    with pytest.raises(ValueError, match="linearly dependent"):
        ConstraintSet(BASE, [("-y", "0", "1"), ("-2*y", "0", "2")])
    with pytest.raises(ValueError, match="3 coefficients"):
        ConstraintSet(BASE, [("1", "0")])
    with pytest.raises(ValueError, match="momentum names"):
        ConstraintSet(BASE, [("-y", "0", "1")], momentum_names=("a", "b"))
    with pytest.raises(ValueError, match="momentum names"):
        ConstraintSet(BASE, [("-y", "0", "1")], momentum_names=("x", "b", "c"))


def test_constraint_set_rejects_foreign_forms():
    other = Chart("R", "u v")
    with pytest.raises(ChartMismatchError):
        ConstraintSet(BASE, [one_form(other, {"u": 1})])


def test_momentum_constraints_knife_edge():
    cs = _knife_edge()
    h = parse("(px^2 + py^2 + pz^2)/(2*m)", cs.chart, params=("m",))
    (psi,) = cs.momentum_constraints(h)
    assert equivalent(psi, parse("(pz - y*px)/m", cs.chart, params=("m",)))


# ---------------------------------------------------------------------------
# correction fields and the compatibility matrix


def test_orthogonal_fields_carry_coefficients():
    cs = _two_constraints()
    za, zb = orthogonal_fields(cs)
    assert [to_str(c) for c in za.components] == ["0", "0", "0", "-y", "0", "1"]
    assert [to_str(c) for c in zb.components] == ["0", "0", "0", "0", "1", "x"]


def test_compatibility_matrix_knife_edge():
    cs = _knife_edge()
    h = parse("(px^2 + py^2 + pz^2)/(2*m)", cs.chart, params=("m",))
    c = compatibility_matrix(cs, h)
    assert len(c) == 1
    assert equivalent(c[0][0], parse("(1 + y^2)/m", cs.chart, params=("m",)))


def test_compatibility_matrix_is_symmetric():
    # Z^a(Psi^b) pairs the rows through the momentum Hessian of H
    cs = _two_constraints()
    c = compatibility_matrix(cs, _free_h(cs))
    assert equivalent(c[0][1], c[1][0])


def test_compatibility_singular_raises_with_witness():
    cs = ConstraintSet(PLANE, [("1", "0")])
    with pytest.raises(CompatibilityError, match="witness"):
        compatibility_matrix(cs, parse("x^2 + y^2", cs.chart))


def test_compatibility_matrix_empty_without_constraints():
    cs = ConstraintSet(PLANE, [])
    assert compatibility_matrix(cs, cs.scalar("(px^2 + py^2)/2")) == []


# ---------------------------------------------------------------------------
# the projector


def test_projector_knife_edge_closed_form():
    """P = id - (dpz - y dpx - px dy)/(1 + y^2) ⊗ (d/dpz - y d/dpx)."""
    cs = _knife_edge()
    p = projector(cs, _free_h(cs))
    coords = cs.chart.coords
    covector = {"y": "-px", "px": "-y", "pz": "1"}
    direction = {"px": "-y", "pz": "1"}
    for j, cname in enumerate(coords):
        image = p(VectorField(cs.chart, [1 if i == j else 0
                                         for i in range(6)]))
        alpha = covector.get(cname, "0")
        for i, iname in enumerate(coords):
            want = "%d - (%s)*(%s)/(1 + y^2)" % (
                1 if i == j else 0, alpha, direction.get(iname, "0"))
            assert equivalent(image.components[i], parse(want, coords))


def test_projector_ignores_the_mass():
    cs = _knife_edge()
    scaled = parse("(px^2 + py^2 + pz^2)/(2*m)", cs.chart, params=("m",))
    pm = projector(cs, scaled)
    p1 = projector(cs, _free_h(cs))
    for j in range(6):
        e = VectorField(cs.chart, [1 if i == j else 0 for i in range(6)])
        for a, b in zip(pm(e).components, p1(e).components):
            assert equivalent(a, b)


def test_projector_idempotent_at_sample_points():
    cs = _knife_edge()
    p = projector(cs, _free_h(cs))
    wild = VectorField(cs.chart, [parse(s, cs.chart) for s in
                                  ("y*px", "x + z", "pz^2",
                                   "x*py", "1", "px*py")])
    once, twice = p(wild), p(p(wild))
    for pt in _sample_points(cs.chart, None, 42, 20):
        for a, b in zip(once.at(pt), twice.at(pt)):
            assert abs(a - b) <= 1e-9


def test_projector_output_annihilates_constraints():
    cs = _two_constraints()
    h = _free_h(cs)
    p = projector(cs, h)
    wild = VectorField(cs.chart, [parse(s, cs.chart) for s in
                                  ("px", "z", "x*y", "py^2", "pz", "1")])
    out = p(wild)
    for psi in cs.momentum_constraints(h):
        assert is_zero(out.derive(psi))


def test_projector_input_validation():
    cs = _knife_edge()
    p = projector(cs, _free_h(cs))
    with pytest.raises(TypeError):
        p("not a field")
    with pytest.raises(ChartMismatchError):
        p(VectorField(Chart("R", "u v"), (1, 0)))


# ---------------------------------------------------------------------------
# the constrained Hamiltonian field


def test_projected_field_knife_edge_components():
    cs = _knife_edge()
    field = projected_field(cs, _free_h(cs))
    expected = ("px", "py", "pz",
                "-px*py*y/(1 + y^2)", "0", "px*py/(1 + y^2)")
    for comp, want in zip(field.components, expected):
        assert equivalent(comp, parse(want, cs.chart))


def test_projected_field_with_potential():
    cs = _knife_edge()
    h = cs.scalar("(px^2 + py^2 + pz^2)/2 + x + 2*z")
    field = projected_field(cs, h)
    expected = ("px", "py", "pz",
                "-1 + y*(y - 2 - px*py)/(1 + y^2)",
                "0",
                "-2 - (y - 2 - px*py)/(1 + y^2)")
    for comp, want in zip(field.components, expected):
        assert equivalent(comp, parse(want, cs.chart))


def test_projected_field_without_constraints_is_hamiltonian():
    cs = ConstraintSet(PLANE, [])
    field = projected_field(cs, cs.scalar("(px^2 + py^2)/2 + x*y"))
    for comp, want in zip(field.components, ("px", "py", "-y", "-x")):
        assert equivalent(comp, parse(want, cs.chart))


def test_projected_field_is_tangent_to_constraints():
    for cs in (_knife_edge(), _two_constraints()):
        h = _free_h(cs)
        field = projected_field(cs, h)
        for psi in cs.momentum_constraints(h):
            assert is_zero(field.derive(psi))


def test_reaction_force_lies_in_lifted_annihilator():
    """iota_X omega - dH must be a multiple of the lifted constraint form."""
    cs = _knife_edge()
    h = _free_h(cs)
    field = projected_field(cs, h)
    dh = differential(cs.chart, h)
    force = {}
    for i, name in enumerate(cs.chart.coords):
        a = interior_product(field, cs.omega).comps.get((i,), Num(0))
        b = dh.comps.get((i,), Num(0))
        force[name] = add(a, mul(Num(-1), b))
    for mom in ("px", "py", "pz"):
        assert is_zero(force[mom])
    assert is_zero(force["y"])
    # remaining components proportional to the coefficients (-y, 0, 1)
    assert is_zero(add(force["x"], mul(parse("y", cs.chart), force["z"])))


# ---------------------------------------------------------------------------
# the constrained bracket


def test_bracket_knife_edge_values():
    cs = _knife_edge()
    b = nonholonomic_bracket(cs, _free_h(cs))
    assert b.kind == "nonholonomic"
    pairs = [("x", "px", "1/(1 + y^2)"),
             ("x", "pz", "y/(1 + y^2)"),
             ("y", "py", "1"),
             ("x", "y", "0"),
             ("px", "pz", "0")]
    for f, g, want in pairs:
        got = b(parse(f, cs.chart), parse(g, cs.chart))
        assert equivalent(got, parse(want, cs.chart))


def test_bracket_constraint_function_is_casimir():
    cs = _knife_edge()
    h = _free_h(cs)
    b = nonholonomic_bracket(cs, h)
    (psi,) = cs.momentum_constraints(h)
    for s in ("x", "px", "y*py", "z + pz^2"):
        assert is_zero(b(psi, parse(s, cs.chart)))


def test_bracket_matches_defining_composition():
    """{F, G} must equal omega(P(X_F), P(X_G)) built from the pieces."""
    from geomhj.exterior import musical_sharp
    cs = _knife_edge()
    h = _free_h(cs)
    b = nonholonomic_bracket(cs, h)
    p = projector(cs, h)
    rng = random.Random(13)
    for fs, gs in [("x*px", "y^2 + pz"), ("px*py", "z"), ("x + y*pz", "py^2")]:
        f, g = parse(fs, cs.chart), parse(gs, cs.chart)
        xf = p(musical_sharp(cs.omega, differential(cs.chart, f)))
        xg = p(musical_sharp(cs.omega, differential(cs.chart, g)))
        direct = cs.omega(xf, xg)
        for _ in range(20):
            pt = {n: rng.uniform(0.25, 1.75) for n in cs.chart.coords}
            assert abs(evaluate(b(f, g), pt) - evaluate(direct, pt)) <= 1e-9


def _expansion_residual(cs, h, pairs, seed):
    """Worst gap between the bracket and its correction-term expansion."""
    b = nonholonomic_bracket(cs, h)
    plain = bracket_of(Symplectic(cs.omega))
    zs = orthogonal_fields(cs)
    psis = cs.momentum_constraints(h)
    cmat = compatibility_matrix(cs, h)
    k = cs.k
    worst = 0.0
    for fs, gs in pairs:
        f, g = parse(fs, cs.chart), parse(gs, cs.chart)
        lhs = b(f, g)
        base = plain(f, g)
        zf = [z.derive(f) for z in zs]
        zg = [z.derive(g) for z in zs]
        gpsi = [plain(g, p) for p in psis]
        fpsi = [plain(f, p) for p in psis]
        for pt in _sample_points(cs.chart, None, seed, 20):
            cnum = [[evaluate(e, pt) for e in row] for row in cmat]
            inv = _invert(cnum)
            rhs = evaluate(base, pt)
            for a in range(k):
                for c in range(k):
                    rhs += inv[a][c] * (
                        evaluate(zf[c], pt) * evaluate(gpsi[a], pt)
                        - evaluate(zg[c], pt) * evaluate(fpsi[a], pt))
            worst = max(worst, abs(evaluate(lhs, pt) - rhs))
    return worst


def _invert(m):
    k = len(m)
    if k == 1:
        return [[1.0 / m[0][0]]]
    det = m[0][0] * m[1][1] - m[0][1] * m[1][0]
    return [[m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det]]


def test_bracket_expansion_single_constraint():
    cs = _knife_edge()
    pairs = [("x*px", "y^2 + pz"), ("pz", "x*y"), ("px", "py"),
             ("x + y*pz", "py^2")]
    assert _expansion_residual(cs, _free_h(cs), pairs, 17) <= 1e-9


def test_bracket_expansion_two_constraints():
    cs = _two_constraints()
    pairs = [("x*px", "y^2 + pz"), ("px*py", "z"), ("pz", "x*y"),
             ("x + y*pz", "py^2")]
    assert _expansion_residual(cs, _free_h(cs), pairs, 7) <= 1e-9


def test_bracket_reduces_to_canonical_without_constraints():
    cs = ConstraintSet(PLANE, [])
    b = nonholonomic_bracket(cs, cs.scalar("(px^2 + py^2)/2"))
    plain = bracket_of(Symplectic(cs.omega))
    for fs, gs in [("x*px + y^2", "py*x - y*px"), ("x", "px"), ("px", "py")]:
        f, g = parse(fs, cs.chart), parse(gs, cs.chart)
        assert is_zero(add(b(f, g), mul(Num(-1), plain(f, g))))


def test_bracket_jacobiator_is_obstructed():
    """The knife-edge bracket fails Jacobi by exactly -y^2/(1+y^2)^2."""
    cs = _knife_edge()
    b = nonholonomic_bracket(cs, _free_h(cs))
    jac = jacobiator(b, parse("x", cs.chart), parse("px", cs.chart),
                     parse("y*py", cs.chart))
    assert equivalent(jac, parse("-y^2/(1 + y^2)^2", cs.chart))
    pt = _sample_points(cs.chart, None, 42, 1)[0]
    val = evaluate(jac, pt)
    assert abs(val + 0.0705238186149949) <= 1e-12
    assert val != 0


def test_bracket_audit_label():
    cs = _knife_edge()
    b = nonholonomic_bracket(cs, _free_h(cs))
    assert identity_audit(b).label == "almost-Poisson"


def test_field_is_bracket_with_restricted_hamiltonian():
    """X(F) = {F, H_M} holds on the constraint manifold."""
    cs = _knife_edge()
    h = _free_h(cs)
    field = projected_field(cs, h)
    b = nonholonomic_bracket(cs, h)
    hm = restricted_hamiltonian(cs, h)
    probes = [parse(s, cs.chart) for s in
              ("x", "y", "z", "px", "py", "pz", "x*px + y*pz", "py^2 - z")]
    rng = random.Random(42)
    for _ in range(20):
        pt = {n: rng.uniform(0.25, 1.75) for n in cs.chart.coords}
        pt["pz"] = pt["y"] * pt["px"]
        for f in probes:
            lhs = evaluate(field.derive(f), pt)
            rhs = evaluate(b(f, hm), pt)
            assert abs(lhs - rhs) <= 1e-9 * (1.0 + abs(lhs))


# ---------------------------------------------------------------------------
# the base distribution


def test_constraint_distribution_knife_edge():
    fields = constraint_distribution(_knife_edge())
    rows = [[to_str(c) for c in f.components] for f in fields]
    assert rows == [["1", "0", "y"], ["0", "1", "0"]]


def test_constraint_distribution_without_constraints():
    fields = constraint_distribution(ConstraintSet(PLANE, []))
    rows = [[to_str(c) for c in f.components] for f in fields]
    assert rows == [["1", "0"], ["0", "1"]]


def test_bracket_generating_knife_edge():
    cs = _knife_edge()
    assert bracket_generating(cs, depth=2) is True
    assert bracket_generating(cs, depth=1) is False


def test_bracket_generating_line_field_never_spans():
    cs = ConstraintSet(PLANE, [("0", "1")])
    assert bracket_generating(cs, depth=3) is False


def test_bracket_generating_trivial_case():
    assert bracket_generating(ConstraintSet(PLANE, []), depth=1) is True


def test_bracket_generating_depth_validation():
    with pytest.raises(ValueError, match="depth"):
        bracket_generating(_knife_edge(), depth=0)


# ---------------------------------------------------------------------------
# restriction of the Hamiltonian


def test_restricted_hamiltonian_knife_edge():
    cs = _knife_edge()
    hm = restricted_hamiltonian(cs, _free_h(cs))
    assert equivalent(hm, parse("((1 + y^2)*px^2 + py^2)/2", cs.chart))
    assert "pz" not in free_symbols(hm)


def test_restricted_hamiltonian_agrees_with_pointwise_route():
    cs = _knife_edge()
    h = _free_h(cs)
    hm = restricted_hamiltonian(cs, h)
    rng = random.Random(3)
    for _ in range(5):
        pt = {n: rng.uniform(0.25, 1.75) for n in cs.chart.coords}
        pt["pz"] = 5.0  # far from the constraint manifold
        assert abs(evaluate(hm, pt)
                   - restricted_hamiltonian_at(cs, h, pt)) <= 1e-10


def test_restricted_hamiltonian_equals_h_on_the_manifold():
    cs = _knife_edge()
    h = _free_h(cs)
    hm = restricted_hamiltonian(cs, h)
    rng = random.Random(9)
    for _ in range(5):
        pt = {n: rng.uniform(0.25, 1.75) for n in cs.chart.coords}
        pt["pz"] = pt["y"] * pt["px"]
        assert abs(evaluate(hm, pt) - evaluate(h, pt)) <= 1e-12


def test_restricted_hamiltonian_rejects_nonlinear_constraints():
    cs = ConstraintSet(PLANE, [("1", "0")])
    quartic = cs.scalar("px^2/2 + px^4/4 + py^2/2")
    with pytest.raises(ValueError, match="restricted_hamiltonian_at"):
        restricted_hamiltonian(cs, quartic)
    val = restricted_hamiltonian_at(cs, quartic,
                                    {"x": 0.3, "y": 0.7, "px": 0.9, "py": 0.5})
    assert abs(val - 0.125) <= 1e-10  # momentum root px = 0 leaves py^2/2


def test_restricted_hamiltonian_without_constraints():
    cs = ConstraintSet(PLANE, [])
    h = cs.scalar("(px^2 + py^2)/2")
    assert equivalent(restricted_hamiltonian(cs, h), h)


# ---------------------------------------------------------------------------
# algebroid calculus


def test_algebroid_requires_antisymmetric_structure_functions():
    bad = [[[0, 0], [0, 0]], [[0, 1], [1, 0]]]
    with pytest.raises(ValueError, match="antisymmetric"):
        AlmostLieAlgebroid(bad, [[0, 0]], Chart("pt", ("t",)), 2)


def test_algebroid_dual_bracket():
    alg = _epsilon_algebroid()
    b = bracket_of(alg.dual())
    assert equivalent(b(sym("p1"), sym("p2")), mul(Num(-1), sym("p3")))


def test_almost_differential_recovers_exterior_derivative():
    base = Chart("B", "x y")
    zero = [[0, 0], [0, 0]]
    alg = AlmostLieAlgebroid([zero, zero], [[1, 0], [0, 1]], base, 2)
    f = parse("x^2*y", base)
    df = almost_differential(alg, f)
    true = exterior_derivative(scalar_kform(base, f))
    for i in range(2):
        assert equivalent(df.comp((i,)), true.comp((i,)))
    assert almost_differential(alg, df).is_zero()


def test_almost_differential_epsilon_case():
    alg = _epsilon_algebroid()
    dpsi = almost_differential(alg, AlgebroidForm(alg, 1, (0, 0, 1)))
    assert not dpsi.is_zero()
    assert equivalent(dpsi.comp((0, 1)), Num(-1))
    assert equivalent(dpsi.comp((0, 2)), Num(0))
    assert equivalent(dpsi.comp((1, 2)), Num(0))


def test_almost_differential_kills_constant_functions():
    alg = _epsilon_algebroid()
    assert almost_differential(alg, parse("7", alg.base_chart)).is_zero()


def test_almost_differential_squares_to_zero_when_compatible():
    """Anchor [x d/dx, d/dx] = -d/dx matches C^2_12 = -1, so d∘d = 0."""
    base = Chart("B", ("x",))
    c = [[[0, 0], [0, 0]], [[0, -1], [1, 0]]]
    alg = AlmostLieAlgebroid(c, [[parse("x", base), 1]], base, 2)
    for s in ("x^3", "x^2 + 2*x", "x"):
        twice = almost_differential(alg, almost_differential(alg,
                                                             parse(s, base)))
        assert twice.is_zero()


def test_almost_differential_validation():
    alg = _epsilon_algebroid()
    other = AlmostLieAlgebroid(alg.c, alg.rho, alg.base_chart, 3,
                               section_names=("e1", "e2", "e3"))
    psi = AlgebroidForm(alg, 1, (0, 0, 1))
    with pytest.raises(ValueError, match="different algebroid"):
        almost_differential(other, psi)
    with pytest.raises(ValueError, match="functions and fiber one-forms"):
        almost_differential(alg, AlgebroidForm(alg, 2, {(0, 1): 1}))
    with pytest.raises(ValueError, match="3 components"):
        AlgebroidForm(alg, 1, (1, 2))


def test_algebroid_form_index_normalization():
    alg = _epsilon_algebroid()
    flipped = AlgebroidForm(alg, 2, {(1, 0): 1})
    assert equivalent(flipped.comp((0, 1)), Num(-1))
    assert AlgebroidForm(alg, 2, {(1, 1): 5}).is_zero()
    assert flipped == AlgebroidForm(alg, 2, {(0, 1): -1})

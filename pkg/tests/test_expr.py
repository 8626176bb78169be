"""Expression kernel: parsing, printing, calculus, evaluation, zero-tests."""

import math
import random
from fractions import Fraction

import pytest

from geomhj.expr import (
    Chart, Num, Sym, Pow, Fn, add, mul, pw, fn, sqrt, sym, symbols,
    parse, to_str, diff, evaluate, substitute, canonical, is_zero,
    equivalent, free_symbols, compile_expr, point_on,
    ParseError, UndeclaredSymbolError, UnboundSymbolError, DomainError,
    ExprError,
)

Q, P = Chart("plane", "q p"), None
X, Y, Z = symbols("x y z")


# ---------------------------------------------------------------------------
# construction and normal form


def test_like_terms_collect():
    q = sym("q")
    assert add(q, q, q) == mul(Num(3), q)
    assert add(q, mul(Num(-1), q)) == Num(0)
    assert add(mul(Num(2), q), mul(Num(Fraction(1, 2)), q)) == \
        mul(Num(Fraction(5, 2)), q)


def test_exponent_collection():
    w = add(Num(1), pw(sym("y"), 2))
    # sqrt(w) * sqrt(w) -> w and w * w^-1 -> 1, on a *sum* base
    assert mul(sqrt(w), sqrt(w)) == w
    assert mul(w, pw(w, -1)) == Num(1)
    assert mul(sqrt(w), pw(w, Fraction(-1, 2))) == Num(1)


def test_power_of_power_integer_only():
    w = sym("w")
    assert pw(sqrt(w), 2) == w
    assert pw(pw(w, 2), 3) == pw(w, 6)
    # (w^2)^(1/2) is |w|, not w: must stay unevaluated
    inner = pw(w, 2)
    frozen = pw(inner, Fraction(1, 2))
    assert isinstance(frozen, Pow) and frozen.base == inner


def test_exp_merging():
    t = sym("t")
    a = fn("exp", mul(Num(Fraction(5, 2)), t))
    b = fn("exp", mul(Num(Fraction(-5, 2)), t))
    assert mul(a, b) == Num(1)
    assert mul(a, a) == fn("exp", mul(Num(5), t))
    assert pw(a, 2) == fn("exp", mul(Num(5), t))


def test_log_exp_inverse_pair():
    x = sym("x")
    assert fn("log", fn("exp", x)) == x
    assert fn("exp", fn("log", x)) == x
    assert fn("exp", Num(0)) == Num(1)
    assert fn("log", Num(1)) == Num(0)
    assert fn("sin", Num(0)) == Num(0)
    assert fn("cos", Num(0)) == Num(1)


def test_numeric_folding_exact():
    assert pw(Num(4), Fraction(1, 2)) == Num(2)
    assert pw(Num(Fraction(27, 8)), Fraction(2, 3)) == Num(Fraction(9, 4))
    assert pw(Num(2), -1) == Num(Fraction(1, 2))
    # no exact root -> stays symbolic
    assert isinstance(pw(Num(2), Fraction(1, 2)), Pow)


def test_float_contagion():
    x = sym("x")
    e = add(Num(0.5), Num(Fraction(1, 2)))
    assert isinstance(e, Num) and isinstance(e.value, float) and e.value == 1.0
    assert isinstance(pw(Num(2.0), Fraction(1, 2)).value, float)
    # exact arithmetic must never silently become float
    exact = add(Num(Fraction(1, 3)), Num(Fraction(2, 3)))
    assert exact == Num(1) and isinstance(exact.value, Fraction)
    assert mul(Num(0.5), x) != mul(Num(Fraction(1, 2)), x)


def test_nonconstant_exponent_rejected():
    with pytest.raises(ExprError):
        pw(sym("x"), sym("y"))


# ---------------------------------------------------------------------------
# parsing


def test_parse_literals_exact_vs_float():
    assert parse("5/2") == Num(Fraction(5, 2))
    assert parse("2.5") == Num(2.5)
    assert parse("1e-3") == Num(0.001)
    assert parse("5/2") != parse("2.5")


def test_parse_precedence_and_unary():
    chart = Chart("c", "x y")
    assert parse("x - y - y", chart) == add(sym("x"), mul(Num(-2), sym("y")))
    assert parse("-x^2", chart) == mul(Num(-1), pw(sym("x"), 2))
    assert parse("2*x/4", chart) == mul(Num(Fraction(1, 2)), sym("x"))
    assert parse("x^-2", chart) == pw(sym("x"), -2)
    assert parse("2^3^2") == Num(512)  # right associative


def test_parse_functions():
    chart = Chart("c", "x")
    assert parse("sqrt(x)", chart) == pw(sym("x"), Fraction(1, 2))
    assert parse("exp(log(x))", chart) == sym("x")
    assert parse("cos(0)") == Num(1)


def test_parse_general_power_via_exp_log():
    chart = Chart("c", "x y")
    e = parse("x^y", chart)
    assert e == fn("exp", mul(sym("y"), fn("log", sym("x"))))
    v = evaluate(e, {"x": 2.0, "y": 3.0})
    assert abs(v - 8.0) < 1e-12


def test_parse_error_offset():
    with pytest.raises(ParseError) as exc:
        parse("q +", Chart("c", "q"))
    assert exc.value.offset == 3


def test_parse_undeclared_symbol():
    with pytest.raises(UndeclaredSymbolError) as exc:
        parse("q + w", Chart("c", "q p"))
    assert exc.value.name == "w"
    # params whitelist extra names
    e = parse("m*q", Chart("c", "q p"), params=("m",))
    assert free_symbols(e) == frozenset({"m", "q"})


def test_parse_unknown_function():
    with pytest.raises(ParseError):
        parse("tan(q)", Chart("c", "q"))


def test_parse_trailing_garbage():
    with pytest.raises(ParseError):
        parse("q 2", Chart("c", "q"))


# ---------------------------------------------------------------------------
# printing round-trip


def _random_poly(rng, names, nterms=4, degree=3):
    terms = [Num(rng.randint(-3, 3))]
    for _ in range(nterms):
        factors = [Num(rng.randint(-3, 3))]
        for n in names:
            factors.append(pw(sym(n), rng.randint(0, degree)))
        terms.append(mul(*factors))
    return add(*terms)


def _random_expr(rng, names):
    e = _random_poly(rng, names, nterms=3, degree=2)
    roll = rng.random()
    if roll < 0.3:
        e = add(fn(rng.choice(("sin", "cos", "exp")), e), _random_poly(rng, names, 2, 2))
    elif roll < 0.5:
        # keep log/sqrt arguments positive on the sample box
        e = add(fn("log", add(Num(4), pw(e, 2))),
                sqrt(add(Num(5), pw(sym(names[0]), 2))))
    elif roll < 0.7:
        e = mul(e, pw(add(Num(3), pw(sym(names[-1]), 2)), -1))
    return e


def test_roundtrip_parse_to_str():
    rng = random.Random(42)
    names = ("x", "y", "z")
    for _ in range(200):
        e = _random_expr(rng, names)
        s = to_str(e)
        assert parse(s) == e, s


def test_to_str_shapes():
    x, y = sym("x"), sym("y")
    assert to_str(pw(x, Fraction(1, 2))) == "sqrt(x)"
    assert to_str(mul(x, pw(y, -1))) == "x/y"
    assert to_str(add(x, mul(Num(-1), y))) == "x - y"
    assert to_str(mul(Num(Fraction(-5, 8)), x)) == "-5*x/8"
    assert to_str(pw(add(Num(1), x), -1)) == "(1 + x)^(-1)"


# ---------------------------------------------------------------------------
# differentiation


def test_diff_basics():
    x = sym("x")
    assert diff(pw(x, 3), "x") == mul(Num(3), pw(x, 2))
    assert diff(fn("exp", mul(Num(2), x)), "x") == \
        mul(Num(2), fn("exp", mul(Num(2), x)))
    assert diff(fn("log", x), "x") == pw(x, -1)
    assert diff(fn("sin", x), "x") == fn("cos", x)
    assert diff(fn("cos", x), "x") == mul(Num(-1), fn("sin", x))
    assert diff(sqrt(x), "x") == mul(Num(Fraction(1, 2)), pw(x, Fraction(-1, 2)))
    assert diff(pw(x, 3), "y") == Num(0)


def test_diff_matches_finite_differences():
    rng = random.Random(42)
    names = ("x", "y", "z")
    h = 1e-5
    checked = 0
    for _ in range(200):
        e = _random_expr(rng, names)
        wrt = rng.choice(names)
        de = diff(e, wrt)
        pt = {n: rng.uniform(0.3, 1.7) for n in names}
        try:
            sv = evaluate(de, pt)
            hi = dict(pt); hi[wrt] += h
            lo = dict(pt); lo[wrt] -= h
            fd = (evaluate(e, hi) - evaluate(e, lo)) / (2 * h)
        except DomainError:
            continue
        assert abs(sv - fd) <= 1e-6 * (1.0 + abs(sv)), to_str(e)
        checked += 1
    assert checked > 150


def test_product_rule_symbolic():
    rng = random.Random(7)
    for _ in range(20):
        f = _random_poly(rng, ("x", "y"), 3, 2)
        g = _random_poly(rng, ("x", "y"), 3, 2)
        lhs = diff(mul(f, g), "x")
        rhs = add(mul(diff(f, "x"), g), mul(f, diff(g, "x")))
        assert is_zero(add(lhs, mul(Num(-1), rhs)))


def test_product_rule_transcendental_numeric():
    x = sym("x")
    f = fn("exp", fn("sin", x))
    g = fn("log", add(Num(2), pw(x, 2)))
    lhs = diff(mul(f, g), "x")
    rhs = add(mul(diff(f, "x"), g), mul(f, diff(g, "x")))
    for v in (0.2, 0.9, 1.5):
        a = evaluate(lhs, {"x": v})
        b = evaluate(rhs, {"x": v})
        assert abs(a - b) <= 1e-9 * (1 + abs(a))


def test_diff_substitute_commute():
    # d/dx then substitute == substitute then d/dx, provided the bindings
    # neither bind x nor mention x
    rng = random.Random(11)
    for _ in range(20):
        e = _random_poly(rng, ("x", "y", "z"), 4, 3)
        b = {"y": _random_poly(rng, ("z",), 2, 2)}
        one = substitute(diff(e, "x"), b)
        two = diff(substitute(e, b), "x")
        assert is_zero(one - two)


# ---------------------------------------------------------------------------
# evaluation


def test_evaluate_reference_point():
    chart = Chart("c", "x y")
    e = parse("-a/y - b*log(y) - delta/x", chart, params=("a", "b", "delta"))
    v = evaluate(e, {"x": 1.0, "y": 1.0}, params={"a": 1, "b": 1, "delta": 1})
    assert v == -2.0


def test_evaluate_unbound():
    with pytest.raises(UnboundSymbolError) as exc:
        evaluate(parse("q + p"), {"q": 1.0})
    assert exc.value.name == "p"


def test_evaluate_domain_errors():
    assert_domain = lambda src, pt: pytest.raises(DomainError)
    with pytest.raises(DomainError):
        evaluate(parse("log(x)"), {"x": 0.0})
    with pytest.raises(DomainError):
        evaluate(parse("log(x)"), {"x": -2.0})
    with pytest.raises(DomainError):
        evaluate(parse("1/x"), {"x": 0.0})
    with pytest.raises(DomainError):
        evaluate(parse("sqrt(x)"), {"x": -1.0})
    with pytest.raises(DomainError):
        evaluate(parse("exp(x)"), {"x": 1e9})  # overflow is a domain error


def test_evaluate_carries_offender():
    try:
        evaluate(parse("1 + log(x - 2)"), {"x": 1.0})
    except DomainError as err:
        assert "log" in to_str(err.subexpr)
    else:
        raise AssertionError("expected DomainError")


# ---------------------------------------------------------------------------
# substitution


def test_substitute_simplifies_on_the_way():
    # the oscillator energy-section composition must come out exactly 1:
    # (p^2 + q^2)/2 with p -> sqrt(2 - q^2)
    q = sym("q")
    h = mul(Num(Fraction(1, 2)), add(pw(sym("p"), 2), pw(q, 2)))
    gamma = sqrt(add(Num(2), mul(Num(-1), pw(q, 2))))
    assert substitute(h, {"p": gamma}) == Num(1)


def test_substitute_simultaneous():
    x, y = sym("x"), sym("y")
    e = add(x, y)
    # x->y, y->x swaps, it must not cascade
    assert substitute(e, {"x": y, "y": x}) == add(x, y)
    e2 = substitute(mul(x, y), {"x": y, "y": x})
    assert e2 == mul(x, y)


def test_substitute_numbers():
    e = parse("x^2 + y")
    assert substitute(e, {"x": 3, "y": Fraction(1, 2)}) == Num(Fraction(19, 2))


# ---------------------------------------------------------------------------
# canonical form and zero recognition


def test_canonical_expands_products():
    x, y = sym("x"), sym("y")
    lhs = canonical(pw(add(x, y), 2))
    rhs = canonical(add(pw(x, 2), mul(Num(2), x, y), pw(y, 2)))
    assert lhs == rhs


def test_is_zero_polynomial_identity():
    x, y = sym("x"), sym("y")
    e = add(pw(add(x, y), 3),
            mul(Num(-1), add(pw(x, 3), mul(Num(3), pw(x, 2), y),
                             mul(Num(3), x, pw(y, 2)), pw(y, 3))))
    assert is_zero(e)
    assert not is_zero(add(e, Num(Fraction(1, 10**12))))


def test_is_zero_rational_clearing():
    y = sym("y")
    w = add(Num(1), pw(y, 2))
    # y^2/(1+y^2) + 1/(1+y^2) - 1 == 0 needs multiplying through by w
    e = add(mul(pw(y, 2), pw(w, -1)), pw(w, -1), Num(-1))
    assert is_zero(e)


def test_is_zero_sqrt_clearing():
    q = sym("q")
    w = add(Num(2), mul(Num(-1), pw(q, 2)))
    # sqrt(w) - w/sqrt(w) == 0
    e = add(sqrt(w), mul(Num(-1), w, pw(w, Fraction(-1, 2))))
    assert is_zero(e)


def test_is_zero_numeric_fallback():
    x = sym("x")
    # no trig table in the kernel: only the sampling fallback can see this
    e = add(pw(fn("sin", x), 2), pw(fn("cos", x), 2), Num(-1))
    assert is_zero(e)
    assert not is_zero(add(e, mul(Num(Fraction(1, 1000)), x)))


def test_is_zero_respects_domains():
    x = sym("x")
    # log(x) - log(x) through a singular point: still zero
    e = add(fn("log", x), mul(Num(-1), fn("log", x)))
    assert is_zero(e)


def test_equivalent():
    assert equivalent(parse("(x + 1)^2"), parse("x^2 + 2*x + 1"))
    assert not equivalent(parse("x^2"), parse("x^3"))


# ---------------------------------------------------------------------------
# compilation


def test_compile_matches_evaluate():
    rng = random.Random(42)
    names = ("x", "y", "z")
    order = list(names)
    for _ in range(50):
        e = _random_expr(rng, names)
        f = compile_expr(e, order)
        pt = {n: rng.uniform(0.3, 1.7) for n in names}
        try:
            want = evaluate(e, pt)
        except DomainError:
            continue
        got = f([pt[n] for n in order])
        assert abs(got - want) <= 1e-12 * (1 + abs(want))


def test_compile_unbound():
    with pytest.raises(UnboundSymbolError):
        compile_expr(parse("x + q"), ["x"])


# ---------------------------------------------------------------------------
# charts and points


def test_chart_basics():
    c = Chart("tq", "t x p")
    assert c.dim == 3 and c.index("x") == 1
    with pytest.raises(ValueError):
        Chart("bad", "x x")
    with pytest.raises(ValueError):
        Chart("empty", [])


def test_point_on():
    c = Chart("c", "q p")
    pt = point_on(c, {"q": 1, "p": 2})
    assert pt == {"q": 1.0, "p": 2.0}
    with pytest.raises(ValueError):
        point_on(c, {"q": 1})
    with pytest.raises(ValueError):
        point_on(c, {"q": 1, "p": 2, "z": 3})


def test_free_symbols():
    e = parse("m*exp(G*t)*x^2", params=("m", "G", "t", "x"))
    assert free_symbols(e) == frozenset({"m", "G", "t", "x"})
    assert free_symbols(Num(3)) == frozenset()

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerh.expr import (
    Add,
    ChartPoint,
    DomainError,
    Environment,
    ExprSyntaxError,
    IndexRangeError,
    Param,
    Pow,
    Sqrt,
    UnknownIdentifierError,
    Var,
    change_coordinates,
    differentiate,
    evaluate,
    parse_metric,
    substitute,
    to_text,
    x,
    y,
)
from finslerh.jets import DerivativeRequest, mixed_partial
from finslerh.library import builtin, builtin_names, sample_arrays

EX37 = "sqrt(sqrt(y1^4+y2^4+y3^4)+x4*y4^2)"


def env(xv=None, yv=None, **params):
    return Environment.of(xv, yv, params)


def test_parse_euclidean_tree():
    e = parse_metric("sqrt(y1^2+y2^2)", 2)
    assert e == Sqrt(Add(Pow(y(1), 2), Pow(y(2), 2)))


def test_index_out_of_range():
    with pytest.raises(IndexRangeError):
        parse_metric("y3^2", 2)


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError):
        parse_metric("foo*y1", 2, params=set())
    assert parse_metric("foo*y1", 2) == Param("foo") * y(1)


def test_syntax_error_location():
    with pytest.raises(ExprSyntaxError) as err:
        parse_metric("sqrt(y1^2 + ", 2)
    assert err.value.line == 1 and err.value.column >= 12


def test_exponent_must_be_constant():
    with pytest.raises(ExprSyntaxError):
        parse_metric("y1^y2", 2)


def test_rational_exponent():
    e = parse_metric("(y1^2)^(3/2)", 1)
    assert evaluate(e, env([0.0], [2.0])) == pytest.approx(8.0)


def test_parameters_bind_at_evaluation():
    e = parse_metric("c*sqrt(y1^2+y2^2) + a1*y1", 2, params={"c", "a1"})
    assert evaluate(e, env([0, 0], [3, 4], c=2.0, a1=1.0)) == pytest.approx(13.0)


def test_example_37_parses_and_evaluates():
    e = parse_metric(EX37, 4)
    v = evaluate(e, env([0, 0, 0, 1], [1, 1, 1, 2]))
    assert v == pytest.approx(math.sqrt(math.sqrt(3) + 4), rel=1e-15)
    assert v == pytest.approx(2.3941701709713277, rel=1e-15)


def test_evaluate_euclidean():
    assert evaluate(parse_metric("sqrt(y1^2+y2^2)", 2), env([0, 0], [3, 4])) == 5.0


def test_domain_error_division_by_zero():
    e = parse_metric("1/(x1-x1)", 1)
    with pytest.raises(DomainError) as err:
        evaluate(e, env([0.7], [1.0]))
    assert "division by zero" in str(err.value)


def test_domain_error_sqrt_negative_names_subtree():
    e = parse_metric("y1 + sqrt(x1)", 1)
    with pytest.raises(DomainError) as err:
        evaluate(e, env([-1.0], [1.0]))
    assert "sqrt(x1)" in str(err.value)


def test_domain_error_fractional_power():
    with pytest.raises(DomainError):
        evaluate(parse_metric("x1^(1/2)", 1), env([-2.0], [1.0]))


def test_nonstrict_evaluation_yields_nan():
    e = parse_metric("sqrt(x1)", 1)
    v = evaluate(e, Environment(np.array([[-1.0], [4.0]]), np.ones((2, 1))), strict=False)
    assert np.isnan(v[0]) and v[1] == 2.0


def test_differentiate_examples():
    e = differentiate(parse_metric("y1^2+y2^2", 2), y(1))
    assert evaluate(e, env([0, 0], [1.5, -2])) == pytest.approx(3.0)
    e = differentiate(parse_metric("x4*y4^2", 4), y(4))
    assert evaluate(e, env([0, 0, 0, 3], [0, 0, 0, 2])) == pytest.approx(12.0)


def test_differentiate_najafi_phi_in_s():
    from finslerh.spherical import NAJAFI_PHI

    phi = parse_metric(NAJAFI_PHI, 1, params={"k", "c", "r", "s"})
    d = differentiate(phi, Param("s"))
    assert evaluate(d, env([0.0], [1.0], k=1.0, c=0.3, r=0.0, s=0.0)) == pytest.approx(0.3, abs=1e-15)


def test_substitute_examples():
    e = parse_metric("x1*y1", 1)
    s = substitute(e, {x(1): x(1) + 1})
    assert evaluate(s, env([2.0], [3.0])) == pytest.approx(9.0)
    assert substitute(e, {x(1): x(1), y(1): y(1)}) == e


@pytest.mark.parametrize("name", builtin_names())
def test_round_trip_library(name):
    entry = builtin(name)
    e = entry.metric().F
    assert parse_metric(to_text(e), entry.definition.dimension, params=set(entry.params) | {"r", "s"}) == e


@pytest.mark.parametrize("name", builtin_names())
def test_differentiate_matches_jets(name):
    """Symbolic partials agree with jet partials at 50 valid sites."""
    entry = builtin(name)
    metric = entry.metric()
    n = metric.dimension
    X, Y = sample_arrays(entry, 7, 50, metric)
    e = metric.F2
    for v in [y(i) for i in range(1, n + 1)] + [x(i) for i in range(1, n + 1)]:
        sym = evaluate(differentiate(e, v), metric.env(X, Y))
        for a in range(0, 50, 5):
            ad = mixed_partial(e, DerivativeRequest(ChartPoint(X[a], Y[a]), (v,)), metric.params)
            assert abs(sym[a] - ad) <= 1e-12 * max(1.0, abs(ad))


# random expression trees for property tests
leaves = st.one_of(
    st.sampled_from([x(1), x(2), y(1), y(2)]),
    st.floats(0.5, 3.0).map(lambda v: parse_metric(repr(round(v, 3)), 2)),
)


def _combine(children):
    return st.one_of(
        st.tuples(children, children).map(lambda t: t[0] + t[1]),
        st.tuples(children, children).map(lambda t: t[0] - t[1]),
        st.tuples(children, children).map(lambda t: t[0] * t[1]),
        st.tuples(children, st.sampled_from([2, 3])).map(lambda t: t[0] ** t[1]),
        children.map(lambda c: -c),
    )


trees = st.recursive(leaves, _combine, max_leaves=8)


@settings(max_examples=60, deadline=None)
@given(trees)
def test_round_trip_random_trees(e):
    assert parse_metric(to_text(e), 2) == e


@settings(max_examples=40, deadline=None)
@given(trees, st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_structurally_equal_trees_evaluate_equal(e, vals):
    other = parse_metric(to_text(e), 2)
    en = env(vals[:2], vals[2:])
    assert evaluate(e, en) == evaluate(other, en)


@settings(max_examples=40, deadline=None)
@given(trees, trees, st.integers(0, 2**31))
def test_substitution_commutes_with_evaluation(e, repl, seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.uniform(-1.5, 1.5, (20, 2)), rng.uniform(-1.5, 1.5, (20, 2))
    lhs = evaluate(substitute(e, {x(1): repl}), Environment(X, Y))
    inner = evaluate(repl, Environment(X, Y))
    X2 = X.copy()
    X2[:, 0] = inner
    rhs = evaluate(e, Environment(X2, Y))
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


def test_change_coordinates_identity():
    F = parse_metric("sqrt(y1^2+y2^2) + x1*y1 + x2*y2", 2)
    Ft = change_coordinates(F, [x(1), x(2)], 2)
    rng = np.random.default_rng(0)
    X, Y = rng.uniform(-0.5, 0.5, (20, 2)), rng.normal(size=(20, 2))
    assert np.allclose(evaluate(Ft, Environment(X, Y)), evaluate(F, Environment(X, Y)), rtol=1e-15)


def test_change_coordinates_affine_euclidean():
    F = parse_metric("sqrt(y1^2+y2^2)", 2)
    A = np.array([[2.0, 0.5], [-0.3, 1.0]])
    psi = [parse_metric("2*x1 + 0.5*x2 + 1", 2), parse_metric("-0.3*x1 + x2 - 2", 2)]
    Ft = change_coordinates(F, psi, 2)
    rng = np.random.default_rng(1)
    X, Y = rng.normal(size=(20, 2)), rng.normal(size=(20, 2))
    assert np.allclose(evaluate(Ft, Environment(X, Y)), np.linalg.norm(Y @ A.T, axis=1), rtol=1e-14)


def test_change_coordinates_quadratic_map_two_paths():
    entry = builtin("ex51")
    metric = entry.metric()
    psi = [parse_metric(f"x{i} + 0.1*x{i}^2", 2) for i in (1, 2)]
    Ft = change_coordinates(metric.F, psi, 2)
    rng = np.random.default_rng(2)
    Xt, Yt = rng.uniform(-0.3, 0.3, (20, 2)), rng.normal(size=(20, 2))
    X = Xt + 0.1 * Xt**2
    Y = Yt * (1 + 0.2 * Xt)
    lhs = evaluate(Ft, Environment(Xt, Yt, entry.params))
    rhs = evaluate(metric.F, Environment(X, Y, entry.params))
    assert np.allclose(lhs, rhs, rtol=1e-14)


def test_var_index_validated():
    with pytest.raises(ValueError):
        Var("z", 1)
    with pytest.raises(ValueError):
        Var("x", 0)

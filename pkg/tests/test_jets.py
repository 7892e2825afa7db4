import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerh.expr import ChartPoint, DomainError, Environment, parse_metric, x, y
from finslerh.jets import (
    DerivativeRequest,
    DerivativeTable,
    Jet,
    OrderError,
    fd_partial,
    gradient_x,
    gradient_y,
    lift_batch,
    mixed_partial,
    multisets,
    variable_codes,
)
from finslerh.library import builtin

EX37_F = "sqrt(sqrt(y1^4+y2^4+y3^4)+x4*y4^2)"


def req(xv, yv, *vs):
    return DerivativeRequest(ChartPoint(np.array(xv, float), np.array(yv, float)), vs)


def test_product_is_subset_convolution():
    # a = 1 + 2e1 + 3e2 + 4e1e2, b = 5 + 6e1 + 7e2 + 8e1e2 with e1^2 = e2^2 = 0
    a = Jet(np.array([1.0, 2.0, 3.0, 4.0]))
    b = Jet(np.array([5.0, 6.0, 7.0, 8.0]))
    c = (a * b).c
    assert c.tolist() == [5.0, 1 * 6 + 2 * 5, 1 * 7 + 3 * 5, 1 * 8 + 2 * 7 + 3 * 6 + 4 * 5]


def test_tag_squares_to_zero():
    t = Jet(np.array([0.0, 1.0]))
    assert np.all((t * t).c == 0)


def test_hand_expanded_polynomial():
    # (y1 + e1 + e2 + e3)^3 with three tags on y1: coefficient of e1 e2 e3 is 6
    e = parse_metric("y1^3 + x1*y1^2", 1)
    assert mixed_partial(e, req([0.5], [2.0], y(1), y(1))) == pytest.approx(6 * 2.0 + 2 * 0.5)
    assert mixed_partial(e, req([0.5], [2.0], y(1), y(1), y(1))) == pytest.approx(6.0)
    assert mixed_partial(e, req([0.5], [2.0], y(1), x(1))) == pytest.approx(2 * 2.0)


def test_empty_subset_is_plain_value():
    e = parse_metric(EX37_F, 4)
    table = variable_codes(4)
    env = Environment(np.array([0, 0, 0, 1.0]), np.array([1, 1, 1, 2.0]))
    jet = lift_batch(e, env, np.array([[table[y(1)]], [table[x(4)]]]), table)
    assert jet.c[0][0] == pytest.approx(np.sqrt(np.sqrt(3) + 4), rel=1e-15)


def test_second_fiber_derivative_of_square():
    e = parse_metric("y1^2", 1)
    assert mixed_partial(e, req([0.3], [-1.7], y(1), y(1))) == pytest.approx(2.0)


def test_example_37_hessian_entry():
    F2 = parse_metric(EX37_F, 4) ** 2
    assert mixed_partial(F2, req([0, 0, 0, 1], [1, 1, 1, 2], y(4), y(4))) == pytest.approx(2.0)
    assert mixed_partial(F2, req([0, 0, 0, 1], [1, 1, 1, 2], x(4), y(4), y(4))) == pytest.approx(2.0)


def test_gradients():
    p = ChartPoint(np.zeros(2), np.array([3.0, 4.0]))
    assert np.allclose(gradient_y(parse_metric("y1^2+y2^2", 2), p), [6, 8])
    assert np.allclose(gradient_x(parse_metric("y1^2+y2^2", 2), p), [0, 0])
    ex51 = builtin("ex51")
    F2 = ex51.metric().F2
    assert np.allclose(gradient_x(F2, p, ex51.params), [30, 40])


def test_order_bounds():
    p = ChartPoint(np.zeros(2), np.ones(2))
    with pytest.raises(OrderError):
        DerivativeRequest(p, (y(1),) * 6)
    with pytest.raises(OrderError):
        DerivativeRequest(p, (x(1), x(2)))
    with pytest.raises(OrderError):
        DerivativeRequest(p, (y(3),))
    DerivativeRequest(p, (y(1),) * 5 + (x(2),))


def test_domain_error_propagates():
    with pytest.raises(DomainError):
        mixed_partial(parse_metric("sqrt(x1)", 1), req([-1.0], [1.0], y(1)))


def test_schwarz_symmetry_exact():
    entry = builtin("ex51_a")
    F2 = entry.metric().F2
    base = (y(1), y(2), y(2), x(1))
    point = ([0.2, -0.1], [0.9, -1.1])
    values = {mixed_partial(F2, req(*point, *perm), entry.params) for perm in itertools.permutations(base)}
    assert len(values) == 1


def test_schwarz_symmetry_independent_tag_orders():
    """Raw tag seeds in every order (no canonicalisation) agree to roundoff."""
    entry = builtin("ex51_a")
    F2 = entry.metric().F2
    table = variable_codes(2)
    base = [table[y(1)], table[y(2)], table[y(2)], table[x(1)]]
    perms = np.array(list(itertools.permutations(base))).T  # (4 tags, 24 requests)
    env = Environment(np.array([0.2, -0.1]), np.array([0.9, -1.1]), entry.params)
    vals = lift_batch(F2, env, perms, table).c[-1]
    assert np.ptp(vals) <= 1e-13 * max(1.0, np.abs(vals).max())
    assert abs(vals[0]) > 1e-3


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_linearity(alpha, beta, seed):
    rng = np.random.default_rng(seed)
    e1 = parse_metric("sqrt(y1^2 + 2*y2^2) + x1*y1", 2)
    e2 = parse_metric("(y1^4 + y2^4)^(1/2) + x2*y1*y2", 2)
    r = req(rng.uniform(-1, 1, 2), rng.uniform(0.5, 2, 2), y(1), y(2), x(1))
    lhs = mixed_partial(alpha * e1 + beta * e2, r)
    rhs = alpha * mixed_partial(e1, r) + beta * mixed_partial(e2, r)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_batched_table_matches_point_partials():
    F2 = builtin("riemannian_curved").metric().F2
    n = 2
    reqs = multisets(list(range(n)), 3)
    table = DerivativeTable(reqs)
    X = np.array([[0.3, -0.2], [0.1, 0.5]])
    Y = np.array([[1.0, 2.0], [-0.5, 0.7]])
    jet = lift_batch(F2, Environment(X, Y), table.codes, variable_codes(n))
    T = table.gather(jet, [[0, 1]] * 3)
    for a in range(2):
        for i, j, k in itertools.product(range(n), repeat=3):
            v = mixed_partial(F2, req(X[a], Y[a], y(i + 1), y(j + 1), y(k + 1)))
            assert T[a, i, j, k] == pytest.approx(v, rel=1e-14, abs=1e-14)


def test_fd_matches_polynomial():
    e = parse_metric("y1^3", 1)
    r = req([0.0], [1.3], y(1))
    ad = mixed_partial(e, r)
    assert abs(fd_partial(e, r, step=1e-2) - ad) <= 1e-8 * abs(ad)


def test_fd_example_37_order_three():
    F2 = builtin("ex37").metric().F2
    point = ([0.1, 0.2, -0.3, 1.2], [0.8, -0.6, 0.7, 1.1])
    for vs in [(y(1), y(1), y(2)), (y(4), y(4), x(4)), (y(1), y(2), y(3))]:
        r = req(*point, *vs)
        ad = mixed_partial(F2, r)
        assert abs(fd_partial(F2, r) - ad) <= 1e-5 * max(1.0, abs(ad))


def test_fd_order_five_of_quartic_vanishes():
    e = parse_metric("y1^4 + y1^2*y2^2 + 3*y2^4", 2)
    r = req([0, 0], [0.7, -1.2], y(1), y(1), y(2), y(2), y(2))
    assert abs(fd_partial(e, r)) < 1e-4


def test_fd_rejects_bad_step():
    with pytest.raises(ValueError):
        fd_partial(parse_metric("y1^2", 1), req([0.0], [1.0], y(1)), step=0.0)

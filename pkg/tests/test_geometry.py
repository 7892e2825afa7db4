import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerh.expr import ChartPoint, x, y
from finslerh.geometry import (
    DegenerateMetricError,
    as_metric,
    cartan_ladder,
    connections,
    covariant_coefficients,
    geometry,
    h_ladder,
    metric_tensor,
    point_geometry,
    s_scalar_candidate,
    spray_coefficients,
)
from finslerh.identities import scaled_residual
from finslerh.jets import DerivativeRequest, fd_partial
from finslerh.library import builtin, sample_arrays

EX37_POINT = ChartPoint(np.array([0.0, 0.0, 0.0, 1.0]), np.array([1.0, 1.0, 1.0, 2.0]))


def metric_of(name):
    return builtin(name).metric()


def test_euclidean_metric_is_identity():
    m = metric_of("euclidean_3d")
    p = ChartPoint(np.array([0.3, -0.2, 0.9]), np.array([1.0, -2.0, 0.5]))
    assert np.allclose(metric_tensor(m, p), np.eye(3), atol=1e-14)
    assert np.allclose(spray_coefficients(m, p), 0, atol=1e-14)
    assert np.allclose(covariant_coefficients(m, p), 0, atol=1e-14)
    H2, H3, H4, L = h_ladder(m, p)
    assert all(np.allclose(t, 0, atol=1e-13) for t in (H2, H3, H4, L))
    N, G2, G3, gamma, H_up = connections(m, p)
    assert all(np.allclose(t, 0, atol=1e-13) for t in (N, G2, G3, gamma, H_up))
    assert s_scalar_candidate(m, p) == pytest.approx(0.0, abs=1e-14)


def test_example_37_values():
    m = metric_of("ex37")
    g = metric_tensor(m, EX37_POINT)
    assert g[3, 3] == pytest.approx(1.0, rel=1e-14)
    assert np.allclose(spray_coefficients(m, EX37_POINT), [0, 0, 0, 1], atol=1e-14)
    assert np.allclose(covariant_coefficients(m, EX37_POINT), [0, 0, 0, 1], atol=1e-14)
    N = connections(m, EX37_POINT)[0]
    assert N[3, 3] == pytest.approx(1.0, rel=1e-14)
    assert s_scalar_candidate(m, EX37_POINT) == pytest.approx(2 / 3, rel=1e-14)


def test_example_37_connection_matches_fd():
    m = metric_of("ex37")
    # G^4 = H_4 / g_44 with g_44 = x4, so N^4_4 = dot_4 G^4
    G4 = m.H_exprs[3] / x(4)
    fd = fd_partial(G4, DerivativeRequest(EX37_POINT, (y(4),)))
    assert fd == pytest.approx(connections(m, EX37_POINT)[0][3, 3], rel=1e-9)


def test_example_51_covariant_closed_form():
    m = metric_of("ex51")
    p = ChartPoint(np.zeros(2), np.array([3.0, 4.0]))
    assert np.allclose(covariant_coefficients(m, p), [7.5, 10.0], rtol=1e-14)
    pg = point_geometry(m, p)
    assert pg.P_factor == pytest.approx(2.5, rel=1e-14)


def test_example_51_cartan_matches_fd():
    m = metric_of("ex51")
    # at x = 0 the metric reduces to |y| and the Cartan tensor vanishes
    assert np.abs(cartan_ladder(m, ChartPoint(np.zeros(2), np.array([3.0, 4.0])))[0]).max() < 1e-14
    p = ChartPoint(np.array([0.2, 0.1]), np.array([3.0, 4.0]))
    C3 = cartan_ladder(m, p)[0]
    assert np.abs(C3).max() > 1e-3
    for i, j, k in [(0, 0, 0), (0, 1, 1), (1, 1, 1)]:
        fd = 0.25 * fd_partial(m.F2, DerivativeRequest(p, (y(i + 1), y(j + 1), y(k + 1))), params=m.params)
        assert abs(fd - C3[i, j, k]) <= 1e-7 * max(1.0, abs(C3[i, j, k]))


def test_example_33_pair_equal_spray_distinct_covariant():
    X, Y = sample_arrays(builtin("ex33_pair"), 42, 30)
    a = geometry(metric_of("ex33_pair"), (X, Y))
    b = geometry(metric_of("ex33_bar"), (X, Y))
    assert scaled_residual(a.G, b.G).max() < 1e-9
    assert scaled_residual(a.H, b.H).min() > 1e-3


def test_riemannian_H_up_is_christoffel():
    m = metric_of("riemannian_curved")
    X, Y = sample_arrays(builtin("riemannian_curved"), 3, 25)
    geo = geometry(m, (X, Y))
    assert np.abs(geo.C3).max() < 1e-12
    assert scaled_residual(geo.H_up, geo.gamma).max() < 1e-12
    # the spray of a Riemannian metric is quadratic: G^i = 1/2 gamma^i_jk y^j y^k
    assert scaled_residual(geo.G, 0.5 * np.einsum("aijk,aj,ak->ai", geo.gamma, Y, Y)).max() < 1e-12


@pytest.mark.parametrize("name", ["ex37", "ex51_a", "ex52", "najafi_3d", "spherical_generic"])
def test_cartan_ladder_symmetric_and_euler(name):
    m = metric_of(name)
    X, Y = sample_arrays(builtin(name), 5, 25)
    geo = geometry(m, (X, Y))
    for T in (geo.C3, geo.C4, geo.C5):
        axes = list(range(1, T.ndim))
        for perm in itertools.permutations(axes):
            assert scaled_residual(T, np.transpose(T, [0, *perm])).max() < 1e-10
    for perm in itertools.permutations([2, 3, 4]):
        assert scaled_residual(geo.H4, np.transpose(geo.H4, [0, 1, *perm])).max() < 1e-10
    scale = np.maximum(1.0, np.abs(geo.C4).reshape(len(X), -1).max(axis=1) * np.abs(Y).max(axis=1))
    euler = np.einsum("aijkh,ah->aijk", geo.C4, Y) + geo.C3
    assert (np.abs(euler).reshape(len(X), -1).max(axis=1) / scale).max() < 1e-9


@pytest.mark.parametrize("name", ["ex37", "ex51_3d_a", "najafi", "ex33_pair"])
def test_two_path_covariant(name):
    m = metric_of(name)
    X, Y = sample_arrays(builtin(name), 9, 25)
    geo = geometry(m, (X, Y))
    assert scaled_residual(geo.H, np.einsum("air,ar->ai", geo.g, geo.G)).max() < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 5.0), st.integers(0, 2**31))
def test_homogeneity_of_G_and_H(lam, seed):
    m = metric_of("ex51_a")
    X, Y = sample_arrays(builtin("ex51_a"), seed % 1000, 4)
    a = geometry(m, (X, Y))
    b = geometry(m, (X, lam * Y))
    assert scaled_residual(b.G, lam**2 * a.G).max() < 1e-10
    assert scaled_residual(b.H, lam**2 * a.H).max() < 1e-10
    assert scaled_residual(b.g, a.g).max() < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_metric_identities_property(seed):
    m = metric_of("ex52")
    X, Y = sample_arrays(builtin("ex52"), seed, 3)
    geo = geometry(m, (X, Y))
    assert scaled_residual(np.einsum("aij,ai,aj->a", geo.g, Y, Y), geo.F**2).max() < 1e-10
    assert scaled_residual(np.einsum("ai,ai->a", geo.ell, Y), geo.F).max() < 1e-10
    assert scaled_residual(np.einsum("ai,ai->a", Y, geo.H), 3 * geo.H_scalar_candidate).max() < 1e-10


def test_degenerate_metric_is_rejected():
    m = as_metric("y1^2 + 0*y2", 2)  # F^2 = y1^4 has a singular Hessian at y1 = 0
    with pytest.raises(DegenerateMetricError):
        metric_tensor(m, ChartPoint(np.zeros(2), np.array([0.0, 1.0])))

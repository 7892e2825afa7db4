import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerh.expr import Environment, evaluate
from finslerh.geometry import geometry
from finslerh.identities import scaled_residual
from finslerh.library import builtin, sample_arrays
from finslerh.spherical import (
    R_MIN,
    SphericalMetric,
    najafi,
    najafi_covariant,
    najafi_phi,
    najafi_s_scalar,
    pq,
    sigma,
)


def phi_value(expr, r, s):
    return evaluate(expr, Environment(np.zeros(1), np.ones(1), {"r": r, "s": s}))


def test_euclidean_sigma_and_pq():
    sm = SphericalMetric.from_text("1", 2)
    jet = sm.phi_jet([0.4], [0.1])
    sig = sigma(jet)
    assert (sig.sigma0[0], sig.sigma1[0], sig.sigma2[0], sig.sigma3[0]) == (1.0, 0.0, 0.0, 0.0)
    P, Q = pq(jet)
    assert P[0] == 0.0 and Q[0] == 0.0


def test_najafi_sigma_at_origin():
    sig = sigma(najafi(1.0, 0.3).phi_jet([0.0], [0.0]))
    assert sig.sigma0[0] == pytest.approx(1.0, abs=1e-15)
    assert sig.sigma1[0] == pytest.approx(0.18, abs=1e-15)
    assert sig.sigma2[0] == pytest.approx(0.3, abs=1e-15)
    assert sig.sigma3[0] == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 0.9), st.floats(-1, 1), st.sampled_from(["najafi", "generic"]))
def test_sigma_identities(r, t, which):
    sm = najafi(1.0, 0.3) if which == "najafi" else SphericalMetric.from_text("1 + s/4 + r^2/8", 2)
    s = r * t
    jet = sm.phi_jet([r], [s])
    sig = sigma(jet)
    assert abs(s * sig.sigma2[0] + sig.sigma3[0]) < 1e-12
    assert abs(s * sig.sigma1[0] + sig.sigma2[0] - jet.phi[0] * jet.phi_s[0]) < 1e-12


def test_najafi_phi_values():
    phi = najafi_phi(1.0, 0.3)
    assert phi_value(phi, 0.0, 0.0) == pytest.approx(1.0, rel=1e-15)
    exact = (math.sqrt(1 - 0.0225 + 0.0009) + 0.03) / 0.9775
    assert phi_value(phi, 0.5, 0.1) == pytest.approx(exact, rel=1e-15)
    assert phi_value(phi, 0.5, 0.1) == pytest.approx(1.0426, abs=1e-4)
    flat = najafi_phi(2.0, 0.0)
    assert phi_value(flat, 0.7, -0.3) == pytest.approx(0.5, rel=1e-15)
    with pytest.raises(ValueError):
        najafi_phi(0.0, 0.3)


def test_najafi_s_scalar_spot_values():
    assert najafi_s_scalar(1.0, 0.3, [[0.0, 0.0]], [[1.0, 0.0]])[0] == pytest.approx(0.05, rel=1e-14)
    assert najafi_s_scalar(1.0, 0.0, [[0.2, 0.1]], [[1.0, 2.0]])[0] == 0.0
    with pytest.raises(ValueError):
        najafi_s_scalar(1.0, 0.3, [[4.0, 0.0]], [[1.0, 0.0]])


@pytest.mark.parametrize("name", ["najafi", "najafi_c01", "najafi_3d", "najafi_3d_c01"])
def test_najafi_closed_forms_match_pipeline(name):
    entry = builtin(name)
    k, c = entry.params["k"], entry.params["c"]
    X, Y = sample_arrays(entry, 42, 25)
    geo = geometry(entry.metric(), (X, Y))
    Hs = najafi_s_scalar(k, c, X, Y)
    assert scaled_residual(geo.H_scalar_candidate, Hs).max() < 1e-9
    assert scaled_residual(geo.H, najafi_covariant(k, c, X, Y)).max() < 1e-9
    assert scaled_residual(np.einsum("ai,ai->a", Y, geo.H), 3 * Hs).max() < 1e-9


@pytest.mark.parametrize("name", ["euclidean", "najafi", "najafi_3d", "spherical_generic"])
def test_closed_forms_match_pipeline(name):
    if name == "euclidean":
        sm, entry = SphericalMetric.from_text("1", 2), builtin("euclidean_2d")
    else:
        entry = builtin(name)
        sm = entry.definition.spherical()
    X, Y = sample_arrays(entry, 3, 25)
    geo = geometry(sm.metric(), (X, Y))
    assert scaled_residual(geo.g, sm.metric_tensor(X, Y)).max() < 1e-8
    assert scaled_residual(geo.G, sm.spray(X, Y)).max() < 1e-8
    assert scaled_residual(geo.H, sm.covariant(X, Y)).max() < 1e-8


def test_pq_on_axis_site():
    sm = najafi(1.0, 0.3)
    X, Y = np.array([[0.3, 0.0]]), np.array([[0.0, 1.0]])
    P, Q = sm.pq(X, Y)
    geo = geometry(sm.metric(), (X, Y))
    assert scaled_residual(geo.G, sm.spray(X, Y)).max() < 1e-12
    # with s = 0 the spray is G = u P y + u^2 Q x, so P and Q can be read off the pipeline
    assert geo.G[0, 1] == pytest.approx(P[0], rel=1e-12)
    assert geo.G[0, 0] == pytest.approx(0.3 * Q[0], rel=1e-12)


def test_pq_matches_finite_differences_of_phi():
    sm = najafi(1.0, 0.3)
    r, s, h = 0.3, 0.0, 1e-4
    phi = najafi_phi(1.0, 0.3)

    def f(rr, ss):
        return phi_value(phi, rr, ss)

    pr = (f(r + h, s) - f(r - h, s)) / (2 * h)
    ps = (f(r, s + h) - f(r, s - h)) / (2 * h)
    pss = (f(r, s + h) - 2 * f(r, s) + f(r, s - h)) / h**2
    prs = (f(r + h, s + h) - f(r + h, s - h) - f(r - h, s + h) + f(r - h, s - h)) / (4 * h**2)
    jet = sm.phi_jet([r], [s])
    for a, b in ((jet.phi_r[0], pr), (jet.phi_s[0], ps), (jet.phi_ss[0], pss), (jet.phi_rs[0], prs)):
        assert a == pytest.approx(b, abs=1e-6)


def test_pq_rejects_origin_and_limit_path_is_finite():
    sm = najafi(1.0, 0.3)
    with pytest.raises(ValueError):
        pq(sm.phi_jet([0.0], [0.0]))
    X = np.array([[0.0, 0.0], [3e-7, -2e-7], [2e-6, 1e-6]])
    Y = np.array([[1.0, 0.5], [0.3, -1.2], [-0.7, 0.2]])
    assert np.all(np.linalg.norm(X[:2], axis=1) < R_MIN)
    geo = geometry(sm.metric(), (X, Y))
    assert scaled_residual(geo.G, sm.spray(X, Y)).max() < 1e-10
    assert scaled_residual(geo.H, sm.covariant(X, Y)).max() < 1e-10


def test_degenerate_denominator_raises():
    # phi = s has phi - s phi_s = 0 and phi_ss = 0
    sm = SphericalMetric.from_text("s", 2)
    with pytest.raises(ArithmeticError):
        pq(sm.phi_jet([0.5], [0.2]))


def test_even_powers_of_r_stay_smooth_at_origin():
    sm = SphericalMetric.from_text("1 + r^2", 2)
    F = sm.finsler_expr()
    v = evaluate(F, Environment(np.zeros(2), np.array([3.0, 4.0])))
    assert v == pytest.approx(5.0, rel=1e-15)
    geo = geometry(sm.metric(), (np.zeros((1, 2)), np.array([[3.0, 4.0]])))
    assert np.all(np.isfinite(geo.H4))

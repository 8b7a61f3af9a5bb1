import numpy as np
import pytest

import quc
from quc.dual_geometry import DfInverseError, coercivity_check


def radial_gauge(p, k, z):
    """Closed form for the power integrand: g_k(z) = |z| / (p k)^{(p-1)/p}."""
    return np.hypot(z[..., 0], z[..., 1]) / (p * k) ** ((p - 1.0) / p)


# ---------------------------------------------------------------------------
# inverse gradient map
# ---------------------------------------------------------------------------

def test_df_inverse_origin():
    assert np.allclose(quc.df_inverse(quc.make_power(3.0), np.zeros(2)), 0.0)


def test_df_inverse_radial_closed_form():
    w = quc.df_inverse(quc.make_power(3.0), np.array([4.0, 0.0]))
    np.testing.assert_allclose(w, [2.0, 0.0], atol=1e-10)


def test_df_inverse_roundtrip(rng):
    for F in (quc.make_power(3.0), quc.make_power(1.5),
              quc.make_anisotropic_quadratic([[2.0, 0.3], [0.3, 1.0]])):
        y = rng.uniform(-5, 5, (1000, 2))
        w = quc.df_inverse(F, y)
        res = np.hypot(*(F.grad(w) - y).T)
        assert res.max() <= 1e-9 * (1.0 + np.hypot(*y.T)).max()


def test_df_inverse_composition_identity(rng):
    F = quc.make_power(3.0)
    z = rng.uniform(-5, 5, (1000, 2))
    w = quc.df_inverse(F, F.grad(z))
    assert np.hypot(*(w - z).T).max() <= 1e-9


def test_df_inverse_nonconvergence_error():
    with pytest.raises(DfInverseError, match="residual"):
        quc.df_inverse(quc.make_power(3.0), np.array([7.0, 1.0]), max_iter=0,
                       x0=np.array([100.0, 100.0]))


# ---------------------------------------------------------------------------
# G = F o DF^{-1}
# ---------------------------------------------------------------------------

def test_G_quadratic():
    F = quc.make_power(2.0)
    y = np.array([3.0, 4.0])
    assert quc.G_eval(F, y) == pytest.approx(12.5)


def test_G_power3():
    F = quc.make_power(3.0)
    y = np.array([4.0, 0.0])
    assert quc.G_eval(F, y) == pytest.approx(8.0 / 3.0, rel=1e-10)
    assert quc.G_eval(F, np.zeros(2)) == 0.0


def test_G_coercivity_exponent():
    F = quc.make_power(3.0)
    rep = coercivity_check(F, H=2.0)
    assert rep["min_exponent"] >= rep["predicted"] - 0.05


# ---------------------------------------------------------------------------
# star-shapedness
# ---------------------------------------------------------------------------

def test_star_shape_quadratic():
    rep = quc.star_shape_check(quc.make_power(2.0), n_rays=16, n_radii=16)
    assert rep.ok and rep.margin >= 0.0


def test_star_shape_anisotropic_matches_closed_form(rng):
    A = np.array([[2.0, 0.0], [0.0, 1.0]])
    F = quc.make_anisotropic_quadratic(A)
    y = rng.uniform(-4, 4, (200, 2))
    Ainv = np.linalg.inv(A)
    expected = 0.5 * np.einsum("mi,ij,mj->m", y, Ainv, y)
    np.testing.assert_allclose(quc.G_eval(F, y), expected, atol=1e-9)
    rep = quc.star_shape_check(F, n_rays=32, n_radii=24)
    assert rep.ok


def test_star_shape_blend():
    Fn = quc.normalise(quc.make_blend(3.0, 1.5, (0.5, 0.0)))
    rep = quc.star_shape_check(Fn, n_rays=32, n_radii=16)
    assert rep.margin >= -1e-9


# ---------------------------------------------------------------------------
# Minkowski gauges
# ---------------------------------------------------------------------------

def test_gauge_quadratic_closed_form(rng):
    F = quc.make_power(2.0)
    z = rng.uniform(-3, 3, (50, 2))
    np.testing.assert_allclose(quc.gauge(F, 2.0, z),
                               np.hypot(z[:, 0], z[:, 1]) / 2.0, rtol=1e-9)


@pytest.mark.parametrize("p", [2.0, 3.0])
@pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
def test_gauge_power_closed_form(p, k, rng):
    F = quc.make_power(p)
    theta = rng.uniform(0, 2 * np.pi, 40)
    z = np.stack([np.cos(theta), np.sin(theta)], axis=1) * rng.uniform(0.5, 3.0, (40, 1))
    np.testing.assert_allclose(quc.gauge(F, k, z), radial_gauge(p, k, z), atol=1e-8)


def test_gauge_at_origin_and_level_set():
    F = quc.make_power(3.0)
    assert quc.gauge(F, 1.0, np.zeros(2)) == 0.0
    z = np.array([1.3, -0.4])
    g = quc.gauge(F, 1.0, z)
    assert quc.G_eval(F, z / g) == pytest.approx(1.0, rel=1e-9)


def test_gauge_homogeneity(rng):
    for F in (quc.make_power(3.0),
              quc.make_anisotropic_quadratic([[2.0, 0.4], [0.4, 1.0]])):
        for k in (0.5, 1.0, 2.0):
            z = rng.uniform(-2, 2, (30, 2))
            g1 = quc.gauge(F, k, z)
            for lam in (0.5, 2.0, 10.0):
                np.testing.assert_allclose(quc.gauge(F, k, lam * z), lam * g1,
                                           rtol=1e-9)


def test_gauge_level_set_equivalence(rng):
    F = quc.make_power(3.0)
    k = 1.0
    z = rng.uniform(-3, 3, (300, 2))
    z = z[np.hypot(z[:, 0], z[:, 1]) > 1e-3]
    g = quc.gauge(F, k, z)
    G = quc.G_eval(F, z)
    inside = np.abs(g - 1.0) > 1e-9
    assert np.all(np.sign(g[inside] - 1.0) == np.sign(G[inside] - k))


def test_gauge_monotone_in_level(rng):
    F = quc.make_power(3.0)
    z = rng.uniform(-3, 3, (50, 2))
    gh = quc.gauge(F, 0.5, z)
    gk = quc.gauge(F, 1.0, z)
    assert np.all(gh >= gk - 1e-12)


def test_gauge_bounds_radial():
    gs = quc.gauge_bounds(quc.make_power(2.0), 1.0, n_angles=64, H=1.0)
    assert gs.sup / gs.inf == pytest.approx(1.0, rel=1e-9)
    assert gs.checks["lipschitz_ok"]


def test_gauge_bounds_ellipse():
    # level set {(A^{-1} y, y) = 2k} has semi-axes 2 and sqrt(2) for k = 1
    F = quc.make_anisotropic_quadratic([[2.0, 0.0], [0.0, 1.0]])
    gs = quc.gauge_bounds(F, 1.0, n_angles=256, H=2.0)
    assert gs.checks["sup_inf_ratio"] == pytest.approx(np.sqrt(2.0), rel=1e-6)
    assert gs.sup == pytest.approx(1.0 / np.sqrt(2.0), rel=1e-6)
    assert gs.inf == pytest.approx(0.5, rel=1e-6)
    assert gs.checks["lipschitz_ok"]


def test_gauge_level_gap_power3():
    # on {G = k}: g_h = (k/h)^{(p-1)/p}, so the gap is 1.5^{2/3} - 1
    rep = quc.gauge_level_gap(quc.make_power(3.0), 1.0, 1.5, H=2.0)
    assert rep.measured_inf == pytest.approx(1.5 ** (2.0 / 3.0) - 1.0, rel=1e-6)
    assert np.isfinite(rep.empirical_C)


def test_gauge_level_gap_validates_range():
    with pytest.raises(ValueError):
        quc.gauge_level_gap(quc.make_power(3.0), 1.0, 2.5, H=2.0)

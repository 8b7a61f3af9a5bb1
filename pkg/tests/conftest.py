import numpy as np
import pytest

import quc
from quc.config import compile_boundary_expression


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def catalogue():
    """Named catalogue members exercised by the cross-cutting invariants."""
    entries = [
        ("power_1.25", quc.make_power(1.25)),
        ("power_1.5", quc.make_power(1.5)),
        ("power_2", quc.make_power(2.0)),
        ("power_3", quc.make_power(3.0)),
        ("power_4", quc.make_power(4.0)),
        ("aniso_id", quc.make_anisotropic_quadratic(np.eye(2))),
        ("aniso_21", quc.make_anisotropic_quadratic([[2.0, 0.0], [0.0, 1.0]])),
        ("aniso_sharp", quc.make_anisotropic_quadratic([[1.6, 0.0], [0.0, 0.4]])),
        ("uhlenbeck_mix", quc.make_uhlenbeck(
            quc.power_sum_profile([(1.0, 3.0), (1.0, 1.5)]))),
        ("finsler", quc.make_finsler([[1.5, 0.3], [0.3, 0.8]], quc.power_profile(2.5))),
        ("blend", quc.make_blend(3.0, 1.5, (0.5, 0.0))),
        ("sum_power", quc.combine("sum", [quc.make_power(3.0), quc.make_power(1.5)])),
    ]
    return entries


@pytest.fixture(scope="session")
def catalogue_members():
    return catalogue()


def _solve(F, n, expr, bounds=((0.0, 1.0), (0.0, 1.0))):
    prob = quc.GridProblem(integrand=F, n=n,
                           boundary=compile_boundary_expression(expr),
                           bounds=bounds)
    sol = quc.solve(prob)
    assert sol.converged, f"fixture solve did not converge (n={n}, {F.describe()})"
    return sol


@pytest.fixture(scope="session")
def sol_harmonic():
    """F = |z|^2/2 with boundary x^2 - y^2 on the unit square."""
    F = quc.make_power(2.0)
    return {n: _solve(F, n, "x^2 - y^2") for n in (17, 33, 65)}


@pytest.fixture(scope="session")
def sol_p3_oracle():
    """p = 3 with the radial p-harmonic boundary |x|^{1/2} on [1,2]^2."""
    F = quc.make_power(3.0)
    return {n: _solve(F, n, "(x^2 + y^2)^0.25", bounds=((1.0, 2.0), (1.0, 2.0)))
            for n in (17, 33, 65)}


@pytest.fixture(scope="session")
def sol_p3_scaled():
    """p = 3, boundary 3.4|x|^{1/2}: F(Du) crosses both 0.1 and 0.5 levels
    inside the measurement balls around (1.5, 1.5)."""
    F = quc.make_power(3.0)
    return {n: _solve(F, n, "3.4*(x^2 + y^2)^0.25", bounds=((1.0, 2.0), (1.0, 2.0)))
            for n in (33, 65)}


@pytest.fixture(scope="session")
def sol_p15_scaled():
    """p = 3/2, boundary 3.6/|x|: same level-crossing property."""
    F = quc.make_power(1.5)
    return {n: _solve(F, n, "3.6/sqrt(x^2 + y^2)", bounds=((1.0, 2.0), (1.0, 2.0)))
            for n in (65,)}


@pytest.fixture(scope="session")
def sol_blend():
    """Normalised blend; boundary gradient sweeps across both the degenerate
    origin and the singular bump center."""
    F = quc.normalise(quc.make_blend(3.0, 1.5, (0.5, 0.0)))
    return {n: _solve(F, n, "0.5*(x - 0.25)^2 - 0.5*(y - 0.5)^2")
            for n in (33, 65)}


@pytest.fixture(scope="session")
def sol_affine():
    F = quc.make_power(3.0)
    return _solve(F, 17, "0.7*x - 0.3*y + 0.2")

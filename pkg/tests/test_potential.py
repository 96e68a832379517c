import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmaplab import potential as pot
from cmaplab.errors import HypothesisViolated, KernelSingularity, OriginSingularity, QuadratureTooCoarse
from cmaplab.fields import gradient_array


@pytest.fixture(scope="module")
def quad():
    return pot.Quadrature(357)


def test_fundamental_values():
    assert pot.fundamental([1.0, 0.0]) == 0.0
    assert pot.fundamental([0.0, np.e]) == pytest.approx(1 / (2 * np.pi), rel=1e-14)
    assert pot.fundamental([0.0, 0.0, 1.0]) == pytest.approx(-1 / (4 * np.pi), rel=1e-14)
    with pytest.raises(OriginSingularity):
        pot.fundamental([0.0, 0.0])


def test_kernel_vanishes_to_second_order_at_origin():
    rng = np.random.default_rng(1)
    y = rng.uniform(-1, 1, (500, 2))
    np.testing.assert_allclose(pot.kernel_G(np.zeros(2), y), 0.0, atol=1e-15)
    np.testing.assert_allclose(pot.kernel_G_grad_x(np.zeros(2), y), 0.0, atol=1e-12)
    with pytest.raises(KernelSingularity):
        pot.kernel_G([0.1, 0.0], [[0.1, 0.0]])
    with pytest.raises(KernelSingularity):
        pot.kernel_G([0.1, 0.0], [[0.0, 0.0]])


def test_kernel_quadratic_decay_bound():
    rng = np.random.default_rng(2)
    y = rng.uniform(-1, 1, (1000, 2))
    ry = np.linalg.norm(y, axis=1)
    ang = rng.uniform(0, 2 * np.pi, 1000)
    rx = rng.uniform(0.01, 0.5, 1000) * ry
    x = np.stack([rx * np.cos(ang), rx * np.sin(ang)], axis=1)
    G = np.array([pot.kernel_G(a, b[None])[0] for a, b in zip(x, y)])
    ratio = np.abs(G) * ry ** 2 / rx ** 2
    # Taylor remainder: |D²Γ(ξ)| <= 1/(π|ξ|²) with |ξ| >= |y|/2, so |G| <= (2/π)|x|²/|y|²
    assert ratio.max() <= 2 / np.pi


def test_kernel_gradient_matches_finite_differences():
    x = np.array([0.13, -0.07])
    y = np.array([[0.4, 0.2], [-0.3, 0.5]])
    e = 1e-6
    fd = np.stack([(pot.kernel_G(x + e * d, y) - pot.kernel_G(x - e * d, y)) / (2 * e) for d in np.eye(2)], axis=1)
    np.testing.assert_allclose(pot.kernel_G_grad_x(x, y), fd, atol=1e-7)


def test_zero_density(quad):
    zero = lambda x, y: 0 * x
    assert pot.potential_phi(zero, 0, [0.2, 0.1], quad) == 0.0
    m = pot.GrowthModulus("power", 0.05, 0.5)
    ratio, _ = pot.verify_quad_bound(m, zero, 0, quad=quad)
    assert ratio == 0.0


@settings(max_examples=6, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1), st.integers(0, 1))
def test_normalisation_at_origin(a, b, c, i):
    q = pot.Quadrature(179)
    f = lambda x, y: 0.3 * np.sin(a * x + b * y) + c * x * y
    assert abs(pot.potential_phi(f, i, [0.0, 0.0], q)) <= 1e-6
    assert np.max(np.abs(pot.potential_gradient(f, i, [0.0, 0.0], q))) <= 1e-6


def test_discrete_laplacian_recovers_density(quad):
    f = pot.mollified_power_test_function(0.05)
    h = quad.h
    x = np.array([20 * h, -10 * h])
    stencil = np.array([x, x + [h, 0], x - [h, 0], x + [0, h], x - [0, h]])
    v = pot.potential_phi(f, 0, stencil, quad)
    lap = (v[1:].sum() - 4 * v[0]) / h ** 2
    D = gradient_array(f(*quad.grid.coords()), h, 0)[quad.grid.index_of(x)]
    assert abs(lap - D) <= max(1e-4, 10 * h * h)


def test_quadrature_convergence(quad):
    f = pot.mollified_power_test_function(0.05)
    pts = np.random.default_rng(0).uniform(-0.5, 0.5, (10, 2))
    fine = pot.potential_phi(f, 0, pts, pot.Quadrature(715))
    assert np.max(np.abs(pot.potential_phi(f, 0, pts, quad) - fine)) <= 1e-5


def test_quadrature_too_coarse():
    q = pot.Quadrature(21)
    with pytest.raises(QuadratureTooCoarse):
        pot.potential_phi(lambda x, y: x, 0, [0.95, 0.0], q)


def test_bound_ratio_stable_for_mollified_power(quad):
    maxima = []
    for delta in (0.02, 0.05, 0.1):
        m = pot.GrowthModulus("power", delta, 0.5)
        ratio, prof = pot.verify_quad_bound(m, pot.mollified_power_test_function(delta), 0, quad=quad)
        vals = [v for _, v in prof]
        assert np.isfinite(ratio) and max(vals) <= 2 * min(vals)
        maxima.append(ratio)
    assert max(maxima) <= 2 * min(maxima)


def test_bound_ratio_finite_for_linear_density(quad):
    m = pot.GrowthModulus("power", 0.05, 1.0)
    assert m.log_integral(0.5) > 0
    ratio, _ = pot.verify_quad_bound(m, lambda x, y: x, 0, quad=quad)
    assert 0 < ratio < np.inf


def test_log_modulus_and_hypothesis_violation(quad):
    m = pot.GrowthModulus("log", 0.05)
    assert m(0.3) == pytest.approx(1 / abs(np.log(0.05)))
    assert m.log_integral(0.5) == pytest.approx(np.log(10) / abs(np.log(0.05)), rel=1e-12)
    with pytest.raises(HypothesisViolated):
        pot.verify_quad_bound(m, lambda x, y: x, 0, quad=quad)
    with pytest.raises(HypothesisViolated):
        pot.verify_quad_bound(pot.GrowthModulus("power", 0.05, 1.0), lambda x, y: 2 * x, 0, quad=quad)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["power", "log"]), st.floats(0.01, 0.5), st.floats(0, 1))
def test_modulus_nondecreasing_and_normalised(form, delta, alpha_exp):
    if form == "log" and delta > np.exp(-1):
        with pytest.raises(ValueError):
            pot.GrowthModulus(form, delta, alpha_exp)
        return
    m = pot.GrowthModulus(form, delta, alpha_exp)
    t = np.linspace(1e-3, 1, 200)
    assert np.all(np.diff(m(t)) >= 0)
    assert float(m(np.array(1.0))) <= 1 + 1e-15

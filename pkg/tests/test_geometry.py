import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmaplab import geometry as geo
from cmaplab.errors import DegeneratePoint, NotOnBoundary, OutsideTubularNeighborhood

SPHERE = geo.TargetManifold.sphere(2)
HALF = geo.TargetManifold.half_space(2)


def test_signed_distance_examples():
    assert geo.signed_distance(SPHERE, [2.0, 0.0]) == 1.0
    assert geo.signed_distance(SPHERE, [1.0, 0.0]) == 0.0
    assert geo.signed_distance(HALF, [3.0, -0.25]) == -0.25


def test_signed_distance_centre_is_degenerate():
    with pytest.raises(DegeneratePoint):
        geo.signed_distance(SPHERE, [0.0, 0.0])


def test_project_examples():
    d = geo.project(SPHERE, [1.5, 0.0])
    np.testing.assert_allclose(d.projected, [1, 0])
    assert d.distance == pytest.approx(0.5)
    np.testing.assert_allclose(d.normal, [1, 0])
    d = geo.project(SPHERE, [0.0, 0.8])
    np.testing.assert_allclose(d.projected, [0, 1])
    assert d.distance == pytest.approx(-0.2)
    d = geo.project(HALF, [0.3, 0.1])
    np.testing.assert_allclose(d.projected, [0.3, 0])
    assert d.distance == pytest.approx(0.1)
    np.testing.assert_allclose(d.normal, [0, 1])


def test_project_outside_tube():
    with pytest.raises(OutsideTubularNeighborhood):
        geo.project(SPHERE, [2.0, 0.0])


def test_sphere_halfwidth_must_be_below_one():
    with pytest.raises(ValueError):
        geo.TargetManifold.sphere(2, halfwidth=1.0)


def test_shape_operator_examples():
    hess, beta = geo.shape_operator(SPHERE, [1.0, 0.0])
    np.testing.assert_allclose(hess, [[0, 0], [0, 1]], atol=1e-15)
    np.testing.assert_allclose(beta @ beta, hess, atol=1e-12)
    hess, beta = geo.shape_operator(HALF, [0.7, 0.0])
    assert not hess.any() and not beta.any()
    with pytest.raises(NotOnBoundary):
        geo.shape_operator(SPHERE, [1.1, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2 * np.pi), st.integers(2, 4))
def test_sphere_shape_operator_spectrum(angle, m):
    target = geo.TargetManifold.sphere(m)
    q = np.zeros(m)
    q[0], q[1] = np.cos(angle), np.sin(angle)
    hess, beta = geo.shape_operator(target, q)
    ev = np.sort(np.linalg.eigvalsh(hess))
    np.testing.assert_allclose(ev, [0.0] + [1.0] * (m - 1), atol=1e-12)
    np.testing.assert_allclose(hess @ q, 0, atol=1e-12)
    np.testing.assert_allclose(beta @ beta, hess, atol=1e-12)


def _tube_points(target, rng, count):
    m = target.ambient_dim
    if target.kind == geo.SPHERE:
        dirs = rng.normal(size=(count, m))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return dirs * (1 + rng.uniform(-0.49, 0.49, (count, 1)))
    pts = rng.uniform(-5, 5, (count, m))
    pts[:, -1] = rng.uniform(-3, 3, count)
    return pts


@pytest.mark.parametrize("target", [SPHERE, geo.TargetManifold.sphere(3), HALF])
def test_reconstruction_identity_on_random_points(target):
    rng = np.random.default_rng(1)
    pts = _tube_points(target, rng, 10_000)
    d = geo.project(target, pts)
    recon = d.reconstruct()
    rel = np.linalg.norm(recon - pts, axis=1) / np.linalg.norm(pts, axis=1)
    assert rel.max() <= 1e-12
    np.testing.assert_allclose(np.linalg.norm(d.normal, axis=1), 1.0, atol=1e-12)
    assert np.abs(geo.signed_distance(target, d.projected)).max() <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_clamp_lands_in_closure(x, y):
    p = np.array([x, y])
    if np.hypot(x, y) < 1e-6:
        return
    c = geo.clamp_to_closure(SPHERE, p)
    assert geo.signed_distance(SPHERE, c) >= -1e-12
    if geo.signed_distance(SPHERE, p) >= 0:
        np.testing.assert_array_equal(c, p)


def test_projection_hessian_matches_finite_differences():
    rng = np.random.default_rng(2)
    y = np.array([1.2, -0.4])
    xi = rng.normal(size=2)
    pi = lambda p: p / np.linalg.norm(p)
    eps = 1e-4
    fd = (pi(y + eps * xi) - 2 * pi(y) + pi(y - eps * xi)) / eps ** 2
    np.testing.assert_allclose(geo.projection_hessian(SPHERE, y, xi), fd, atol=1e-6)


def test_second_fundamental_form_sign():
    q = np.array([0.0, 1.0])
    xi = np.array([[2.0, 0.0]])
    np.testing.assert_allclose(geo.second_fundamental_form(SPHERE, q, xi), [0.0, -4.0])


def test_target_from_config():
    t = geo.target_from_config("half-space", 3)
    assert t.kind == geo.HALF_SPACE and t.ambient_dim == 3
    with pytest.raises(ValueError):
        geo.target_from_config("torus")

"""Closed-form geometry of the two built-in targets.

Two targets are supported:

* ``sphere-complement``: M = R^m minus the closed unit ball, boundary the unit sphere.
* ``half-space``: M = {y_m > 0}, boundary the hyperplane y_m = 0.

All point arguments may be a single m-vector or a stack with shape (..., m);
the last axis always carries the components.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePoint, NotOnBoundary, OutsideTubularNeighborhood

SPHERE = "sphere-complement"
HALF_SPACE = "half-space"
KINDS = (SPHERE, HALF_SPACE)


@dataclass(frozen=True)
class TargetManifold:
    kind: str = SPHERE
    ambient_dim: int = 2
    tubular_halfwidth: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}; expected one of {KINDS}")
        if int(self.ambient_dim) < 2:
            raise ValueError("ambient_dim must be at least 2")
        width = self.tubular_halfwidth
        if width is None:
            width = 0.5 if self.kind == SPHERE else np.inf
            object.__setattr__(self, "tubular_halfwidth", width)
        if not width > 0:
            raise ValueError("tubular_halfwidth must be positive")
        if self.kind == SPHERE and width >= 1:
            raise ValueError("sphere target needs tubular_halfwidth < 1")

    @classmethod
    def sphere(cls, m=2, halfwidth=0.5):
        return cls(SPHERE, m, halfwidth)

    @classmethod
    def half_space(cls, m=2, halfwidth=np.inf):
        return cls(HALF_SPACE, m, halfwidth)


@dataclass(frozen=True)
class DecomposedPoint:
    projected: np.ndarray
    distance: np.ndarray
    normal: np.ndarray

    def reconstruct(self):
        return self.projected + np.asarray(self.distance)[..., None] * self.normal


def _points(target, p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != target.ambient_dim:
        raise ValueError(f"expected last axis of length {target.ambient_dim}, got {p.shape}")
    return p


def _norms(p):
    n = np.linalg.norm(p, axis=-1)
    if np.any(n == 0):
        raise DegeneratePoint("the sphere center has no nearest boundary point")
    return n


def signed_distance(target, p):
    """Signed distance to the boundary, positive inside M."""
    p = _points(target, p)
    if target.kind == SPHERE:
        return _norms(p) - 1.0
    return p[..., -1].copy()


def boundary_normal(target, q):
    """Unit normal at boundary points q, pointing into M."""
    q = _points(target, q)
    if target.kind == SPHERE:
        return q / _norms(q)[..., None]
    nu = np.zeros_like(q)
    nu[..., -1] = 1.0
    return nu


def project(target, p):
    """Nearest-point projection onto the boundary together with signed distance and normal."""
    p = _points(target, p)
    dist = signed_distance(target, p)
    if np.any(np.abs(dist) > target.tubular_halfwidth):
        raise OutsideTubularNeighborhood(
            f"|distance| reaches {np.max(np.abs(dist)):.3g} > {target.tubular_halfwidth}")
    if target.kind == SPHERE:
        nu = p / (dist + 1.0)[..., None]
        proj = nu.copy()
    else:
        nu = boundary_normal(target, p)
        proj = p.copy()
        proj[..., -1] = 0.0
    return DecomposedPoint(proj, dist, nu)


def clamp_to_closure(target, p):
    """Nearest point of the closure of M; points already in it are returned unchanged."""
    p = np.array(_points(target, p), dtype=float)
    if target.kind == SPHERE:
        n = np.linalg.norm(p, axis=-1)
        inside = n < 1.0
        if np.any(n[inside] == 0):
            raise DegeneratePoint("cannot clamp the sphere center")
        p[inside] = p[inside] / n[inside][..., None]
    else:
        p[..., -1] = np.maximum(p[..., -1], 0.0)
    return p


def _check_on_boundary(target, q, tol=1e-10):
    if np.any(np.abs(signed_distance(target, q)) > tol):
        raise NotOnBoundary("point is not on the target boundary")


def shape_operator(target, boundary_point):
    """Return (HessRho, beta) at a boundary point; beta is the symmetric square root."""
    q = _points(target, boundary_point)
    if q.ndim != 1:
        raise ValueError("shape_operator takes a single point")
    _check_on_boundary(target, q)
    m = target.ambient_dim
    if target.kind == HALF_SPACE:
        zero = np.zeros((m, m))
        return zero, zero.copy()
    nu = q / np.linalg.norm(q)
    hess = np.eye(m) - np.outer(nu, nu)
    # orthogonal projection: idempotent, so it is its own square root
    return hess, hess.copy()


def apply_beta(target, q, xi):
    """beta(q) applied to xi; xi may carry extra leading axes of derivative directions.

    q has shape (..., m) and xi has shape (..., m) or (..., k, m).
    """
    q = np.asarray(q, float)
    xi = np.asarray(xi, float)
    if target.kind == HALF_SPACE:
        return np.zeros_like(xi)
    nu = q / np.linalg.norm(q, axis=-1, keepdims=True)
    if xi.ndim == q.ndim + 1:
        nu = nu[..., None, :]
    return xi - np.sum(xi * nu, axis=-1, keepdims=True) * nu


def second_fundamental_form(target, q, xi):
    """A_q(xi, xi) summed over the derivative axis: -|xi^tau|^2 nu for the unit sphere.

    xi has shape (..., k, m) (k derivative directions) or (..., m).
    """
    q = np.asarray(q, float)
    xi = np.asarray(xi, float)
    if xi.ndim == q.ndim:
        xi = xi[..., None, :]
    if target.kind == HALF_SPACE:
        return np.zeros(q.shape)
    nu = q / np.linalg.norm(q, axis=-1, keepdims=True)
    tang = apply_beta(target, q, xi)
    return -np.sum(tang ** 2, axis=(-2, -1))[..., None] * nu


def projection_hessian(target, y, xi):
    """Second derivative of the projection Pi at y in direction xi, summed over derivative axes.

    For the sphere Pi(y) = y/|y|; for the half-space Pi is linear and this is zero.
    """
    y = np.asarray(y, float)
    xi = np.asarray(xi, float)
    if xi.ndim == y.ndim:
        xi = xi[..., None, :]
    if target.kind == HALF_SPACE:
        return np.zeros(y.shape)
    r = np.linalg.norm(y, axis=-1)[..., None]
    yb = y[..., None, :]
    yx = np.sum(yb * xi, axis=-1, keepdims=True)
    xx = np.sum(xi * xi, axis=-1, keepdims=True)
    rb = r[..., None, :]
    terms = -(2 * xi * yx + xx * yb) / rb ** 3 + 3 * yb * yx ** 2 / rb ** 5
    return terms.sum(axis=-2)


def target_from_config(kind, ambient_dim=2, tubular_halfwidth=None):
    return TargetManifold(kind, int(ambient_dim), tubular_halfwidth)

"""Fundamental solution, the origin-normalised kernel and the generalised Newtonian potential.

    G(x, y) = Γ(x - y) - Γ(y) + DΓ(y)·x,      Φ(x) = ∫_{B_1} G(x, y) D_i f(y) dy.

G(0, y) = 0 and D_x G(0, y) = 0, so Φ and DΦ vanish at the origin.  The
quadrature is a midpoint rule on the cells of a uniform lattice of the square
[-1, 1]^2 whose centres are the lattice nodes; cells cut by the unit circle are
weighted by their area fraction inside the disk.
"""

from dataclasses import dataclass

import numpy as np

from .errors import HypothesisViolated, KernelSingularity, OriginSingularity, QuadratureTooCoarse
from .fields import Grid, ScalarField, gradient_array

SUBDIV = 4
MIN_CELLS = 100


def fundamental(x, n=None):
    """Γ(x): log|x|/(2π) for n = 2, -1/(4π|x|) for n = 3 (last axis holds components)."""
    x = np.asarray(x, float)
    n = n or x.shape[-1]
    if x.shape[-1] != n or n not in (2, 3):
        raise ValueError("fundamental solution implemented for n = 2, 3")
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise OriginSingularity("Γ is singular at the origin")
    if n == 2:
        return np.log(r) / (2 * np.pi)
    return -1.0 / (4 * np.pi * r)


def fundamental_gradient(x):
    x = np.asarray(x, float)
    n = x.shape[-1]
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    if np.any(r2 == 0):
        raise OriginSingularity("DΓ is singular at the origin")
    if n == 2:
        return x / (2 * np.pi * r2)
    return x / (4 * np.pi * r2 ** 1.5)


def kernel_G(x, y):
    """G(x, y) = Γ(x - y) - Γ(y) + DΓ(y)·x; y may be a stack of points."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if np.any(np.linalg.norm(y, axis=-1) == 0) or np.any(np.linalg.norm(y - x, axis=-1) == 0):
        raise KernelSingularity("G(x, y) needs y != 0 and y != x")
    return fundamental(x - y) - fundamental(y) + np.sum(fundamental_gradient(y) * x, axis=-1)


def kernel_G_grad_x(x, y):
    """D_x G(x, y) = DΓ(x - y) + DΓ(y)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return fundamental_gradient(x - y) + fundamental_gradient(y)


@dataclass(frozen=True)
class GrowthModulus:
    form: str = "power"
    delta: float = 0.05
    alpha_exp: float = 0.5

    def __post_init__(self):
        if self.form not in ("power", "log"):
            raise ValueError("modulus form must be 'power' or 'log'")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 <= self.alpha_exp <= 1:
            raise ValueError("alpha_exp must lie in [0, 1]")
        if self.form == "log" and self.delta > np.exp(-1):
            raise ValueError("the log modulus needs delta <= 1/e so that ω(1) <= 1")

    def __call__(self, t):
        t = np.asarray(t, float)
        if self.form == "power":
            return t ** (1 - self.alpha_exp)
        return np.full(t.shape, 1.0 / abs(np.log(self.delta)))

    def log_integral(self, upper, nodes=1000):
        """∫_δ^upper ω(τ)/τ dτ on log-spaced nodes (trapezoid in log τ)."""
        s = np.linspace(np.log(self.delta), np.log(upper), nodes)
        return float(np.trapezoid(self(np.exp(s)), s))


class Quadrature:
    """Midpoint cells on an m×m lattice of [-1, 1]² (m odd, so the origin is a node)."""

    def __init__(self, m=357):
        if m % 2 == 0:
            raise ValueError("use an odd lattice size so the origin is a cell centre")
        self.grid = Grid(((-1.0, 1.0), (-1.0, 1.0)), (m, m))
        self.h = self.grid.h
        pts = self.grid.points()
        weight = self._area_fraction(pts)
        self.mask = weight > 0
        self.points = pts[self.mask]
        self.weights = weight[self.mask] * self.h ** 2
        if len(self.points) < MIN_CELLS:
            raise QuadratureTooCoarse(f"only {len(self.points)} cells inside the unit disk")

    @classmethod
    def with_cells(cls, cells):
        m = int(round(np.sqrt(4 * cells / np.pi)))
        return cls(m + 1 - m % 2)

    @property
    def cells(self):
        return len(self.points)

    def _area_fraction(self, pts, sub=16):
        h = self.h
        r = np.linalg.norm(pts, axis=-1)
        frac = (r < 1).astype(float)
        cut = np.abs(r - 1) <= h / np.sqrt(2)
        offs = (np.arange(sub) + 0.5) / sub - 0.5
        ox, oy = np.meshgrid(offs * h, offs * h, indexing="ij")
        for idx in np.argwhere(cut):
            c = pts[tuple(idx)]
            inside = (c[0] + ox) ** 2 + (c[1] + oy) ** 2 < 1
            frac[tuple(idx)] = inside.mean()
        return frac

    def derivative_values(self, f, i):
        """D_h,i f at the cell centres; f is a ScalarField on this lattice or a callable."""
        if callable(f) and not isinstance(f, ScalarField):
            f = ScalarField(self.grid, f(*self.grid.coords()))
        if f.grid != self.grid:
            raise ValueError("f must be sampled on the quadrature lattice")
        return gradient_array(f.values, self.h, i)[self.mask]

    def singular_cells(self, x):
        """Indices (into self.points) of the cells containing x and the origin."""
        out = set()
        for p in (np.asarray(x, float), np.zeros(2)):
            d = np.max(np.abs(self.points - p), axis=1)
            out.update(np.flatnonzero(d <= self.h / 2 * (1 + 1e-12)).tolist())
        return sorted(out)

    def check(self, x):
        rad = float(np.linalg.norm(x))
        if rad >= 1:
            raise ValueError("evaluation point must satisfy |x| < 1")
        if self.h * np.sqrt(2) > 1 - rad:
            raise QuadratureTooCoarse(f"cell diameter {self.h * np.sqrt(2):.3g} exceeds distance {1 - rad:.3g} to the boundary")


def _subcells(centre, h):
    offs = ((np.arange(SUBDIV) + 0.5) / SUBDIV - 0.5) * h
    ox, oy = np.meshgrid(offs, offs, indexing="ij")
    return np.stack([centre[0] + ox.ravel(), centre[1] + oy.ravel()], axis=1)


def _phi_single(quad, dvals, x, kernel):
    x = np.asarray(x, float)
    quad.check(x)
    sing = quad.singular_cells(x)
    regular = np.ones(len(quad.points), bool)
    regular[sing] = False
    y = quad.points[regular]
    total = np.tensordot(dvals[regular] * quad.weights[regular], kernel(x, y), axes=(0, 0))
    for k in sing:
        sub = _subcells(quad.points[k], quad.h)
        vals = kernel(x, sub)
        total = total + dvals[k] * quad.weights[k] / len(sub) * np.sum(vals, axis=0)
    return total


def potential_phi(f, i, x, quad=None):
    """Φ(x) = ∫_{B_1} G(x, y) D_i f(y) dy by cell-midpoint quadrature.

    f is a ScalarField on `quad.grid` or a callable of the coordinates; x may be a
    single point or a stack of points.  The cells containing x and 0 are split
    into 4×4 sub-cells.
    """
    quad = quad or Quadrature()
    dvals = quad.derivative_values(f, i)
    xs = np.asarray(x, float).reshape(-1, 2)
    out = np.array([_phi_single(quad, dvals, p, kernel_G) for p in xs])
    return out.reshape(np.shape(x)[:-1]) if np.ndim(x) > 1 else float(out[0])


def potential_gradient(f, i, x, quad=None):
    """DΦ(x) by quadrature of D_x G against D_i f (same cell treatment as potential_phi)."""
    quad = quad or Quadrature()
    dvals = quad.derivative_values(f, i)
    xs = np.asarray(x, float).reshape(-1, 2)
    out = np.array([_phi_single(quad, dvals, p, kernel_G_grad_x) for p in xs])
    return out.reshape(np.shape(x)) if np.ndim(x) > 1 else out[0]


def bound_denominator(modulus, r):
    d = modulus.delta
    return r * (d + r * float(modulus(d / r)) + r * modulus.log_integral(d / r))


def _ball_samples(r, rings=(1 / 3, 2 / 3, 1.0), angles=16):
    t = np.linspace(0, 2 * np.pi, angles, endpoint=False)
    pts = [np.stack([q * r * np.cos(t + q), q * r * np.sin(t + q)], axis=1) for q in rings]
    return np.concatenate(pts)


def default_r_grid(delta, count=5):
    """Radii log-spaced over [2δ, 1/2], away from both the mollification scale and ∂B_1."""
    return np.geomspace(2 * delta, 0.5, count)


def verify_quad_bound(modulus, f, i=0, r_grid=None, quad=None, rtol=1e-9):
    """max over r of sup_{B_r}|Φ| / [r(δ + r ω(δ/r) + r ∫_δ^{δ/r} ω(τ)/τ dτ)].

    The hypotheses sup_{B_r}|f| <= r ω(δ/r) and sup|D_i f| <= 1 are checked on the
    lattice first (HypothesisViolated otherwise).  Returns (max ratio, [(r, ratio)]).
    """
    quad = quad or Quadrature()
    r_grid = default_r_grid(modulus.delta) if r_grid is None else r_grid
    if callable(f) and not isinstance(f, ScalarField):
        f = ScalarField(quad.grid, f(*quad.grid.coords()))
    dvals = quad.derivative_values(f, i)
    if np.max(np.abs(dvals), initial=0.0) > 1 + 1e-6:
        raise HypothesisViolated("sup |D_i f| exceeds 1")
    pts = quad.grid.points()
    rad = np.linalg.norm(pts, axis=-1)
    profile = []
    for r in r_grid:
        if not modulus.delta < r < 1:
            raise ValueError("r_grid must lie in (delta, 1)")
        fmax = float(np.max(np.abs(f.values[rad <= r])))
        if fmax > r * float(modulus(modulus.delta / r)) * (1 + rtol) + 1e-15:
            raise HypothesisViolated(f"sup_B_r |f| = {fmax:.3g} exceeds r ω(δ/r) at r = {r:g}")
        phis = [_phi_single(quad, dvals, p, kernel_G) for p in _ball_samples(r)]
        sup = float(np.max(np.abs(phis)))
        profile.append((float(r), sup / bound_denominator(modulus, r)))
    return max(v for _, v in profile), profile


def mollified_power_test_function(delta, i=0):
    """f(y) = y_i (1 + (|y|/δ)^4)^(-1/8): a smooth version of y_i min(1, sqrt(δ/|y|))."""
    def f(x, y):
        r = np.hypot(x, y)
        return (x, y)[i] * (1 + (r / delta) ** 4) ** (-0.125)
    return f

"""Scalar obstacle problem  Δw = g·1{w>0}, w >= 0, with Dirichlet data, and contact-set geometry."""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import ConvexHull, QhullError

from .errors import EmptySet, NegativeSource, NonConvergence, NotFreeBoundaryPoint
from .fields import Grid, ScalarField, laplacian_array

REGULAR = "Regular"
SINGULAR = "Singular"


@dataclass
class ObstacleSolution:
    w: ScalarField
    contact_mask: np.ndarray
    fb_points: np.ndarray
    residual: float
    iterations: int
    converged: bool = True
    history: list = field(default_factory=list, repr=False)

    @property
    def grid(self):
        return self.w.grid

    def fb_coords(self):
        g = self.grid
        return np.array([g.node(i) for i in self.fb_points]).reshape(-1, g.dims)


def _as_array(grid, value):
    if isinstance(value, ScalarField):
        return value.values.astype(float)
    if callable(value):
        return np.asarray(value(*grid.coords()), float) * np.ones(grid.shape)
    return np.full(grid.shape, float(value))


def _interior(shape):
    m = np.zeros(shape, bool)
    m[(slice(1, -1),) * len(shape)] = True
    return m


def red_black_masks(shape):
    parity = sum(np.indices(shape)) % 2
    inner = _interior(shape)
    return [inner & (parity == 0), inner & (parity == 1)]


def _neighbour_sum(w):
    s = np.zeros_like(w)
    if w.ndim == 1:
        s[1:-1] = w[2:] + w[:-2]
    else:
        s[1:-1, 1:-1] = w[2:, 1:-1] + w[:-2, 1:-1] + w[1:-1, 2:] + w[1:-1, :-2]
    return s


def projected_sor(w, g, h, omega, tol, max_iter):
    """In-place red-black projected SOR; returns (iterations, converged, last max change).

    Converged means a sweep changed no node by more than tol·h² and the
    complementarity residual is at most tol.
    """
    dims = w.ndim
    masks = red_black_masks(w.shape)
    hg = h * h * g
    change = np.inf
    for it in range(1, max_iter + 1):
        change = 0.0
        for m in masks:
            gs = (_neighbour_sum(w) - hg) / (2 * dims)
            new = np.maximum(0.0, w + omega * (gs - w))
            change = max(change, float(np.max(np.abs(new[m] - w[m]))))
            w[m] = new[m]
        # the complementarity residual is only checked once the iterate has settled
        if change <= tol * h * h and complementarity_residual(w, g, h) <= tol:
            return it, True, change
    return max_iter, False, change


def complementarity_residual(w, g, h):
    """max over interior nodes of min(w, |Δ_h w - g|)."""
    lap = laplacian_array(w, h, w.ndim)
    inner = _interior(w.shape)
    return float(np.max(np.minimum(w, np.abs(lap - g))[inner]))


def _coarse_guess(grid, g_arr, bc_arr, omega, tol, min_nodes=17):
    """Solve on a grid with half the resolution (recursively) and interpolate."""
    nc = tuple((k + 1) // 2 for k in grid.n)
    if min(nc) < min_nodes:
        return None
    coarse = Grid(grid.extents, nc)
    fine_axes = grid.axes()
    pts = coarse.points()
    interp = lambda arr: RegularGridInterpolator(fine_axes, arr)(pts)
    gc = np.maximum(interp(g_arr), 0.0)
    bcc = interp(bc_arr)
    w0 = _coarse_guess(coarse, gc, bcc, omega, tol, min_nodes)
    wc = _start(coarse, bcc, w0)
    projected_sor(wc, gc, coarse.h, omega, tol, 20000)
    return RegularGridInterpolator(coarse.axes(), wc)(grid.points())


def _start(grid, bc, guess):
    w = np.maximum(bc, 0.0) if guess is None else np.maximum(guess, 0.0)
    inner = _interior(grid.shape)
    w = np.where(inner, w, bc)
    return w


def solve_obstacle(g, dirichlet, grid=None, tol=1e-4, max_iter=50000, omega=1.5,
                   multilevel=True, strict=False, eps_fb=None):
    """Projected SOR for Δw = g·1{w>0}, w >= 0, w = dirichlet on the grid boundary.

    g and dirichlet may be ScalarFields, callables of the coordinates, or constants;
    only the boundary ring of `dirichlet` is used.  Iteration stops once the max
    nodal change of a sweep is <= tol·h² and the
    complementarity residual is <= tol.  With `multilevel` the initial guess is
    the interpolated solution from successively halved grids.  When max_iter is hit
    the best iterate is returned with converged=False, or NonConvergence is raised
    if `strict`.
    """
    if grid is None:
        grid = g.grid if isinstance(g, ScalarField) else dirichlet.grid
    if tol <= 0:
        raise ValueError("tol must be positive")
    g_arr = _as_array(grid, g)
    if np.any(g_arr < 0):
        raise NegativeSource("source g must be nonnegative")
    bc = _as_array(grid, dirichlet)
    ring = ~_interior(grid.shape)
    if np.any(bc[ring] < 0):
        raise ValueError("Dirichlet data must be nonnegative")
    guess = _coarse_guess(grid, g_arr, bc, omega, tol) if multilevel else None
    w = _start(grid, bc, guess)
    iters, ok, _ = projected_sor(w, g_arr, grid.h, omega, tol, max_iter)
    field_w = ScalarField(grid, w)
    mask, fb = contact_set(field_w, eps_fb)
    sol = ObstacleSolution(field_w, mask, fb, complementarity_residual(w, g_arr, grid.h), iters, ok)
    if not ok and strict:
        raise NonConvergence(f"projected SOR did not converge in {max_iter} sweeps", best=sol)
    return sol


def contact_set(sol, eps_fb=None):
    """Contact mask {w <= eps_fb} and free-boundary nodes (mask nodes with a non-mask 4-neighbour).

    Accepts an ObstacleSolution or a ScalarField; eps_fb defaults to h².
    """
    w = sol.w if isinstance(sol, ObstacleSolution) else sol
    if eps_fb is None:
        eps_fb = w.grid.h ** 2
    if eps_fb <= 0:
        raise ValueError("eps_fb must be positive")
    mask = w.values <= eps_fb
    edge = np.zeros_like(mask)
    for ax in range(mask.ndim):
        for step in (1, -1):
            nb = np.roll(mask, step, axis=ax)
            # np.roll wraps around; neighbours outside the grid do not count
            idx = [slice(None)] * mask.ndim
            idx[ax] = 0 if step == 1 else -1
            nb[tuple(idx)] = True
            edge |= mask & ~nb
    return mask, np.argwhere(edge)


def min_diameter(points, directions=360):
    """Width of the narrowest strip containing the points, sampled over `directions` angles."""
    pts = np.asarray(points, float)
    if pts.size == 0:
        raise EmptySet("min_diameter of an empty set")
    pts = pts.reshape(len(pts), -1)
    if len(pts) == 1:
        return 0.0
    if pts.shape[1] == 1:
        return float(pts.max() - pts.min())
    if len(pts) > 3:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass  # degenerate (collinear) set; use all points
    theta = np.linspace(0.0, np.pi, directions, endpoint=False)
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    proj = pts @ dirs.T
    return float(np.min(proj.max(axis=0) - proj.min(axis=0)))


def snap_to_free_boundary(sol, x0, reach=2.0):
    """Nearest free-boundary node to x0 if within reach·h, else NotFreeBoundaryPoint."""
    coords = sol.fb_coords()
    if len(coords) == 0:
        raise NotFreeBoundaryPoint("solution has no free-boundary nodes")
    x0 = np.asarray(x0, float).reshape(-1)
    d = np.linalg.norm(coords - x0, axis=1)
    k = int(np.argmin(d))
    if d[k] > reach * sol.grid.h * (1 + 1e-9):
        raise NotFreeBoundaryPoint(f"{x0} is {d[k]:.3g} away from the nearest free-boundary node")
    return coords[k]


def min_diam_profile(sol, x0, scales):
    """[(r, min_diameter(contact ∩ B_r(x0)) / r)] for each scale; empty intersections give 0."""
    grid = sol.grid
    pts = grid.points()
    out = []
    for r in scales:
        sel = sol.contact_mask & grid.ball(x0, r)
        width = min_diameter(pts[sel]) if sel.any() else 0.0
        out.append((float(r), width / r))
    return out


def classify_point(sol, g, x0, scales, tol_g=1e-6, tau=0.1):
    """Regular/Singular verdict at a free-boundary point.

    Returns (verdict, r0, profile) where profile lists (r, min-diameter ratio) and
    r0 is the smallest tested scale with ratio >= tau (None if there is none).
    """
    snap_to_free_boundary(sol, x0)
    gval = g
    if isinstance(g, ScalarField):
        gval = g.values[g.grid.index_of(x0)]
    elif callable(g):
        gval = g(*np.asarray(x0, float).reshape(-1))
    profile = min_diam_profile(sol, x0, scales)
    hits = [r for r, ratio in profile if ratio >= tau]
    r0 = min(hits) if hits else None
    regular = float(gval) > tol_g and bool(hits)
    return (REGULAR if regular else SINGULAR), r0, profile


def radial_solution(radius, g=1.0):
    """Closed-form 2D solution with constant source g and contact disk of the given radius:
    w = g[(r² - R²)/4 - (R²/2) log(r/R)] for r > R, 0 inside."""
    def w(x, y):
        r = np.maximum(np.hypot(x, y), 1e-300)
        out = (r ** 2 - radius ** 2) / 4 - (radius ** 2 / 2) * np.log(r / radius)
        return g * np.where(r > radius, out, 0.0)
    return w

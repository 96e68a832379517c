"""Energy-minimising maps into the closure of a target, their decomposition and reduced coefficients.

A constraint map minimises the Dirichlet energy among maps with values in the
closure of M.  Away from the tubular neighbourhood limit it splits as
u = V + w·nu(V) with V = Pi∘u on the boundary and w = rho∘u >= 0.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import spsolve

from . import geometry as geo
from .errors import BoundaryDataOutsideTarget, NonConvergence, OutsideTubularNeighborhood
from .fields import Grid, ScalarField, VectorField, gradient_array, laplacian_array
from .obstacle import contact_set

GUARD_SLACK = 1e-14
NOISE_FLOOR = 1e-12


@dataclass
class ConstraintMapSolution:
    u: VectorField
    V: VectorField = None
    w: ScalarField = None
    contact_mask: np.ndarray = None
    energy: float = np.nan
    el_residual: float = np.nan
    iterations: int = 0
    converged: bool = True
    energy_history: list = field(default_factory=list, repr=False)
    extras: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self):
        return self.u.grid


@dataclass
class ReducedCoefficients:
    g: ScalarField
    a: np.ndarray                # shape grid + (m, dims): a^i along the derivative axis
    tangential_grad: np.ndarray  # shape grid + (dims, m)
    h_terms: VectorField
    valid: np.ndarray            # nodes inside the tubular neighbourhood


def _boundary_array(grid, dirichlet, m):
    if isinstance(dirichlet, VectorField):
        return dirichlet.values.astype(float)
    if callable(dirichlet):
        vals = np.asarray(dirichlet(*grid.coords()), float)
        if vals.shape[-1] != m and vals.shape[0] == m:
            vals = np.moveaxis(vals, 0, -1)
        return np.broadcast_to(vals, grid.shape + (m,)).copy()
    return np.broadcast_to(np.asarray(dirichlet, float), grid.shape + (m,)).copy()


def _ring(shape):
    ring = np.ones(shape, bool)
    ring[(slice(1, -1),) * len(shape)] = False
    return ring


def _safe_clamp(target, p, fallback):
    """clamp_to_closure, keeping `fallback` where p is exactly the sphere centre."""
    if target.kind == geo.SPHERE:
        bad = ~np.any(p != 0, axis=-1)
        if bad.any():
            p = p.copy()
            p[bad] = fallback[bad]
    return geo.clamp_to_closure(target, p)


def dirichlet_energy(u, h):
    """(1/2)∫|Du|² with forward differences on each grid edge."""
    dims = u.ndim - 1
    total = 0.0
    for ax in range(dims):
        d = np.diff(u, axis=ax)
        total += float(np.sum(d * d))
    return 0.5 * total * h ** (dims - 2)


def colour_slices(shape):
    """Red-black colouring of the interior as strided sub-lattices.

    Returns two lists of index tuples; nodes in one colour only neighbour the other.
    """
    dims = len(shape)
    colours = ([], [])
    for offs in np.ndindex(*(2,) * dims):
        sl = tuple(slice(1 + o, n - 1, 2) for o, n in zip(offs, shape))
        colours[sum(offs) % 2].append(sl)
    return colours


def _shift(sl, ax, step):
    out = list(sl)
    s = sl[ax]
    out[ax] = slice(s.start + step, s.stop + step, 2)
    return tuple(out)


def _clamp_in_place(target, p, fallback):
    if target.kind == geo.SPHERE:
        r2 = np.einsum("...i,...i->...", p, p)
        inside = r2 < 1.0
        if inside.any():
            zero = r2 == 0.0
            if zero.any():
                p[zero] = fallback[zero]
                r2 = np.einsum("...i,...i->...", p, p)
            p /= np.sqrt(np.where(inside, r2, 1.0))[..., None]
    else:
        np.maximum(p[..., -1], 0.0, out=p[..., -1])
    return p


def _relaxed_update(target, cur, avg, omega):
    gs = _clamp_in_place(target, avg.copy(), cur)
    cand = _clamp_in_place(target, cur + omega * (avg - cur), gs)
    dc, du = cand - avg, cur - avg
    ok = (np.sqrt(np.einsum("...i,...i->...", dc, dc))
          <= np.sqrt(np.einsum("...i,...i->...", du, du)) + GUARD_SLACK)
    return np.where(ok[..., None], cand, gs)


def map_sor(target, u, h, omega, tol, max_iter, record_energy=False):
    """Safeguarded red-black projected SOR, in place.

    Each node gets the over-relaxed, clamped value if it does not increase the
    local energy |u - mean of neighbours|; otherwise the plain Gauss-Seidel value
    (mean of neighbours, clamped).  Returns (iterations, converged, history).
    """
    dims = u.ndim - 1
    colours = colour_slices(u.shape[:-1])
    scale = max(1.0, float(np.max(np.abs(u))))
    stop = max(tol * h * h, NOISE_FLOOR * scale)
    history = [dirichlet_energy(u, h)] if record_energy else []
    for it in range(1, max_iter + 1):
        change = 0.0
        for colour in colours:
            for sl in colour:
                cur = u[sl]
                if cur.size == 0:
                    continue
                avg = sum(u[_shift(sl, ax, st)] for ax in range(dims) for st in (1, -1))
                avg *= 0.5 / dims
                new = _relaxed_update(target, cur, avg, omega)
                change = max(change, float(np.max(np.abs(new - cur))))
                u[sl] = new
        if record_energy:
            history.append(dirichlet_energy(u, h))
        if change <= stop:
            return it, True, history
    return max_iter, False, history


def optimal_omega(grid):
    """SOR relaxation that is optimal for the Laplacian on the longest axis."""
    length = max(b - a for a, b in grid.extents)
    return 2.0 / (1.0 + np.sin(np.pi * grid.h / length))


def _initial_guess(target, grid, bc):
    """Linear interpolation of the boundary data (transfinite in 2D), clamped."""
    if grid.dims == 1:
        t = np.linspace(0.0, 1.0, grid.n[0])[:, None]
        u = (1 - t) * bc[0] + t * bc[-1]
    else:
        s = np.linspace(0.0, 1.0, grid.n[0])[:, None, None]
        t = np.linspace(0.0, 1.0, grid.n[1])[None, :, None]
        left, right = bc[0][None], bc[-1][None]
        bottom, top = bc[:, 0][:, None], bc[:, -1][:, None]
        corners = ((1 - s) * (1 - t) * bc[0, 0] + s * (1 - t) * bc[-1, 0]
                   + (1 - s) * t * bc[0, -1] + s * t * bc[-1, -1])
        u = (1 - s) * left + s * right + (1 - t) * bottom + t * top - corners
    fallback = np.zeros_like(u)
    fallback[..., 0] = 1.0
    return _safe_clamp(target, u, fallback)


def _resample(src_grid, values, dst_grid):
    axes = src_grid.axes()
    if src_grid.dims == 1:
        return np.stack([np.interp(dst_grid.axes()[0], axes[0], values[:, k])
                         for k in range(values.shape[-1])], axis=-1)
    return RegularGridInterpolator(axes, values)(dst_grid.points())


def _nested_guess(target, grid, bc, tol, min_nodes):
    nc = tuple((k + 1) // 2 for k in grid.n)
    if min(nc) < min_nodes:
        return _initial_guess(target, grid, bc)
    coarse = Grid(grid.extents, nc)
    bcc = _resample(grid, bc, coarse)
    uc = _nested_guess(target, coarse, bcc, tol, min_nodes)
    ring = _ring(coarse.shape)
    uc[ring] = geo.clamp_to_closure(target, bcc[ring])
    map_sor(target, uc, coarse.h, optimal_omega(coarse), tol, 50000)
    u = _resample(coarse, uc, grid)
    return _safe_clamp(target, u, _initial_guess(target, grid, bc))


def minimize_energy(target, dirichlet, grid, tol=1e-6, max_iter=200000, omega=None,
                    multilevel=True, initial=None, record_energy=False, strict=False):
    """Minimise the discrete Dirichlet energy over maps into the closure of the target.

    Projected nonlinear Gauss-Seidel in red-black order with safeguarded
    over-relaxation (omega=1 gives plain average-then-project sweeps).  Converged
    when a sweep moves no node by more than tol·h² (or a roundoff floor of 1e-12
    relative to max|u|).  With `multilevel` the start is the interpolated solution of
    successively halved grids.
    """
    m = target.ambient_dim
    bc = _boundary_array(grid, dirichlet, m)
    ring = _ring(grid.shape)
    if np.any(geo.signed_distance(target, bc[ring]) < -1e-12):
        raise BoundaryDataOutsideTarget("Dirichlet data leave the closure of the target")
    if initial is not None:
        u = _boundary_array(grid, initial, m)
    elif multilevel:
        u = _nested_guess(target, grid, bc, tol, min_nodes=9)
    else:
        u = _initial_guess(target, grid, bc)
    u = np.array(u, float)
    u[ring] = bc[ring]
    u[~ring] = _safe_clamp(target, u[~ring], np.broadcast_to([1.0] + [0.0] * (m - 1), u[~ring].shape))
    if omega is None:
        omega = optimal_omega(grid)
    iters, ok, history = map_sor(target, u, grid.h, omega, tol, max_iter, record_energy)
    sol = finalize(target, VectorField(grid, u))
    sol.iterations, sol.converged, sol.energy_history = iters, ok, history
    if not ok and strict:
        raise NonConvergence(f"map solver did not converge in {max_iter} sweeps", best=sol)
    return sol


def finalize(target, u):
    """Wrap a sampled map as a solution: decomposition, contact set, energy, residual."""
    sol = ConstraintMapSolution(u)
    dist = geo.signed_distance(target, u.values)
    V, w, _, valid = decompose_map(target, sol, strict=False)
    sol.V, sol.w = V, w
    wmask = ScalarField(u.grid, np.where(valid, np.maximum(dist, 0.0), np.inf))
    sol.contact_mask, _ = contact_set(wmask, u.grid.h ** 2)
    sol.energy = dirichlet_energy(u.values, u.grid.h)
    sol.el_residual = euler_lagrange_residual(target, sol)
    return sol


def decompose_map(target, sol, strict=True):
    """(V, w, tangential gradient, valid mask) with (Du)^tau = DV + w·D(nu∘V).

    Nodes outside the tubular neighbourhood are NaN and flagged invalid; with
    `strict` they raise OutsideTubularNeighborhood instead.
    """
    u = sol.u if isinstance(sol, ConstraintMapSolution) else sol
    grid, vals = u.grid, u.values
    dist = geo.signed_distance(target, vals)
    valid = np.abs(dist) <= target.tubular_halfwidth
    if strict and not valid.all():
        raise OutsideTubularNeighborhood(f"{int((~valid).sum())} nodes outside the tubular neighbourhood")
    V = np.full(vals.shape, np.nan)
    w = np.full(grid.shape, np.nan)
    dec = geo.project(target, vals[valid])
    V[valid], w[valid] = dec.projected, dec.distance
    nu = np.full(vals.shape, np.nan)
    nu[valid] = dec.normal
    dV = np.stack([gradient_array(V, grid.h, ax) for ax in range(grid.dims)], axis=-2)
    dnu = np.stack([gradient_array(nu, grid.h, ax) for ax in range(grid.dims)], axis=-2)
    tang = dV + w[..., None, None] * dnu
    return VectorField(grid, V), ScalarField(grid, w), tang, valid


def coefficients(target, sol):
    """Reduced-system coefficients g, a^i = -2 D(nu^i∘V), (Du)^tau and H_u((Du)^tau,(Du)^tau)."""
    V, w, tang, valid = decompose_map(target, sol, strict=False)
    grid = V.grid
    nu = np.full(V.values.shape, np.nan)
    nu[valid] = geo.boundary_normal(target, V.values[valid])
    dnu = np.stack([gradient_array(nu, grid.h, ax) for ax in range(grid.dims)], axis=-1)
    a = -2.0 * dnu
    bt = geo.apply_beta(target, np.where(valid[..., None], V.values, 1.0), tang)
    g = np.sum(bt ** 2, axis=(-2, -1))
    u = sol.u if isinstance(sol, ConstraintMapSolution) else sol
    hterm = geo.projection_hessian(target, np.where(valid[..., None], u.values, 1.0), tang)
    g[~valid] = np.nan
    hterm[~valid] = np.nan
    return ReducedCoefficients(ScalarField(grid, g), a, tang, VectorField(grid, hterm), valid)


def _mixed_nodes(contact):
    """Nodes whose 3/5-point stencil touches both contact and non-contact nodes."""
    mixed = np.zeros_like(contact)
    for ax in range(contact.ndim):
        for step in (1, -1):
            mixed |= contact != np.roll(contact, step, axis=ax)
    return mixed


def euler_lagrange_residual(target, sol, contact_tol=1e-12):
    """max |Δ_h u - A_u(D_h u, D_h u)·1{contact}| over interior nodes away from the free boundary.

    Contact here is the strict set {rho(u) <= contact_tol}.  Nodes whose stencil
    mixes the two phases are left out: the equation has a jump in Δu across the
    free boundary, so the residual there is O(1) for any consistent scheme.
    """
    u = sol.u if isinstance(sol, ConstraintMapSolution) else sol
    grid, vals = u.grid, u.values
    contact = geo.signed_distance(target, vals) <= contact_tol
    lap = laplacian_array(vals, grid.h, grid.dims)
    du = np.stack([gradient_array(vals, grid.h, ax) for ax in range(grid.dims)], axis=-2)
    proj = np.where(contact[..., None], vals, 1.0)
    proj = geo.boundary_normal(target, proj) if target.kind == geo.SPHERE else proj
    A = geo.second_fundamental_form(target, proj, du)
    res = np.linalg.norm(lap - np.where(contact[..., None], A, 0.0), axis=-1)
    keep = ~_ring(grid.shape) & ~_mixed_nodes(contact)
    return float(np.max(res[keep])) if keep.any() else 0.0


def harmonic_corrector(values, rhs, grid, center, radius):
    """Solve Δφ = rhs on the nodes of B_radius(center), with φ = values elsewhere.

    `values` and `rhs` are scalar arrays on the grid.  The 5-point system is
    solved directly (sparse LU); nodes outside the ball keep their values.
    """
    inside = grid.ball(center, radius) & ~_ring(grid.shape)
    idx = -np.ones(grid.shape, int)
    idx[inside] = np.arange(int(inside.sum()))
    rows, cols, data = [], [], []
    b = rhs[inside] * grid.h ** 2
    where = np.argwhere(inside)
    offsets = [np.eye(grid.dims, dtype=int)[k] * s for k in range(grid.dims) for s in (1, -1)]
    for row, node in enumerate(where):
        rows.append(row); cols.append(row); data.append(-2.0 * grid.dims)
        for off in offsets:
            nb = tuple(node + off)
            if idx[nb] >= 0:
                rows.append(row); cols.append(idx[nb]); data.append(1.0)
            else:
                b[row] -= values[nb]
    n = len(where)
    mat = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    phi = np.array(values, float)
    phi[inside] = spsolve(mat.tocsc(), b)
    return phi


def example_theta(x):
    """Angle of the image map in the 1D example: arctan x for x < 0, x for x >= 0."""
    x = np.asarray(x, float)
    return np.where(x < 0, np.arctan(x), x)


def example_map(x):
    """The exact 1D minimiser into R² minus the unit disk: (1, -x) for x < 0, (cos x, -sin x) after."""
    x = np.asarray(x, float)
    return np.stack([np.where(x < 0, 1.0, np.cos(x)), np.where(x < 0, -x, -np.sin(x))], axis=-1)


def image_angle(V):
    """Angle theta of a 1D image map V = (cos theta, -sin theta), unwrapped along the grid."""
    vals = V.values
    return np.unwrap(np.arctan2(-vals[..., 1], vals[..., 0]))


def one_sided_third_differences(h, theta=None, grid=None):
    """Backward and forward third differences of theta at 0 (exact values -2 and 0).

    With theta=None the closed-form angle is used; otherwise theta holds nodal
    values on `grid`, which must contain x = 0.
    """
    if theta is None:
        t = lambda k: float(example_theta(k * h))
    else:
        i0 = int(np.argmin(np.abs(grid.axes()[0])))
        t = lambda k: float(theta[i0 + k])
    left = (t(0) - 3 * t(-1) + 3 * t(-2) - t(-3)) / h ** 3
    right = (t(3) - 3 * t(2) + 3 * t(1) - t(0)) / h ** 3
    return left, right


def exact_example(grid, target=None):
    """Sample the closed-form 1D example on a grid containing 0."""
    if grid.dims != 1:
        raise ValueError("exact_example needs a 1D grid")
    x = grid.axes()[0]
    if not np.any(np.isclose(x, 0.0, atol=1e-12 * grid.h)):
        raise ValueError("grid must contain x = 0")
    target = target or geo.TargetManifold.sphere(2)
    sol = finalize(target, VectorField(grid, example_map(x)))
    theta = example_theta(x)
    left, right = one_sided_third_differences(grid.h)
    sol.extras.update(theta=ScalarField(grid, theta), theta_third_left_exact=-2.0,
                      theta_third_right_exact=0.0, theta_third_left=left, theta_third_right=right)
    return sol


def example_dirichlet():
    """Boundary values of the example on [-1, 1]: u(-1) = (1, 1), u(1) = (cos 1, -sin 1)."""
    return lambda x: example_map(x)

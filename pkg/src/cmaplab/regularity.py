"""Pointwise regularity diagnostics on sampled fields.

Polynomial fits in the adimensional C¹ norm sup(|f - p| + r|D_h(f - p)|), growth
exponents by log-log regression, mean oscillation of third differences, the
catalog-distance profile against 2D global solutions, and scale scans of the
contact set.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.stats import linregress

from . import global2d as g2
from .errors import EmptyScaleWindow, InsufficientNodes
from .fields import ScalarField, gradient_array, third_derivatives_array
from .obstacle import (ObstacleSolution, classify_point, contact_set, min_diameter,
                       snap_to_free_boundary)
from .polynomial import Polynomial, exponents

NODE_FACTOR = 3


@dataclass
class ScaleRecord:
    r: float
    fit: Polynomial
    residual_sup: float
    residual_grad: float
    adimensional_c1_residual: float


@dataclass
class RegularityReport:
    point: tuple
    records: list = field(default_factory=list)
    exponent: float = np.nan
    exponent_stderr: float = np.nan
    classification: str = ""
    gap_profile: list = field(default_factory=list)
    r0: float = None
    cubic_ratio: float = np.nan


def monomial_basis(dims, degree):
    return [Polynomial(np.array([1.0]), [e], np.zeros(dims)) for e in exponents(dims, degree)]


def harmonic_cubic_basis():
    """Harmonic polynomials of degree <= 3 in 2D: 1, x, y, x²-y², xy, x³-3xy², 3x²y-y³."""
    terms = [{(0, 0): 1.0}, {(1, 0): 1.0}, {(0, 1): 1.0},
             {(2, 0): 1.0, (0, 2): -1.0}, {(1, 1): 1.0},
             {(3, 0): 1.0, (1, 2): -3.0}, {(2, 1): 3.0, (0, 3): -1.0}]
    return [Polynomial.from_dict(t) for t in terms]


def _combine(basis, coefs, center):
    terms = {}
    for poly, c in zip(basis, coefs):
        for e, v in poly.as_dict().items():
            terms[e] = terms.get(e, 0.0) + c * v
    return Polynomial.from_dict(terms, center)


def _ball_data(f, x0, r):
    grid = f.grid
    x0 = np.asarray(x0, float).reshape(grid.dims)
    mask = grid.ball(x0, r) & np.isfinite(f.values)
    return mask, grid.points()[mask] - x0, f.values[mask]


def fit_polynomial(f, x0, degree, r, basis=None):
    """Least-squares fit over the nodes of B_r(x0).

    `basis` is an optional list of homogeneous Polynomials (centred at 0) to fit
    with; default is all monomials of degree <= `degree`.  Returns the fitted
    Polynomial (centred at x0) and a dict with sup|f-p|, sup|D_h(f-p)| and the
    adimensional C¹ residual sup(|f-p| + r|D_h(f-p)|) over the ball.
    """
    grid = f.grid
    basis = basis or monomial_basis(grid.dims, degree)
    mask, dx, vals = _ball_data(f, x0, r)
    if len(vals) < NODE_FACTOR * len(basis):
        raise InsufficientNodes(f"B_{r:g} has {len(vals)} nodes, need {NODE_FACTOR * len(basis)}")
    degs = np.array([poly.degree for poly in basis])
    design = np.stack([poly(dx / r) for poly in basis], axis=1)
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    poly = _combine(basis, coef / r ** degs, np.asarray(x0, float).reshape(grid.dims))
    return poly, residuals(f, poly, x0, r)


def residuals(f, poly, x0, r):
    grid = f.grid
    mask = grid.ball(x0, r) & np.isfinite(f.values)
    diff = f.values - poly(grid.points())
    grad = np.stack([gradient_array(diff, grid.h, ax) for ax in range(grid.dims)], axis=-1)
    gnorm = np.linalg.norm(grad, axis=-1)
    ok = mask & np.isfinite(gnorm)
    sup = float(np.max(np.abs(diff[mask])))
    gsup = float(np.max(gnorm[ok])) if ok.any() else np.nan
    adim = float(np.max(np.abs(diff[ok]) + r * gnorm[ok])) if ok.any() else np.nan
    return {"sup": sup, "grad": gsup, "adim": adim, "nodes": int(mask.sum())}


def scale_records(f, x0, degree, scales, basis=None):
    out = []
    for r in scales:
        poly, res = fit_polynomial(f, x0, degree, r, basis)
        out.append(ScaleRecord(float(r), poly, res["sup"], res["grad"], res["adim"]))
    return out


def growth_exponent(f, x0, degree, scales, basis=None):
    """Slope and standard error of log sup|f - p_r| against log r (p_r fitted per scale).

    A residual that vanishes to roundoff at some scale means the growth is
    faster than any tested power; (inf, nan) is returned as a sentinel.
    """
    if len(scales) < 4:
        raise ValueError("growth_exponent needs at least 4 scales")
    recs = scale_records(f, x0, degree, scales, basis)
    res = np.array([rec.residual_sup for rec in recs])
    mask, _, vals = _ball_data(f, x0, max(scales))
    floor = 1e-13 * max(1.0, float(np.max(np.abs(vals))))
    if np.any(res <= floor):
        return np.inf, np.nan
    fit = linregress(np.log(scales), np.log(res))
    return float(fit.slope), float(fit.stderr)


def _ball_offsets(h, r, dims):
    k = int(np.floor(r / h + 1e-9))
    rng = np.arange(-k, k + 1)
    grids = np.meshgrid(*([rng] * dims), indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=1)
    keep = np.linalg.norm(offs * h, axis=1) <= r * (1 + 1e-12)
    return offs[keep]


def _default_centers(region, max_centers):
    idx = np.argwhere(region)
    if len(idx) <= max_centers:
        return idx
    step = int(np.ceil(len(idx) / max_centers))
    return idx[::step]


def mean_oscillation(values, centers, offsets):
    """max over centers of mean |v - mean v| on the offset stencil (NaNs ignored)."""
    shape = np.array(values.shape)
    idx = centers[:, None, :] + offsets[None, :, :]
    inside = np.all((idx >= 0) & (idx < shape), axis=-1)
    idx = np.clip(idx, 0, shape - 1)
    vals = values[tuple(idx[..., k] for k in range(values.ndim))]
    vals = np.where(inside, vals, np.nan)
    counts = np.sum(np.isfinite(vals), axis=1)
    good = counts > 0
    if not good.any():
        return 0.0
    vals = vals[good]
    mean = np.nanmean(vals, axis=1, keepdims=True)
    return float(np.max(np.nanmean(np.abs(vals - mean), axis=1)))


def bmo_third(V, region=None, scales=None, centers=None, max_centers=400):
    """Largest mean oscillation of any third difference of V over the sampled balls.

    region: boolean mask of admissible centres (default all nodes); centers: explicit
    index array overriding the sampling; scales default to 4h, 8h, 16h.  Stencils
    that straddle a free boundary are kept.
    """
    grid = V.grid
    h = grid.h
    if scales is None:
        scales = [4 * h, 8 * h, 16 * h]
    comps = third_derivatives_array(V.values, h, grid.dims)
    if centers is None:
        if region is None:
            region = np.ones(grid.shape, bool)
        region = region & np.all([np.isfinite(c) for c in comps], axis=0)
        centers = _default_centers(region, max_centers)
    centers = np.asarray(centers).reshape(-1, grid.dims)
    best = 0.0
    for r in scales:
        offs = _ball_offsets(h, r, grid.dims)
        for comp in comps:
            best = max(best, mean_oscillation(comp, centers, offs))
    return best


# ---------------------------------------------------------------- catalog distance

@dataclass
class GapProfile:
    g0: float
    sigma: float
    scales: list
    lambdas: list
    members: list
    norms: list
    trivial: bool = False

    @property
    def max_lambda(self):
        return max(self.lambdas) if self.lambdas else 0.0


class _BallProblem:
    """w/g0 on a box around B_r(x0), with the norm sup(|d| + r|D_h d|) over the ball."""

    def __init__(self, wn, grid, x0, r):
        h = grid.h
        centre = np.array(grid.index_of(x0))
        k = int(np.ceil(r / h)) + 1
        lo = np.maximum(centre - k, 0)
        hi = np.minimum(centre + k + 1, np.array(grid.shape))
        self.sl = tuple(slice(a, b) for a, b in zip(lo, hi))
        pts = grid.points()[self.sl] - np.asarray(x0, float)
        self.z = pts[..., 0] + 1j * pts[..., 1]
        self.data = wn[self.sl]
        self.ball = np.abs(self.z) <= r * (1 + 1e-12)
        self.h, self.r = h, r

    def diff(self, member):
        d = self.data - g2.U_closed(member, self.z)
        gx = gradient_array(d, self.h, 0)
        gy = gradient_array(d, self.h, 1)
        return d[self.ball], gx[self.ball], gy[self.ball]

    def norm(self, member):
        d, gx, gy = self.diff(member)
        return float(np.max(np.abs(d) + self.r * np.hypot(gx, gy)))

    def vector(self, member):
        d, gx, gy = self.diff(member)
        return np.concatenate([d, self.r * gx, self.r * gy])


ANGLES = np.linspace(0.0, 2 * np.pi, 36, endpoint=False)


def _conic_grid(r):
    a_vals = np.concatenate([[0.0], np.logspace(np.log10(0.05), 0.0, 19)])
    alpha_vals = r * np.logspace(-1.5, 1.5, 20)
    mags = np.logspace(-1.5, 1.0, 10)
    beta_vals = r * np.concatenate([-mags[::-1], mags])
    return a_vals, alpha_vals, beta_vals


def _member(family, params):
    if family == g2.HALF_PLANE or family == g2.LINE:
        return g2.make_global(family, rotation=params[0])
    if family == g2.STRIP:
        return g2.make_global(family, width=np.exp(params[0]), rotation=params[1])
    if family == g2.PARABOLA:
        return g2.make_global(family, 0.0, np.exp(params[0]), params[1], params[2])
    return g2.make_global(family, params[0], np.exp(params[1]), params[2], params[3])


def _member_params(m):
    if m.kind in (g2.HALF_PLANE, g2.LINE):
        return m.kind, [m.rotation]
    if m.kind == g2.STRIP:
        return m.kind, [np.log(m.width), m.rotation]
    if m.kind == g2.PARABOLA:
        return m.kind, [np.log(m.alpha), m.beta, m.rotation]
    return m.kind, [m.a, np.log(m.alpha), m.beta, m.rotation]


def _prefilter_conics(prob, contact, keep, max_points=160):
    """Conic candidates ranked by contact-set mismatch on a node subsample."""
    zs = prob.z[prob.ball]
    cs = contact[prob.ball]
    if len(zs) > max_points:
        pick = np.linspace(0, len(zs) - 1, max_points).astype(int)
        zs, cs = zs[pick], cs[pick]
    rot = np.exp(-1j * ANGLES)[:, None] * zs[None, :]
    xc, yc = rot.real, rot.imag
    a_vals, alpha_vals, beta_vals = _conic_grid(prob.r)
    scores, params = [], []
    for a in a_vals:
        quad = (a * a) * xc * xc + yc * yc
        for al in alpha_vals:
            inside = quad[None] <= al * xc[None] + beta_vals[:, None, None] * yc[None]
            mism = np.sum(inside != cs[None, None, :], axis=-1)
            for ib, be in enumerate(beta_vals):
                for it, th in enumerate(ANGLES):
                    scores.append(mism[ib, it])
                    params.append((a, al, be, th))
    order = np.argsort(np.array(scores), kind="stable")[:keep]
    out = []
    for k in order:
        a, al, be, th = params[k]
        out.append(g2.make_global(g2.PARABOLA if a == 0 else g2.ELLIPSE, a, al, be, th))
    return out


def _flat_candidates(r):
    out = [g2.make_global(g2.HALF_PLANE, rotation=t) for t in ANGLES]
    out += [g2.make_global(g2.LINE, rotation=t) for t in ANGLES[:18]]
    for wdt in r * np.logspace(-1.5, 1.0, 20):
        out += [g2.make_global(g2.STRIP, width=wdt, rotation=t) for t in ANGLES]
    return out


def _refine(prob, member):
    family, x0 = _member_params(member)
    lower = {g2.ELLIPSE: [1e-3, -np.inf, -np.inf, -np.inf]}.get(family, -np.inf)
    upper = {g2.ELLIPSE: [1.0, np.inf, np.inf, np.inf]}.get(family, np.inf)
    if family == g2.ELLIPSE:
        x0[0] = min(max(x0[0], 1e-3), 1.0)

    def fun(p):
        try:
            return prob.vector(_member(family, p))
        except Exception:
            return np.full(3 * int(prob.ball.sum()), 1e3)

    try:
        sol = least_squares(fun, x0, bounds=(lower, upper), xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=200 * (len(x0) + 1))
        cand = _member(family, sol.x)
        return cand, prob.norm(cand)
    except Exception:
        return member, prob.norm(member)


def best_catalog_member(prob, contact, keep=300, refine=3, extra=()):
    """Search the catalog for the member closest to the data in the adimensional C¹ norm.

    Flat members are scored directly; conics are first ranked by contact-set
    mismatch and the best `keep` scored.  The `refine` best overall plus the best
    of each family are then polished by least squares over their parameters.
    """
    cands = list(extra) + _flat_candidates(prob.r) + _prefilter_conics(prob, contact, keep)
    scored = sorted(((prob.norm(m), i, m) for i, m in enumerate(cands)), key=lambda t: (t[0], t[1]))
    best_norm, _, best = scored[0]
    starts, seen = [m for _, _, m in scored[:refine]] + list(extra), set()
    for _, _, m in scored:
        if m.kind not in seen:
            seen.add(m.kind)
            starts.append(m)
    for m in starts:
        if best_norm == 0.0:
            break
        cand, cn = _refine(prob, m)
        if cn < best_norm:
            best_norm, best = cn, cand
    return best, best_norm


def gap_test(w, g, x0, scales, sigma=0.5, tol_g=1e-6, keep=300, refine=3):
    """λ(r) = ‖w/g(x0) - U‖ / max(r³, g(x0)^(1-σ) r^(2+σ)) for the best catalog member U per scale.

    Members are centred at x0 so that U(x0) = 0.  When g(x0) <= tol_g the
    property holds trivially; the returned profile is flagged `trivial` with λ = 0.
    """
    grid = w.grid
    if grid.dims != 2:
        raise ValueError("gap_test needs a 2D field")
    g0 = float(g.values[grid.index_of(x0)]) if isinstance(g, ScalarField) else float(g)
    scales = [float(r) for r in scales]
    if g0 <= tol_g:
        return GapProfile(g0, sigma, scales, [0.0] * len(scales), [None] * len(scales),
                          [0.0] * len(scales), trivial=True)
    wn = w.values / g0
    contact, _ = contact_set(w)
    lambdas, members, norms = [], [], []
    for r in scales:
        prob = _BallProblem(wn, grid, x0, r)
        # the winner at the previous scale is one more starting candidate
        extra = [m for m in members[-1:] if m is not None]
        member, norm = best_catalog_member(prob, contact[prob.sl], keep, refine, extra)
        denom = max(r ** 3, g0 ** (1 - sigma) * r ** (2 + sigma))
        lambdas.append(norm / denom)
        members.append(member)
        norms.append(norm)
    return GapProfile(g0, sigma, scales, lambdas, members, norms)


# ---------------------------------------------------------------- scale-scan checks

def check_rescale_bound(v, x0, g0, scales, power=4, fit_scale="largest"):
    """max over r in the window (g0, 1) of sup_{B_r}|v - Q| / r^power.

    Q is the least-squares harmonic cubic fitted at the largest (default) or the
    smallest window scale.  Returns (max ratio, [(r, ratio)], Q).
    """
    window = sorted((float(r) for r in scales if g0 < r < 1), reverse=True)
    if not window:
        raise EmptyScaleWindow(f"no scale in ({g0:g}, 1)")
    r_fit = window[0] if fit_scale == "largest" else window[-1]
    Q, _ = fit_polynomial(v, x0, 3, r_fit, basis=harmonic_cubic_basis())
    profile = []
    for r in window:
        mask, _, vals = _ball_data(v, x0, r)
        sup = float(np.max(np.abs(vals - Q(v.grid.points()[mask]))))
        profile.append((r, sup / r ** power))
    return max(t for _, t in profile), profile, Q


def check_min_diam_decay(sol, x0, gamma, lam, scales):
    """First scale r (scanning downward) with min_diameter(contact ∩ B_r) > lam·r^(1+gamma).

    Returns (r0, profile) where r0 = 0.0 if the decay bound holds at every scale.
    """
    snap_to_free_boundary(sol, x0)
    grid = sol.grid
    pts = grid.points()
    profile = []
    r0 = 0.0
    for r in sorted((float(s) for s in scales), reverse=True):
        sel = sol.contact_mask & grid.ball(x0, r)
        width = min_diameter(pts[sel]) if sel.any() else 0.0
        bound = lam * r ** (1 + gamma)
        profile.append((r, width, bound))
        if width > bound and r0 == 0.0:
            r0 = r
    return r0, profile


def smallest_reliable_radius(grid, x0, count):
    """Smallest multiple of h/2 whose ball holds at least `count` finite-grid nodes."""
    h = grid.h
    r = h
    while grid.ball(x0, r).sum() < count:
        r += h / 2
    return r


def cubic_growth_check(v, x0, scales, fit_radius=None):
    """max over r of sup_{B_r}|v - q| / r³ with q the degree-2 fit at the smallest reliable scale.

    Returns (max ratio, [(r, ratio)], q).
    """
    grid = v.grid
    ncoef = len(exponents(grid.dims, 2))
    if fit_radius is None:
        fit_radius = smallest_reliable_radius(grid, x0, NODE_FACTOR * ncoef)
    q, _ = fit_polynomial(v, x0, 2, fit_radius)
    profile = []
    for r in scales:
        mask, _, vals = _ball_data(v, x0, r)
        sup = float(np.max(np.abs(vals - q(grid.points()[mask]))))
        profile.append((float(r), sup / r ** 3))
    return max(t for _, t in profile), profile, q


def solution_from_field(w, eps_fb=None):
    """Wrap a sampled nonnegative field as an ObstacleSolution (no solve)."""
    mask, fb = contact_set(w, eps_fb)
    return ObstacleSolution(w, mask, fb, np.nan, 0, True)


def point_report(w, g, x0, scales, sigma=0.5, degree=1, gap=True, v=None):
    """Regularity report for one free-boundary point of a sampled w (and optional image component v)."""
    sol = solution_from_field(w)
    rep = RegularityReport(tuple(float(t) for t in np.ravel(x0)))
    rep.records = scale_records(w, x0, degree, scales)
    rep.exponent, rep.exponent_stderr = growth_exponent(w, x0, degree, scales)
    rep.classification, rep.r0, _ = classify_point(sol, g, x0, scales)
    if gap and w.grid.dims == 2:
        rep.gap_profile = gap_test(w, g, x0, scales, sigma)
    if v is not None:
        rep.cubic_ratio = cubic_growth_check(v, x0, scales)[0]
    return rep

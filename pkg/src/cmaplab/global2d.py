"""Closed-form 2D global solutions of ΔU = 1{U>0}, U >= 0, with 0 on the free boundary.

Conic members are written, in canonical (unrotated) coordinates, through the
boundary curve a²x² + y² = αx + βy with 0 <= a <= 1 and α > 0; the contact set is
the region a²x² + y² <= αx + βy.  a = 0 is a parabola, a > 0 an ellipse (a = 1
a circle).  Flat members: half-plane (contact x <= 0), strip
(contact -width <= x <= 0) and line (contact y = 0).  A member is rotated
by `rotation` radians about the origin.

Inside {U>0}, U_x - iU_y = (conj(z) - S(z))/2 with S the Schwarz function of the
boundary curve, and U = |z|²/4 - Re F(z)/2 + const for any primitive F of S.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_erosion, label
from scipy.spatial.distance import directed_hausdorff
from scipy.stats import qmc

from .errors import BranchCut, InvalidConic, PathBlocked
from .obstacle import min_diameter
from .polynomial import Polynomial

ELLIPSE = "Ellipse"
PARABOLA = "Parabola"
HALF_PLANE = "HalfPlane"
STRIP = "Strip"
LINE = "Line"
KINDS = (ELLIPSE, PARABOLA, HALF_PLANE, STRIP, LINE)
CONICS = (ELLIPSE, PARABOLA)

CUT_TOL = 1e-13
# below this axis ratio the ellipse centre sits beyond ~1e8 and U loses precision like a^-3
ELLIPSE_MIN_A = 1e-4


@dataclass(frozen=True)
class GlobalSolution2D:
    kind: str
    a: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    rotation: float = 0.0
    width: float = 0.0
    delta: float = field(default=1.0, compare=False)
    mu: float = field(default=0.0, compare=False)
    rho_tip: float = field(default=0.0, compare=False)
    case: str = field(default="flat", compare=False)
    p: Polynomial = field(default=None, compare=False, repr=False)

    @property
    def zeta(self):
        return complex(self.alpha, self.beta)

    @property
    def center(self):
        """Ellipse centre in canonical coordinates."""
        return complex(self.alpha / (2 * self.a ** 2), self.beta / 2)

    @property
    def semi_axes(self):
        """(A, B): semi-axes along canonical x and y; A = B/a >= B."""
        R = 0.5 * np.hypot(self.alpha / self.a, self.beta)
        return R / self.a, R

    def to_canonical(self, z):
        return np.asarray(z, complex) * np.exp(-1j * self.rotation)

    def describe(self):
        return {"kind": self.kind, "a": self.a, "alpha": self.alpha, "beta": self.beta,
                "rotation": self.rotation, "width": self.width, "delta": self.delta,
                "mu": self.mu, "rho_tip": self.rho_tip, "case": self.case}


def mu_and_tip(a, alpha, beta):
    """μ (half the minimal width of the contact set near the origin) and the leftmost-tip distance."""
    m = 1.0 if a == 0 else min(alpha / (2 * a * a), 1.0)
    mu2 = beta ** 2 / 4 + alpha * m - a * a * m * m
    tip = beta ** 2 / (2 * alpha) / (np.sqrt(1 + a * a * beta ** 2 / alpha ** 2) + 1)
    return float(np.sqrt(max(mu2, 0.0))), float(tip)


def _quadratic(M, b, c0, theta):
    """Polynomial c0 + b·x + xᵀMx/2 in canonical coordinates, rotated by theta."""
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    M = R @ np.asarray(M, float) @ R.T
    b = R @ np.asarray(b, float)
    return Polynomial.from_dict({(0, 0): c0, (1, 0): b[0], (0, 1): b[1],
                                 (2, 0): M[0, 0] / 2, (1, 1): M[0, 1], (0, 2): M[1, 1] / 2})


def _delta_and_p(kind, a, alpha, beta, theta):
    if kind == HALF_PLANE or kind == STRIP:
        return 1.0, _quadratic(np.diag([1.0, 0.0]), [0, 0], 0.0, theta), "flat"
    if kind == LINE:
        return 1.0, _quadratic(np.diag([0.0, 1.0]), [0, 0], 0.0, theta), "flat"
    mu, tip = mu_and_tip(a, alpha, beta)
    if alpha > 2 * a * a and a < 1:
        delta = max(mu * mu, tip / 4)
        M = np.diag([-a, 1.0]) / (1 - a)
        return delta, _quadratic(M, [0, 0], 0.0, theta), "parabolic"
    M = np.diag([a, 1.0]) / (1 + a)
    xc = np.array([alpha / (2 * a * a), beta / 2])
    return mu, _quadratic(M, -M @ xc, 0.5 * xc @ M @ xc, theta), "elliptic"


def make_global(kind, a=0.0, alpha=0.0, beta=0.0, rotation=0.0, width=0.0):
    """Validated global solution with cached δ, μ, tip distance and polynomial p."""
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")
    a, alpha, beta = float(a), float(alpha), float(beta)
    if kind in CONICS:
        if not alpha > 0:
            raise InvalidConic("conic members need alpha > 0")
        if kind == PARABOLA:
            a = 0.0
        elif not ELLIPSE_MIN_A <= a <= 1:
            raise InvalidConic(f"ellipse axis ratio must lie in [{ELLIPSE_MIN_A:g}, 1]")
    if kind == STRIP and not width > 0:
        raise InvalidConic("strip needs a positive width")
    delta, p, case = _delta_and_p(kind, a, alpha, beta, rotation)
    if kind in CONICS:
        mu, tip = mu_and_tip(a, alpha, beta)
    else:
        mu = {HALF_PLANE: 0.5, LINE: 0.0, STRIP: 0.5 * min(width, 1.0)}[kind]
        tip = 0.0
    return GlobalSolution2D(kind, a, alpha, beta, float(rotation), float(width),
                            float(delta), float(mu), float(tip), case, p)


def _ellipse_q(gs, zc):
    """(Z, q) with Z = zc - centre and q the branch of sqrt(Z² - c²) analytic off the focal segment.

    Z² - c² is expanded as zc² - 2 zc z0 + ζ²/(4a²), which avoids the O(a⁻⁴)
    cancellation of the centred form when the axis ratio a is small.  Writing
    q = Z·sqrt(D/Z²) keeps q ~ Z at infinity and makes points on the real axis
    independent of the sign of a zero imaginary part.
    """
    zc = np.asarray(zc, complex)
    Z = zc - gs.center
    D = zc * zc - 2 * zc * gs.center + gs.zeta ** 2 / (4 * gs.a ** 2)
    safe = np.where(Z == 0, 1.0, Z)
    A, B = gs.semi_axes
    q = np.where(Z == 0, 1j * np.sqrt(max(A * A - B * B, 0.0)), safe * np.sqrt(D / safe ** 2))
    return Z, q


def _on_cut(gs, zc):
    if gs.kind == ELLIPSE:
        A, B = gs.semi_axes
        c = np.sqrt(max(A * A - B * B, 0.0))
        Z = zc - gs.center
        return (np.abs(Z.imag) <= CUT_TOL * max(1.0, c)) & (np.abs(Z.real) <= c) if c > 0 else np.abs(Z) <= CUT_TOL
    if gs.kind == PARABOLA:
        d = gs.zeta ** 2 / (4 * gs.alpha) - zc
        return (np.abs(d.imag) <= CUT_TOL * max(1.0, abs(gs.zeta))) & (d.real <= 0)
    return np.zeros(np.shape(zc), bool)


def _schwarz_canonical(gs, zc):
    if gs.kind == HALF_PLANE:
        return -zc
    if gs.kind == LINE:
        return zc
    if gs.kind == PARABOLA:
        zf = gs.zeta ** 2 / (4 * gs.alpha)
        return zc - gs.zeta + 2 * np.sqrt(gs.alpha) * np.sqrt(zf - zc)
    A, B = gs.semi_axes
    Z, q = _ellipse_q(gs, zc)
    return np.conj(gs.center) + (1 - gs.a) / (1 + gs.a) * Z + 2 * A * B / (Z + q)


def schwarz(gs, z):
    """Schwarz function of the free-boundary curve: S(z) = conj(z) on the curve."""
    if gs.kind == STRIP:
        raise ValueError("a strip has two boundary lines and no single Schwarz function")
    zc = gs.to_canonical(z)
    if np.any(_on_cut(gs, zc)):
        raise BranchCut("point lies on the branch cut of the Schwarz function")
    rot = np.exp(-1j * gs.rotation)
    return rot * _schwarz_canonical(gs, zc)


def _primitive_canonical(gs, zc):
    """A primitive F of the canonical Schwarz function (conic kinds)."""
    if gs.kind == PARABOLA:
        zf = gs.zeta ** 2 / (4 * gs.alpha)
        d = zf - zc
        return zc ** 2 / 2 - gs.zeta * zc - (4.0 / 3.0) * np.sqrt(gs.alpha) * d * np.sqrt(d)
    A, B = gs.semi_axes
    Z, q = _ellipse_q(gs, zc)
    return (np.conj(gs.center) * Z + (1 - gs.a) / (1 + gs.a) * Z ** 2 / 2
            + A * B * Z / (Z + q) + A * B * np.log(Z + q))


def _primitive_increment(gs, zc):
    """F(zc) - F(0) with the large cancelling terms of the ellipse primitive combined algebraically.

    Only the real part is meaningful (the log term is taken modulo 2πi).
    """
    if gs.kind != ELLIPSE:
        return _primitive_canonical(gs, zc) - _primitive_canonical(gs, np.complex128(0.0))
    A, B = gs.semi_axes
    z0 = gs.center
    (Z, q), (Z0, q0) = _ellipse_q(gs, zc), _ellipse_q(gs, np.complex128(0.0))
    qsum = q + q0
    # q - q0 = (Z² - Z0²)/(q + q0), unless q + q0 itself cancels
    safe = np.abs(qsum) > 1e-8 * (np.abs(q) + abs(q0))
    dq = np.where(safe, zc * (Z + Z0) / np.where(safe, qsum, 1.0), q - q0)
    k = (1 - gs.a) / (1 + gs.a)
    return (np.conj(z0) * zc + k / 2 * zc * (Z + Z0)
            + A * B * (zc * q0 - Z0 * dq) / ((Z + q) * (Z0 + q0))
            + A * B * np.log1p((zc + dq) / (Z0 + q0)))


def contact_indicator(gs, z):
    """True where z lies in the contact set {U = 0} (closed set; the line uses |y| <= 1e-14)."""
    zc = gs.to_canonical(z)
    x, y = zc.real, zc.imag
    if gs.kind == HALF_PLANE:
        return x <= 0
    if gs.kind == STRIP:
        return (x <= 0) & (x >= -gs.width)
    if gs.kind == LINE:
        return np.abs(y) <= 1e-14
    return gs.a ** 2 * x * x + y * y <= gs.alpha * x + gs.beta * y


def U_closed(gs, z):
    """U from the closed-form primitive of S; 0 on the contact set."""
    zc = np.asarray(gs.to_canonical(z), complex)
    x, y = zc.real, zc.imag
    if gs.kind == HALF_PLANE:
        return np.maximum(x, 0.0) ** 2 / 2
    if gs.kind == LINE:
        return y ** 2 / 2
    if gs.kind == STRIP:
        return (np.maximum(x, 0.0) ** 2 + np.maximum(-gs.width - x, 0.0) ** 2) / 2
    free = ~contact_indicator(gs, z)
    out = np.zeros(zc.shape)
    zf = zc[free]
    out[free] = np.abs(zf) ** 2 / 4 - _primitive_increment(gs, zf).real / 2
    return np.maximum(out, 0.0)


def gradient_U(gs, z):
    """(U_x, U_y); zero on the contact set."""
    zc = np.asarray(gs.to_canonical(z), complex)
    x, y = zc.real, zc.imag
    if gs.kind == STRIP:
        gc = (np.maximum(x, 0.0) - np.maximum(-gs.width - x, 0.0)) + 0j
    elif gs.kind == HALF_PLANE:
        gc = np.maximum(x, 0.0) + 0j
    elif gs.kind == LINE:
        gc = -1j * y
    else:
        free = ~contact_indicator(gs, z)
        zf = zc[free]
        if np.any(_on_cut(gs, zf)):
            raise BranchCut("point lies on the branch cut of the Schwarz function")
        gc = np.zeros(zc.shape, complex)
        gc[free] = (np.conj(zf) - _schwarz_canonical(gs, zf)) / 2
    g = np.exp(-1j * gs.rotation) * gc
    return g.real, -g.imag


def _nearest_boundary_canonical(gs, zc):
    """Nearest point of the canonical conic to each point of zc (vectorised sample + golden refine)."""
    zc = np.atleast_1d(zc)
    if gs.kind == ELLIPSE:
        A, B = gs.semi_axes
        c0 = gs.center
        curve = lambda t: c0 + A * np.cos(t) + 1j * B * np.sin(t)
        ts = np.linspace(0, 2 * np.pi, 1441)
    else:
        y0 = gs.beta / 2
        curve = lambda t: (t * t - gs.beta * t) / gs.alpha + 1j * t
        span = 2 * (np.max(np.abs(zc)) + 1) + abs(gs.beta) + gs.alpha
        ts = y0 + np.linspace(-span, span, 4001)
    d = np.abs(curve(ts)[None, :] - zc[:, None])
    k = np.argmin(d, axis=1)
    step = ts[1] - ts[0]
    lo, hi = ts[k] - step, ts[k] + step
    ratio = (np.sqrt(5) - 1) / 2
    for _ in range(60):
        m1 = hi - ratio * (hi - lo)
        m2 = lo + ratio * (hi - lo)
        left = np.abs(curve(m1) - zc) < np.abs(curve(m2) - zc)
        hi = np.where(left, m2, hi)
        lo = np.where(left, lo, m1)
    return curve((lo + hi) / 2)


def _segment_integral(gs, start, end, steps):
    t = (np.arange(steps) + 0.5) / steps
    pts = start[:, None] + t[None, :] * (end - start)[:, None]
    blocked = contact_indicator(gs, pts * np.exp(1j * gs.rotation)).any(axis=1)
    gx, gy = gradient_U(make_global(gs.kind, gs.a, gs.alpha, gs.beta, 0.0, gs.width), pts)
    dz = (end - start) / steps
    return np.sum(gx * dz.real[:, None] + gy * dz.imag[:, None], axis=1), blocked


def evaluate_U(gs, z, steps=200, box=10.0):
    """U by line integration of DU from the nearest free-boundary point (midpoint rule).

    Conic members only; flat members are returned in closed form.  Contact points
    give 0.  A two-segment dogleg is tried if the straight path meets the contact set.
    """
    z = np.asarray(z, complex)
    if gs.kind not in CONICS:
        return U_closed(gs, z)
    if np.any(np.abs(z) > box):
        raise PathBlocked(f"evaluation point outside the box |z| <= {box}")
    flat = np.atleast_1d(z).ravel()
    zc = gs.to_canonical(flat)
    out = np.zeros(flat.shape)
    free = ~contact_indicator(gs, flat)
    if free.any():
        target = zc[free]
        start = _nearest_boundary_canonical(gs, target)
        vals, blocked = _segment_integral(gs, start, target, steps)
        on_curve = np.abs(target - start) <= 1e-12 * (1 + np.abs(target))
        vals[on_curve], blocked[on_curve] = 0.0, False
        for i in np.flatnonzero(blocked):
            vals[i] = _dogleg(gs, start[i], target[i], steps)
        out[free] = vals
    return np.maximum(out, 0.0).reshape(np.shape(z))


def _dogleg(gs, start, end, steps):
    for s in (0.5, 1.0, 2.0, 4.0):
        normal = start - (gs.center if gs.kind == ELLIPSE else gs.zeta ** 2 / (4 * gs.alpha))
        mid = start - s * abs(end - start) * normal / abs(normal)
        v1, b1 = _segment_integral(gs, np.array([start]), np.array([mid]), steps)
        v2, b2 = _segment_integral(gs, np.array([mid]), np.array([end]), steps)
        if not (b1[0] or b2[0]):
            return float(v1[0] + v2[0])
    raise PathBlocked("no admissible integration path found")


def delta_and_p(gs):
    """(δ, p) with Δp = 1; δ = max(μ², tip/4) when α > 2a², else δ = μ; flat kinds δ = 1."""
    return gs.delta, gs.p


def _disk_points(r, count, seed):
    rng = np.random.default_rng(seed)
    rad = r * np.sqrt(rng.random(count))
    ang = 2 * np.pi * rng.random(count)
    return rad * np.exp(1j * ang)


def verify_Up(gs, r_grid=None, samples=10000, seed=0):
    """max over r of sup_{B_r}|D(U - p)| / sqrt(δ r); returns (max ratio, [(r, ratio)])."""
    delta, p = delta_and_p(gs)
    if r_grid is None:
        r_grid = [r for r in 2.0 ** -np.arange(0, 30) if r >= delta] or [1.0]
    profile = []
    for k, r in enumerate(r_grid):
        if r < delta * (1 - 1e-12) or r > 1 + 1e-12:
            raise ValueError("r_grid must lie in [delta, 1]")
        z = _disk_points(r, samples, seed + k)
        ux, uy = gradient_U(gs, z)
        dp = p.gradient(np.stack([z.real, z.imag], axis=-1))
        sup = float(np.max(np.hypot(ux - dp[:, 0], uy - dp[:, 1])))
        profile.append((float(r), sup / np.sqrt(delta * r)))
    return max(v for _, v in profile), profile


def inside_check(gs, c0, n=401):
    """Test the two alternatives for {U=0} ∩ B_δ on an n×n sampling of the disk.

    Alternative "min-diameter": min_diameter(contact ∩ B_δ) >= δ/c0.
    Alternative "two-components": {U>0} ∩ B_δ has two components whose boundaries
    are Hausdorff-separated by >= μ sqrt(δ)/c0 and each complement has min-diameter >= δ/c0.
    """
    delta = gs.delta
    xs = np.linspace(-delta, delta, n)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    disk = X * X + Y * Y <= delta * delta
    contact = contact_indicator(gs, X + 1j * Y) & disk
    positive = disk & ~contact
    pts = np.stack([X, Y], axis=-1)
    h = xs[1] - xs[0]
    report = {"delta": delta, "mu": gs.mu, "c0": c0, "spacing": h}
    md = min_diameter(pts[contact]) if contact.any() else 0.0
    report["min_diam"] = md
    labels, count = label(positive)
    report["components"] = int(count)
    if md >= delta / c0:
        report["alternative"] = "min-diameter"
        return report
    if count == 2:
        edges, widths = [], []
        for k in (1, 2):
            comp = labels == k
            edge = comp & ~binary_erosion(comp, border_value=1) & disk
            edge_pts = pts[edge] if edge.any() else pts[comp]
            edges.append(edge_pts)
            rest = disk & ~comp
            widths.append(min_diameter(pts[rest]) if rest.any() else 0.0)
        dist = max(directed_hausdorff(edges[0], edges[1])[0], directed_hausdorff(edges[1], edges[0])[0])
        report.update(hausdorff=dist, complement_widths=widths)
        if dist >= gs.mu * np.sqrt(delta) / c0 and min(widths) >= delta / c0:
            report["alternative"] = "two-components"
            return report
    report["alternative"] = "none"
    return report


def sweep_instances(count, seed=0):
    """First `count` valid conic instances from a scrambled Sobol sequence over (a, α, β).

    a ∈ [0, 1], α ∈ (0, 1/2], β ∈ [-1, 1]; kept when 0 < μ < 1/2 and tip < 1.
    Instances are canonical (rotation 0); order is deterministic for a given seed.
    """
    sampler = qmc.Sobol(d=3, scramble=True, seed=seed)
    out = []
    while len(out) < count:
        for s in sampler.random(256):
            a, alpha, beta = float(s[0]), 0.5 * float(s[1]), 2 * float(s[2]) - 1
            if alpha <= 0:
                continue
            mu, tip = mu_and_tip(a, alpha, beta)
            if not (0 < mu < 0.5 and tip < 1):
                continue
            if 0 < a < ELLIPSE_MIN_A:
                continue
            kind = PARABOLA if a == 0 else ELLIPSE
            out.append(make_global(kind, a, alpha, beta))
            if len(out) == count:
                break
    return out


def conic_boundary_points(gs, count=100):
    """`count` points on the (rotated) free-boundary curve, solving the conic for y given x."""
    a, al, be = gs.a, gs.alpha, gs.beta
    if gs.kind == ELLIPSE:
        A, _ = gs.semi_axes
        xc = gs.center.real
        xs = xc + A * np.cos(np.linspace(0.05, np.pi - 0.05, (count + 1) // 2))
    else:
        tip = -be * be / (4 * al)
        xs = tip + np.linspace(0.01, 2.0, (count + 1) // 2) ** 2
    disc = np.maximum(be * be + 4 * (al * xs - a * a * xs * xs), 0.0)
    ys = np.concatenate([(be + np.sqrt(disc)) / 2, (be - np.sqrt(disc)) / 2])[:count]
    xs = np.concatenate([xs, xs])[:count]
    return (xs + 1j * ys) * np.exp(1j * gs.rotation)

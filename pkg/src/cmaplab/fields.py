"""Uniform grids, sampled fields and finite-difference operators.

Arrays use ``indexing='ij'``: axis 0 is x, axis 1 is y, and a trailing axis holds
vector components.  Difference operators return NaN where the stencil does not fit.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooSmall, Io

SPACING_TOL = 1e-14


@dataclass(frozen=True)
class Grid:
    extents: tuple
    n: tuple

    def __post_init__(self):
        ext = tuple((float(a), float(b)) for a, b in self.extents)
        n = tuple(int(k) for k in self.n)
        if len(ext) != len(n) or len(n) not in (1, 2):
            raise ValueError("grid must be 1D or 2D with one extent per axis")
        if any(k < 2 for k in n) or any(b <= a for a, b in ext):
            raise ValueError("each axis needs at least two nodes and max > min")
        hs = [(b - a) / (k - 1) for (a, b), k in zip(ext, n)]
        if max(hs) - min(hs) > SPACING_TOL * max(1.0, max(hs)):
            raise ValueError(f"spacing differs between axes: {hs}")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "n", n)

    @classmethod
    def uniform(cls, h, extents):
        """Grid with spacing h; every extent length must be a multiple of h."""
        n = []
        for a, b in extents:
            k = round((b - a) / h)
            if abs(k * h - (b - a)) > 1e-9 * max(1.0, abs(b - a)):
                raise ValueError(f"extent {a, b} is not a multiple of h={h}")
            n.append(k + 1)
        return cls(tuple(extents), tuple(n))

    @property
    def dims(self):
        return len(self.n)

    @property
    def h(self):
        a, b = self.extents[0]
        return (b - a) / (self.n[0] - 1)

    @property
    def shape(self):
        return self.n

    def axes(self):
        return [np.linspace(a, b, k) for (a, b), k in zip(self.extents, self.n)]

    def coords(self):
        """Coordinate arrays, one per axis, each of shape `self.shape`."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self):
        """Node coordinates with shape shape + (dims,)."""
        return np.stack(self.coords(), axis=-1)

    def index_of(self, x):
        """Nearest node index of a point."""
        x = np.atleast_1d(np.asarray(x, float))
        return tuple(int(np.clip(round((xi - a) / self.h), 0, k - 1))
                     for xi, (a, _), k in zip(x, self.extents, self.n))

    def node(self, idx):
        return np.array([a + i * self.h for i, (a, _) in zip(idx, self.extents)])

    def ball(self, x0, r):
        """Boolean mask of nodes with |x - x0| <= r."""
        pts = self.points()
        d = np.linalg.norm(pts - np.asarray(x0, float).reshape(self.dims), axis=-1)
        return d <= r * (1 + 1e-12)


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid {self.grid.shape}")

    @property
    def m(self):
        return 1


@dataclass
class VectorField:
    grid: Grid
    values: np.ndarray
    components: int = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[:-1] != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} incompatible with grid {self.grid.shape}")
        self.components = self.values.shape[-1]

    @property
    def m(self):
        return self.components

    def component(self, i):
        return ScalarField(self.grid, self.values[..., i])


def sample(grid, func):
    """Evaluate func(*coords) on the grid; returns a scalar or vector field by output shape."""
    vals = np.asarray(func(*grid.coords()), dtype=float)
    if vals.shape == grid.shape:
        return ScalarField(grid, vals)
    if vals.shape[1:] == grid.shape:
        vals = np.moveaxis(vals, 0, -1)
    return VectorField(grid, vals)


def _require(grid, count):
    if min(grid.n) < count:
        raise GridTooSmall(f"need at least {count} nodes per axis, grid has {grid.n}")


def laplacian_array(v, h, dims):
    """Standard 3/5-point Laplacian on the leading `dims` axes; NaN on the boundary ring."""
    out = np.full(v.shape, np.nan)
    if dims == 1:
        out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h ** 2
    else:
        out[1:-1, 1:-1] = (v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2]
                           - 4 * v[1:-1, 1:-1]) / h ** 2
    return out


def gradient_array(v, h, axis):
    """Central differences along axis, second-order one-sided at both ends."""
    v = np.moveaxis(v, axis, 0)
    d = np.empty(v.shape)
    d[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    d[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    d[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return np.moveaxis(d, 0, axis)


def _shifted(v, axis, k):
    """View of v shifted by k nodes along axis, trimmed by 2 on each side."""
    n = v.shape[axis]
    sl = [slice(None)] * v.ndim
    sl[axis] = slice(2 + k, n - 2 + k)
    return v[tuple(sl)]


def third_difference_array(v, h, axis):
    """(f(x+2h) - 2f(x+h) + 2f(x-h) - f(x-2h)) / (2h^3) along axis; NaN within 2 of the ends."""
    out = np.full(v.shape, np.nan)
    sl = [slice(None)] * v.ndim
    sl[axis] = slice(2, v.shape[axis] - 2)
    out[tuple(sl)] = (_shifted(v, axis, 2) - 2 * _shifted(v, axis, 1)
                      + 2 * _shifted(v, axis, -1) - _shifted(v, axis, -2)) / (2 * h ** 3)
    return out


def _central(v, h, axis):
    out = np.full(v.shape, np.nan)
    n = v.shape[axis]
    sl = lambda a, b: tuple(slice(a, b) if k == axis else slice(None) for k in range(v.ndim))
    out[sl(1, n - 1)] = (v[sl(2, n)] - v[sl(0, n - 2)]) / (2 * h)
    return out


def _second(v, h, axis):
    out = np.full(v.shape, np.nan)
    n = v.shape[axis]
    sl = lambda a, b: tuple(slice(a, b) if k == axis else slice(None) for k in range(v.ndim))
    out[sl(1, n - 1)] = (v[sl(2, n)] - 2 * v[sl(1, n - 1)] + v[sl(0, n - 2)]) / h ** 2
    return out


def third_derivatives_array(v, h, dims):
    """All distinct third differences of a scalar array: [xxx] in 1D, [xxx, xxy, xyy, yyy] in 2D."""
    if dims == 1:
        return [third_difference_array(v, h, 0)]
    return [third_difference_array(v, h, 0),
            _central(_second(v, h, 0), h, 1),
            _central(_second(v, h, 1), h, 0),
            third_difference_array(v, h, 1)]


def laplacian(f):
    _require(f.grid, 3)
    return ScalarField(f.grid, laplacian_array(f.values, f.grid.h, f.grid.dims))


def gradient(f):
    """Gradient of a scalar field as a VectorField with one component per axis."""
    _require(f.grid, 3)
    parts = [gradient_array(f.values, f.grid.h, ax) for ax in range(f.grid.dims)]
    return VectorField(f.grid, np.stack(parts, axis=-1))


def third_difference(f, axis=0):
    if f.grid.n[axis] < 5:
        raise GridTooSmall("third difference needs at least 5 nodes along the axis")
    return ScalarField(f.grid, third_difference_array(f.values, f.grid.h, axis))


def write_field(path, f):
    """Write a field as text: header line, then one value per line (C order, components last)."""
    g = f.grid
    head = [g.dims, f.m, *g.n]
    for a, b in g.extents:
        head += [repr(a), repr(b)]
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(" ".join(str(t) for t in head) + "\n")
            for val in np.asarray(f.values).ravel(order="C"):
                fh.write(format(float(val), ".17g") + "\n")
    except OSError as exc:
        raise Io(str(exc)) from exc


def read_field(path):
    try:
        with open(path, encoding="utf-8") as fh:
            head = fh.readline().split()
            vals = np.array([float(line) for line in fh if line.strip()])
    except OSError as exc:
        raise Io(str(exc)) from exc
    try:
        dims, m = int(head[0]), int(head[1])
        n = tuple(int(t) for t in head[2:2 + dims])
        ext = [float(t) for t in head[2 + dims:2 + 3 * dims]]
    except (IndexError, ValueError) as exc:
        raise Io(f"malformed field header in {path}") from exc
    grid = Grid(tuple(zip(ext[::2], ext[1::2])), n)
    if m == 1:
        return ScalarField(grid, vals.reshape(n))
    return VectorField(grid, vals.reshape(n + (m,)))

"""Truncated quadrature grids on the boundary R^{n-1} and the half space R^n_+.

Boundary nodes are radial shells r_k (reduced mode) or shells times equally
spaced polar angles (full mode, n = 3).  Half-space nodes are products of
tangential radii rho = |x'| and heights x_n, optionally times polar angles.
Every grid keeps away from the origin and from x_n = 0.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import gamma


class GridError(ValueError):
    """Invalid grid specification."""


class StructureError(ValueError):
    """Field and grid do not belong together."""


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^d in R^{d+1}; S^0 has measure 2."""
    return 2.0 * math.pi ** ((d + 1) / 2) / gamma((d + 1) / 2)


@dataclass(frozen=True)
class GridSpec:
    n: int = 3
    r_min: float = 1e-3
    r_max: float = 1e3
    n_radial: int = 64
    n_height: int = 64
    n_angular: int = 16
    spacing: str = "geometric"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise GridError(f"bad dimension {self.n!r}")
        if not (math.isfinite(self.r_min) and math.isfinite(self.r_max)):
            raise GridError("radii must be finite")
        if self.r_min <= 0:
            raise GridError(f"r_min must be positive, got {self.r_min}")
        if not self.r_min < self.r_max:
            raise GridError(f"need r_min < r_max, got {self.r_min}, {self.r_max}")
        for name in ("n_radial", "n_height", "n_angular"):
            if getattr(self, name) < 2:
                raise GridError(f"{name} must be >= 2")
        if self.spacing not in ("geometric", "uniform"):
            raise GridError(f"unknown spacing {self.spacing!r}")

    def replace(self, **kw) -> "GridSpec":
        d = asdict(self)
        d.update(kw)
        return GridSpec(**d)

    def as_dict(self) -> dict:
        return asdict(self)


def _hat_moments_log(s, c):
    """Integrals of the log-spaced hat functions against e^{c s} ds (c > 0), exactly."""
    h = np.diff(s)
    x = c * h
    Ea = np.exp(c * s[:-1])
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    # right hat (s - a)/h and the whole cell; the left hat is the difference
    right = np.where(small, h * Ea * (0.5 + x / 3 + x * x / 8), Ea / c * (np.exp(xs) - np.expm1(xs) / xs))
    total = np.where(small, h * Ea * (1 + x / 2 + x * x / 6), Ea * np.expm1(xs) / c)
    return total - right, right


def nodes_1d(lo: float, hi: float, count: int, spacing: str, power: int = 0):
    """Nodes and weights for integrating g(t) t^power dt on [lo, hi].

    g is interpolated piecewise linearly (in log t for geometric spacing)
    and the density t^power is integrated exactly against each hat, so
    constants integrate to the exact measure.
    """
    if spacing == "geometric":
        s = np.linspace(math.log(lo), math.log(hi), count)
        t = np.exp(s)
        t[0], t[-1] = lo, hi
        left, right = _hat_moments_log(s, power + 1.0)
    else:
        t = np.linspace(lo, hi, count)
        a, b = t[:-1], t[1:]
        h = b - a
        m = power
        mom0 = (b ** (m + 1) - a ** (m + 1)) / (m + 1)
        mom1 = (b ** (m + 2) - a ** (m + 2)) / (m + 2) - a * mom0
        right = mom1 / h
        left = mom0 - right
    w = np.zeros(count)
    w[:-1] += left
    w[1:] += right
    return t, w


class BoundaryGrid:
    """Quadrature on the boundary R^{n-1}.

    ``r`` and ``weights`` are flat per-node arrays; ``shape`` is ``(N,)`` in
    reduced mode and ``(N, A)`` in full mode (radius index first).
    """

    kind = "boundary"

    def __init__(self, n, r, weights, angles=None, spec=None, spacing="geometric"):
        self.n = int(n)
        self.angles = None if angles is None else np.asarray(angles, float)
        self.spec = spec
        self.spacing = spacing
        r = np.asarray(r, float)
        weights = np.asarray(weights, float)
        if self.angles is None:
            self.shell_r = r
            self.shell_weights = weights
            self.r = r
            self.weights = weights
            self.shape = (r.size,)
        else:
            if self.n != 3:
                raise GridError("full mode is implemented for n = 3 only")
            A = self.angles.size
            self.shell_r = r
            self.shell_weights = weights
            self.r = np.repeat(r, A)
            self.weights = np.repeat(weights / A, A)
            self.shape = (r.size, A)
        if np.any(self.r <= 0):
            raise GridError("boundary nodes must avoid the origin")
        if np.any(self.weights <= 0):
            raise GridError("weights must be positive")

    @property
    def full(self) -> bool:
        return self.angles is not None

    @property
    def size(self) -> int:
        return self.r.size

    def coords(self) -> np.ndarray:
        """Cartesian node coordinates, shape (size, n-1)."""
        out = np.zeros((self.size, self.n - 1))
        if self.full:
            phi = np.tile(self.angles, self.shape[0])
            out[:, 0] = self.r * np.cos(phi)
            out[:, 1] = self.r * np.sin(phi)
        else:
            out[:, 0] = self.r
        return out

    def reduced(self) -> "BoundaryGrid":
        if not self.full:
            return self
        return BoundaryGrid(self.n, self.shell_r, self.shell_weights, None, self.spec, self.spacing)

    def as_full(self, n_angular: int) -> "BoundaryGrid":
        angles = 2 * math.pi * np.arange(n_angular) / n_angular
        return BoundaryGrid(self.n, self.shell_r, self.shell_weights, angles, self.spec, self.spacing)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(b"B%d" % self.n)
        h.update(np.ascontiguousarray(self.shell_r).tobytes())
        h.update(np.ascontiguousarray(self.shell_weights).tobytes())
        if self.full:
            h.update(np.ascontiguousarray(self.angles).tobytes())
        return h.hexdigest()[:16]

    def total_measure(self) -> float:
        return math.fsum(self.weights)

    def field(self, values) -> "Field":
        return Field(np.asarray(values, float), self)

    def radial_field(self, func) -> "Field":
        return self.field(func(self.r))


class HalfGrid:
    """Quadrature on the half space, nodes (rho = |x'|, x_n) with x_n > 0.

    Reduced-mode nodes are a flat list of (rho, x_n) pairs, usually a
    product grid of shape ``(Nr, Nh)``.  Full mode appends the polar angle
    of x' as the last axis.
    """

    kind = "half"

    def __init__(self, n, rho, xn, weights, shape=None, angles=None, spec=None):
        self.n = int(n)
        rho = np.asarray(rho, float).ravel()
        xn = np.asarray(xn, float).ravel()
        weights = np.asarray(weights, float).ravel()
        if not (rho.size == xn.size == weights.size):
            raise GridError("node arrays differ in length")
        if np.any(xn <= 0):
            raise GridError("half-space nodes need x_n > 0")
        if np.any(weights <= 0):
            raise GridError("weights must be positive")
        self.base_rho, self.base_xn, self.base_weights = rho, xn, weights
        self.base_shape = tuple(shape) if shape is not None else (rho.size,)
        self.spec = spec
        self.angles = None if angles is None else np.asarray(angles, float)
        if self.angles is None:
            self.rho, self.xn, self.weights = rho, xn, weights
            self.shape = self.base_shape
        else:
            if self.n != 3:
                raise GridError("full mode is implemented for n = 3 only")
            A = self.angles.size
            self.rho = np.repeat(rho, A)
            self.xn = np.repeat(xn, A)
            self.weights = np.repeat(weights / A, A)
            self.shape = self.base_shape + (A,)

    @property
    def full(self) -> bool:
        return self.angles is not None

    @property
    def size(self) -> int:
        return self.rho.size

    @property
    def radius(self) -> np.ndarray:
        return np.hypot(self.rho, self.xn)

    def coords(self) -> np.ndarray:
        out = np.zeros((self.size, self.n))
        if self.full:
            phi = np.tile(self.angles, self.base_rho.size)
            out[:, 0] = self.rho * np.cos(phi)
            out[:, 1] = self.rho * np.sin(phi)
        else:
            out[:, 0] = self.rho
        out[:, -1] = self.xn
        return out

    def reduced(self) -> "HalfGrid":
        if not self.full:
            return self
        return HalfGrid(self.n, self.base_rho, self.base_xn, self.base_weights,
                        self.base_shape, None, self.spec)

    def as_full(self, n_angular: int) -> "HalfGrid":
        angles = 2 * math.pi * np.arange(n_angular) / n_angular
        return HalfGrid(self.n, self.base_rho, self.base_xn, self.base_weights,
                        self.base_shape, angles, self.spec)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(b"H%d" % self.n)
        for a in (self.base_rho, self.base_xn, self.base_weights):
            h.update(np.ascontiguousarray(a).tobytes())
        if self.full:
            h.update(np.ascontiguousarray(self.angles).tobytes())
        return h.hexdigest()[:16]

    def total_measure(self) -> float:
        return math.fsum(self.weights)

    def field(self, values) -> "Field":
        return Field(np.asarray(values, float), self)


def build_boundary_grid(spec: GridSpec, full: bool = False) -> BoundaryGrid:
    """Shells on [r_min, r_max] with the measure omega_{n-2} r^{n-2} dr folded in."""
    r, w = nodes_1d(spec.r_min, spec.r_max, spec.n_radial, spec.spacing, spec.n - 2)
    w = w * sphere_area(spec.n - 2)
    grid = BoundaryGrid(spec.n, r, w, None, spec, spec.spacing)
    return grid.as_full(spec.n_angular) if full else grid


def build_half_grid(spec: GridSpec, full: bool = False) -> HalfGrid:
    """Product grid over r_min <= |x'| <= r_max, r_min <= x_n <= r_max."""
    rho, wr = nodes_1d(spec.r_min, spec.r_max, spec.n_radial, spec.spacing, spec.n - 2)
    xn, wh = nodes_1d(spec.r_min, spec.r_max, spec.n_height, spec.spacing)
    wr = wr * sphere_area(spec.n - 2)
    R, X = np.meshgrid(rho, xn, indexing="ij")
    W = np.outer(wr, wh)
    grid = HalfGrid(spec.n, R, X, W, (spec.n_radial, spec.n_height), None, spec)
    return grid.as_full(spec.n_angular) if full else grid


def build_grids(spec: GridSpec, full: bool = False):
    return build_boundary_grid(spec, full), build_half_grid(spec, full)


def boundary_annulus_measure(n: int, r0: float, r1: float) -> float:
    return sphere_area(n - 2) * (r1 ** (n - 1) - r0 ** (n - 1)) / (n - 1)


def half_region_measure(n: int, r0: float, r1: float) -> float:
    """Measure of {r0 <= |x'| <= r1, r0 <= x_n <= r1}."""
    return boundary_annulus_measure(n, r0, r1) * (r1 - r0)


class Field:
    """Samples of a real function on the nodes of a grid."""

    __slots__ = ("values", "grid")

    def __init__(self, values, grid):
        values = np.asarray(values, float)
        if values.size != grid.size:
            raise StructureError(f"field has {values.size} values, grid has {grid.size} nodes")
        self.values = values.reshape(grid.shape)
        self.grid = grid

    def with_values(self, values) -> "Field":
        return Field(values, self.grid)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def __add__(self, other):
        _same(self, other)
        return Field(self.values + other.values, self.grid)

    def __sub__(self, other):
        _same(self, other)
        return Field(self.values - other.values, self.grid)

    def __mul__(self, c):
        return Field(self.values * c, self.grid)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Field({self.grid.kind}, shape={self.values.shape})"


def _same(a: Field, b: Field):
    if a.grid is not b.grid and (a.grid.kind != b.grid.kind or a.grid.digest() != b.grid.digest()):
        raise StructureError("fields live on different grids")


def integrate(field: Field, grid=None) -> float:
    """Compensated sum of value * weight over the nodes."""
    if grid is not None and grid is not field.grid:
        if grid.kind != field.grid.kind or grid.digest() != field.grid.digest():
            raise StructureError("field does not belong to this grid")
    prod = field.values.ravel() * field.grid.weights
    return math.fsum(prod)


def inner(a: Field, b: Field) -> float:
    _same(a, b)
    return math.fsum(a.values.ravel() * b.values.ravel() * a.grid.weights)


# --- CSV interchange -------------------------------------------------------

def field_to_csv(field: Field) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_id", "value"])
    for i, v in enumerate(field.values.ravel()):
        w.writerow([i, repr(float(v))])
    return buf.getvalue()


def field_from_csv(text: str, grid) -> Field:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["node_id", "value"]:
        raise StructureError("field CSV needs header node_id,value")
    vals = np.full(grid.size, np.nan)
    for row in rows[1:]:
        if not row:
            continue
        i = int(row[0])
        if not 0 <= i < grid.size:
            raise StructureError(f"node_id {i} outside grid of {grid.size} nodes")
        vals[i] = float(row[1])
    if np.isnan(vals).any():
        raise StructureError("field CSV does not cover every node")
    return Field(vals, grid)


def grid_manifest_csv(grid) -> str:
    coords = grid.coords()
    names = [f"x{i + 1}" for i in range(coords.shape[1])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_id", *names, "weight"])
    for i in range(grid.size):
        w.writerow([i, *(repr(float(c)) for c in coords[i]), repr(float(grid.weights[i]))])
    return buf.getvalue()


def equal_measure_shells(n: int, r_min: float, r_max: float, count: int):
    """Shell radii whose cells carry equal measure on the annulus; weights included."""
    if not 0 < r_min < r_max or count < 2:
        raise GridError("need 0 < r_min < r_max and count >= 2")
    m0, m1 = r_min ** (n - 1), r_max ** (n - 1)
    edges = np.linspace(m0, m1, count + 1)
    mids = (edges[:-1] + edges[1:]) / 2
    r = mids ** (1.0 / (n - 1))
    w = np.full(count, boundary_annulus_measure(n, r_min, r_max) / count)
    return r, w


def build_equal_measure_grids(spec: GridSpec, full: bool = False):
    """Grids whose boundary shells (and half-space rho-columns) have equal measure.

    Rearranging a radial field on such a grid is a permutation of shells, so
    it never leaves the grid.
    """
    r, w = equal_measure_shells(spec.n, spec.r_min, spec.r_max, spec.n_radial)
    bg = BoundaryGrid(spec.n, r, w, None, spec, "geometric")
    xn, wh = nodes_1d(spec.r_min, spec.r_max, spec.n_height, spec.spacing)
    R, X = np.meshgrid(r, xn, indexing="ij")
    hg = HalfGrid(spec.n, R, X, np.outer(w, wh), (spec.n_radial, spec.n_height), None, spec)
    if full:
        return bg.as_full(spec.n_angular), hg.as_full(spec.n_angular)
    return bg, hg

"""Reflections, Kelvin transform and moving-plane diagnostics on full-mode grids.

Full-mode fields live on log-polar node sets, so resampling at reflected or
inverted points is multilinear interpolation in (log r, angle) on the
boundary and (log rho, log x_n, angle) in the half space.  Past the radial
ends a power law fitted to the two outermost (or innermost) nodes is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import BoundaryGrid, Field, HalfGrid, StructureError
from .operators import KernelParams, kernel


@dataclass(frozen=True)
class ReflectionSpec:
    """Reflection y_i -> 2 tau - y_i in a tangential coordinate (1-based axis)."""

    axis: int
    tau: float = 0.0
    n: int = 3

    def __post_init__(self):
        if not 1 <= self.axis <= self.n - 1:
            raise ValueError(f"axis must be a tangential coordinate in 1..{self.n - 1}, got {self.axis}")

    def apply(self, pts: np.ndarray) -> np.ndarray:
        out = np.array(pts, float, copy=True)
        i = self.axis - 1
        out[..., i] = 2 * self.tau - out[..., i]
        return out


def _axis_interp(nodes_log, q_log):
    """Bracketing index and weight along a sorted log axis (linear extrapolation)."""
    m = nodes_log.size
    if m == 1:
        z = np.zeros(q_log.shape, int)
        return z, z, np.zeros(q_log.shape)
    i = np.clip(np.searchsorted(nodes_log, q_log, side="right") - 1, 0, m - 2)
    t = (q_log - nodes_log[i]) / (nodes_log[i + 1] - nodes_log[i])
    return i, i + 1, t


def _angle_interp(angles, phi):
    A = angles.size
    d = 2 * math.pi / A
    s = np.mod(phi - angles[0], 2 * math.pi) / d
    i = np.floor(s).astype(int)
    t = s - i
    # snap node hits so mirror-symmetric lookups are exact
    near = np.abs(t - np.rint(t)) < 1e-9
    i = np.where(near, np.rint(s).astype(int), i)
    t = np.where(near, 0.0, t)
    return i % A, (i + 1) % A, t


class FieldInterpolator:
    """Evaluate a full-mode field at arbitrary points of its domain."""

    def __init__(self, field: Field):
        grid = field.grid
        if not grid.full:
            raise StructureError("interpolation at arbitrary points needs a full-mode grid")
        self.grid = grid
        vals = np.asarray(field.values, float)
        self.positive = bool(np.all(vals > 0))
        self.data = np.log(vals) if self.positive else vals
        self.kind = grid.kind
        if self.kind == "boundary":
            self.lr = np.log(grid.shell_r)
            self.data = self.data.reshape(grid.shell_r.size, grid.angles.size)
        else:
            shape = grid.base_shape
            if len(shape) != 2:
                raise StructureError("half-space interpolation needs a product (rho, x_n) grid")
            rho = grid.base_rho.reshape(shape)
            xn = grid.base_xn.reshape(shape)
            self.lrho = np.log(rho[:, 0])
            self.lxn = np.log(xn[0, :])
            self.data = self.data.reshape(shape + (grid.angles.size,))

    def _out(self, v):
        return np.exp(v) if self.positive else v

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        phi = np.arctan2(pts[:, 1], pts[:, 0])
        rho = np.hypot(pts[:, 0], pts[:, 1])
        a0, a1, ta = _angle_interp(self.grid.angles, phi)
        if self.kind == "boundary":
            i0, i1, tr = _axis_interp(self.lr, np.log(rho))
            D = self.data
            v = ((1 - tr) * ((1 - ta) * D[i0, a0] + ta * D[i0, a1])
                 + tr * ((1 - ta) * D[i1, a0] + ta * D[i1, a1]))
            return self._out(v)
        i0, i1, tr = _axis_interp(self.lrho, np.log(rho))
        j0, j1, tx = _axis_interp(self.lxn, np.log(pts[:, -1]))
        D = self.data
        v = 0.0
        for ii, wi in ((i0, 1 - tr), (i1, tr)):
            for jj, wj in ((j0, 1 - tx), (j1, tx)):
                v = v + wi * wj * ((1 - ta) * D[ii, jj, a0] + ta * D[ii, jj, a1])
        return self._out(v)


def reflect(field: Field, spec: ReflectionSpec) -> Field:
    """u_tau(y) = u(y^tau) sampled at every node of the field's grid."""
    grid = field.grid
    if not grid.full:
        if spec.tau == 0:
            return grid.field(np.array(field.values, float))
        raise StructureError("reflection about tau != 0 needs a full-mode grid")
    pts = spec.apply(grid.coords())
    return grid.field(FieldInterpolator(field)(pts))


@dataclass(frozen=True)
class KelvinResult:
    field: Field
    excluded: np.ndarray
    extrapolated: np.ndarray


def kelvin_transform(u: Field, center=None, power=None) -> KelvinResult:
    """v(x) = |x - c|^{-power} u((x - c)/|x - c|^2 + c) with c on the boundary."""
    grid = u.grid
    n = grid.n
    power = float(n - 2 if power is None else power)
    pts = grid.coords()
    dim = pts.shape[1]
    c = np.zeros(dim)
    if center is not None:
        cb = np.asarray(center, float).ravel()
        c[: cb.size] = cb
        if grid.kind == "half" and cb.size == n and cb[-1] != 0:
            raise ValueError("Kelvin centre must lie on the boundary")
    d = pts - c
    d2 = np.sum(d ** 2, axis=1)
    excluded = d2 <= 1e-300
    safe = np.where(excluded, 1.0, d2)
    img = d / safe[:, None] + c
    interp = FieldInterpolator(u)
    vals = interp(img)
    if grid.kind == "boundary":
        r_img = np.hypot(img[:, 0], img[:, 1])
        extrap = (r_img < grid.shell_r[0]) | (r_img > grid.shell_r[-1])
    else:
        r_img = np.hypot(img[:, 0], img[:, 1])
        x_img = img[:, -1]
        rb, xb = grid.base_rho, grid.base_xn
        extrap = (r_img < rb.min()) | (r_img > rb.max()) | (x_img < xb.min()) | (x_img > xb.max())
    out = safe ** (-power / 2) * vals
    out[excluded] = 0.0
    return KelvinResult(grid.field(out), excluded, extrap)


def barycenter(field: Field) -> np.ndarray:
    """Weighted barycentre sum(w |f| y) / sum(w |f|) of a full-mode boundary field."""
    grid = field.grid
    v = np.abs(np.asarray(field.values, float).reshape(-1)) * grid.weights
    pts = grid.coords()
    return (v[:, None] * pts).sum(axis=0) / v.sum()


def symmetry_deviation(field: Field, center=None) -> tuple:
    """(radial_dev, monotonicity_dev) of a boundary field, both relative to sup |f|.

    radial_dev is the largest spread within a shell; monotonicity_dev the
    largest outward increase of consecutive shell averages.
    """
    grid = field.grid
    if grid.kind != "boundary":
        raise StructureError("symmetry_deviation acts on boundary fields")
    vals = np.asarray(field.values, float)
    scale = float(np.max(np.abs(vals)))
    if scale == 0:
        return 0.0, 0.0
    if not grid.full:
        shells = vals.reshape(-1, 1)
    else:
        N, A = grid.shell_r.size, grid.angles.size
        c = np.zeros(2) if center is None else np.asarray(center, float).ravel()[:2]
        if np.all(c == 0):
            shells = vals.reshape(N, A)
        else:
            rr, aa = np.meshgrid(grid.shell_r, grid.angles, indexing="ij")
            pts = np.stack([c[0] + rr * np.cos(aa), c[1] + rr * np.sin(aa)], axis=-1).reshape(-1, 2)
            shells = FieldInterpolator(field)(pts).reshape(N, A)
    radial = float(np.max(shells.max(axis=1) - shells.min(axis=1)) / scale)
    avg = shells.mean(axis=1)
    inc = np.diff(avg)
    mono = float(max(0.0, inc.max()) / scale) if inc.size else 0.0
    return radial, mono


@dataclass(frozen=True)
class PlaneReport:
    tau: float
    measure_u: float
    measure_v: float
    amplitude_u: float
    amplitude_v: float
    gg_residual_u: float
    gg_residual_v: float

    @property
    def amplitude(self):
        return max(self.amplitude_u, self.amplitude_v)

    @property
    def gg_residual(self):
        return max(self.gg_residual_u, self.gg_residual_v)


def _violation(field: Field, spec: ReflectionSpec, tol_rel=1e-10):
    grid = field.grid
    vals = np.asarray(field.values, float).reshape(-1)
    refl = np.asarray(reflect(field, spec).values, float).reshape(-1)
    side = grid.coords()[:, spec.axis - 1] < spec.tau
    tol = tol_rel * float(np.max(np.abs(vals)))
    diff = np.where(side, vals - refl, 0.0)
    bad = diff > tol
    return float(np.sum(grid.weights[bad])), float(max(0.0, diff.max()))


def _gg_residual(target_pts, source_pts, source_w, source_vals, interp_src, spec, kp,
                 w_target, w_source, target_is_boundary):
    """Compare direct u(y) - u(y^tau) with the split reflection form on a mirrored cloud.

    ``source_*`` are the nodes of the integrating side restricted to the
    tau-half; their mirror images carry the reflected field values.
    """
    mirror = spec.apply(source_pts)
    vals = source_vals
    vals_tau = interp_src(mirror)
    y = target_pts
    y_tau = spec.apply(y)

    def pair(a, b):
        # kernel with the half-space point first
        if target_is_boundary:
            return kernel(b[None, :, :], a[:, None, :], kp)
        return kernel(a[:, None, :], b[None, :, :], kp)

    ws_x = w_source(source_pts)
    ws_xt = w_source(mirror)
    wy, wyt = w_target(y), w_target(y_tau)
    cloud = np.concatenate([source_pts, mirror])
    cloud_vals = np.concatenate([vals, vals_tau])
    cloud_w = np.concatenate([source_w, source_w])
    cloud_ws = np.concatenate([ws_x, ws_xt])
    direct_y = wy * (pair(y, cloud) @ (cloud_w * cloud_ws * cloud_vals))
    direct_yt = wyt * (pair(y_tau, cloud) @ (cloud_w * cloud_ws * cloud_vals))
    direct = direct_y - direct_yt
    P = pair(y, source_pts)
    Pm = pair(y, mirror)
    t1 = P @ (source_w * (ws_x * vals)) * wy - P @ (source_w * (ws_xt * vals_tau)) * wyt
    t2 = Pm @ (source_w * (ws_xt * vals_tau)) * wy - Pm @ (source_w * (ws_x * vals)) * wyt
    split = t1 + t2
    scale = max(float(np.max(np.abs(direct_y))), 1e-300)
    return float(np.max(np.abs(direct - split)) / scale)


def moving_plane_scan(u: Field, v: Field, axis: int, taus, sys=None, n_probe: int = 48,
                      tol_rel: float = 1e-10) -> list:
    """Per-tau violation measures, amplitudes and reflection-identity residuals.

    ``sys`` supplies (alpha, beta, lambda, mu, p0, q0); without it the
    identity is checked for the unweighted kernel with p0 = q0 = 1.
    """
    bgrid, hgrid = u.grid, v.grid
    if not (bgrid.full and hgrid.full):
        raise StructureError("moving_plane_scan needs full-mode fields")
    n = bgrid.n
    alpha = float(getattr(sys, "alpha", 0.0)) if sys is not None else 0.0
    beta = float(getattr(sys, "beta", 0.0)) if sys is not None else 0.0
    p0 = float(getattr(sys, "p0", 1.0)) if sys is not None else 1.0
    q0 = float(getattr(sys, "q0", 1.0)) if sys is not None else 1.0
    kp = KernelParams(float(getattr(sys, "lam", 0.0)), float(getattr(sys, "mu", 1.0))) if sys is not None \
        else KernelParams(0.0, 1.0)
    y_all = bgrid.coords()
    x_all = hgrid.coords()
    u_vals = np.asarray(u.values, float).reshape(-1)
    v_vals = np.asarray(v.values, float).reshape(-1)
    iu = FieldInterpolator(u)
    iv = FieldInterpolator(v)

    def wy(pts):
        return np.linalg.norm(pts, axis=1) ** (-alpha)

    def wx(pts):
        return np.linalg.norm(pts, axis=1) ** (-beta)

    def iv_pow(pts):
        return iv(pts) ** q0

    def iu_pow(pts):
        return iu(pts) ** p0

    out = []
    for tau in taus:
        spec = ReflectionSpec(axis, float(tau), n)
        mu_, au = _violation(u, spec, tol_rel)
        mv_, av = _violation(v, spec, tol_rel)
        i = axis - 1
        ys = np.flatnonzero(y_all[:, i] < tau)
        xs = np.flatnonzero(x_all[:, i] < tau)
        gu = gv = 0.0
        if ys.size and xs.size:
            yp = ys[np.linspace(0, ys.size - 1, min(n_probe, ys.size)).astype(int)]
            xp = xs[np.linspace(0, xs.size - 1, min(n_probe, xs.size)).astype(int)]
            gu = _gg_residual(y_all[yp], x_all[xs], hgrid.weights[xs], v_vals[xs] ** q0, iv_pow,
                              spec, kp, wy, wx, True)
            gv = _gg_residual(x_all[xp], y_all[ys], bgrid.weights[ys], u_vals[ys] ** p0, iu_pow,
                              spec, kp, wx, wy, False)
        out.append(PlaneReport(float(tau), mu_, mv_, au, av, gu, gv))
    return out

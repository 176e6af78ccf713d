"""L^p and Lorentz norms, symmetric decreasing rearrangement and the Riesz check.

Everything acts on the discrete measure space of grid nodes: a field is a
multiset of (value, weight) pairs.  Rearranged fields are placed on radial
shells ordered by radius; when a shell's measure does not match the pieces
assigned to it, the shell is split into sub-shells so that the distribution
function is preserved exactly.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .grid import BoundaryGrid, Field, HalfGrid, StructureError, inner
from .operators import KernelParams, get_operator


class NormDomainError(ValueError):
    """Exponent outside the range where the norm is defined."""


def _weights_of(field: Field, grid=None):
    grid = grid if grid is not None else field.grid
    if grid.size != field.values.size:
        raise StructureError("field does not belong to grid")
    return np.asarray(field.values, float).reshape(-1), grid.weights


def _node_radius(grid):
    return grid.r if grid.kind == "boundary" else grid.radius


def lp_norm(field: Field, grid=None, p=2.0) -> float:
    """(sum |f|^p w)^(1/p); p = inf gives the max norm."""
    p = float(p)
    if not p > 0:
        raise NormDomainError(f"p must be > 0, got {p}")
    v, w = _weights_of(field, grid)
    if math.isinf(p):
        return float(np.max(np.abs(v))) if v.size else 0.0
    return math.fsum(w * np.abs(v) ** p) ** (1.0 / p)


@dataclass(frozen=True)
class RearrangementProfile:
    """Step function f*(t) = values[j] on [t_{j-1}, t_j), t_j = cumulative measure."""

    values: np.ndarray
    measures: np.ndarray

    @property
    def breakpoints(self) -> np.ndarray:
        return np.cumsum(self.measures)

    @property
    def support_measure(self) -> float:
        return math.fsum(self.measures)

    def __call__(self, t):
        t = np.asarray(t, float)
        idx = np.searchsorted(self.breakpoints, t, side="right")
        vals = np.append(self.values, 0.0)
        return vals[np.minimum(idx, self.values.size)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t_left,t_right,value\n")
        left = 0.0
        for t, v in zip(self.breakpoints, self.values):
            buf.write(f"{left!r},{t!r},{v!r}\n")
            left = t
        return buf.getvalue()


def _sorted_nodes(values, weights, radii):
    """Descending by value, ties by ascending radius."""
    order = np.lexsort((radii, -values))
    return values[order], weights[order]


def decreasing_rearrangement(field: Field, grid=None) -> RearrangementProfile:
    """Distribution of |f| as a strictly decreasing step function over its support."""
    v, w = _weights_of(field, grid)
    g = grid if grid is not None else field.grid
    sv, sw = _sorted_nodes(np.abs(v), w, _node_radius(g))
    keep = sv > 0
    sv, sw = sv[keep], sw[keep]
    if sv.size == 0:
        return RearrangementProfile(np.zeros(0), np.zeros(0))
    starts = np.flatnonzero(np.r_[True, sv[1:] != sv[:-1]])
    vals = sv[starts]
    meas = np.array([math.fsum(c) for c in np.split(sw, starts[1:])])
    return RearrangementProfile(vals, meas)


def lorentz_norm(field: Field, grid=None, r=2.0, s=2.0) -> float:
    """(int_0^inf (t^{1/r} f*(t))^s dt/t)^{1/s}, exactly per step; s = inf gives the weak norm."""
    r = float(r)
    s = float(s)
    if not r > 0:
        raise NormDomainError(f"r must be > 0, got {r}")
    if not s > 0:
        raise NormDomainError(f"s must be > 0 or inf, got {s}")
    prof = decreasing_rearrangement(field, grid)
    if prof.values.size == 0:
        return 0.0
    t = prof.breakpoints
    if math.isinf(s):
        return float(np.max(prof.values * t ** (1.0 / r)))
    a = np.r_[0.0, t[:-1]]
    e = s / r
    terms = prof.values ** s * (r / s) * (t ** e - a ** e)
    return math.fsum(terms) ** (1.0 / s)


def _shell_edges(shell_r):
    mid = (shell_r[1:] + shell_r[:-1]) / 2
    return np.r_[shell_r[0], mid, shell_r[-1]]


def _rearrange_on_shells(values, weights, radii, shell_r, shell_w):
    """Place the sorted (value, weight) pairs on shells of increasing radius.

    Returns (radii, weights, values, parent, same): ``parent`` maps each piece
    to its shell and ``same`` means no shell was split.
    """
    sv, sw = _sorted_nodes(values, weights, radii)
    rel = 1e-12
    vals, meas, parent, offset = [], [], [], []
    k, cap, used = 0, float(shell_w[0]), 0.0
    last = shell_w.size - 1
    for v, w in zip(sv, sw):
        left = float(w)
        while True:
            piece = left if k == last else min(left, cap)
            vals.append(v)
            meas.append(piece)
            parent.append(k)
            offset.append(used + piece / 2)
            left -= piece
            cap -= piece
            used += piece
            # remainders at rounding level, relative to the pieces involved, count as zero
            if left <= rel * w:
                meas[-1] += left
                if cap <= rel * shell_w[k] and k < last:
                    k, cap, used = k + 1, float(shell_w[k + 1]), 0.0
                break
            if k < last:
                k, cap, used = k + 1, float(shell_w[k + 1]), 0.0
    vals, meas = np.asarray(vals), np.asarray(meas)
    parent, offset = np.asarray(parent), np.asarray(offset)
    if vals.size == shell_w.size and np.array_equal(parent, np.arange(shell_w.size)):
        return shell_r, shell_w, vals, parent, True
    edges = _shell_edges(shell_r)
    counts = np.bincount(parent, minlength=shell_w.size)
    frac = np.clip(offset / shell_w[parent], 0.0, 1.0)
    new_r = edges[parent] + frac * (edges[parent + 1] - edges[parent])
    whole = counts[parent] == 1
    new_r[whole] = shell_r[parent[whole]]
    return new_r, meas, vals, parent, False


def _radial_structure(grid: BoundaryGrid):
    if grid.kind != "boundary":
        raise StructureError("radial_symmetrize acts on boundary fields")
    A = 1 if not grid.full else grid.angles.size
    if grid.n != 3 and grid.full:
        raise StructureError("full-mode rearrangement is implemented for n = 3")
    return A


def radial_symmetrize(field: Field, grid: BoundaryGrid | None = None) -> Field:
    """Symmetric decreasing rearrangement of |f| on radial shells.

    The result lives on ``grid.reduced()`` unless some shell must be split to
    keep the distribution function exact, in which case a finer radial grid
    is returned with the field.
    """
    grid = grid if grid is not None else field.grid
    _radial_structure(grid)
    v, w = _weights_of(field, grid)
    r_new, w_new, vals, _, same = _rearrange_on_shells(np.abs(v), w, grid.r, grid.shell_r, grid.shell_weights)
    if same:
        out_grid = grid.reduced()
    else:
        out_grid = BoundaryGrid(grid.n, r_new, w_new, None, None, grid.spacing)
    return out_grid.field(vals)


def symmetrize_on_grid(field: Field, grid: BoundaryGrid | None = None) -> Field:
    """Radial decreasing rearrangement averaged back onto the grid's own shells.

    Equimeasurable whenever no shell had to be split; otherwise each shell
    receives the mean of its pieces (L^1 is kept, L^p can only decrease).
    Full-mode fields stay on the full grid, constant on every shell.
    """
    grid = grid if grid is not None else field.grid
    _radial_structure(grid)
    v, w = _weights_of(field, grid)
    _, w_new, vals, parent, same = _rearrange_on_shells(np.abs(v), w, grid.r, grid.shell_r, grid.shell_weights)
    if same:
        shell_vals = vals
    else:
        shell_vals = np.bincount(parent, w_new * vals, grid.shell_r.size) / grid.shell_weights
    if grid.full:
        shell_vals = np.repeat(shell_vals, grid.angles.size)
    return grid.field(shell_vals)


def tangential_symmetrize(g: Field, grid: HalfGrid | None = None) -> Field:
    """Rearrange g in x' for every fixed height x_n (the half-space partner in J)."""
    grid = grid if grid is not None else g.grid
    if grid.kind != "half":
        raise StructureError("tangential_symmetrize acts on half-space fields")
    v = np.abs(np.asarray(g.values, float).reshape(-1))
    A = 1 if not grid.full else grid.angles.size
    heights = np.unique(grid.base_xn)
    rho_out, xn_out, w_out, val_out = [], [], [], []
    same_all = True
    base_index = np.arange(grid.base_rho.size)
    for h in heights:
        cols = base_index[grid.base_xn == h]
        cols = cols[np.argsort(grid.base_rho[cols], kind="stable")]
        node = (cols[:, None] * A + np.arange(A)[None, :]).ravel()
        r_new, w_new, vals, _, same = _rearrange_on_shells(
            v[node], grid.weights[node], grid.rho[node], grid.base_rho[cols], grid.base_weights[cols])
        same_all &= same
        rho_out.append(r_new)
        xn_out.append(np.full(r_new.size, h))
        w_out.append(w_new)
        val_out.append((cols, vals))
    if same_all:
        out = np.empty(grid.base_rho.size)
        for cols, vals in val_out:
            out[cols] = vals
        return grid.reduced().field(out)
    new_grid = HalfGrid(grid.n, np.concatenate(rho_out), np.concatenate(xn_out), np.concatenate(w_out))
    return new_grid.field(np.concatenate([vals for _, vals in val_out]))


@dataclass(frozen=True)
class RieszResult:
    J_before: float
    J_after: float

    @property
    def holds(self) -> bool:
        return self.J_after >= self.J_before - 1e-10

    def as_record(self):
        return {"J_before": self.J_before, "J_after": self.J_after, "holds": self.holds}


def _J(f: Field, g: Field, ip) -> float:
    op = get_operator(f.grid, g.grid, KernelParams.of(ip))
    Vf = g.grid.field(op.V(f.values, ip.alpha, ip.beta))
    return inner(Vf, g)


def riesz_check(f: Field, g: Field, ip) -> RieszResult:
    """J(f, g) against J(f*, g*) with f* radial and g* rearranged in x' per height."""
    if float(ip.alpha) < 0 or float(ip.beta) < 0:
        raise NormDomainError("riesz_check needs alpha >= 0 and beta >= 0")
    if np.any(np.asarray(f.values) < 0) or np.any(np.asarray(g.values) < 0):
        raise NormDomainError("riesz_check needs nonnegative f and g")
    before = _J(f, g, ip)
    after = _J(radial_symmetrize(f), tangential_symmetrize(g), ip)
    return RieszResult(before, after)

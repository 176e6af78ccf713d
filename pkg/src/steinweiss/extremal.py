"""Sharp-constant estimation by alternating Euler-Lagrange ascent.

The functional J(f, g) = <V f, g> is maximised over ||f||_p = ||g||_{q'} = 1.
For fixed f the best g is the normalised (V f)^{1/(q'-1)} and for fixed g the
best f is the normalised (W g)^{1/(p-1)}, so alternating the two updates is
coordinate ascent and J never decreases.  The iteration has almost-flat
directions (dilations and, without weights, translations), so plain
alternation converges slowly; the update map is mixed with a short Anderson
history in log f, and every mixed step that would lower J is discarded in
favour of the plain step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .grid import BoundaryGrid, Field, HalfGrid, StructureError, inner
from .operators import KernelParams, get_operator
from .params import InequalityParams, validate
from .rearrangement import symmetrize_on_grid

log = logging.getLogger(__name__)


class DegenerateStartError(RuntimeError):
    """The initial f has no overlap with the operator (J = 0)."""


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 10_000
    tol_rel: float = 1e-9
    damping: float = 1.0
    symmetrize_each_step: bool = False
    seed: int = 0
    anderson: int = 3
    tol_field: float = 1e-10

    def __post_init__(self):
        if not self.tol_rel > 0:
            raise ValueError("tol_rel must be > 0")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.anderson < 0:
            raise ValueError("anderson depth must be >= 0")

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class ExtremalResult:
    constant_estimate: float
    f: Field
    g: Field
    trace: list
    residuals: dict
    iterations: int
    status: str
    message: str = ""
    damping_final: float = 1.0
    rejected_steps: int = 0
    info: dict = dc_field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def as_record(self) -> dict:
        rec = {
            "constant_estimate": self.constant_estimate,
            "iterations": self.iterations,
            "status": self.status,
            "converged": self.converged,
            "message": self.message,
            "damping_final": self.damping_final,
            "rejected_steps": self.rejected_steps,
        }
        rec.update({f"residual_{k}": v for k, v in self.residuals.items()})
        rec.update(self.info)
        return rec


def _pnorm(v, w, p):
    return math.fsum(w * np.abs(v) ** p) ** (1.0 / p)


def objective(f: Field, g: Field, ip: InequalityParams, bg: BoundaryGrid, hg: HalfGrid, op=None) -> float:
    """J(f, g) = <V f, g> on the half grid."""
    if np.any(np.asarray(f.values) < 0) or np.any(np.asarray(g.values) < 0):
        raise ValueError("objective needs f >= 0 and g >= 0")
    op = op or get_operator(bg, hg, KernelParams.of(ip))
    Vf = op.V(f.values, float(ip.alpha), float(ip.beta))
    return inner(hg.field(Vf), g)


def default_start(ip: InequalityParams, bg: BoundaryGrid) -> np.ndarray:
    """Radial profile (1 + |y|^2)^{-(n-1)/p}."""
    return (1.0 + bg.r ** 2) ** (-(ip.n - 1) / float(ip.p))


def random_start(ip: InequalityParams, bg: BoundaryGrid, seed: int) -> np.ndarray:
    """Off-centre, noisy version of the default profile (non-radial on full grids)."""
    rng = np.random.default_rng(seed)
    y = bg.coords()
    c = rng.uniform(-0.5, 0.5, y.shape[1])
    base = (1.0 + np.sum((y - c) ** 2, axis=1)) ** (-(ip.n - 1) / float(ip.p))
    return base * (1.0 + 0.5 * rng.random(bg.size))


class _Ascent:
    """One alternating step with cached operator and exponents."""

    def __init__(self, ip, bg, hg, op, symmetrize):
        self.ip, self.bg, self.hg, self.op = ip, bg, hg, op
        self.alpha, self.beta = float(ip.alpha), float(ip.beta)
        self.p, self.qp = float(ip.p), float(ip.q_prime)
        self.p0, self.q0 = 1.0 / (self.p - 1.0), 1.0 / (self.qp - 1.0)
        self.symmetrize = symmetrize
        self.evals = 0

    def norm_f(self, f):
        return f / _pnorm(f, self.bg.weights, self.p)

    def half_step(self, f):
        """J(f) and the optimal g for f (f already normalised)."""
        self.evals += 1
        Vf = self.op.V(f, self.alpha, self.beta)
        h = Vf ** self.q0
        nh = _pnorm(h, self.hg.weights, self.qp)
        if not nh > 0:
            return 0.0, None, Vf
        g = h / nh
        return math.fsum(self.hg.weights * Vf * g), g, Vf

    def f_update(self, g):
        fn = self.op.W(g, self.alpha, self.beta) ** self.p0
        fn = self.norm_f(fn)
        if self.symmetrize:
            fn = self.norm_f(symmetrize_on_grid(self.bg.field(fn)).values.reshape(-1))
        return fn


def power_iterate(ip: InequalityParams, bg: BoundaryGrid, hg: HalfGrid,
                  opts: SolveOptions = SolveOptions(), f0=None, op=None) -> ExtremalResult:
    """Alternating Euler-Lagrange ascent for the sharp constant."""
    report = validate(ip)
    if not report.verdict:
        raise ValueError(f"inadmissible parameters: {', '.join(report.failing())}")
    op = op or get_operator(bg, hg, KernelParams.of(ip))
    st = _Ascent(ip, bg, hg, op, opts.symmetrize_each_step)
    f = default_start(ip, bg) if f0 is None else np.asarray(getattr(f0, "values", f0), float).reshape(-1)
    if np.any(f < 0) or not np.any(f > 0):
        raise DegenerateStartError("initial f must be nonnegative and nonzero")
    f = st.norm_f(f)
    J, g, _ = st.half_step(f)
    if not J > 0:
        raise DegenerateStartError("J vanishes at the initial f (no overlap with the kernel)")
    trace = [J]
    theta = opts.damping
    hist_x, hist_r = [], []
    status, message = "max_iters", f"iteration cap {opts.max_iters} reached"
    rejected = 0
    k = 0
    g_prev = g
    while k < opts.max_iters:
        k += 1
        f_plain = st.f_update(g)
        if theta < 1:
            f_plain = st.norm_f((1 - theta) * f + theta * f_plain)
        field_res = float(np.max(np.abs(f_plain - f)) / np.max(f))
        # Anderson mixing in log f on the undamped map
        cand = None
        if opts.anderson > 0 and np.all(f_plain > 0) and np.all(f > 0):
            x, tx = np.log(f), np.log(f_plain)
            hist_x.append(x)
            hist_r.append(tx - x)
            del hist_x[:-opts.anderson - 1], hist_r[:-opts.anderson - 1]
            if len(hist_r) > 1:
                dR = np.diff(np.asarray(hist_r), axis=0).T
                dX = np.diff(np.asarray(hist_x), axis=0).T
                gam = np.linalg.lstsq(dR, hist_r[-1], rcond=None)[0]
                xc = x + hist_r[-1] - (dX + dR) @ gam
                if np.all(np.isfinite(xc)):
                    cand = np.exp(xc - np.max(xc))
                    if opts.symmetrize_each_step:
                        cand = symmetrize_on_grid(bg.field(cand)).values.reshape(-1)
                    cand = st.norm_f(cand)
        J_new, g_new, f_new = None, None, None
        if cand is not None:
            Jc, gc, _ = st.half_step(cand)
            if Jc >= J * (1 - 1e-15):
                J_new, g_new, f_new = Jc, gc, cand
            else:
                rejected += 1
                hist_x.clear()
                hist_r.clear()
        if f_new is None:
            Jp, gp, _ = st.half_step(f_plain)
            if Jp < J * (1 - 10 * opts.tol_rel):
                # coordinate ascent cannot lower J in exact arithmetic; damp and retry
                theta /= 2
                hist_x.clear()
                hist_r.clear()
                if theta < 1e-4:
                    status = "non_monotone"
                    message = f"J decreased from {J!r} to {Jp!r} at iteration {k} despite damping"
                    break
                continue
            J_new, g_new, f_new = Jp, gp, f_plain
        rel = abs(J_new - J) / J_new
        # an accepted Anderson step can be longer than the plain-map residual
        step = float(np.max(np.abs(f_new - f)) / np.max(f))
        g_prev = g
        f, g, J = f_new, g_new, J_new
        trace.append(J)
        if rel < opts.tol_rel and max(field_res, step) < opts.tol_field:
            status, message = "converged", f"relative J change {rel:.3e}, field change {max(field_res, step):.3e}"
            break
    # returned g is the partner produced by the previous f, so the
    # g-consistency residual below measures genuine convergence
    g_out = g_prev if status == "converged" else g
    Vf = op.V(f, st.alpha, st.beta)
    h = Vf ** st.q0
    c0 = math.fsum(hg.weights * g_out * h) / math.fsum(hg.weights * h * h)
    g_cons = float(np.max(np.abs(g_out - c0 * h)) / np.max(np.abs(g_out)))
    f_next = st.f_update(st.half_step(f)[1])
    el_res = float(np.max(np.abs(f_next - f)) / np.max(f))
    residuals = {"el": el_res, "g_consistency": g_cons,
                 "norm_f": _pnorm(f, bg.weights, st.p) - 1.0,
                 "norm_g": _pnorm(g_out, hg.weights, st.qp) - 1.0}
    trace_arr = np.asarray(trace)
    drops = np.diff(trace_arr)
    residuals["max_trace_drop"] = float(max(0.0, -drops.min() / trace_arr[-1])) if drops.size else 0.0
    from .symmetry import symmetry_deviation
    rad, mono = symmetry_deviation(bg.field(f))
    residuals["symmetry_radial"], residuals["symmetry_monotone"] = rad, mono
    return ExtremalResult(J, bg.field(f), hg.field(g_out), trace, residuals, k, status, message,
                          theta, rejected, {"operator_evals": st.evals, "c0": c0})


@dataclass(frozen=True)
class DilationResult:
    field: Field
    truncated: bool
    lost_fraction: float


def _log_interp(r_src, vals, r_query):
    """Interpolate along increasing radii in log r; log-log when positive, power-law tails."""
    lr = np.log(r_src)
    lq = np.log(r_query)
    pos = np.all(vals > 0)
    y = np.log(vals) if pos else vals
    out = np.interp(lq, lr, y)
    if lr.size >= 2:
        lo = lq < lr[0]
        hi = lq > lr[-1]
        s_lo = (y[1] - y[0]) / (lr[1] - lr[0])
        s_hi = (y[-1] - y[-2]) / (lr[-1] - lr[-2])
        out[lo] = y[0] + s_lo * (lq[lo] - lr[0])
        out[hi] = y[-1] + s_hi * (lq[hi] - lr[-1])
    return np.exp(out) if pos else out


def dilation_normalize(f: Field, kappa: float, p) -> DilationResult:
    """f^kappa(y) = kappa^{-(n-1)/p} f(y / kappa), resampled on the same grid."""
    kappa = float(kappa)
    if not kappa > 0:
        raise ValueError("kappa must be > 0")
    grid = f.grid
    if grid.kind != "boundary":
        raise StructureError("dilation acts on boundary fields")
    n, p = grid.n, float(p)
    r = grid.shell_r
    A = 1 if not grid.full else grid.angles.size
    vals = np.asarray(f.values, float).reshape(r.size, A)
    out = np.empty_like(vals)
    for a in range(A):
        out[:, a] = _log_interp(r, vals[:, a], r / kappa)
    out *= kappa ** (-(n - 1) / p)
    # mass of f whose image lands outside the grid
    w = grid.weights.reshape(r.size, A)
    mass = np.abs(vals) ** p * w
    gone = (r * kappa < r[0]) | (r * kappa > r[-1])
    total = mass.sum()
    lost = float(mass[gone].sum() / total) if total > 0 else 0.0
    return DilationResult(grid.field(out.reshape(grid.shape)), lost > 1e-3, lost)


def concentration_diagnostic(f: Field, p) -> float:
    """A(f) = sup_kappa kappa^{-(n-1)/p} f(e_1 / kappa) over grid radii 1/kappa."""
    grid = f.grid
    n, p = grid.n, float(p)
    r = grid.shell_r
    A = 1 if not grid.full else grid.angles.size
    vals = np.asarray(f.values, float).reshape(r.size, A)[:, 0]
    return float(np.max(r ** ((n - 1) / p) * vals))


def concentration_trend(values, rel=1e-3) -> bool:
    """True when A(f_k) decreases steadily along a sequence (mass escaping)."""
    v = np.asarray(values, float)
    if v.size < 3:
        return False
    d = np.diff(v)
    return bool(np.all(d < 0) and (v[0] - v[-1]) > rel * abs(v[0]))

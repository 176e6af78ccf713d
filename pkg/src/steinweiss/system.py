"""Fixed-point solvers for the doubly weighted and single-weight integral systems.

Doubly weighted system:
    u(y) = |y|^-a  int |x|^-b P(x, y) v(x)^q0 dx,   v(x) = |x|^-b int |y|^-a P(x, y) u(y)^p0 dy.
Single-weight system: the u-equation keeps only |x|^-b, the v-equation only |y|^-a.

The composite map u -> T(u) is homogeneous of degree p0 q0, so the iteration
runs on ||u||_{p0+1} = 1 and the eigenvalue c = ||T(u)|| is tracked apart.
A true solution is recovered as kappa u with kappa^{p0 q0 - 1} = 1 / c.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .grid import BoundaryGrid, Field, GridSpec, HalfGrid, build_grids
from .operators import KernelParams, get_operator
from .params import SystemParams, asymptotic_hypotheses, pohozaev_residual, regularity_window

log = logging.getLogger(__name__)

DIVERGENCE_LEVEL = 1e100


class PreconditionError(ValueError):
    """Input is not a converged solution where one is required."""


@dataclass(frozen=True)
class SystemOptions:
    max_iters: int = 10_000
    tol: float = 1e-10
    damping: float | None = None  # None: 0.5 when p0 or q0 exceeds 3, else 1
    anderson: int = 3

    def damping_for(self, sys: SystemParams) -> float:
        if self.damping is not None:
            return float(self.damping)
        return 0.5 if (float(sys.p0) > 3 or float(sys.q0) > 3) else 1.0


@dataclass
class SystemSolution:
    u: Field
    v: Field
    sys: SystemParams
    residual: float
    iterations: int
    status: str
    single_weight: bool = False
    eigenvalue: float = float("nan")
    scale: float = 1.0
    history: list = dc_field(default_factory=list)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def as_record(self) -> dict:
        return {"status": self.status, "residual": self.residual, "iterations": self.iterations,
                "single_weight": self.single_weight, "eigenvalue": self.eigenvalue,
                "scale": self.scale, "message": self.message,
                "normalization": "iterate ||u||_{p0+1} = 1, rescaled by c^(-1/(p0 q0 - 1))"}


class _SystemMap:
    """Doubly weighted map; single-weight systems run through the substitution
    U = |y|^a u, V = |x|^b v, which turns weights (a (p0+1), b (q0+1)) of the
    single-weight system into weights (a, b) of the doubly weighted one.
    """

    def __init__(self, sys, bg, hg, op, single_weight):
        self.sys, self.bg, self.hg, self.op = sys, bg, hg, op
        self.p0, self.q0 = float(sys.p0), float(sys.q0)
        self.single = single_weight
        a, b = float(sys.alpha), float(sys.beta)
        if single_weight:
            a, b = a / (self.p0 + 1), b / (self.q0 + 1)
        self.a, self.b = a, b
        self.y_w = bg.r ** a   # U = y_w * u
        self.x_w = hg.radius ** b

    def v_of(self, u):
        return self.op.V(u ** self.p0, self.a, self.b)

    def u_of(self, v):
        return self.op.W(v ** self.q0, self.a, self.b)

    def norm(self, u):
        return math.fsum(self.bg.weights * np.abs(u) ** (self.p0 + 1)) ** (1.0 / (self.p0 + 1))

    def ascent_value(self, u, v):
        """||V f||_{q0+1} / ||f||_{1+1/p0} with f = u^p0; never decreases along the plain map."""
        f = u ** self.p0
        nf = math.fsum(self.bg.weights * f ** (1 + 1 / self.p0)) ** (1 / (1 + 1 / self.p0))
        nv = math.fsum(self.hg.weights * v ** (self.q0 + 1)) ** (1 / (self.q0 + 1))
        return nv / nf

    def to_external(self, u, v):
        if self.single:
            return u * self.y_w, v * self.x_w
        return u, v

    def to_internal(self, u):
        return u / self.y_w if self.single else u


def _solve(sys, bg, hg, opts, single_weight, u0, op):
    op = op or get_operator(bg, hg, KernelParams(float(sys.lam), float(sys.mu)))
    m = _SystemMap(sys, bg, hg, op, single_weight)
    if u0 is None:
        u = (1.0 + bg.r ** 2) ** (-(bg.n - 1) / (float(sys.p0) + 1))
    else:
        u = m.to_internal(np.asarray(getattr(u0, "values", u0), float).reshape(-1).copy())
    zero = bg.field(np.zeros(bg.size)), hg.field(np.zeros(hg.size))
    if np.any(u < 0):
        raise ValueError("initial u must be nonnegative")
    if not np.any(u > 0):
        return SystemSolution(*zero, sys, math.inf, 0, "degenerate", single_weight,
                              message="zero initial u collapses to the trivial solution")
    u = u / m.norm(u)
    theta = opts.damping_for(sys)
    hist_x, hist_r = [], []
    history = []
    status, message = "max_iters", f"iteration cap {opts.max_iters} reached"
    J_prev = -math.inf
    plain_prev = None
    c = math.nan
    k = 0
    rejected = 0
    while k < opts.max_iters:
        k += 1
        v = m.v_of(u)
        Tu = m.u_of(v)
        c = m.norm(Tu)
        if not np.isfinite(c) or c > DIVERGENCE_LEVEL or not np.all(np.isfinite(v)):
            status, message = "diverged", f"values exceeded {DIVERGENCE_LEVEL:g} at iteration {k}"
            break
        if c == 0 or not np.any(Tu > 0):
            status, message = "degenerate", f"iterate collapsed to zero at iteration {k}"
            break
        J = m.ascent_value(u, v)
        if plain_prev is not None and J < J_prev * (1 - 1e-15):
            # the mixed step lowered the ascent functional: take the plain step instead
            rejected += 1
            hist_x.clear()
            hist_r.clear()
            u = plain_prev
            plain_prev = None
            continue
        J_prev = J
        Tn = Tu / c
        res = float(np.max(np.abs(Tn - u)) / np.max(np.abs(u)))
        history.append(res)
        if res < opts.tol:
            status, message = "converged", f"sup-norm update {res:.3e}"
            break
        new = (1 - theta) * u + theta * Tn if theta < 1 else Tn
        new = new / m.norm(new)
        plain_prev = None
        if opts.anderson > 0 and np.all(new > 0) and np.all(u > 0):
            x = np.log(u)
            hist_x.append(x)
            hist_r.append(np.log(new) - x)
            del hist_x[:-opts.anderson - 1], hist_r[:-opts.anderson - 1]
            if len(hist_r) > 1:
                dR = np.diff(np.asarray(hist_r), axis=0).T
                dX = np.diff(np.asarray(hist_x), axis=0).T
                gam = np.linalg.lstsq(dR, hist_r[-1], rcond=None)[0]
                xc = x + hist_r[-1] - (dX + dR) @ gam
                if np.all(np.isfinite(xc)):
                    cand = np.exp(xc - np.max(xc))
                    plain_prev = new
                    new = cand / m.norm(cand)
        u = new
    pq = float(sys.p0) * float(sys.q0)
    kappa = 1.0
    if status == "converged" and abs(pq - 1) > 1e-12 and c > 0:
        log_kappa = -math.log(c) / (pq - 1)
        if log_kappa > math.log(DIVERGENCE_LEVEL):
            status, message = "diverged", "rescaled solution exceeds the divergence level"
        else:
            kappa = math.exp(log_kappa)
    msg = message + (f"; {rejected} mixed steps rejected" if rejected else "")
    if status == "diverged":
        ue, ve = m.to_external(u, m.v_of(u))
        return SystemSolution(bg.field(ue), hg.field(ve), sys, math.inf, k, status,
                              single_weight, c, kappa, history, msg)
    u_true = kappa * u
    ue, ve = m.to_external(u_true, m.v_of(u_true))
    return SystemSolution(bg.field(ue), hg.field(ve), sys, history[-1] if history else math.inf,
                          k, status, single_weight, c, kappa, history, msg)


def solve_system(sys: SystemParams, bg: BoundaryGrid, hg: HalfGrid, opts: SystemOptions = SystemOptions(),
                 u0=None, op=None) -> SystemSolution:
    """Doubly weighted system by normalised fixed-point iteration."""
    if not sys.balanced():
        log.info("system balance fails (slack %s); solving anyway", sys.balance_slack())
    return _solve(sys, bg, hg, opts, False, u0, op)


def solve_single_weight(sys: SystemParams, bg: BoundaryGrid, hg: HalfGrid,
                        opts: SystemOptions = SystemOptions(), u0=None, op=None) -> SystemSolution:
    """Single-weight system (|x|^-b in the u-equation, |y|^-a in the v-equation)."""
    return _solve(sys, bg, hg, opts, True, u0, op)


def fixed_point_defect(sol: SystemSolution, op=None) -> float:
    """Sup-norm change of (u, v) when the right-hand sides are re-applied once."""
    bg, hg = sol.u.grid, sol.v.grid
    sys = sol.sys
    op = op or get_operator(bg, hg, KernelParams(float(sys.lam), float(sys.mu)))
    a, b = float(sys.alpha), float(sys.beta)
    p0, q0 = float(sys.p0), float(sys.q0)
    u = np.asarray(sol.u.values, float).reshape(-1)
    v = np.asarray(sol.v.values, float).reshape(-1)
    if sol.single_weight:
        u_new = op.W(v ** q0, 0.0, b)
        v_new = op.V(u ** p0, a, 0.0)
    else:
        u_new = op.W(v ** q0, a, b)
        v_new = op.V(u ** p0, a, b)
    du = np.max(np.abs(u_new - u)) / np.max(np.abs(u))
    dv = np.max(np.abs(v_new - v)) / np.max(np.abs(v))
    return float(max(du, dv))


# --- asymptotics near the origin -------------------------------------------

@dataclass(frozen=True)
class AsymptoticReport:
    lhs_u: float
    rhs_u: float
    lhs_v: float
    rhs_v: float
    skipped_u: str = ""
    skipped_v: str = ""
    samples_u: tuple = ()
    samples_v: tuple = ()

    @property
    def error_u(self) -> float:
        return abs(self.lhs_u - self.rhs_u) / abs(self.rhs_u) if not self.skipped_u else math.nan

    @property
    def error_v(self) -> float:
        return abs(self.lhs_v - self.rhs_v) / abs(self.rhs_v) if not self.skipped_v else math.nan

    def as_record(self):
        return {"lhs_u": self.lhs_u, "rhs_u": self.rhs_u, "error_u": self.error_u, "skipped_u": self.skipped_u,
                "lhs_v": self.lhs_v, "rhs_v": self.rhs_v, "error_v": self.error_v, "skipped_v": self.skipped_v}


def _extrapolate_to_zero(radii, values, count=5):
    """Least-squares line in the radius through the ``count`` innermost samples, read at 0."""
    order = np.argsort(radii)[:count]
    r, y = radii[order], values[order]
    A = np.stack([np.ones_like(r), r], axis=1)
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(coef[0]), tuple(zip(r.tolist(), y.tolist()))


def _innermost_half_nodes(hg: HalfGrid, count=5):
    shape = hg.base_shape
    if not hg.full and len(shape) == 2:
        R = hg.base_rho.reshape(shape)
        k = min(count, shape[0], shape[1])
        return np.array([i * shape[1] + i for i in range(k)])
    rad = hg.radius
    return np.argsort(rad, kind="stable")[:count]


def asymptotic_check(sol: SystemSolution, count: int = 5) -> AsymptoticReport:
    """Extrapolated u |y|^a and v |x|^b / x_n^lam at the origin against their limit integrals."""
    sys = sol.sys
    bg, hg = sol.u.grid, sol.v.grid
    a, b = float(sys.alpha), float(sys.beta)
    lam, mu = float(sys.lam), float(sys.mu)
    p0, q0 = float(sys.p0), float(sys.q0)
    hyp = asymptotic_hypotheses(sys)
    u = np.asarray(sol.u.values, float).reshape(-1)
    v = np.asarray(sol.v.values, float).reshape(-1)
    # single-weight u carries no |y|^-a prefactor, and v no |x|^-b
    ua = 0.0 if sol.single_weight else a
    vb = 0.0 if sol.single_weight else b
    skipped_u = "" if hyp["u"] > 0 else f"u-limit hypothesis fails (slack {float(hyp['u']):.4g})"
    skipped_v = "" if hyp["v"] > 0 else f"v-limit hypothesis fails (slack {float(hyp['v']):.4g})"
    lhs_u = rhs_u = lhs_v = rhs_v = math.nan
    su = sv = ()
    if not skipped_u:
        r = bg.r
        lhs_u, su = _extrapolate_to_zero(r, u * r ** ua, count)
        X = hg.radius
        rhs_u = math.fsum(hg.weights * hg.xn ** lam * v ** q0 * X ** (-(mu + b)))
    if not skipped_v:
        idx = _innermost_half_nodes(hg, count)
        X = hg.radius
        lhs_v, sv = _extrapolate_to_zero(X[idx], v[idx] * X[idx] ** vb / hg.xn[idx] ** lam, count)
        rhs_v = math.fsum(bg.weights * u ** p0 * bg.r ** (-(a + mu)))
    return AsymptoticReport(lhs_u, rhs_u, lhs_v, rhs_v, skipped_u, skipped_v, su, sv)


# --- Pohozaev balance -------------------------------------------------------

@dataclass(frozen=True)
class PohozaevReport:
    lhs: float
    rhs: float
    residual: float
    residual_rel: float
    A: float
    B: float
    I: float
    parameter_residual: float

    def as_record(self):
        return dict(self.__dict__)


def pohozaev_check(sol: SystemSolution, op=None, max_residual: float = 1e-4) -> PohozaevReport:
    """Both sides of the integrated energy identity on a single-weight solution."""
    sys = sol.sys
    bg, hg = sol.u.grid, sol.v.grid
    u = np.asarray(sol.u.values, float).reshape(-1)
    v = np.asarray(sol.v.values, float).reshape(-1)
    par = float(pohozaev_residual(sys))
    if not np.any(u != 0) and not np.any(v != 0):
        return PohozaevReport(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, par)
    if not sol.residual <= max_residual:
        raise PreconditionError(f"fixed-point residual {sol.residual:.3e} exceeds {max_residual:g}")
    n = bg.n
    a, b = float(sys.alpha), float(sys.beta)
    p0, q0 = float(sys.p0), float(sys.q0)
    lam, mu = float(sys.lam), float(sys.mu)
    op = op or get_operator(bg, hg, KernelParams(lam, mu))
    A = math.fsum(bg.weights * bg.r ** (-a) * u ** (p0 + 1))
    B = math.fsum(hg.weights * hg.radius ** (-b) * v ** (q0 + 1))
    if not (np.isfinite(A) and np.isfinite(B)) or max(A, B) > DIVERGENCE_LEVEL:
        raise PreconditionError("weighted norms are infinite or huge")
    # double integral of |y|^-a |x|^-b P u^p0 v^q0, evaluated through V
    inner_v = op.V(u ** p0, a, b)
    I = math.fsum(hg.weights * inner_v * v ** q0)
    lhs = -(n - 1 - a) / (p0 + 1) * A - (n - b) / (q0 + 1) * B
    rhs = -(mu - lam) * I
    diff = abs(lhs - rhs)
    return PohozaevReport(lhs, rhs, diff / max(abs(lhs), abs(rhs), 1.0),
                          diff / max(abs(lhs), abs(rhs), 1e-300), A, B, I, par)


# --- truncation sweeps -------------------------------------------------------

def sweep_specs(spec: GridSpec, r_max_values) -> list:
    """Grid specs with growing r_max at fixed nodes per decade."""
    per_decade_r = (spec.n_radial - 1) / math.log10(spec.r_max / spec.r_min)
    per_decade_h = (spec.n_height - 1) / math.log10(spec.r_max / spec.r_min)
    out = []
    for R in r_max_values:
        dec = math.log10(R / spec.r_min)
        out.append(spec.replace(r_max=float(R), n_radial=int(round(per_decade_r * dec)) + 1,
                                n_height=int(round(per_decade_h * dec)) + 1))
    return out


def scaling_exponents(sys: SystemParams, single_weight: bool = True):
    """(a_u, a_v) with u_s(y) = s^{a_u} u(s y), v_s(x) = s^{a_v} v(s x) again solutions."""
    n = sys.n
    a, b = float(sys.alpha), float(sys.beta)
    lam, mu = float(sys.lam), float(sys.mu)
    p0, q0 = float(sys.p0), float(sys.q0)
    # u-equation: a_u = q0 a_v - n + mu - lam + (b, plus a when doubly weighted)
    cu = -n + mu - lam + b + (0.0 if single_weight else a)
    cv = -(n - 1) + mu - lam + a + (0.0 if single_weight else b)
    pq = p0 * q0
    if abs(pq - 1) < 1e-14:
        return math.nan, math.nan
    a_u = (q0 * cv + cu) / (1 - pq)
    a_v = p0 * a_u + cv
    return a_u, a_v


def norm_scaling_exponent(sys: SystemParams, single_weight: bool = True) -> float:
    """e with int |y|^-a u_s^{p0+1} dy = s^e int |y|^-a u^{p0+1} dy; zero exactly when balanced."""
    a_u, _ = scaling_exponents(sys, single_weight)
    return (float(sys.p0) + 1) * a_u - (sys.n - 1) + float(sys.alpha)


def scale_radius(u: Field, power: float, weight_power: float = 0.0) -> float:
    """Geometric mean radius under the measure w |y|^-weight_power |u|^power.

    Moves exactly with the dilation parameter, unlike a node-valued median.
    """
    g = u.grid
    m = g.weights * g.r ** (-weight_power) * np.abs(np.asarray(u.values, float).reshape(-1)) ** power
    return float(math.exp(math.fsum(m * np.log(g.r)) / math.fsum(m)))


@dataclass(frozen=True)
class RegularityReport:
    window: object
    r_max: tuple
    rows: tuple  # (kind, inv_exp, inside, norms, last_change, stabilised)
    message: str = ""

    def as_record(self):
        return {"window_inv_r": str(self.window.inv_r), "window_inv_s": str(self.window.inv_s),
                "r_max": list(self.r_max), "message": self.message,
                "rows": [dict(kind=k, inv=i, inside=ins, norms=list(nm), last_change=lc, stabilised=st)
                         for k, i, ins, nm, lc, st in self.rows]}


def regularity_probe(sys: SystemParams, spec: GridSpec, inv_r=(), inv_s=(), r_max_values=(250, 500, 1000),
                     opts: SystemOptions = SystemOptions(), single_weight=True, stable_tol=0.02,
                     solutions=None) -> RegularityReport:
    """||u||_r and ||v||_s along an r_max sweep, normalised to a common dilation scale.

    Solutions of the balanced system form a dilation family and the
    truncation picks a member that drifts with r_max; every solution is
    therefore compared at the dilation where its scale radius is 1.
    """
    window = regularity_window(sys)
    if window.inv_r.empty and window.inv_s.empty:
        return RegularityReport(window, tuple(r_max_values), (), "window empty")
    if solutions is None:
        solutions = []
        for sp in sweep_specs(spec, r_max_values):
            bg, hg = build_grids(sp)
            solve = solve_single_weight if single_weight else solve_system
            solutions.append(solve(sys, bg, hg, opts))
    a_u, a_v = scaling_exponents(sys, single_weight)
    n = sys.n
    p0 = float(sys.p0)
    rows = []
    for kind, invs in (("u", inv_r), ("v", inv_s)):
        for inv in invs:
            inv = float(inv)
            win = window.inv_r if kind == "u" else window.inv_s
            inside = inv in win
            norms = []
            for sol in solutions:
                if not sol.converged:
                    norms.append(math.inf)
                    continue
                f = sol.u if kind == "u" else sol.v
                R = scale_radius(sol.u, p0 + 1, float(sys.alpha))
                vals = np.abs(np.asarray(f.values, float).reshape(-1))
                raw = math.fsum(f.grid.weights * vals ** (1.0 / inv)) ** inv if inv > 0 else float(vals.max())
                # norm of the dilate with scale radius 1: s = R
                expo = a_u if kind == "u" else a_v
                dim = n - 1 if kind == "u" else n
                norms.append(raw * R ** (expo - dim * inv))
            change = abs(norms[-1] / norms[-2] - 1) if len(norms) > 1 and np.isfinite(norms[-2]) else math.inf
            rows.append((kind, inv, inside, tuple(norms), change, change <= stable_tol))
    return RegularityReport(window, tuple(r_max_values), tuple(rows))


@dataclass(frozen=True)
class DivergenceReport:
    r_max: tuple
    statuses: tuple
    norms_A: tuple
    norms_B: tuple
    growth: tuple
    witnessed: bool
    predicted_growth: float = math.nan

    def as_record(self):
        return dict(r_max=list(self.r_max), statuses=list(self.statuses), norms_A=list(self.norms_A),
                    norms_B=list(self.norms_B), growth=list(self.growth), witnessed=self.witnessed,
                    predicted_growth=self.predicted_growth)


def divergence_sweep(sys: SystemParams, spec: GridSpec, r_max_values, opts: SystemOptions = SystemOptions(),
                     single_weight=True, growth_factor=10.0) -> DivergenceReport:
    """Solve along an r_max sweep and look for divergence or exploding weighted norms."""
    statuses, NA, NB = [], [], []
    a, b = float(sys.alpha), float(sys.beta)
    p0, q0 = float(sys.p0), float(sys.q0)
    for sp in sweep_specs(spec, r_max_values):
        bg, hg = build_grids(sp)
        solve = solve_single_weight if single_weight else solve_system
        sol = solve(sys, bg, hg, opts)
        statuses.append(sol.status)
        if sol.status == "converged":
            u = np.asarray(sol.u.values, float).reshape(-1)
            v = np.asarray(sol.v.values, float).reshape(-1)
            NA.append(math.fsum(bg.weights * bg.r ** (-a) * u ** (p0 + 1)))
            NB.append(math.fsum(hg.weights * hg.radius ** (-b) * v ** (q0 + 1)))
        else:
            NA.append(math.inf)
            NB.append(math.inf)
    growth = []
    for i in range(1, len(NA)):
        if np.isfinite(NA[i - 1]) and np.isfinite(NA[i]) and NA[i - 1] > 0:
            growth.append(max(NA[i] / NA[i - 1], NB[i] / NB[i - 1]))
        else:
            growth.append(math.inf)
    witnessed = any(s == "diverged" for s in statuses) or any(gr > growth_factor for gr in growth)
    # a solution whose scale follows the outer cut-off changes its norm by 2^-e per doubling
    predicted = 2.0 ** (-norm_scaling_exponent(sys, single_weight))
    return DivergenceReport(tuple(r_max_values), tuple(statuses), tuple(NA), tuple(NB), tuple(growth),
                            witnessed, predicted)

"""Kernel P_lambda(x, y, mu) and the doubly weighted operators V and W.

For axially symmetric grids the boundary integral is reduced to a radial
one: the kernel is integrated exactly over the tangential sphere S^{n-2}
(Gauss hypergeometric closed form) and then against the piecewise-linear
hat basis of the radial shells with graded Gauss-Legendre panels.  The
resulting dense matrix ``M[h, k]`` is ``w_k`` times the hat-averaged kernel,
so V and W are plain weighted sums and exact adjoints of each other.

Full mode (n = 3) splits each shell integral over angular sectors; the
sector fractions only depend on the angle difference, which makes the
operator circulant in angle and lets it be applied by FFT.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import beta as beta_fn, hyp2f1

from .grid import BoundaryGrid, Field, HalfGrid, StructureError, inner, sphere_area
from .params import InequalityParams

log = logging.getLogger(__name__)

GAUSS_ORDER = 8
SECTOR_ORDER = 16


class KernelDomainError(ValueError):
    """Kernel evaluated at a point with x_n <= 0."""


@dataclass(frozen=True)
class KernelParams:
    lam: float = 0.0
    mu: float = 1.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise KernelDomainError(f"lambda must be >= 0, got {self.lam}")
        if not self.mu > 0:
            raise KernelDomainError(f"mu must be > 0, got {self.mu}")

    @classmethod
    def of(cls, ip) -> "KernelParams":
        return cls(float(ip.lam), float(ip.mu))


def kernel(x, y, kp: KernelParams):
    """x_n^lambda (|x'-y|^2 + x_n^2)^(-mu/2); x has n coords, y has n-1.

    Broadcasts over leading axes.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    xn = x[..., -1]
    if np.any(xn <= 0):
        raise KernelDomainError("kernel needs x_n > 0")
    d2 = np.sum((x[..., :-1] - y) ** 2, axis=-1) + xn ** 2
    return xn ** kp.lam * d2 ** (-kp.mu / 2)


def kernel_grad_dot(x, y, kp: KernelParams):
    """(x . grad_x P, y . grad_y P) at the pair (x, y)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    P = kernel(x, y, kp)
    d = x[..., :-1] - y
    d2 = np.sum(d ** 2, axis=-1) + x[..., -1] ** 2
    xgrad = kp.lam * P - kp.mu * P * (np.sum(d * x[..., :-1], axis=-1) + x[..., -1] ** 2) / d2
    ygrad = kp.mu * P * np.sum(d * y, axis=-1) / d2
    return xgrad, ygrad


NEAR_SINGULAR = 1e-7
_GX10, _GW10 = np.polynomial.legendre.leggauss(10)
_GX24, _GW24 = np.polynomial.legendre.leggauss(24)


def _angular_near(D, b, s, nu):
    """Polar-angle integral when the target nearly touches the shell.

    With t = sin(theta/2) the integrand is (D + 2 b t^2)^-s; the peak at t = 0
    is resolved by t = delta sinh(u), the rest of [0, pi] is smooth.
    """
    dl = np.sqrt(D / (2 * b))[:, None]
    U = np.arcsinh(0.5 / dl)
    # the integrand varies like exp(c u) for large u, so panels stay about unit length
    K = int(math.ceil(float(U.max()))) + 1
    near = 0.0
    for k in range(K):
        a_, b_ = U * k / K, U * (k + 1) / K
        half = (b_ - a_) / 2
        u = (a_ + b_) / 2 + half * _GX10
        t = dl * np.sinh(u)
        ch = np.cosh(u)
        f = (dl * ch) ** (-2 * s) * (2 * t) ** (2 * nu) * (1 - t * t) ** (nu - 0.5) * 2 * dl * ch
        near = near + np.sum(half * _GW10 * f, axis=1)
    near = near * (2 * b) ** (-s)
    th0 = 2 * math.asin(0.5)
    th = (th0 + math.pi) / 2 + (math.pi - th0) / 2 * _GX24
    wt = (math.pi - th0) / 2 * _GW24
    far = ((D[:, None] + 2 * b[:, None] * np.sin(th / 2) ** 2) ** (-s) * np.sin(th) ** (2 * nu)) @ wt
    return near + far


def angular_kernel(rho, xn, r, n: int, kp: KernelParams):
    """Integral of P over the sphere |y| = r in R^{n-1} (unit-sphere measure).

    With D = (rho - r)^2 + x_n^2, b = 2 rho r and m = 2b / (D + 2b),
        int_0^pi (D + b - b cos t)^(-s) sin^(2nu) t dt
            = (D + 2b)^(-s) 4^nu B(nu+1/2, nu+1/2) 2F1(s, nu+1/2; 2nu+1; m),
    and D is kept separate so that 1 - m never cancels; when 1 - m is tiny
    a direct graded quadrature replaces the hypergeometric function.
    """
    rho, xn, r = np.broadcast_arrays(np.asarray(rho, float), np.asarray(xn, float), np.asarray(r, float))
    s = kp.mu / 2
    nu = (n - 3) / 2
    D = (rho - r) ** 2 + xn ** 2
    b = 2.0 * rho * r
    apb = D + 2 * b
    m = 2 * b / apb
    val = apb ** (-s) * 4.0 ** nu * beta_fn(nu + 0.5, nu + 0.5) * hyp2f1(s, nu + 0.5, 2 * nu + 1, m)
    close = (D / apb) < NEAR_SINGULAR
    if np.any(close):
        val = np.array(val, float)
        val[close] = _angular_near(D[close], b[close], s, nu)
    return xn ** kp.lam * sphere_area(n - 3) * val


def angular_kernel_gauss(rho, xn, r, n: int, kp: KernelParams, order: int = 16):
    """Same integral by fixed-order Gauss-Legendre in the polar angle."""
    t, w = np.polynomial.legendre.leggauss(order)
    th = (t + 1) * math.pi / 2
    w = w * math.pi / 2
    rho = np.asarray(rho, float)[..., None]
    xn = np.asarray(xn, float)[..., None]
    r = np.asarray(r, float)[..., None]
    a = rho ** 2 + r ** 2 + xn ** 2
    b = 2.0 * rho * r
    f = (a - b * np.cos(th)) ** (-kp.mu / 2) * np.sin(th) ** (n - 3)
    return xn[..., 0] ** kp.lam * sphere_area(n - 3) * np.sum(f * w, axis=-1)


def _graded_breaks(nodes, peak, width, span):
    """Breakpoints clustering geometrically toward ``peak`` down to ``width``/4."""
    lo, hi = nodes[0], nodes[-1]
    extra = [peak]
    step = width / 4
    while step < span:
        extra.append(peak - step)
        extra.append(peak + step)
        step *= 2
    pts = np.concatenate([nodes, np.asarray(extra)])
    pts = pts[(pts >= lo) & (pts <= hi)]
    return np.unique(pts)


def shell_matrix(rho, xn, bgrid: BoundaryGrid, kp: KernelParams, method: str = "cell", window=None):
    """Dense (H, N) matrix of hat-averaged angular kernels times shell weights.

    ``method="point"`` samples the angular kernel at the shell radius instead.
    ``window=(lo, hi)`` (per-target arrays) keeps only sources with lo <= |y| < hi;
    the hat normaliser is unchanged, so windows partitioning (0, inf) sum to the full matrix.
    """
    n = bgrid.n
    r_nodes = bgrid.shell_r
    w_shell = bgrid.shell_weights
    rho = np.asarray(rho, float).ravel()
    xn = np.asarray(xn, float).ravel()
    H, N = rho.size, r_nodes.size
    if window is not None:
        w_lo = np.broadcast_to(np.asarray(window[0], float), rho.shape)
        w_hi = np.broadcast_to(np.asarray(window[1], float), rho.shape)
    if method == "point" and window is not None:
        raise ValueError("windows need the cell rule")
    if method == "point" or (N == 1 and window is None):
        ak = angular_kernel(rho[:, None], xn[:, None], r_nodes[None, :], n, kp)
        return ak * (w_shell / sphere_area(n - 2))[None, :]
    if method != "cell":
        raise ValueError(f"unknown quadrature method {method!r}")
    geometric = bgrid.spacing == "geometric"
    t_nodes = np.log(r_nodes) if geometric else r_nodes.copy()
    gx, gw = np.polynomial.legendre.leggauss(GAUSS_ORDER)
    span = 3 * np.max(np.diff(t_nodes))
    M = np.empty((H, N))
    for h in range(H):
        if rho[h] > 0:
            peak = math.log(rho[h]) if geometric else rho[h]
            width = xn[h] / rho[h] if geometric else xn[h]
            breaks = _graded_breaks(t_nodes, peak, width, span)
        else:
            breaks = t_nodes
        if window is not None:
            cuts = np.array([w_lo[h], w_hi[h]])
            cuts = cuts[(cuts > 0) & np.isfinite(cuts)]
            cuts = np.log(cuts) if geometric else cuts
            breaks = np.unique(np.concatenate([breaks, cuts[(cuts > t_nodes[0]) & (cuts < t_nodes[-1])]]))
        left, right = breaks[:-1], breaks[1:]
        mid, half = (left + right) / 2, (right - left) / 2
        t = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
        wq = (half[:, None] * gw[None, :]).ravel()
        r = np.exp(t) if geometric else t
        jac = r ** (n - 1) if geometric else r ** (n - 2)
        panel = np.clip(np.searchsorted(t_nodes, t, side="right") - 1, 0, N - 2)
        frac = (t - t_nodes[panel]) / (t_nodes[panel + 1] - t_nodes[panel])
        # hat-basis normaliser uses the same quadrature, so P == 1 reproduces w_k
        kv = angular_kernel(rho[h], xn[h], r, n, kp) * jac * wq
        if window is not None:
            kv = np.where((r >= w_lo[h]) & (r < w_hi[h]), kv, 0.0)
        num = np.bincount(panel, kv * (1 - frac), N) + np.bincount(panel + 1, kv * frac, N)
        base = jac * wq
        den = np.bincount(panel, base * (1 - frac), N) + np.bincount(panel + 1, base * frac, N)
        M[h] = num / den * (w_shell / sphere_area(n - 2))
    return M


def sector_fractions(rho, xn, r_nodes, A: int, kp: KernelParams, chunk: int = 256):
    """Fraction of each angular sector in the circle integral, shape (H, N, A).

    Sector d is centred on angle 2 pi d / A relative to the target's own angle.
    """
    rho = np.asarray(rho, float).ravel()
    xn = np.asarray(xn, float).ravel()
    H, N = rho.size, r_nodes.size
    half_w = math.pi / A
    gx, gw = np.polynomial.legendre.leggauss(SECTOR_ORDER)
    out = np.empty((H, N, A))
    centres = 2 * math.pi * np.arange(A) / A
    # regular sectors d = 1..A-1
    phi = (centres[1:, None] + half_w * gx[None, :])  # (A-1, G)
    wts = half_w * gw
    # sector 0 is graded towards the peak at angle 0
    g_breaks = np.concatenate([[0.0], half_w * 2.0 ** -np.arange(24, -1, -1)])
    gl, gr = g_breaks[:-1], g_breaks[1:]
    p0 = ((gl + gr)[:, None] / 2 + (gr - gl)[:, None] / 2 * gx[None, :]).ravel()
    w0 = ((gr - gl)[:, None] / 2 * gw[None, :]).ravel() * 2
    cos_reg = np.cos(phi)
    cos_0 = np.cos(p0)
    s = kp.mu / 2
    for c0 in range(0, H, chunk):
        sl = slice(c0, min(H, c0 + chunk))
        a = rho[sl, None] ** 2 + r_nodes[None, :] ** 2 + xn[sl, None] ** 2
        b = 2 * rho[sl, None] * r_nodes[None, :]
        q = b / a  # < 1
        reg = ((1 - q[..., None, None] * cos_reg) ** (-s)) @ wts  # (h, N, A-1)
        sec0 = ((1 - q[..., None] * cos_0) ** (-s)) @ w0
        blk = np.concatenate([sec0[..., None], reg], axis=-1)
        out[sl] = blk / blk.sum(axis=-1, keepdims=True)
    return out


def _default_cache_dir():
    d = os.environ.get("STEINWEISS_CACHE")
    if d:
        return Path(d)
    return Path.home() / ".cache" / "steinweiss"


class KernelOperator:
    """V and W on a (boundary, half) grid pair for fixed (lambda, mu).

    Weights alpha, beta are supplied per application, so the same matrix
    serves the doubly weighted and the single-weight systems.
    """

    def __init__(self, bgrid: BoundaryGrid, hgrid: HalfGrid, kp: KernelParams,
                 method: str = "cell", cache: bool | str | Path = False):
        if bgrid.n != hgrid.n:
            raise StructureError(f"dimension mismatch: boundary n={bgrid.n}, half n={hgrid.n}")
        if bgrid.full != hgrid.full:
            raise StructureError("boundary and half grids must both be reduced or both full")
        if bgrid.full and bgrid.angles.size != hgrid.angles.size:
            raise StructureError("angular resolutions differ")
        self.bgrid, self.hgrid, self.kp, self.method = bgrid, hgrid, kp, method
        self.full = bgrid.full
        self.n = bgrid.n
        self.b_r = bgrid.r
        self.h_radius = hgrid.radius
        path = None
        if cache:
            root = _default_cache_dir() if cache is True else Path(cache)
            path = root / f"kernel_{self.cache_key()}.npz"
            if path.exists():
                data = np.load(path)
                self.M = data["M"]
                self.Mhat = data["Mhat"] if "Mhat" in data.files else None
                return
        self.M = shell_matrix(hgrid.base_rho, hgrid.base_xn, bgrid.reduced(), kp, method)
        self.Mhat = None
        if self.full:
            A = bgrid.angles.size
            frac = sector_fractions(hgrid.base_rho, hgrid.base_xn, bgrid.shell_r, A, kp)
            self.Mhat = np.fft.rfft(frac, axis=-1).real * self.M[..., None]
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.stem + ".tmp.npz")
            if self.Mhat is None:
                np.savez(tmp, M=self.M)
            else:
                np.savez(tmp, M=self.M, Mhat=self.Mhat)
            os.replace(tmp, path)

    def cache_key(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.n}|{self.kp.mu!r}|{self.kp.lam!r}|{self.method}|".encode())
        h.update(self.bgrid.digest().encode())
        h.update(self.hgrid.digest().encode())
        return h.hexdigest()[:20]

    # -- raw (unweighted by alpha/beta) applications ---------------------
    def _forward(self, F: np.ndarray) -> np.ndarray:
        """sum_y w_y P(x, y) F(y) for F on boundary nodes."""
        if not self.full:
            return self.M @ F.reshape(-1)
        A = self.bgrid.angles.size
        Fh = np.fft.rfft(F.reshape(-1, A), axis=-1)
        out = np.einsum("hkv,kv->hv", self.Mhat, Fh)
        return np.fft.irfft(out, n=A, axis=-1).reshape(-1)

    def _backward(self, G: np.ndarray) -> np.ndarray:
        """(1/w_y) sum_x w_x w_y P(x, y) G(x) for G on half nodes."""
        wh = self.hgrid.base_weights
        wb = self.bgrid.shell_weights
        if not self.full:
            return (self.M.T @ (wh * G.reshape(-1))) / wb
        A = self.bgrid.angles.size
        Gh = np.fft.rfft(G.reshape(-1, A) * wh[:, None], axis=-1)
        out = np.einsum("hkv,hv->kv", self.Mhat, Gh)
        return (np.fft.irfft(out, n=A, axis=-1) / wb[:, None]).reshape(-1)

    def V(self, f, alpha=0.0, beta=0.0) -> np.ndarray:
        f = np.asarray(f, float).reshape(-1)
        y = self._forward(self.b_r ** (-float(alpha)) * f)
        return self.h_radius ** (-float(beta)) * y

    def W(self, g, alpha=0.0, beta=0.0) -> np.ndarray:
        g = np.asarray(g, float).reshape(-1)
        y = self._backward(self.h_radius ** (-float(beta)) * g)
        return self.b_r ** (-float(alpha)) * y

    def dense(self):
        """Explicit (H, B) matrix K with V f = K f (small grids only)."""
        B = self.bgrid.size
        cols = [self._forward(np.eye(B)[j]) for j in range(B)]
        return np.stack(cols, axis=1)


class PointKernelOperator:
    """Dense plain-sum operator on arbitrary node lists (no reduction).

    ``bcoords`` (B, n-1) with weights ``bw``; ``hcoords`` (H, n) with ``hw``.
    """

    full = False

    def __init__(self, bcoords, bw, hcoords, hw, kp: KernelParams):
        self.bcoords = np.asarray(bcoords, float)
        self.hcoords = np.asarray(hcoords, float)
        self.bw = np.asarray(bw, float)
        self.hw = np.asarray(hw, float)
        self.kp = kp
        self.n = self.hcoords.shape[1]
        if self.bcoords.shape[1] != self.n - 1:
            raise StructureError("boundary coordinates must have n-1 components")
        self.P = kernel(self.hcoords[:, None, :], self.bcoords[None, :, :], kp)
        self.b_r = np.linalg.norm(self.bcoords, axis=1)
        self.h_radius = np.linalg.norm(self.hcoords, axis=1)

    @classmethod
    def from_grids(cls, bgrid, hgrid, kp):
        return cls(bgrid.coords(), bgrid.weights, hgrid.coords(), hgrid.weights, kp)

    def V(self, f, alpha=0.0, beta=0.0):
        f = np.asarray(f, float).reshape(-1)
        return self.h_radius ** (-float(beta)) * (self.P @ (self.bw * self.b_r ** (-float(alpha)) * f))

    def W(self, g, alpha=0.0, beta=0.0):
        g = np.asarray(g, float).reshape(-1)
        return self.b_r ** (-float(alpha)) * (self.P.T @ (self.hw * self.h_radius ** (-float(beta)) * g))


_OPERATORS: dict = {}


def get_operator(bgrid: BoundaryGrid, hgrid: HalfGrid, kp: KernelParams, method: str = "cell",
                 cache=False) -> KernelOperator:
    """Memoised KernelOperator for a grid pair."""
    key = (bgrid.digest(), hgrid.digest(), kp.lam, kp.mu, method)
    op = _OPERATORS.get(key)
    if op is None:
        op = KernelOperator(bgrid, hgrid, kp, method, cache)
        if len(_OPERATORS) > 16:
            _OPERATORS.clear()
        _OPERATORS[key] = op
    return op


def _check(ip, bg, hg):
    if bg.n != ip.n or hg.n != ip.n:
        raise StructureError(f"grids have n={bg.n}/{hg.n}, parameters n={ip.n}")


def apply_V(f: Field, ip: InequalityParams, bg: BoundaryGrid, hg: HalfGrid, op=None) -> Field:
    """V(f)(x) = |x|^-beta sum_y w_y |y|^-alpha P(x, y) f(y)."""
    _check(ip, bg, hg)
    if f.grid.kind != "boundary" or f.grid.size != bg.size:
        raise StructureError("apply_V needs a boundary field on the given grid")
    op = op or get_operator(bg, hg, KernelParams.of(ip))
    return hg.field(op.V(f.values, ip.alpha, ip.beta))


def apply_W(g: Field, ip: InequalityParams, bg: BoundaryGrid, hg: HalfGrid, op=None) -> Field:
    """W(g)(y) = |y|^-alpha sum_x w_x |x|^-beta P(x, y) g(x)."""
    _check(ip, bg, hg)
    if g.grid.kind != "half" or g.grid.size != hg.size:
        raise StructureError("apply_W needs a half-space field on the given grid")
    op = op or get_operator(bg, hg, KernelParams.of(ip))
    return bg.field(op.W(g.values, ip.alpha, ip.beta))


def duality_gap(f: Field, g: Field, ip, bg, hg, op=None) -> float:
    """|<Vf, g> - <f, Wg>| / max(1, |<Vf, g>|)."""
    lhs = inner(apply_V(f, ip, bg, hg, op), g)
    rhs = inner(f, apply_W(g, ip, bg, hg, op))
    return abs(lhs - rhs) / max(1.0, abs(lhs))


# --- Hardy-type conditions -------------------------------------------------

def _log_gauss(lo, hi, per_decade=24):
    """Composite Gauss-Legendre nodes/weights for int_lo^hi g(t) dt in log t."""
    if hi <= lo:
        return np.zeros(0), np.zeros(0)
    gx, gw = np.polynomial.legendre.leggauss(12)
    decades = math.log10(hi / lo)
    m = max(1, int(math.ceil(decades * per_decade / 12)))
    edges = np.linspace(math.log(lo), math.log(hi), m + 1)
    a, b = edges[:-1], edges[1:]
    s = ((a + b)[:, None] / 2 + (b - a)[:, None] / 2 * gx).ravel()
    w = ((b - a)[:, None] / 2 * gw).ravel()
    t = np.exp(s)
    return t, w * t


def _half_ball_integral(Wfun, n, lo, hi, n_theta=32):
    """int over lo <= |x| <= hi in R^n_+ of Wfun(rho, x_n) dx."""
    t, wt = _log_gauss(lo, hi)
    if t.size == 0:
        return 0.0
    gx, gw = np.polynomial.legendre.leggauss(n_theta)
    th = (gx + 1) * math.pi / 4  # polar angle from the x_n axis, (0, pi/2)
    wth = gw * math.pi / 4
    T, TH = np.meshgrid(t, th, indexing="ij")
    rho, xn = T * np.sin(TH), T * np.cos(TH)
    vals = Wfun(rho, xn) * T ** (n - 1) * np.sin(TH) ** (n - 2)
    return sphere_area(n - 2) * float(np.einsum("ij,i,j->", vals, wt, wth))


def _boundary_ball_integral(Ufun, n, lo, hi):
    t, wt = _log_gauss(lo, hi)
    if t.size == 0:
        return 0.0
    return sphere_area(n - 2) * float(np.sum(Ufun(t) * t ** (n - 2) * wt))


@dataclass(frozen=True)
class HardyResult:
    A0_sup: float
    A1_sup: float
    radii: tuple
    A0: tuple
    A1: tuple
    note: str = "suprema over sampled radii inside the truncation are lower bounds"


def hardy_conditions(weight_W, weight_U, p, q, radii, n=3, r_min=1e-3, r_max=1e3) -> HardyResult:
    """Sampled A0(R), A1(R) for weights W(rho, x_n) on R^n_+ and U(r) on R^{n-1}.

    Regional integrals run over the truncated shells r_min <= |.| <= r_max.
    """
    radii = [float(R) for R in radii]
    if not radii:
        raise ValueError("hardy_conditions needs at least one radius")
    if any(R <= 0 for R in radii):
        raise ValueError("radii must be positive")
    p, q = float(p), float(q)
    if p > q:
        raise ValueError(f"need p <= q, got p={p}, q={q}")
    pp = p / (p - 1)

    def Upow(r):
        return weight_U(r) ** (1 - pp)

    A0, A1 = [], []
    for R in radii:
        Rc = min(max(R, r_min), r_max)
        w_out = _half_ball_integral(weight_W, n, Rc, r_max)
        w_in = _half_ball_integral(weight_W, n, r_min, Rc)
        u_in = _boundary_ball_integral(Upow, n, r_min, Rc)
        u_out = _boundary_ball_integral(Upow, n, Rc, r_max)
        A0.append(w_out ** (1 / q) * u_in ** (1 / pp))
        A1.append(w_in ** (1 / q) * u_out ** (1 / pp))
    return HardyResult(max(A0), max(A1), tuple(radii), tuple(A0), tuple(A1))


# --- three-region decomposition -------------------------------------------

@dataclass(frozen=True)
class SplitBounds:
    P1: float
    P2: float
    P3: float
    total: float
    f_norm_q: float  # ||f||_p^q, the scale the P_i are compared against

    def ratios(self):
        return tuple(P / self.f_norm_q for P in (self.P1, self.P2, self.P3))


def split_bounds(f: Field, ip: InequalityParams, bg: BoundaryGrid, hg: HalfGrid, op=None) -> SplitBounds:
    """q-th power integrals of V(f) restricted to |y| < |x|/2, |y| > 2|x| and between."""
    _check(ip, bg, hg)
    vals = np.asarray(f.values, float).reshape(-1)
    if np.any(vals < 0):
        raise ValueError("split_bounds needs f >= 0")
    op = op or get_operator(bg, hg, KernelParams.of(ip))
    if op.full:
        raise StructureError("split_bounds works on reduced grids")
    q = float(ip.q)
    alpha, beta = float(ip.alpha), float(ip.beta)
    xr = hg.radius
    F = bg.r ** (-alpha) * vals
    # regions cut the continuous source radius, not the node radius
    windows = ((0.0, xr / 2), (2 * xr, np.inf), (xr / 2, 2 * xr))
    parts = []
    for lo, hi in windows:
        Mi = shell_matrix(hg.rho, hg.xn, bg, op.kp, op.method, window=(lo, hi))
        Vi = xr ** (-beta) * (Mi @ F)
        parts.append(math.fsum(hg.weights * Vi ** q))
    Vf = op.V(vals, alpha, beta)
    total = math.fsum(hg.weights * Vf ** q)
    fn = math.fsum(bg.weights * vals ** float(ip.p)) ** (q / float(ip.p))
    return SplitBounds(parts[0], parts[1], parts[2], total, fn)

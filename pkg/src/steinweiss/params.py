"""Exponent algebra for the weighted half-space kernel inequality.

Every relation between the exponents (n, p, q', alpha, beta, lambda, mu) and
the Euler-Lagrange exponents (p0, q0) lives here.  Inputs given as ``int``,
``Fraction`` or ``"a/b"`` strings are carried in exact rational arithmetic;
anything else falls back to floats with an absolute slack tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Union

Number = Union[int, float, Fraction]

FLOAT_TOL = 1e-12


class ParameterDomainError(ValueError):
    """Input is outside the domain where the exponent algebra is defined."""


class DegenerateExponentError(ValueError):
    """p <= 1 or q' <= 1, so the Euler-Lagrange exponents do not exist."""


def as_number(value) -> Number:
    """Coerce ``value`` to a Fraction when it is rational, else to float."""
    if isinstance(value, bool):
        raise ParameterDomainError(f"boolean is not a number: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Rational):
        return Fraction(int(value.numerator), int(value.denominator))
    if isinstance(value, str):
        text = value.strip()
        try:
            if "/" in text or text.lstrip("+-").isdigit():
                return Fraction(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise ParameterDomainError(f"cannot parse number {value!r}") from exc
        try:
            x = float(text)
        except ValueError as exc:
            raise ParameterDomainError(f"cannot parse number {value!r}") from exc
    else:
        try:
            x = float(value)
        except (TypeError, ValueError) as exc:
            raise ParameterDomainError(f"not a number: {value!r}") from exc
    if not math.isfinite(x):
        raise ParameterDomainError(f"non-finite value: {value!r}")
    return x


def is_exact(*values) -> bool:
    return all(isinstance(v, Fraction) for v in values)


def _fmt(x: Number) -> str:
    if isinstance(x, Fraction):
        return str(x)
    return repr(float(x))


@dataclass(frozen=True)
class Condition:
    condition: str
    holds: bool
    slack: float

    def as_record(self) -> dict:
        return {"condition": self.condition, "holds": self.holds, "slack": self.slack}


@dataclass(frozen=True)
class AdmissibilityReport:
    conditions: tuple
    exact: bool = False

    @property
    def verdict(self) -> bool:
        return all(c.holds for c in self.conditions)

    def failing(self) -> list:
        return [c.condition for c in self.conditions if not c.holds]

    def __getitem__(self, name: str) -> Condition:
        for c in self.conditions:
            if c.condition == name:
                return c
        raise KeyError(name)

    def as_record(self) -> dict:
        return {
            "verdict": self.verdict,
            "exact": self.exact,
            "conditions": [c.as_record() for c in self.conditions],
        }


def _strict(name, lhs, rhs, exact):
    # lhs < rhs; zero slack fails
    slack = rhs - lhs
    return Condition(name, bool(slack > 0), float(slack))


def _weak(name, lhs, rhs, exact):
    # lhs <= rhs
    slack = rhs - lhs
    holds = slack >= 0 if exact else slack >= -FLOAT_TOL
    return Condition(name, bool(holds), float(slack))


def _equal(name, lhs, rhs, exact):
    slack = abs(lhs - rhs)
    holds = slack == 0 if exact else slack <= FLOAT_TOL
    return Condition(name, bool(holds), float(slack))


@dataclass(frozen=True)
class InequalityParams:
    """Exponent tuple of the doubly weighted inequality.

    ``lam`` is the kernel height power (lambda), ``mu`` the decay power.
    """

    n: int
    p: Number
    q_prime: Number
    alpha: Number = 0
    beta: Number = 0
    lam: Number = 0
    mu: Number = 1

    def __post_init__(self):
        n = self.n
        if isinstance(n, str):
            n = as_number(n)
        if isinstance(n, float) and not math.isfinite(n):
            raise ParameterDomainError("n must be finite")
        if int(n) != n:
            raise ParameterDomainError(f"n must be an integer, got {self.n!r}")
        if int(n) < 3:
            raise ParameterDomainError(f"n must be >= 3, got {self.n!r}")
        object.__setattr__(self, "n", int(n))
        for name in ("p", "q_prime", "alpha", "beta", "lam", "mu"):
            object.__setattr__(self, name, as_number(getattr(self, name)))

    @property
    def exact(self) -> bool:
        return is_exact(self.p, self.q_prime, self.alpha, self.beta, self.lam, self.mu)

    @property
    def weight_sum(self) -> Number:
        return self.alpha + self.beta + self.mu - self.lam

    @property
    def inv_q(self) -> Number:
        n = self.n
        return Fraction(n - 1, n) / self.p + (self.weight_sum - n + 1) / Fraction(n)

    @property
    def q(self) -> Number:
        iq = self.inv_q
        if iq == 0:
            return math.inf
        return 1 / iq

    @property
    def inv_p_prime(self) -> Number:
        return 1 - 1 / self.p

    @property
    def p_prime(self) -> Number:
        ip = self.inv_p_prime
        if ip == 0:
            return math.inf
        return 1 / ip

    @property
    def inv_p_prime_dual(self) -> Number:
        """1/p' from the relation accompanying the dual inequality for W."""
        n = self.n
        return Fraction(n, n - 1) / self.q_prime + (self.weight_sum - n) / Fraction(n - 1)

    @property
    def q_conjugate(self) -> Number:
        """Hoelder conjugate of q'; equals q on the balance surface."""
        return self.q_prime / (self.q_prime - 1)

    def balance_lhs(self) -> Number:
        n = self.n
        return Fraction(n - 1, n) / self.p + 1 / self.q_prime + self.weight_sum / Fraction(n)

    def balance_rhs(self) -> Number:
        return Fraction(2 * self.n - 1, self.n)

    def as_dict(self) -> dict:
        return {k: _fmt(getattr(self, k)) if k != "n" else self.n
                for k in ("n", "p", "q_prime", "alpha", "beta", "lam", "mu")}


def validate(params: InequalityParams, gate: str = "inequality") -> AdmissibilityReport:
    """Check every admissibility condition of the inequality.

    ``gate="extremal"`` additionally requires alpha >= 0 and beta >= 0, the
    stronger hypothesis under which maximizers are known to exist.
    """
    if gate not in ("inequality", "extremal"):
        raise ValueError(f"unknown gate {gate!r}")
    P = params
    n = P.n
    ex = P.exact
    conds = [
        _equal("balance", P.balance_lhs(), P.balance_rhs(), ex),
        _strict("p > 1", 1, P.p, ex),
        _strict("q' > 1", 1, P.q_prime, ex),
        _weak("lambda >= 0", 0, P.lam, ex),
        _strict("alpha < (n-1)/p'", P.alpha, (n - 1) * P.inv_p_prime, ex),
        _strict("beta < (n+q)/q", P.beta, n * P.inv_q + 1, ex),
        _weak("alpha + beta >= 0", 0, P.alpha + P.beta, ex),
        _strict("0 < mu", 0, P.mu, ex),
        _strict("mu < n - 2*lambda", P.mu, n - 2 * P.lam, ex),
        _strict("(mu-2*lambda)/(2n) + mu/(2(n-1)) < 1",
                (P.mu - 2 * P.lam) / Fraction(2 * n) + P.mu / Fraction(2 * (n - 1)), 1, ex),
        _weak("(n-1)/(n p) + 1/q' >= 1", 1, Fraction(n - 1, n) / P.p + 1 / P.q_prime, ex),
    ]
    if gate == "extremal":
        conds.append(_weak("alpha >= 0", 0, P.alpha, ex))
        conds.append(_weak("beta >= 0", 0, P.beta, ex))
    return AdmissibilityReport(tuple(conds), exact=ex)


@dataclass(frozen=True)
class SystemParams:
    """Exponents of the Euler-Lagrange integral system."""

    n: int
    p0: Number
    q0: Number
    alpha: Number = 0
    beta: Number = 0
    lam: Number = 0
    mu: Number = 1

    def __post_init__(self):
        n = as_number(self.n) if isinstance(self.n, str) else self.n
        if isinstance(n, float) and not math.isfinite(n) or int(n) != n or int(n) < 3:
            raise ParameterDomainError(f"n must be an integer >= 3, got {self.n!r}")
        object.__setattr__(self, "n", int(n))
        for name in ("p0", "q0", "alpha", "beta", "lam", "mu"):
            object.__setattr__(self, name, as_number(getattr(self, name)))
        if not (self.p0 > 0 and self.q0 > 0):
            raise ParameterDomainError("p0 and q0 must be positive")

    @property
    def exact(self) -> bool:
        return is_exact(self.p0, self.q0, self.alpha, self.beta, self.lam, self.mu)

    def balance_slack(self) -> Number:
        n = self.n
        lhs = Fraction(n - 1, n) / (self.p0 + 1) + 1 / (self.q0 + 1)
        return lhs - (self.alpha + self.beta + self.mu - self.lam) / Fraction(n)

    def balanced(self) -> bool:
        s = self.balance_slack()
        return s == 0 if self.exact else abs(s) <= FLOAT_TOL

    def to_single_weight(self) -> "SystemParams":
        """Weights of the equivalent single-weight system.

        Substituting U = |y|^alpha u and V = |x|^beta v turns the doubly
        weighted system into the single-weight one with weights
        alpha (p0+1) and beta (q0+1).
        """
        return SystemParams(self.n, self.p0, self.q0,
                            self.alpha * (self.p0 + 1), self.beta * (self.q0 + 1),
                            self.lam, self.mu)

    def with_exponents(self, p0=None, q0=None) -> "SystemParams":
        return SystemParams(self.n, self.p0 if p0 is None else p0, self.q0 if q0 is None else q0,
                            self.alpha, self.beta, self.lam, self.mu)

    def as_dict(self) -> dict:
        return {k: _fmt(getattr(self, k)) if k != "n" else self.n
                for k in ("n", "p0", "q0", "alpha", "beta", "lam", "mu")}


def derive_el_exponents(params: InequalityParams, check: bool = True) -> SystemParams:
    """p0 = 1/(p-1), q0 = 1/(q'-1) with the weights carried over.

    ``check=False`` skips the admissibility gate and only does the arithmetic.
    """
    if not (params.p > 1 and params.q_prime > 1):
        raise DegenerateExponentError(
            f"need p > 1 and q' > 1, got p={params.p}, q'={params.q_prime}")
    rep = validate(params) if check else None
    if rep is not None and not rep.verdict:
        raise ParameterDomainError(f"inadmissible parameters: {rep.failing()}")
    return SystemParams(params.n, 1 / (params.p - 1), 1 / (params.q_prime - 1),
                        params.alpha, params.beta, params.lam, params.mu)


@dataclass(frozen=True)
class Interval:
    """Open interval (lo, hi); empty when lo >= hi."""

    lo: Number
    hi: Number

    @property
    def empty(self) -> bool:
        return not (self.lo < self.hi)

    def __contains__(self, x) -> bool:
        return (not self.empty) and self.lo < x < self.hi

    def intersect(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))

    def __str__(self):
        if self.empty:
            return "empty"
        return f"({_fmt(self.lo)}, {_fmt(self.hi)})"


@dataclass(frozen=True)
class RegularityWindow:
    inv_r: Interval
    inv_s: Interval
    pieces: dict = field(default_factory=dict, compare=False)


def regularity_window(sys: SystemParams) -> RegularityWindow:
    """Open windows for 1/r (boundary) and 1/s (bulk) integrability."""
    n, a, b, lam, mu = sys.n, sys.alpha, sys.beta, sys.lam, sys.mu
    P = 1 / (sys.p0 + 1)
    Q = 1 / (sys.q0 + 1)
    n1 = Fraction(n - 1)
    nn = Fraction(n)
    r_a = Interval(a / n1, (a + mu - lam + 1) / n1)
    shift_r = P - nn / n1 * Q
    r_b = Interval(shift_r + (b - 1) / n1, shift_r + (b + mu - lam) / nn)
    s_a = Interval((b - 1) / nn, (b + mu - lam) / nn)
    shift_s = Q - n1 / nn * P
    s_b = Interval(shift_s + a / nn, shift_s + (a + mu - lam + 1) / n1)
    return RegularityWindow(r_a.intersect(r_b), s_a.intersect(s_b),
                            {"r": (r_a, r_b), "s": (s_a, s_b)})


def pohozaev_residual(sys: SystemParams) -> Number:
    """(n-1-alpha)/(p0+1) + (n-beta)/(q0+1) - (mu-lambda)."""
    n = sys.n
    return (n - 1 - sys.alpha) / (sys.p0 + 1) + (n - sys.beta) / (sys.q0 + 1) - (sys.mu - sys.lam)


def asymptotic_hypotheses(sys: SystemParams) -> dict:
    """Conditions under which the limits at the origin are asserted.

    Returns slack (lhs - rhs) for the u-limit and the v-limit conditions.
    """
    n, a, b, lam, mu, p0, q0 = sys.n, sys.alpha, sys.beta, sys.lam, sys.mu, sys.p0, sys.q0
    u_slack = 1 / q0 - (mu + b - lam) / (q0 * n) - (b - 1) / Fraction(n)
    v_slack = 1 / p0 - (mu + a - lam + 1) / (p0 * (n - 1)) - a / Fraction(n - 1)
    return {"u": u_slack, "v": v_slack}

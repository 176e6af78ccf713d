import math
from fractions import Fraction as Fr

import pytest
from hypothesis import given, strategies as st

from steinweiss.params import (DegenerateExponentError, InequalityParams, Interval, ParameterDomainError,
                               SystemParams, asymptotic_hypotheses, derive_el_exponents, pohozaev_residual,
                               regularity_window, validate)

from _support import random_admissible

REF = InequalityParams(3, Fr(3, 2), Fr(9, 8))


def test_reference_tuple_is_admissible():
    rep = validate(REF)
    assert rep.verdict
    assert REF.q == 9
    assert REF.p_prime == 3
    assert rep.exact


def test_kernel_decay_bound_violation_is_named():
    ip = InequalityParams(3, Fr(3, 2), Fr(9, 8), 0, 0, 1, 3)
    rep = validate(ip)
    assert not rep.verdict
    assert "mu < n - 2*lambda" in rep.failing()


def test_weighted_tuple_with_solved_q_prime():
    inv_qp = Fr(37, 30) - Fr(4, 9)
    ip = InequalityParams(3, Fr(3, 2), 1 / inv_qp, Fr(1, 5), Fr(1, 10), 0, 1)
    rep = validate(ip)
    assert rep.verdict
    assert rep["balance"].slack == 0.0


@pytest.mark.parametrize("bad", [math.inf, math.nan, "inf"])
def test_non_finite_input_is_a_domain_error(bad):
    with pytest.raises(ParameterDomainError):
        InequalityParams(3, bad, Fr(9, 8))


def test_small_dimension_rejected():
    with pytest.raises(ParameterDomainError):
        InequalityParams(2, Fr(3, 2), Fr(9, 8))


def test_rationals_stay_exact():
    ip = InequalityParams("3", "3/2", "9/8")
    assert isinstance(ip.p, Fr) and ip.exact
    assert isinstance(InequalityParams(3, 1.5, 1.125).p, float)


def test_slacks_follow_the_sign_convention():
    rep = validate(REF)
    assert rep["p > 1"].slack == pytest.approx(0.5)
    assert rep["balance"].slack == 0.0
    rec = rep.as_record()
    assert set(rec["conditions"][0]) == {"condition", "holds", "slack"}


def test_strict_inequality_fails_at_zero_slack():
    # 1/q' = 1 would force q' = 1
    ip = InequalityParams(3, Fr(3, 2), 1, 0, 0, 0, Fr(7, 3))
    assert not validate(ip)["q' > 1"].holds


def test_float_balance_uses_tolerance():
    ip = InequalityParams(3, 1.5, 1.125 * (1 + 1e-14))
    assert validate(ip)["balance"].holds
    ip = InequalityParams(3, 1.5, 1.125 * (1 + 1e-6))
    assert not validate(ip)["balance"].holds


def test_extremal_gate_adds_sign_conditions():
    inv_qp = Fr(2 * 3 - 1, 3) - Fr(2, 3) / Fr(3, 2) - (Fr(1, 2) - Fr(1, 4) + 1) / 3
    ip = InequalityParams(3, Fr(3, 2), 1 / inv_qp, Fr(1, 2), Fr(-1, 4), 0, 1)
    assert validate(ip).verdict
    rep = validate(ip, gate="extremal")
    assert rep.failing() == ["beta >= 0"]


def test_derived_exponents():
    sp = derive_el_exponents(REF)
    assert (sp.p0, sp.q0) == (2, 8)
    assert sp.balanced()
    assert Fr(2, 3) * Fr(1, 3) + Fr(1, 9) == Fr(1, 3)


def test_symmetric_case_exponents():
    # p = q' = 2 always violates (n-1)/(n p) + 1/q' >= 1, so only the arithmetic is checked
    ip = InequalityParams(3, 2, 2, 0, 0, 0, Fr(5, 2))
    with pytest.raises(ParameterDomainError):
        derive_el_exponents(ip)
    sp = derive_el_exponents(ip, check=False)
    assert (sp.p0, sp.q0) == (1, 1)


def test_degenerate_exponents():
    with pytest.raises(DegenerateExponentError):
        derive_el_exponents(InequalityParams(3, 1, Fr(9, 8)))


def test_regularity_window_reference():
    w = regularity_window(SystemParams(3, 2, 8))
    assert w.inv_r == Interval(0, Fr(1, 2))
    assert w.pieces["r"][0] == Interval(0, 1)
    assert w.pieces["r"][1] == Interval(Fr(-1, 3), Fr(1, 2))
    assert not w.inv_s.empty


def test_empty_window_is_reported_not_raised():
    w = regularity_window(SystemParams(3, 2, 8, 5, 0, 0, 1))
    assert w.inv_r.empty
    assert str(w.inv_r) == "empty"


def test_pohozaev_residual_examples():
    assert pohozaev_residual(SystemParams(3, 2, 8)) == 0
    assert pohozaev_residual(SystemParams(3, 2, 2)) == Fr(2, 3)
    assert pohozaev_residual(SystemParams(3, 2, 2, 2, 3, Fr(1, 2), 1)) == Fr(1, 2) - 1


def test_asymptotic_hypotheses_reference():
    h = asymptotic_hypotheses(SystemParams(3, 2, 8))
    assert h["u"] == Fr(1, 8) - Fr(1, 24) + Fr(1, 3)
    assert h["v"] == 0


def test_random_tuples_satisfy_the_algebra():
    for ip in random_admissible(100, seed=3):
        n, ws = ip.n, ip.weight_sum
        assert Fr(n - 1, n) / ip.p + (ws - n + 1) / Fr(n) == 1 / ip.q
        assert ip.inv_p_prime_dual == Fr(n, n - 1) / ip.q_prime + (ws - n) / Fr(n - 1)
        # on the balance surface the dual relation reproduces the Hoelder conjugate
        assert ip.inv_p_prime_dual == 1 - 1 / ip.p
        sp = derive_el_exponents(ip)
        assert sp.p0 == 1 / (ip.p - 1) and sp.q0 == 1 / (ip.q_prime - 1)
        assert sp.balance_slack() == 0
        assert pohozaev_residual(sp.to_single_weight()) == 0


@given(st.fractions(Fr(1, 50), Fr(1), max_denominator=50), st.fractions(Fr(1, 50), Fr(1), max_denominator=50))
def test_crossing_one_boundary_flips_exactly_that_condition(below, above):
    # move alpha across (n-1)/p' while beta = -alpha keeps every weight sum fixed
    bound = 2 * (1 - 1 / Fr(3, 2))

    def holds(a):
        ip = InequalityParams(3, Fr(3, 2), Fr(9, 8), a, -a, 0, 1)
        return {c.condition: c.holds for c in validate(ip).conditions}

    lo, hi = holds(bound - below), holds(bound + above)
    flipped = [k for k in lo if lo[k] != hi[k]]
    assert flipped == ["alpha < (n-1)/p'"]


@given(st.fractions(Fr(-2), Fr(2), max_denominator=30))
def test_alpha_boundary_flip_is_local(delta):
    bound = 2 * (1 - 1 / Fr(3, 2))
    a = bound + delta
    ip = InequalityParams(3, Fr(3, 2), Fr(9, 8), a, -a, 0, 1)
    assert validate(ip)["alpha < (n-1)/p'"].holds == (delta < 0)
    assert validate(ip)["balance"].holds

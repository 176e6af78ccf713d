import math
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, strategies as st

from steinweiss.grid import BoundaryGrid, GridSpec, StructureError, build_equal_measure_grids, build_grids
from steinweiss.params import InequalityParams
from steinweiss.rearrangement import (NormDomainError, decreasing_rearrangement, lorentz_norm, lp_norm,
                                      radial_symmetrize, riesz_check, symmetrize_on_grid,
                                      tangential_symmetrize)

REF = InequalityParams(3, Fr(3, 2), Fr(9, 8))


def three_shells():
    return BoundaryGrid(3, [1.0, 2.0, 3.0], [1.0, 1.0, 1.0])


def test_lp_norm_of_indicator_and_scaling():
    bg = three_shells()
    f = bg.field([1.0, 0.0, 0.0])
    assert lp_norm(f, p=3) == pytest.approx(1.0)
    g = bg.field([1.0, 1.0, 0.0])
    assert lp_norm(g, p=2) == pytest.approx(math.sqrt(2))
    h = bg.field([0.3, -2.0, 1.5])
    assert lp_norm(h * -4.0, p=1.5) == pytest.approx(4 * lp_norm(h, p=1.5), rel=1e-14)
    assert lp_norm(h, p=math.inf) == 2.0
    with pytest.raises(NormDomainError):
        lp_norm(h, p=0)


def test_lp_norm_power_on_annulus():
    bg, _ = build_grids(GridSpec(r_min=1, r_max=10, n_radial=32))
    val = lp_norm(bg.field(1 / bg.r), p=2)
    assert val == pytest.approx(math.sqrt(2 * math.pi * math.log(10)), rel=1e-2)


def test_rearrangement_of_three_shells():
    prof = decreasing_rearrangement(three_shells().field([1.0, 3.0, 2.0]))
    assert list(prof.values) == [3.0, 2.0, 1.0]
    assert list(prof.breakpoints) == [1.0, 2.0, 3.0]
    assert prof(0.5) == 3.0 and prof(2.0) == 1.0 and prof(10.0) == 0.0
    assert prof.to_csv().splitlines()[0] == "t_left,t_right,value"


def test_decreasing_field_profile_is_its_trace():
    bg, _ = build_grids(GridSpec(n_radial=12))
    f = bg.field(np.exp(-bg.r / 100))
    prof = decreasing_rearrangement(f)
    assert np.array_equal(prof.values, f.values)
    assert np.allclose(prof.measures, bg.weights, rtol=0)


def test_profile_equimeasurable():
    rng = np.random.default_rng(0)
    bg, _ = build_grids(GridSpec(n_radial=20))
    f = bg.field(rng.random(20))
    prof = decreasing_rearrangement(f)
    for p in (1, 1.5, 2, 9):
        from_prof = math.fsum(prof.measures * prof.values ** p) ** (1 / p)
        assert from_prof == pytest.approx(lp_norm(f, p=p), rel=1e-12)
    assert prof.support_measure == pytest.approx(bg.total_measure(), rel=1e-14)
    assert np.all(np.diff(prof.values) < 0)


def test_ties_merge_into_one_step():
    prof = decreasing_rearrangement(three_shells().field([2.0, 2.0, 0.0]))
    assert list(prof.values) == [2.0] and list(prof.measures) == [2.0]
    assert prof.support_measure == 2.0


def test_lorentz_diagonal_is_lebesgue():
    rng = np.random.default_rng(1)
    bg, _ = build_grids(GridSpec(n_radial=16))
    f = bg.field(rng.random(16))
    for p in (1.0, 1.5, 2.0, 9.0):
        assert lorentz_norm(f, r=p, s=p) == pytest.approx(lp_norm(f, p=p), rel=1e-10)


def test_lorentz_weak_norm_of_indicator():
    bg = BoundaryGrid(3, [1.0, 2.0, 3.0], [0.5, 1.5, 2.0])
    f = bg.field([0.0, 4.0, 4.0])
    assert lorentz_norm(f, r=3, s=math.inf) == pytest.approx(4.0 * 3.5 ** (1 / 3), rel=1e-14)
    with pytest.raises(NormDomainError):
        lorentz_norm(f, r=0)
    with pytest.raises(NormDomainError):
        lorentz_norm(f, r=2, s=-1)
    assert lorentz_norm(bg.field(np.zeros(3)), r=2, s=2) == 0.0


def test_borderline_power_weak_norm_bounded_strong_norm_grows():
    p = 1.5
    weak, strong = [], []
    for decades in (3, 4, 5):
        bg, _ = build_grids(GridSpec(r_min=1e-2, r_max=10.0 ** (decades - 2), n_radial=1 + 16 * decades))
        f = bg.field(bg.r ** (-2 / p))
        weak.append(lorentz_norm(f, r=p, s=math.inf))
        strong.append(lp_norm(f, p=p))
    # the strong norm^p grows like log(r_max); the weak norm is about pi^(1/p)
    assert strong[2] ** p - strong[1] ** p == pytest.approx(2 * math.pi * math.log(10), rel=0.05)
    assert max(weak) / min(weak) < 1.05
    assert weak[0] == pytest.approx(math.pi ** (1 / p), rel=0.15)


def test_radial_symmetrize_cases():
    bg, _ = build_grids(GridSpec(n_radial=10))
    dec = bg.field(np.exp(-bg.r))
    out = radial_symmetrize(dec)
    assert np.array_equal(out.values, dec.values)
    on_grid = symmetrize_on_grid(dec)
    assert np.array_equal(on_grid.values, dec.values)


@pytest.mark.parametrize("seed", range(5))
def test_radial_symmetrize_keeps_norms(seed):
    rng = np.random.default_rng(seed)
    bg, _ = build_grids(GridSpec(n_radial=12, n_angular=6), full=True)
    f = bg.field(rng.random(bg.size))
    out = radial_symmetrize(f)
    for p in (1, 1.5, 2, 9):
        assert lp_norm(out, p=p) == pytest.approx(lp_norm(f, p=p), rel=1e-12)
    assert np.all(np.diff(out.values) <= 0)
    pa, pb = decreasing_rearrangement(f), decreasing_rearrangement(out)
    assert np.array_equal(pa.values, pb.values)
    assert np.allclose(pa.measures, pb.measures, rtol=1e-12)


def test_equal_measure_shells_need_no_split():
    rng = np.random.default_rng(4)
    bg, _ = build_equal_measure_grids(GridSpec(n_radial=8))
    f = bg.field(rng.random(bg.size))
    out = radial_symmetrize(f)
    assert out.grid.digest() == bg.digest()
    assert np.array_equal(out.values, np.sort(f.values)[::-1])


def test_split_pieces_stay_inside_their_shells():
    rng = np.random.default_rng(6)
    bg, _ = build_grids(GridSpec(n_radial=8, n_angular=4), full=True)
    out = radial_symmetrize(bg.field(rng.random(bg.size)))
    assert out.values.size > bg.shell_r.size
    assert np.all(np.diff(out.grid.r) >= 0)
    assert out.grid.r.min() >= bg.shell_r[0] and out.grid.r.max() <= bg.shell_r[-1]


def test_symmetrize_on_grid_keeps_l1():
    rng = np.random.default_rng(2)
    bg, _ = build_grids(GridSpec(n_radial=10, n_angular=4), full=True)
    f = bg.field(rng.random(bg.size))
    out = symmetrize_on_grid(f)
    assert out.grid is bg
    assert lp_norm(out, p=1) == pytest.approx(lp_norm(f, p=1), rel=1e-12)
    assert lp_norm(out, p=2) <= lp_norm(f, p=2) * (1 + 1e-12)


def test_rearrangement_needs_boundary_fields():
    _, hg = build_grids(GridSpec(n_radial=6, n_height=6))
    with pytest.raises(StructureError):
        radial_symmetrize(hg.field(np.ones(hg.size)))
    bg, _ = build_grids(GridSpec(n_radial=6))
    with pytest.raises(StructureError):
        tangential_symmetrize(bg.field(np.ones(6)))


def test_riesz_fixed_point_and_zero():
    bg, hg = build_grids(GridSpec(n_radial=16, n_height=16))
    f = bg.field(np.exp(-bg.r))
    g = hg.field(np.exp(-hg.rho - hg.xn))
    res = riesz_check(f, g, REF)
    assert abs(res.J_after - res.J_before) <= 1e-10 * max(1.0, res.J_before)
    z = riesz_check(bg.field(np.zeros(bg.size)), hg.field(np.zeros(hg.size)), REF)
    assert (z.J_before, z.J_after) == (0.0, 0.0)
    with pytest.raises(NormDomainError):
        riesz_check(f * -1.0, g, REF)
    with pytest.raises(NormDomainError):
        riesz_check(f, g, InequalityParams(3, Fr(3, 2), Fr(9, 8), Fr(1, 10), Fr(-1, 10)))


def test_riesz_off_center_bump():
    bg, hg = build_equal_measure_grids(GridSpec(n_radial=12, n_height=10, n_angular=8), full=True)
    y = bg.coords()
    f = bg.field(np.exp(-np.sum((y - [2.0, 0.0]) ** 2, axis=1)))
    x = hg.coords()
    g = hg.field(np.exp(-np.sum((x - [0.0, 2.0, 1.0]) ** 2, axis=1)))
    res = riesz_check(f, g, REF)
    assert res.J_after >= res.J_before


@given(st.integers(0, 10 ** 6))
def test_riesz_random_pairs_mostly_hold(seed):
    bg, hg = build_equal_measure_grids(GridSpec(n_radial=6, n_height=5, n_angular=4), full=True)
    rng = np.random.default_rng(seed)
    fails = 0
    for _ in range(5):
        res = riesz_check(bg.field(rng.random(bg.size)), hg.field(rng.random(hg.size)), REF)
        fails += not res.holds
    assert fails <= 1

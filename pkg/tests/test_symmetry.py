import numpy as np
import pytest
from fractions import Fraction as Fr
from hypothesis import given, strategies as st

from steinweiss.extremal import SolveOptions, power_iterate, random_start
from steinweiss.grid import GridSpec, StructureError, build_grids
from steinweiss.operators import KernelParams, kernel
from steinweiss.params import InequalityParams
from steinweiss.symmetry import (FieldInterpolator, ReflectionSpec, barycenter, kelvin_transform,
                                 moving_plane_scan, reflect, symmetry_deviation)

REF = InequalityParams(3, Fr(3, 2), Fr(9, 8))


@pytest.fixture(scope="module")
def grids():
    return build_grids(GridSpec(n_radial=24, n_height=16, n_angular=8, r_min=1e-2, r_max=1e2), full=True)


def radial_pair(bg, hg):
    r = np.linalg.norm(bg.coords(), axis=1)
    X = np.linalg.norm(hg.coords(), axis=1)
    return bg.field(1 / (1 + r ** 2)), hg.field(1 / (1 + X ** 2))


def flat(field):
    return np.asarray(field.values, float).reshape(-1)


coords = st.floats(-5, 5, allow_nan=False)


@given(st.lists(coords, min_size=2, max_size=2), st.lists(coords, min_size=2, max_size=2),
       st.floats(0.01, 5), st.floats(-3, 3), st.sampled_from([1, 2]))
def test_kernel_reflection_identities(xt, y, xn, tau, axis):
    kp = KernelParams(0.5, 1.5)
    spec = ReflectionSpec(axis, tau)
    x = np.array([*xt, xn])
    yy = np.array(y)
    xr = spec.apply(x[None, :])[0]
    yr = spec.apply(yy[None, :])[0]
    base = kernel(x, yy, kp)
    assert kernel(xr, yr, kp) == pytest.approx(base, rel=1e-13)
    assert kernel(x, yr, kp) == pytest.approx(kernel(xr, yy, kp), rel=1e-13)


def test_reflection_spec_is_tangential():
    with pytest.raises(ValueError):
        ReflectionSpec(3, 0.0, n=3)
    with pytest.raises(ValueError):
        ReflectionSpec(0, 0.0)
    pts = ReflectionSpec(2, 1.0).apply(np.array([[3.0, 4.0]]))
    assert pts.tolist() == [[3.0, -2.0]]


def test_reflect_symmetric_field_and_involution(grids):
    bg, _ = grids
    y = bg.coords()
    sym = bg.field(np.exp(-np.abs(y[:, 0]) - 0.3 * y[:, 1] ** 2))
    spec = ReflectionSpec(1, 0.0)
    assert np.allclose(flat(reflect(sym, spec)), flat(sym), rtol=1e-13, atol=0)
    rng = np.random.default_rng(0)
    f = bg.field(rng.random(bg.size) + 0.1)
    twice = reflect(reflect(f, spec), spec)
    assert np.allclose(flat(twice), flat(f), rtol=1e-13, atol=0)


def test_radial_field_is_a_fixed_point(grids):
    bg, hg = grids
    u, v = radial_pair(bg, hg)
    for axis in (1, 2):
        spec = ReflectionSpec(axis, 0.0)
        assert np.allclose(flat(reflect(u, spec)), flat(u), rtol=1e-13)
        assert np.allclose(flat(reflect(v, spec)), flat(v), rtol=1e-13)


def test_reduced_grid_reflection():
    bg, _ = build_grids(GridSpec(n_radial=8))
    f = bg.field(np.exp(-bg.r))
    assert np.array_equal(reflect(f, ReflectionSpec(1, 0.0)).values, f.values)
    with pytest.raises(StructureError):
        reflect(f, ReflectionSpec(1, 0.5))


def test_interpolator_reproduces_nodes(grids):
    bg, hg = grids
    u, v = radial_pair(bg, hg)
    assert np.allclose(FieldInterpolator(u)(bg.coords()), flat(u), rtol=1e-13)
    assert np.allclose(FieldInterpolator(v)(hg.coords()), flat(v), rtol=1e-13)


def test_kelvin_of_constant(grids):
    bg, _ = grids
    r = np.linalg.norm(bg.coords(), axis=1)
    res = kelvin_transform(bg.field(np.ones(bg.size)))
    assert np.allclose(flat(res.field), r ** -1.0, rtol=1e-13)
    assert not res.excluded.any()


def test_kelvin_involution_and_decay(grids):
    bg, _ = grids
    r = np.linalg.norm(bg.coords(), axis=1)
    u = bg.field(1 / (1 + r ** 2) + 0.2 * np.exp(-r) * (1 + 0.5 * np.cos(np.arctan2(bg.coords()[:, 1], bg.coords()[:, 0]))))
    back = kelvin_transform(kelvin_transform(u).field).field
    mid = (r > 0.1) & (r < 10)
    assert np.max(np.abs(flat(back) - flat(u))[mid] / flat(u)[mid]) <= 1e-2
    v = flat(kelvin_transform(u).field)
    outer = r >= 1
    assert np.max(v[outer] * r[outer]) <= 1.5


def test_kelvin_flags(grids):
    bg, hg = grids
    u, v = radial_pair(bg, hg)
    node = bg.coords()[5]
    res = kelvin_transform(u, center=node)
    assert res.excluded.sum() == 1 and flat(res.field)[res.excluded][0] == 0.0
    assert res.extrapolated.any()
    with pytest.raises(ValueError):
        kelvin_transform(v, center=[0.0, 0.0, 1.0])
    half = kelvin_transform(v, power=1.0)
    X = np.linalg.norm(hg.coords(), axis=1)
    # about four height nodes per decade: interpolation at inverted points is good to a few percent
    assert np.allclose(flat(half.field), X ** -1.0 / (1 + X ** -2.0), rtol=0.1)


def test_scan_on_radial_fields(grids):
    bg, hg = grids
    u, v = radial_pair(bg, hg)
    taus = [-50.0, -3.0, -1.0, -0.1, 0.0]
    for rep in moving_plane_scan(u, v, 1, taus):
        assert rep.measure_u == 0.0 and rep.measure_v == 0.0
        assert rep.gg_residual <= 1e-8
    zero = moving_plane_scan(u, v, 2, [0.0])[0]
    assert zero.amplitude <= 1e-12


def test_scan_with_weights_and_powers(grids):
    bg, hg = grids
    u, v = radial_pair(bg, hg)
    from steinweiss.params import SystemParams
    sys = SystemParams(3, 2, 8, Fr(1, 5), Fr(1, 10), Fr(1, 2), Fr(3, 2))
    for rep in moving_plane_scan(u, v, 1, [-1.0, 0.5], sys=sys):
        assert rep.gg_residual <= 1e-8


def test_scan_off_center_bump(grids):
    bg, hg = grids
    _, v = radial_pair(bg, hg)
    y = bg.coords()
    f = bg.field(np.exp(-np.sum((y - [-1.0, 0.0]) ** 2, axis=1)))
    before, between, past = moving_plane_scan(f, v, 1, [-1.5, -0.5, 0.0])
    assert before.measure_u == 0.0
    assert between.measure_u > 0 and between.amplitude_u > 0
    assert past.measure_u >= between.measure_u
    assert barycenter(f)[0] == pytest.approx(-1.0, abs=0.05)


def test_scan_needs_full_grids():
    bg, hg = build_grids(GridSpec(n_radial=6, n_height=6))
    with pytest.raises(StructureError):
        moving_plane_scan(bg.field(np.ones(6)), hg.field(np.ones(hg.size)), 1, [0.0])


def test_symmetry_deviation_cases(grids):
    bg, hg = grids
    u, _ = radial_pair(bg, hg)
    assert symmetry_deviation(u) == pytest.approx((0.0, 0.0), abs=1e-15)
    spiked = flat(u).copy()
    eps = 0.05
    spiked[37] += eps
    rad, _ = symmetry_deviation(bg.field(spiked))
    assert rad >= eps / spiked.max() - 1e-15
    rising = bg.field(np.linalg.norm(bg.coords(), axis=1))
    assert symmetry_deviation(rising)[1] > 0
    assert symmetry_deviation(bg.field(np.zeros(bg.size))) == (0.0, 0.0)
    with pytest.raises(StructureError):
        symmetry_deviation(hg.field(np.ones(hg.size)))


def test_shifted_radial_field_recentred(grids):
    bg, _ = grids
    y = bg.coords()
    c = np.array([0.3, 0.0])
    f = bg.field(np.exp(-np.sum((y - c) ** 2, axis=1)))
    c_hat = barycenter(f)
    assert c_hat == pytest.approx(c, abs=1e-3)
    assert symmetry_deviation(f, center=c_hat)[0] <= 0.1 * symmetry_deviation(f)[0]


def test_extremal_is_radial():
    bg, hg = build_grids(GridSpec(n_radial=32, n_height=24, n_angular=8, r_min=1e-2, r_max=1e2), full=True)
    res = power_iterate(REF, bg, hg, SolveOptions(max_iters=3000), f0=random_start(REF, bg, 1))
    rad, mono = symmetry_deviation(res.f, center=barycenter(res.f))
    assert rad <= 1e-4 and mono <= 1e-4

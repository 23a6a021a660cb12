import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import constants

from optbistab.bloch import AtomicParams, FieldConfig
from optbistab.cavity import (FOLD_DOWN, FOLD_UP, CavityConfig, PhysicalCavity,
                              branch_percentage_errors, default_x_grid, hysteresis_sweep,
                              intracavity_response, max_abs_slope, percentage_error,
                              slope_profile, trace_curve)
from optbistab.errors import (GridTooCoarse, NonUniqueSteadyState, ValidationError,
                              ZeroMeanBranch)

P = AtomicParams()
CAV = CavityConfig(300)
FIG4B = FieldConfig(omega_1=5, omega_3=5, delta_2=5)
FIG5D = FieldConfig(omega_1=5, omega_3=0.5, delta_2=7)
BISTABLE = FieldConfig(omega_1=2, delta_2=5)


@pytest.fixture(scope="module")
def bistable_curve():
    return trace_curve(P, BISTABLE, CAV)


def test_decoupled_cavity_is_linear():
    x = np.linspace(0.1, 10, 7)
    y = intracavity_response(P, FIG4B, CavityConfig(0), x)
    assert np.array_equal(y, 2 * x + 0j)


def test_zero_input_without_probe():
    assert intracavity_response(P, FieldConfig(omega_1=5), CAV, 0.0) == 0


def test_zero_input_all_fields_off_is_degenerate():
    with pytest.raises(NonUniqueSteadyState):
        intracavity_response(P, FieldConfig(), CAV, 0.0)


def test_scalar_and_vector_agree():
    xs = np.array([0.5, 3.0, 7.0])
    vec = intracavity_response(P, FIG4B, CAV, xs)
    assert [intracavity_response(P, FIG4B, CAV, float(x)) for x in xs] == pytest.approx(list(vec))


def test_response_is_deterministic():
    a = intracavity_response(P, FIG4B, CAV, np.linspace(0, 30, 50))
    b = intracavity_response(P, FIG4B, CAV, np.linspace(0, 30, 50))
    assert np.array_equal(a, b)


def test_response_non_monotone():
    x = np.linspace(0, 30, 3001)
    ym = np.abs(intracavity_response(P, FieldConfig(omega_1=5, delta_2=5), CAV, x))
    assert np.any(np.diff(ym) < 0)


def test_negative_x_rejected():
    with pytest.raises(ValidationError):
        intracavity_response(P, FIG4B, CAV, -1.0)


def test_cooperativity_validation():
    with pytest.raises(ValidationError):
        CavityConfig(-1)
    phys = PhysicalCavity(1e16, 2 * math.pi * 3.77e14, 0.01, (2.5e-29) ** 2, 0.1, 0.05,
                          2 * math.pi * 5.75e6)
    cav = CavityConfig.from_physical(phys)
    expected = (1e16 * 2 * math.pi * 3.77e14 * 0.01 * (2.5e-29) ** 2
                / (2 * constants.hbar * 2 * math.pi * 5.75e6 * constants.epsilon_0
                   * constants.c * 0.1))
    assert cav.cooperativity == pytest.approx(expected, rel=1e-12)
    assert phys.delay_seconds == pytest.approx((2 * 0.05 + 0.01) / constants.c)
    assert phys.reflectivity == pytest.approx(0.9)
    with pytest.raises(ValidationError):
        CavityConfig(cav.cooperativity * 1.001, physical=phys)


def test_default_grid():
    g = default_x_grid()
    assert len(g) == 2000 and g[0] == 0 and g[-1] == 40


def test_curve_invariants(bistable_curve):
    c = bistable_curve
    assert np.all(np.diff(c.x) > 0)
    assert np.array_equal(c.y_mag, np.abs(c.y))
    kinds = [t.kind for t in c.turning_points]
    assert kinds == [FOLD_UP, FOLD_DOWN] * (len(kinds) // 2)
    for lo_region in c.bistable_regions():
        assert lo_region[1] > lo_region[0]
    for b in c.branches:
        d = np.diff(b.y_mag)
        assert np.all(d >= -1e-9) if b.stable else np.all(d <= 1e-9)


def test_no_folds_without_control():
    assert trace_curve(P, FieldConfig(delta_2=5), CAV).fold_count == 0


def test_folds_with_control():
    assert trace_curve(P, FieldConfig(omega_1=1, delta_2=5), CAV).fold_count >= 2


def test_turning_points_match_brute_force(bistable_curve):
    x = np.linspace(0, 40, 100_001)
    ym = np.abs(intracavity_response(P, BISTABLE, CAV, x))
    d = np.diff(ym)
    idx = np.flatnonzero(np.sign(d[1:]) != np.sign(d[:-1])) + 1
    assert len(idx) == bistable_curve.fold_count
    tol = 1e-4 * 40 + (x[1] - x[0])
    for k, tp in zip(idx, bistable_curve.turning_points):
        assert abs(x[k] - tp.x) <= tol
        assert abs(ym[k] - tp.y_mag) <= 1e-6 * ym[k] + 1e-3


def test_grid_too_coarse():
    # the narrow loop near x = 10.5 spans less than one cell of this grid
    with pytest.raises(GridTooCoarse):
        trace_curve(P, FIG5D, CavityConfig(400), np.linspace(0, 40, 121))
    assert trace_curve(P, FIG5D, CavityConfig(400), np.linspace(0, 40, 401)).fold_count == 4


def test_grid_validation():
    with pytest.raises(ValidationError):
        trace_curve(P, BISTABLE, CAV, [0.0, 1.0])
    with pytest.raises(ValidationError):
        trace_curve(P, BISTABLE, CAV, [0.0, 2.0, 1.0])


def test_monostable_hysteresis():
    c = trace_curve(P, FieldConfig(delta_2=5, omega_3=1), CAV)
    h = hysteresis_sweep(c)
    assert h.l_hys == 0
    assert [x for _, x in h.forward_trace] == pytest.approx([x for _, x in h.backward_trace[::-1]])


def test_bistable_hysteresis_jumps_at_folds(bistable_curve):
    h = hysteresis_sweep(bistable_curve)
    folds = sorted(t.y_mag for t in bistable_curve.turning_points)
    assert sorted(h.jump_points) == pytest.approx(folds)
    assert h.l_hys == pytest.approx(bistable_curve.y_up - bistable_curve.y_down)
    assert h.l_hys > 0
    # traces coincide outside the window
    fwd = dict(h.forward_trace)
    for y, x in h.backward_trace:
        if y < h.y_down - 1e-9 or y > h.y_up + 1e-9:
            assert fwd[y] == pytest.approx(x)


def test_nested_loops_single_jump_each_way():
    # the first fold-up is the highest, so the middle branch is never visited
    c = trace_curve(P, FieldConfig(omega_1=5, delta_2=5), CAV)
    assert c.fold_count == 4
    h = hysteresis_sweep(c)
    assert h.jump_points == pytest.approx([c.y_up, c.y_down])


def test_multistable_backward_sweep_visits_middle_branch():
    c = trace_curve(P, FIG5D, CavityConfig(600))
    assert c.fold_count == 4
    h = hysteresis_sweep(c)
    folds = [t.y_mag for t in c.turning_points]
    assert all(min(abs(j - f) for f in folds) < 1e-12 for j in h.jump_points)
    downs = [j for j in h.jump_points if j < c.y_up]
    assert len(downs) == 2
    xs = {round(x, 6) for y, x in h.backward_trace}
    middle = c.stable_branches[1]
    assert any(middle.x.min() <= x <= middle.x.max() for x in xs)


def test_slope_linear_map():
    c = trace_curve(P, FIG4B, CavityConfig(0), np.linspace(0, 10, 101))
    assert [s for _, s in slope_profile(c)] == pytest.approx([0.5] * 101)


def test_slope_large_near_folds(bistable_curve):
    prof = slope_profile(bistable_curve)
    s = np.abs([v for _, v in prof])
    median = np.median(s)
    for tp in bistable_curve.turning_points:
        k = int(np.argmin(np.abs(bistable_curve.x - tp.x)))
        near = np.abs(np.gradient(bistable_curve.y_mag, bistable_curve.x)[max(k - 2, 0):k + 3])
        assert np.max(1 / near) > 10 * median
    assert max_abs_slope(bistable_curve) <= 1e6


def test_percentage_error_examples():
    assert percentage_error([5, 5, 5]) == 0
    assert percentage_error([9, 11]) == pytest.approx(10)
    with pytest.raises(ZeroMeanBranch):
        percentage_error([0.0, 0.0])
    with pytest.raises(ValidationError):
        percentage_error([1.0])


@settings(max_examples=50)
@given(st.lists(st.floats(0.1, 100), min_size=2, max_size=30), st.floats(0.1, 10))
def test_percentage_error_scale_invariant(v, k):
    assert percentage_error(np.array(v) * k) == pytest.approx(percentage_error(v), rel=1e-9)


def test_branch_percentage_errors_modes(bistable_curve):
    w = branch_percentage_errors(bistable_curve, mode="window")
    s = branch_percentage_errors(bistable_curve, mode="sweep")
    for r in (w, s):
        assert r["upper"] > 0 and r["lower"] > 0
        assert r["y_down"] < r["y_up"]
    assert s["upper"] == pytest.approx(w["upper"], rel=0.1)


def test_linear_limit_recovery():
    x = np.linspace(0, 20, 200)
    errs = [np.max(np.abs(np.abs(intracavity_response(P, FIG4B, CavityConfig(c), x)) - 2 * x))
            for c in (10, 1, 0.1, 0.01)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-2


def test_hysteresis_grows_with_cooperativity():
    lo = hysteresis_sweep(trace_curve(P, FIG5D, CavityConfig(100))).l_hys
    hi = hysteresis_sweep(trace_curve(P, FIG5D, CavityConfig(600))).l_hys
    assert hi > lo > 0

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optbistab.bloch import AtomicParams, FieldConfig, steady_state
from optbistab.cavity import CavityConfig, intracavity_response, trace_curve
from optbistab.dynamics import (CNOT_TABLE, LogicLevels, PulseSpec, RingSimConfig, TargetEncoding,
                                cnot_truth_table, levels_from_samples, logic_threshold, loop_area,
                                piecewise_linear, pulse_omega1, ring_cavity_simulate, sweep_jumps,
                                triangular_ramp)
from optbistab.errors import (HistoryUnderflow, NotBistable, StepTooLarge, ValidationError)

P = AtomicParams()
# gain-free bistable configuration used for the time-domain checks
FIELDS = FieldConfig(omega_1=5, omega_3=0.5, delta_2=7)
CAV = CavityConfig(100)


def const(y):
    return piecewise_linear([0.0], [y])


def test_pulse_values():
    spec = PulseSpec(5.0)
    assert abs(pulse_omega1(spec, 15)) < 1e-6
    assert pulse_omega1(spec, 45) == pytest.approx(5, abs=1e-6)
    assert abs(pulse_omega1(spec, 75)) < 1e-6


def test_pulse_vectorised_and_constant():
    t = np.array([15.0, 45.0])
    assert pulse_omega1(PulseSpec(5.0), t) == pytest.approx([0, 5], abs=1e-6)
    assert pulse_omega1(PulseSpec(3.0, edges=()), 12.0) == 3.0


@settings(max_examples=200)
@given(st.floats(0, 10), st.floats(-50, 150))
def test_pulse_bounds(o, t):
    v = pulse_omega1(PulseSpec(o), t)
    assert -1e-6 * o - 1e-15 <= v <= o * (1 + 1e-6) + 1e-15


def test_pulse_validation():
    with pytest.raises(ValidationError):
        PulseSpec(1.0, edges=((0, -1), (10, -1)))
    with pytest.raises(ValidationError):
        PulseSpec(-1.0)


def test_sim_config_validation():
    with pytest.raises(ValidationError):
        RingSimConfig(CAV, const(1), 1.0, delay_steps=0)
    with pytest.raises(ValidationError):
        RingSimConfig.with_delay(0.015, 0.01, cavity=CAV, input_drive=const(1), t_end=1.0)
    cfg = RingSimConfig.with_delay(0.05, 0.01, cavity=CAV, input_drive=const(1), t_end=1.0)
    assert cfg.delay_steps == 5 and cfg.delay == pytest.approx(0.05)
    with pytest.raises(ValidationError):
        RingSimConfig(CAV, const(1), 1.0, cavity_rate=200.0)


def test_history_underflow():
    cfg = RingSimConfig(CAV, const(1), 1.0, delay_steps=50, history_capacity=10)
    with pytest.raises(HistoryUnderflow):
        ring_cavity_simulate(P, FIELDS, None, cfg)


def test_step_too_large():
    cfg = RingSimConfig(CAV, const(1), 1.0, dt=0.05)
    with pytest.raises(StepTooLarge):
        ring_cavity_simulate(P, FIELDS, None, cfg)


def test_decoupled_cavity_static_limit():
    cfg = RingSimConfig(CavityConfig(0), const(3.0), 40.0, record_every=100)
    tr = ring_cavity_simulate(P, FIELDS, None, cfg)
    assert tr.x_out[-1] == pytest.approx(1.5, abs=1e-6)
    assert len(tr.times) == len(tr.y_in) == len(tr.x_out) == len(tr.omega1)
    assert np.all(tr.x_out >= 0)


@pytest.mark.parametrize("y", [6.0, 16.0])
def test_fixed_point_lies_on_curve(y):
    cfg = RingSimConfig(CAV, const(y), 100.0, record_every=100)
    tr = ring_cavity_simulate(P, FIELDS, None, cfg, rho0=steady_state(P, FIELDS))
    assert abs(y - abs(intracavity_response(P, FIELDS, CAV, tr.x_out[-1]))) < 1e-4


def test_branch_selection_inside_window():
    curve = trace_curve(P, FIELDS, CAV)
    lo_b, hi_b = curve.stable_branches[0], curve.stable_branches[1]
    y = 0.5 * (curve.y_up + curve.y_down)
    for branch in (lo_b, hi_b):
        x0 = float(branch.x_at(y))
        e0 = complex(intracavity_response(P, FIELDS, CAV, x0))
        # start on the branch: field phase consistent with the real input
        e_init = x0 * np.exp(-1j * np.angle(e0))
        rho0 = steady_state(P, FIELDS.with_(omega_2=e_init))
        cfg = RingSimConfig(CAV, const(y), 100.0, record_every=100)
        tr = ring_cavity_simulate(P, FIELDS, None, cfg, rho0=rho0, e_init=e_init)
        assert np.all(np.abs(tr.x_out - x0) < 0.2 * (hi_b.x.min() - lo_b.x.max()))


def test_unstable_start_converges_to_stable_branch():
    curve = trace_curve(P, FIELDS, CAV)
    y = 0.5 * (curve.y_up + curve.y_down)
    mid = [b for b in curve.branches if not b.stable][0]
    x_mid = float(mid.x_at(y))
    stable_xs = [float(b.x_at(y)) for b in curve.stable_branches[:2]]
    e0 = complex(intracavity_response(P, FIELDS, CAV, x_mid))
    e_init = x_mid * np.exp(-1j * np.angle(e0))
    cfg = RingSimConfig(CAV, const(y), 150.0, record_every=100)
    tr = ring_cavity_simulate(P, FIELDS, None, cfg,
                              rho0=steady_state(P, FIELDS.with_(omega_2=e_init)), e_init=e_init)
    final = tr.x_out[-1]
    assert min(abs(final - s) for s in stable_xs) < 1e-2
    assert abs(final - x_mid) > 0.1


def test_slow_sweep_jumps_near_folds():
    curve = trace_curve(P, FIELDS, CAV)
    drive = piecewise_linear([0, 50, 550, 1050], [0, 9, 14, 9])
    cfg = RingSimConfig(CAV, drive, 1050.0, record_every=5)
    tr = ring_cavity_simulate(P, FIELDS, None, cfg, rho0=steady_state(P, FIELDS))
    up, down = sweep_jumps(tr)
    assert len(up) == 1 and len(down) == 1
    assert up[0] == pytest.approx(curve.y_up, rel=0.05)
    assert down[0] == pytest.approx(curve.y_down, rel=0.05)


def test_pulsed_control_labels_windows():
    cfg = RingSimConfig(CAV, triangular_ramp(10, 60), 120.0, record_every=50)
    tr = ring_cavity_simulate(P, FIELDS, PulseSpec(5.0), cfg)
    lab = dict(zip(np.round(tr.times, 6), tr.labels))
    assert lab[15.0] == "off" and lab[45.0] == "on" and lab[75.0] == "off"
    assert tr.omega1[list(tr.times).index(45.0)] == pytest.approx(5, abs=1e-6)
    on = np.array([x == "on" for x in tr.labels])
    assert loop_area(tr, on) >= 0 and loop_area(tr, ~on) >= 0


def test_logic_levels():
    assert levels_from_samples([0.5, 1.5], [8, 10]) == LogicLevels(1.0, 9.0, 5.0)
    with pytest.raises(NotBistable):
        logic_threshold(trace_curve(P, FieldConfig(delta_2=5), CAV))
    lv = logic_threshold(trace_curve(P, FieldConfig(omega_1=5, delta_2=5), CavityConfig(300)))
    assert np.isfinite(lv.low_mean) and lv.high_mean > lv.low_mean


def test_target_encoding_from_curve():
    curve = trace_curve(P, FIELDS, CAV)
    enc = TargetEncoding.from_curve(curve)
    assert enc.y0 < curve.y_down < enc.y1_hold < curve.y_up < enc.y1_peak
    d1 = enc.drive(1)
    assert d1(enc.ramp_time) == pytest.approx(enc.y1_peak)
    assert d1(enc.duration) == pytest.approx(enc.y1_hold)


def test_cnot_requires_bistable_control_on_curve():
    with pytest.raises(NotBistable):
        cnot_truth_table(P, FieldConfig(omega_3=0.5, delta_2=7), 0.0, RingSimConfig(CAV, None, 0))


def test_cnot_report_structure_and_control_off_rows():
    rep = cnot_truth_table(P, FieldConfig(omega_3=0.5, delta_2=7), 5.0, RingSimConfig(CAV, None, 0))
    assert [r[:2] for r in rep.truth_table] == [r[:2] for r in CNOT_TABLE]
    # control off: target passes through unchanged
    assert rep.truth_table[0] == (0, 0, 0) and rep.truth_table[1] == (0, 1, 1)
    assert rep.passed == (rep.truth_table == CNOT_TABLE)

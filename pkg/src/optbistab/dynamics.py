"""Time-domain ring cavity with a pulsed control field.

The intracavity probe is advanced by a round-trip map with a transport delay:

    e_0(t) = (T/2) y_in(t) + R e_L(t - dtau)
    e_L(t) = e_0(t) + i (C T / 2) rho_32(t)

whose fixed point is exactly ``y = 2x - i C rho_32`` with x = e_L. The atoms
see the probe Rabi frequency ``x_to_omega2 * e_L`` and are stepped with RK4.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .bloch import (AtomicParams, FieldConfig, FieldDecomposition, RK4_BOUND,
                    dephasing_rates, ground_state)
from .cavity import BistabilityCurve, CavityConfig, absolute_deviation, trace_curve, window_samples
from .errors import (HistoryUnderflow, IndistinguishableStates, NotBistable, StepTooLarge,
                     ValidationError)

DEFAULT_EDGES = ((0.0, -1), (30.0, 1), (60.0, -1), (90.0, 1))
CNOT_TABLE = ((0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0))


@dataclass(frozen=True)
class PulseSpec:
    """Omega_1(t) = omega_01 [1 + sum_k s_k/2 tanh(slope (t - t_k))].

    Edge signs must alternate; the default edges switch the control off at
    t = 0, on at 30, off at 60 and on at 90. With no edges the pulse is the
    constant ``omega_01``.
    """

    omega_01: float
    edges: tuple = DEFAULT_EDGES
    slope: float = 2.0

    def __post_init__(self):
        if not math.isfinite(self.omega_01) or self.omega_01 < 0:
            raise ValidationError("omega_01 ≥ 0")
        edges = tuple((float(t), int(s)) for t, s in self.edges)
        object.__setattr__(self, "edges", edges)
        signs = [s for _, s in edges]
        if any(s not in (-1, 1) for s in signs):
            raise ValidationError("edge signs must be ±1")
        if any(a == b for a, b in zip(signs, signs[1:])):
            raise ValidationError("edge signs must alternate")
        if any(b[0] <= a[0] for a, b in zip(edges, edges[1:])):
            raise ValidationError("edge times must be increasing")
        if not self.slope > 0:
            raise ValidationError("slope > 0")


def pulse_omega1(spec: PulseSpec, tau):
    """Control Rabi frequency at time ``tau`` (scalar or array)."""
    t = np.asarray(tau, dtype=float)
    v = np.ones_like(t)
    for tk, sk in spec.edges:
        v = v + 0.5 * sk * np.tanh(spec.slope * (t - tk))
    v = spec.omega_01 * v
    return float(v) if v.ndim == 0 else v


def piecewise_linear(times: Sequence[float], values: Sequence[float]) -> Callable[[float], float]:
    """Drive y_in(t) interpolating the given knots, constant outside them."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 1 or t.shape != v.shape or np.any(np.diff(t) < 0):
        raise ValidationError("drive knots must be matching, nondecreasing sequences")
    return lambda tau: float(np.interp(tau, t, v))


def triangular_ramp(y_max: float, t_rise: float, t_fall: Optional[float] = None,
                    y_min: float = 0.0, t_start: float = 0.0) -> Callable[[float], float]:
    t_fall = t_rise if t_fall is None else t_fall
    return piecewise_linear([t_start, t_start + t_rise, t_start + t_rise + t_fall],
                            [y_min, y_max, y_min])


@dataclass(frozen=True)
class RingSimConfig:
    """Delayed-feedback simulation settings.

    The round-trip delay is ``delay_steps * dt`` exactly. ``cavity_rate``
    is the field response rate T/dtau; the input-mirror transmission follows
    as T = cavity_rate * dtau (R = 1 - T), so changing the delay at fixed
    rate leaves the coarse-grained field dynamics unchanged. Neither enters
    the stationary states. Rates well below the atomic response rate keep the
    field adiabatically slaved to the atoms.
    """

    cavity: CavityConfig
    input_drive: Callable[[float], float]
    t_end: float
    dt: float = 0.01
    delay_steps: int = 1
    cavity_rate: float = 1.0
    n_slices: int = 1
    history_capacity: int = 100_000
    record_every: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise StepTooLarge("dt must be positive")
        if isinstance(self.delay_steps, bool) or int(self.delay_steps) != self.delay_steps \
                or self.delay_steps < 1:
            raise ValidationError("delay_steps must be an integer ≥ 1")
        if not (self.cavity_rate > 0 and math.isfinite(self.cavity_rate)):
            raise ValidationError("cavity_rate > 0")
        if self.transmission > 1:
            raise ValidationError("cavity_rate * delay must not exceed 1 (transmission ≤ 1)")
        if int(self.n_slices) != self.n_slices or self.n_slices < 1:
            raise ValidationError("n_slices must be an integer ≥ 1")
        if self.t_end < 0:
            raise ValidationError("t_end ≥ 0")
        if self.record_every < 1:
            raise ValidationError("record_every ≥ 1")

    @property
    def delay(self) -> float:
        return self.delay_steps * self.dt

    @property
    def transmission(self) -> float:
        return self.cavity_rate * self.delay

    @classmethod
    def with_delay(cls, delay: float, dt: float, **kwargs) -> "RingSimConfig":
        """Build from a delay time that must be an integer multiple of dt."""
        steps = round(delay / dt)
        if steps < 1 or abs(steps * dt - delay) > 1e-9 * max(delay, dt):
            raise ValidationError("delay must be an integer multiple (≥ 1) of dt")
        return cls(dt=dt, delay_steps=int(steps), **kwargs)


@dataclass(frozen=True)
class TimeTrace:
    times: np.ndarray
    y_in: np.ndarray
    x_out: np.ndarray
    omega1: np.ndarray
    labels: list = field(repr=False)
    e_out: np.ndarray = field(repr=False)
    rho32: np.ndarray = field(repr=False)
    final_rho: np.ndarray = field(repr=False)


def ring_cavity_simulate(params: AtomicParams, base_fields: FieldConfig,
                         pulse: Optional[PulseSpec], sim: RingSimConfig,
                         rho0: Optional[np.ndarray] = None, e_init: complex = 0.0) -> TimeTrace:
    """Co-integrate the Bloch equations and the delayed round-trip map.

    ``pulse=None`` keeps Omega_1 at ``base_fields.omega_1``. ``rho0`` defaults
    to all population in |1>; ``e_init`` fills the feedback history.

    Raises
    ------
    StepTooLarge
        when dt times the largest rate reaches 0.1 at any step.
    HistoryUnderflow
        when the delay exceeds ``history_capacity``.
    """
    if sim.delay_steps > sim.history_capacity:
        raise HistoryUnderflow(
            f"delay of {sim.delay_steps} steps exceeds history capacity {sim.history_capacity}"
        )
    dt = sim.dt
    n_steps = int(round(sim.t_end / dt))
    ns = sim.n_slices
    cav = sim.cavity
    T, R = sim.transmission, 1.0 - sim.transmission
    gain = 0.5j * cav.cooperativity * T / ns
    scale = cav.x_to_omega2

    dec = FieldDecomposition(params, base_fields)
    a1, b1 = dec._a[0], dec._b[0]
    a2, b2 = dec._a[1], dec._b[1]
    o3 = complex(base_fields.omega_3)
    g_fixed = dec.base + o3 * dec._a[2] + np.conj(o3) * dec._b[2]
    static_rate = max([abs(o3)] + [abs(d) for d in base_fields.deltas]
                      + [float(dephasing_rates(params).max()), float(params.decay_out().max())])

    if pulse is None:
        o1_of = lambda t: complex(base_fields.omega_1)  # noqa: E731
        pulse_on = lambda t: True  # noqa: E731
    else:
        o1_of = lambda t: complex(pulse_omega1(pulse, t))  # noqa: E731
        pulse_on = lambda t: pulse_omega1(pulse, t) > 0.5 * pulse.omega_01  # noqa: E731

    rho = np.array(ground_state() if rho0 is None else rho0, dtype=complex)
    v = np.tile(rho.reshape(-1, order="F"), (ns, 1))  # (slices, 16)
    history = deque([complex(e_init)] * sim.delay_steps, maxlen=sim.delay_steps)

    def gen(o1, o2):
        # o2: per-slice probe Rabi frequencies
        g = g_fixed + o1 * a1 + np.conj(o1) * b1
        return g[None] + o2[:, None, None] * a2 + np.conj(o2)[:, None, None] * b2

    rec_t, rec_y, rec_e, rec_o1, rec_r = [], [], [], [], []
    for n in range(n_steps + 1):
        t = n * dt
        y = sim.input_drive(t)
        e = 0.5 * T * y + R * history[0]
        e_seen = np.empty(ns, dtype=complex)
        r32 = v[:, 2 + 4 * 1]
        for s in range(ns):
            # each slice sees the field leaving it; with one slice this is x = e_L
            e = e + gain * r32[s]
            e_seen[s] = e
        history.append(e)
        o1_now = o1_of(t)
        if n % sim.record_every == 0 or n == n_steps:
            rec_t.append(t)
            rec_y.append(y)
            rec_e.append(e)
            rec_o1.append(o1_now.real)
            rec_r.append(complex(r32.mean()))
        if n == n_steps:
            break
        o2 = scale * e_seen
        rate = max(static_rate, abs(o1_now), float(np.abs(o2).max()))
        if dt * rate >= RK4_BOUND:
            raise StepTooLarge(
                f"dt={dt:g} violates dt*max_rate < {RK4_BOUND} at t={t:g} (max_rate={rate:g})"
            )
        if pulse is None:
            g0 = gm = g1 = gen(o1_now, o2)
        else:
            g0 = gen(o1_now, o2)
            gm = gen(o1_of(t + 0.5 * dt), o2)
            g1 = gen(o1_of(t + dt), o2)
        k1 = np.einsum("sij,sj->si", g0, v)
        k2 = np.einsum("sij,sj->si", gm, v + 0.5 * dt * k1)
        k3 = np.einsum("sij,sj->si", gm, v + 0.5 * dt * k2)
        k4 = np.einsum("sij,sj->si", g1, v + dt * k3)
        v = v + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        m = v.reshape(ns, 4, 4).transpose(0, 2, 1)
        m = 0.5 * (m + m.conj().transpose(0, 2, 1))
        v = m.transpose(0, 2, 1).reshape(ns, 16)

    times = np.array(rec_t)
    e_out = np.array(rec_e)
    labels = ["on" if pulse_on(t) else "off" for t in times]
    final = v[-1].reshape(4, 4, order="F")
    return TimeTrace(times, np.array(rec_y), np.abs(e_out), np.array(rec_o1),
                     labels, e_out, np.array(rec_r), final)


def sweep_jumps(trace: TimeTrace, min_jump: Optional[float] = None) -> tuple:
    """Input values at which the output jumps during an up-then-down sweep.

    Returns ``(up_jumps, down_jumps)``: y_in at each discontinuity on the
    rising part and on the falling part of the drive. A jump is a step in
    x_out larger than ``min_jump`` (default: 20x the median step).
    """
    y, x = trace.y_in, trace.x_out
    peak = int(np.argmax(y))
    dx = np.diff(x)
    thr = min_jump if min_jump is not None else 20 * float(np.median(np.abs(dx)) + 1e-15)
    up, down = [], []
    k = 0
    while k < len(dx):
        if abs(dx[k]) > thr:
            j = k
            while j + 1 < len(dx) and abs(dx[j + 1]) > thr and np.sign(dx[j + 1]) == np.sign(dx[k]):
                j += 1
            (up if k < peak and dx[k] > 0 else down if k >= peak and dx[k] < 0 else []).append(
                float(y[k])
            )
            k = j + 1
        else:
            k += 1
    return up, down


def loop_area(trace: TimeTrace, mask=None) -> float:
    """|closed-path integral of x_out d y_in| over the selected samples."""
    y, x = trace.y_in, trace.x_out
    if mask is not None:
        idx = np.flatnonzero(mask)
        if idx.size < 2:
            return 0.0
        y, x = y[idx], x[idx]
    return float(abs(np.sum(0.5 * (x[1:] + x[:-1]) * np.diff(y))))


class LogicLevels(NamedTuple):
    low_mean: float
    high_mean: float
    threshold: float


def levels_from_samples(lower, upper) -> LogicLevels:
    lo, hi = float(np.mean(lower)), float(np.mean(upper))
    return LogicLevels(lo, hi, 0.5 * (lo + hi))


def logic_threshold(curve: BistabilityCurve, n: int = 200) -> LogicLevels:
    """Branch means over the first bistable window and their midpoint.

    Raises
    ------
    NotBistable
        if the curve has no turning points.
    """
    if curve.fold_count == 0:
        raise NotBistable("curve has no turning points")
    smp = window_samples(curve, n)
    return levels_from_samples(smp.lower, smp.upper)


@dataclass(frozen=True)
class TargetEncoding:
    """Input-drive levels for the target bit.

    |0>: ramp from 0 to ``y0`` and hold. |1>: ramp to ``y1_peak`` (above the
    switch-up threshold), back down to ``y1_hold`` inside the bistable window
    and hold.
    """

    y0: float
    y1_peak: float
    y1_hold: float
    ramp_time: float = 60.0
    hold_time: float = 40.0

    def drive(self, bit: int) -> Callable[[float], float]:
        r, h = self.ramp_time, self.hold_time
        if bit == 0:
            return piecewise_linear([0, r, 2 * r + h], [0, self.y0, self.y0])
        return piecewise_linear([0, r, 2 * r, 2 * r + h], [0, self.y1_peak, self.y1_hold, self.y1_hold])

    @property
    def duration(self) -> float:
        return 2 * self.ramp_time + self.hold_time

    @classmethod
    def from_curve(cls, curve: BistabilityCurve, overshoot: float = 0.1, **kwargs) -> "TargetEncoding":
        regions = curve.bistable_regions()
        if not regions:
            raise NotBistable("curve has no bistable window")
        y_down, y_up = regions[0]
        return cls(0.5 * y_down, (1 + overshoot) * y_up, 0.5 * (y_down + y_up), **kwargs)


@dataclass(frozen=True)
class GateReport:
    truth_table: tuple  # rows (control, target_in, target_out)
    thresholds: LogicLevels
    encoding: TargetEncoding
    outputs: tuple  # final x_out per row
    passed: bool

    @property
    def pass_(self) -> bool:
        return self.passed


def cnot_truth_table(params: AtomicParams, base_fields: FieldConfig, omega_on: float,
                     sim: RingSimConfig, omega_off: float = 0.0,
                     encoding: Optional[TargetEncoding] = None, x_grid=None,
                     settle: float = 10.0, executor=None) -> GateReport:
    """Run the four (control, target) combinations and classify the outputs.

    Control |1> holds Omega_1 at ``omega_on``, control |0> at ``omega_off``;
    Omega_3 and the detunings come from ``base_fields``. Logic levels and the
    default target encoding come from the traced curve with the control on.
    Each row's output is the mean x_out over the last ``settle`` time units.

    Raises
    ------
    NotBistable
        if the control-on curve has no bistable window.
    IndistinguishableStates
        if the branch means are closer than 3x the summed branch deviations.
    """
    on_fields = base_fields.with_(omega_1=omega_on)
    curve = trace_curve(params, on_fields, sim.cavity, x_grid)
    levels = logic_threshold(curve)
    smp = window_samples(curve)
    spread = absolute_deviation(smp.lower) + absolute_deviation(smp.upper)
    if abs(levels.high_mean - levels.low_mean) < 3 * spread:
        raise IndistinguishableStates(
            f"logic levels {levels.low_mean:.4g} and {levels.high_mean:.4g} overlap"
        )
    enc = encoding or TargetEncoding.from_curve(curve)

    def run(row):
        control, target = row
        fields = base_fields.with_(omega_1=omega_on if control else omega_off)
        cfg = RingSimConfig(
            cavity=sim.cavity, input_drive=enc.drive(target), t_end=enc.duration,
            dt=sim.dt, delay_steps=sim.delay_steps, cavity_rate=sim.cavity_rate,
            n_slices=sim.n_slices, history_capacity=sim.history_capacity,
            record_every=sim.record_every,
        )
        tr = ring_cavity_simulate(params, fields, None, cfg)
        tail = tr.times >= tr.times[-1] - settle
        return float(tr.x_out[tail].mean())

    rows = [(c, t) for c in (0, 1) for t in (0, 1)]
    mapper = executor.map if executor is not None else map
    outputs = tuple(mapper(run, rows))
    table = tuple((c, t, int(x > levels.threshold)) for (c, t), x in zip(rows, outputs))
    return GateReport(table, levels, enc, outputs, table == CNOT_TABLE)

"""Mean-field ring cavity: input-output curves, folds, hysteresis and metrics.

The normalised input y and intracavity field x obey ``y = 2x - i C rho_32``
with rho_32 evaluated at the probe Rabi frequency ``x * x_to_omega2``.
Curves are parametrised by x (single valued) and report |y|.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import constants

from .bloch import AtomicParams, FieldConfig, FieldDecomposition, _solve_stack
from .errors import GridTooCoarse, NonUniqueSteadyState, ValidationError, ZeroMeanBranch

DEFAULT_X_SPAN = (0.0, 40.0)
DEFAULT_X_POINTS = 2000
FOLD_RTOL = 1e-4
SLOPE_CAP = 1e6
FOLD_UP = "fold-up"
FOLD_DOWN = "fold-down"


@dataclass(frozen=True)
class PhysicalCavity:
    """SI description of the medium and ring cavity.

    ``gamma`` is the reference decay rate in s^-1 that converts to the
    normalised units used everywhere else.
    """

    number_density: float  # m^-3
    probe_angular_frequency: float  # rad/s
    medium_length: float  # m
    dipole_moment_sq: float  # (C m)^2
    transmission: float
    mirror_spacing: float  # m
    gamma: float  # s^-1

    def __post_init__(self):
        for name in ("number_density", "probe_angular_frequency", "medium_length",
                     "dipole_moment_sq", "mirror_spacing", "gamma"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"{name} ≥ 0")
        if not 0 < self.transmission <= 1:
            raise ValidationError("transmission in (0, 1]")
        if self.gamma == 0:
            raise ValidationError("gamma > 0")

    @property
    def reflectivity(self) -> float:
        return 1.0 - self.transmission

    def cooperativity(self) -> float:
        num = (self.number_density * self.probe_angular_frequency
               * self.medium_length * self.dipole_moment_sq)
        den = (2 * constants.hbar * self.gamma * constants.epsilon_0
               * constants.c * self.transmission)
        return num / den

    @property
    def delay_seconds(self) -> float:
        """Round-trip delay (2l + L)/c."""
        return (2 * self.mirror_spacing + self.medium_length) / constants.c

    @property
    def delay(self) -> float:
        """Round-trip delay in units of 1/gamma."""
        return self.delay_seconds * self.gamma


@dataclass(frozen=True)
class CavityConfig:
    cooperativity: float = 300.0
    x_to_omega2: float = 1.0
    physical: Optional[PhysicalCavity] = None

    def __post_init__(self):
        if not math.isfinite(self.cooperativity) or self.cooperativity < 0:
            raise ValidationError("cooperativity ≥ 0")
        if not math.isfinite(self.x_to_omega2):
            raise ValidationError("x_to_omega2 must be finite")
        if self.physical is not None:
            expected = self.physical.cooperativity()
            if abs(self.cooperativity - expected) > 1e-9 * max(abs(expected), 1e-300):
                raise ValidationError(
                    "cooperativity must equal N w2 L |mu32|^2 / (2 hbar gamma eps0 c T)"
                )

    @classmethod
    def from_physical(cls, physical: PhysicalCavity, x_to_omega2: float = 1.0) -> "CavityConfig":
        return cls(physical.cooperativity(), x_to_omega2, physical)


@dataclass(frozen=True)
class TurningPoint:
    x: float
    y_mag: float
    kind: str  # FOLD_UP (local max of |y|) or FOLD_DOWN (local min)


@dataclass(frozen=True)
class Branch:
    """Samples ``start:stop`` of the curve between two turning points.

    ``x`` and ``y_mag`` include the refined turning points as end points.
    """

    start: int
    stop: int
    stable: bool
    x: np.ndarray = field(repr=False)
    y_mag: np.ndarray = field(repr=False)

    @property
    def y_range(self) -> tuple:
        return float(self.y_mag.min()), float(self.y_mag.max())

    def x_at(self, y):
        """Invert the (monotone) branch by linear interpolation."""
        order = np.argsort(self.y_mag)
        return np.interp(y, self.y_mag[order], self.x[order])


@dataclass(frozen=True)
class BistabilityCurve:
    x: np.ndarray
    y: np.ndarray
    turning_points: tuple
    branches: tuple

    @property
    def y_mag(self) -> np.ndarray:
        return np.abs(self.y)

    @property
    def samples(self) -> list:
        return [(float(a), complex(b), float(abs(b))) for a, b in zip(self.x, self.y)]

    @property
    def fold_count(self) -> int:
        return len(self.turning_points)

    @property
    def is_bistable(self) -> bool:
        return self.fold_count >= 2

    @property
    def y_up(self) -> float:
        """Largest switch-up threshold, or NaN for a monostable curve."""
        ups = [t.y_mag for t in self.turning_points if t.kind == FOLD_UP]
        return max(ups) if ups else math.nan

    @property
    def y_down(self) -> float:
        downs = [t.y_mag for t in self.turning_points if t.kind == FOLD_DOWN]
        return min(downs) if downs else math.nan

    @property
    def stable_branches(self) -> list:
        return [b for b in self.branches if b.stable]

    def bistable_regions(self) -> list:
        """(y_down, y_up) for every fold-up followed by a fold-down."""
        tps = self.turning_points
        return [
            (tps[k + 1].y_mag, tps[k].y_mag)
            for k in range(len(tps) - 1)
            if tps[k].kind == FOLD_UP and tps[k + 1].kind == FOLD_DOWN
        ]

    def branch_labels(self) -> list:
        """'stable'/'unstable' per sample."""
        labels = [""] * len(self.x)
        for b in self.branches:
            for k in range(b.start, b.stop):
                labels[k] = "stable" if b.stable else "unstable"
        return labels


@dataclass(frozen=True)
class HysteresisResult:
    forward_trace: list
    backward_trace: list
    l_hys: float
    jump_points: list
    y_up: float = math.nan
    y_down: float = math.nan


def default_x_grid(span=DEFAULT_X_SPAN, points: int = DEFAULT_X_POINTS) -> np.ndarray:
    return np.linspace(span[0], span[1], points)


class _Response:
    """Vectorised y(x) for fixed params, fields and cavity."""

    def __init__(self, params: AtomicParams, fields: FieldConfig, cav: CavityConfig):
        self.fields = fields
        self.cav = cav
        self.dec = FieldDecomposition(params, fields)
        self.degenerate_zero = False

    def rho32(self, x, allow_zero_degenerate: bool = False) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        o2 = self.cav.x_to_omega2 * x
        gens = self.dec.stack(self.fields.omega_1, o2, self.fields.omega_3)
        rhos, ok = _solve_stack(gens)
        r32 = rhos[:, 2, 1]
        if not ok.all():
            bad = ~ok
            # Without a probe every stationary state has rho_32 = 0.
            zero_probe = bad & (o2 == 0)
            if allow_zero_degenerate:
                r32[zero_probe] = 0.0
                bad = bad & ~zero_probe
            if bad.any():
                raise NonUniqueSteadyState(
                    f"stationary state is not unique at x = {x[bad][0]:g}"
                )
        return r32

    def y(self, x, allow_zero_degenerate: bool = False) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return 2 * x - 1j * self.cav.cooperativity * self.rho32(x, allow_zero_degenerate)

    def dy_mag(self, x: float, h: float) -> float:
        lo = max(x - h, 0.0)
        ym = np.abs(self.y(np.array([lo, x + h]), True))
        return float((ym[1] - ym[0]) / (x + h - lo))


def intracavity_response(params: AtomicParams, fields: FieldConfig, cav: CavityConfig, x):
    """Complex input field y for intracavity field x (scalar or array).

    Raises
    ------
    NonUniqueSteadyState
        at x = 0 when no other field drives the ground manifold.
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0) or not np.all(np.isfinite(x_arr)):
        raise ValidationError("x ≥ 0")
    y = _Response(params, fields, cav).y(x_arr)
    return complex(y[0]) if x_arr.ndim == 0 else y


def _derivative_signs(d: np.ndarray) -> np.ndarray:
    """Sign of d with zeros replaced by the previous nonzero sign."""
    s = np.sign(d)
    last = 0.0
    for k in range(len(s)):
        if s[k] == 0:
            s[k] = last
        else:
            last = s[k]
    first = np.flatnonzero(s)
    if first.size:
        s[: first[0]] = s[first[0]]
    return s


def _refine(resp: _Response, x: np.ndarray, k: int, span: float, rising: bool) -> float:
    """Bisection for the zero of d|y|/dx near the sign change after sample k."""
    tol = FOLD_RTOL * span
    h = 1e-3 * tol
    lo, hi = x[max(k - 1, 0)], x[min(k + 2, len(x) - 1)]
    sign = 1.0 if rising else -1.0  # derivative sign on the left of the fold
    if sign * resp.dy_mag(lo, h) <= 0 or sign * resp.dy_mag(hi, h) >= 0:
        lo, hi = x[k], x[k + 1]
        if sign * resp.dy_mag(lo, h) <= 0 or sign * resp.dy_mag(hi, h) >= 0:
            return float(0.5 * (x[k] + x[k + 1]))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if sign * resp.dy_mag(mid, h) > 0:
            lo = mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def trace_curve(params: AtomicParams, fields: FieldConfig, cav: CavityConfig, x_grid=None,
                refine: bool = True) -> BistabilityCurve:
    """Sample y(x), locate turning points of |y| and label branches.

    Turning points are sign changes of the centred difference of |y|,
    refined by bisection to 1e-4 of the grid span. Branches with
    d|y|/dx < 0 are unstable.

    Raises
    ------
    GridTooCoarse
        if two sign changes of the derivative fall on adjacent grid cells.
    """
    x = default_x_grid() if x_grid is None else np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ValidationError("x grid needs at least 3 points")
    if np.any(np.diff(x) <= 0):
        raise ValidationError("x grid must be strictly increasing")
    if x[0] < 0:
        raise ValidationError("x ≥ 0")
    resp = _Response(params, fields, cav)
    y = resp.y(x, allow_zero_degenerate=True)
    ym = np.abs(y)
    s = _derivative_signs(np.gradient(ym, x))
    changes = np.flatnonzero(s[1:] != s[:-1])
    if np.any(np.diff(changes) < 2):
        k = changes[np.flatnonzero(np.diff(changes) < 2)[0]]
        raise GridTooCoarse(f"two turning points within one grid cell near x = {x[k]:g}")

    span = float(x[-1] - x[0])
    tps = []
    for k in changes:
        rising = s[k] > 0
        xs = _refine(resp, x, k, span, rising) if refine else float(0.5 * (x[k] + x[k + 1]))
        ys = float(np.abs(resp.y(np.array([xs]), True))[0])
        tps.append(TurningPoint(xs, ys, FOLD_UP if rising else FOLD_DOWN))

    branches = []
    bounds = [(None, None)] + [(tp.x, tp.y_mag) for tp in tps] + [(None, None)]
    for b in range(len(tps) + 1):
        left, right = bounds[b], bounds[b + 1]
        start = 0 if left[0] is None else int(np.searchsorted(x, left[0], side="right"))
        stop = len(x) if right[0] is None else int(np.searchsorted(x, right[0], side="right"))
        bx, by = list(x[start:stop]), list(ym[start:stop])
        if left[0] is not None:
            bx.insert(0, left[0])
            by.insert(0, left[1])
        if right[0] is not None:
            bx.append(right[0])
            by.append(right[1])
        if b == 0:
            stable = bool(s[0] > 0) if len(tps) == 0 else tps[0].kind == FOLD_UP
        else:
            stable = tps[b - 1].kind == FOLD_DOWN
        branches.append(Branch(start, stop, stable, np.array(bx), np.array(by)))
    return BistabilityCurve(x, y, tuple(tps), tuple(branches))


def _relay(stable: list, ys: np.ndarray, forward: bool):
    """Follow stable branches along the input sequence ``ys``.

    Returns the trace and the y values of the folds at which the branch changed.
    """
    ranges = [b.y_range for b in stable]
    cur = 0 if forward else len(stable) - 1
    trace, jumps = [], []
    for y in ys:
        if forward:
            while cur < len(stable) - 1 and y > ranges[cur][1]:
                nxt = next(
                    (j for j in range(cur + 1, len(stable)) if ranges[j][0] <= y <= ranges[j][1]),
                    next((j for j in range(cur + 1, len(stable)) if ranges[j][1] >= y),
                         len(stable) - 1),
                )
                jumps.append(ranges[cur][1])
                cur = nxt
        else:
            while cur > 0 and y < ranges[cur][0]:
                nxt = next(
                    (j for j in range(cur - 1, -1, -1) if ranges[j][0] <= y <= ranges[j][1]),
                    next((j for j in range(cur - 1, -1, -1) if ranges[j][0] <= y), 0),
                )
                jumps.append(ranges[cur][0])
                cur = nxt
        trace.append((float(y), float(stable[cur].x_at(y))))
    return trace, jumps


def hysteresis_sweep(curve: BistabilityCurve, y_grid=None) -> HysteresisResult:
    """Quasi-static forward (increasing y) and backward sweeps.

    The state stays on its stable branch while that branch exists and jumps
    at the fold where it terminates. ``l_hys`` is the largest forward jump
    minus the smallest backward jump.
    """
    ys = (np.linspace(0.0, float(curve.y_mag.max()), 2001) if y_grid is None
          else np.sort(np.asarray(y_grid, dtype=float)))
    stable = curve.stable_branches
    fwd, up_jumps = _relay(stable, ys, True)
    bwd, down_jumps = _relay(stable, ys[::-1], False)
    if up_jumps and down_jumps:
        y_up, y_down = max(up_jumps), min(down_jumps)
        l_hys = max(y_up - y_down, 0.0)
    else:
        y_up = y_down = math.nan
        l_hys = 0.0
    jumps = [float(v) for v in up_jumps + down_jumps]
    return HysteresisResult(fwd, bwd, l_hys, jumps, y_up, y_down)


def slope_profile(curve: BistabilityCurve) -> list:
    """(|y|, S = dx/d|y|) for every stable-branch sample, |S| capped at 1e6."""
    ym = curve.y_mag
    d = np.gradient(ym, curve.x)
    stable = np.array([lab == "stable" for lab in curve.branch_labels()])
    out = []
    for k in np.flatnonzero(stable):
        if abs(d[k]) * SLOPE_CAP <= 1.0:
            s = math.copysign(SLOPE_CAP, d[k]) if d[k] != 0 else SLOPE_CAP
        else:
            s = 1.0 / d[k]
        out.append((float(ym[k]), float(s)))
    return out


def max_abs_slope(curve: BistabilityCurve) -> float:
    prof = slope_profile(curve)
    return max(abs(s) for _, s in prof) if prof else 0.0


def percentage_error(branch_samples) -> float:
    """100 * mean |x_i - mean(x)| / mean(x)."""
    v = np.asarray(branch_samples, dtype=float)
    if v.size < 2:
        raise ValidationError("percentage error needs at least 2 samples")
    m = v.mean()
    if abs(m) < 1e-12:
        raise ZeroMeanBranch("branch mean is ~0; use the absolute deviation instead")
    return float(100.0 * np.mean(np.abs(v - m)) / m)


def absolute_deviation(branch_samples) -> float:
    v = np.asarray(branch_samples, dtype=float)
    return float(np.mean(np.abs(v - v.mean())))


@dataclass(frozen=True)
class BranchSamples:
    y_down: float
    y_up: float
    lower: np.ndarray
    upper: np.ndarray


def window_samples(curve: BistabilityCurve, n: int = 200, mode: str = "window") -> BranchSamples:
    """Output-field samples of both logic branches over the first bistable window.

    ``mode='window'`` samples uniformly in y over [y_down, y_up];
    ``mode='sweep'`` takes the hysteresis-sweep trace points inside that window.
    """
    from .errors import NotBistable

    regions = curve.bistable_regions()
    if not regions:
        raise NotBistable("curve has no bistable window")
    y_down, y_up = regions[0]
    stable = curve.stable_branches
    if mode == "window":
        yg = np.linspace(y_down, y_up, n)
        return BranchSamples(y_down, y_up, stable[0].x_at(yg), stable[1].x_at(yg))
    if mode == "sweep":
        yg = np.linspace(0.0, float(curve.y_mag.max()), max(n, 2001))
        res = hysteresis_sweep(curve, yg)
        lower = [x for y, x in res.forward_trace if y_down <= y <= y_up]
        upper = [x for y, x in res.backward_trace if y_down <= y <= y_up]
        return BranchSamples(y_down, y_up, np.array(lower), np.array(upper))
    raise ValidationError("mode must be 'window' or 'sweep'")


def branch_percentage_errors(curve: BistabilityCurve, n: int = 200, mode: str = "window") -> dict:
    """Percentage errors of the upper (|1>) and lower (|0>) branches.

    A near-zero lower branch falls back to the absolute deviation, flagged
    by ``lower_is_absolute``.
    """
    smp = window_samples(curve, n, mode)
    out = {"y_down": smp.y_down, "y_up": smp.y_up,
           "upper": percentage_error(smp.upper), "lower_is_absolute": False}
    try:
        out["lower"] = percentage_error(smp.lower)
    except ZeroMeanBranch:
        out["lower"] = absolute_deviation(smp.lower)
        out["lower_is_absolute"] = True
    return out

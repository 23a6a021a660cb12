"""Density-matrix equations of the four-level N-type atom.

Levels are labelled 1..4 in names and docstrings and 0..3 in arrays. The
control field drives 1-3, the probe 2-3 and the coupling field 2-4. Every
rate, Rabi frequency, detuning and time is expressed in units of the common
decay rate gamma (or 1/gamma), so gamma never appears as a number.

The density matrix is vectorised column-major: ``vec(rho)[i + 4*j] = rho[i, j]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np

from .errors import NonUniqueSteadyState, StepTooLarge, ValidationError

N_LEVELS = 4
DIM = N_LEVELS * N_LEVELS
POPULATION_INDICES = (0, 5, 10, 15)
COND_MAX = 1e12
RK4_BOUND = 0.1


@dataclass(frozen=True)
class AtomicParams:
    """Spontaneous decay rates and collisional dephasing.

    ``gamma_ij`` is the decay rate from level j into level i, so
    ``gamma_24`` is the |4> -> |2> channel (written gamma_42 in some tables).
    """

    gamma_13: float = 1.0
    gamma_23: float = 1.0
    gamma_14: float = 1.0
    gamma_24: float = 1.0
    gamma_coll: float = 0.001

    def __post_init__(self):
        for name in ("gamma_13", "gamma_23", "gamma_14", "gamma_24", "gamma_coll"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise ValidationError(f"{name} ≥ 0")

    def decay_out(self) -> np.ndarray:
        """Total decay rate out of each level."""
        return np.array(
            [0.0, 0.0, self.gamma_13 + self.gamma_23, self.gamma_14 + self.gamma_24]
        )


@dataclass(frozen=True)
class FieldConfig:
    """Complex Rabi frequencies and real detunings of the three fields."""

    omega_1: complex = 0.0
    omega_2: complex = 0.0
    omega_3: complex = 0.0
    delta_1: float = 0.0
    delta_2: float = 0.0
    delta_3: float = 0.0

    def __post_init__(self):
        for name in ("omega_1", "omega_2", "omega_3"):
            value = complex(getattr(self, name))
            if not (math.isfinite(value.real) and math.isfinite(value.imag)):
                raise ValidationError(f"{name} must be finite")
        for name in ("delta_1", "delta_2", "delta_3"):
            value = getattr(self, name)
            if isinstance(value, complex) or not math.isfinite(value):
                raise ValidationError(f"{name} must be a finite real number")

    def with_(self, **changes) -> "FieldConfig":
        return replace(self, **changes)

    @property
    def omegas(self) -> tuple:
        return (self.omega_1, self.omega_2, self.omega_3)

    @property
    def deltas(self) -> tuple:
        return (self.delta_1, self.delta_2, self.delta_3)


@dataclass(frozen=True)
class Liouvillian:
    """16x16 generator acting on the column-stacked density matrix."""

    generator: np.ndarray

    def apply(self, rho: np.ndarray) -> np.ndarray:
        v = np.asarray(rho).reshape(-1, order="F")
        return (self.generator @ v).reshape(N_LEVELS, N_LEVELS, order="F")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (n, 4, 4)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    return np.asarray(v).reshape(N_LEVELS, N_LEVELS, order="F")


def _index(i: int, j: int) -> int:
    # 1-based level labels -> position in vec(rho)
    return (i - 1) + N_LEVELS * (j - 1)


def dephasing_rates(params: AtomicParams) -> np.ndarray:
    """Symmetric 4x4 table of coherence damping rates (zero diagonal).

    ``G[i-1, j-1]`` is half the summed decay out of levels i and j plus the
    collisional rate.
    """
    out = params.decay_out()
    table = 0.5 * (out[:, None] + out[None, :]) + params.gamma_coll
    np.fill_diagonal(table, 0.0)
    return table


def hamiltonian(fields: FieldConfig) -> np.ndarray:
    """Rotating-frame Hamiltonian (hbar = 1) whose commutator reproduces the
    coherent part of the density-matrix equations."""
    o1, o2, o3 = (complex(o) for o in fields.omegas)
    d1, d2, d3 = fields.deltas
    h = np.diag([0.0, d2 - d1, -d1, d2 - d1 - d3]).astype(complex)
    h[2, 0], h[0, 2] = -o1, -np.conj(o1)
    h[2, 1], h[1, 2] = -o2, -np.conj(o2)
    h[3, 1], h[1, 3] = -o3, -np.conj(o3)
    return h


def equation_terms(params: AtomicParams, fields: FieldConfig) -> dict:
    """Term table of the equations of motion.

    Maps a matrix element ``(i, j)`` (1-based) to a list of
    ``(coefficient, (k, l))`` such that d rho_ij/dt = sum coefficient * rho_kl.
    The ten written equations are listed explicitly; the remaining coherences
    follow by Hermitian conjugation.
    """
    o1, o2, o3 = (complex(o) for o in fields.omegas)
    d1, d2, d3 = fields.deltas
    g13, g23 = params.gamma_13, params.gamma_23
    g14, g24 = params.gamma_14, params.gamma_24
    gam = dephasing_rates(params)
    G = lambda i, j: gam[i - 1, j - 1]  # noqa: E731
    c = np.conj
    i_ = 1j
    terms = {
        (1, 1): [(g13, (3, 3)), (g14, (4, 4)), (i_ * c(o1), (3, 1)), (-i_ * o1, (1, 3))],
        (2, 2): [
            (g23, (3, 3)), (g24, (4, 4)),
            (i_ * c(o2), (3, 2)), (-i_ * o2, (2, 3)),
            (i_ * c(o3), (4, 2)), (-i_ * o3, (2, 4)),
        ],
        (3, 3): [
            (-(g13 + g23), (3, 3)),
            (i_ * o1, (1, 3)), (-i_ * c(o1), (3, 1)),
            (i_ * o2, (2, 3)), (-i_ * c(o2), (3, 2)),
        ],
        (4, 4): [(-(g14 + g24), (4, 4)), (i_ * o3, (2, 4)), (-i_ * c(o3), (4, 2))],
        (2, 1): [
            (-(G(1, 2) - i_ * (d1 - d2)), (2, 1)),
            (-i_ * o1, (2, 3)), (i_ * c(o2), (3, 1)), (i_ * c(o3), (4, 1)),
        ],
        (3, 1): [
            (-(G(3, 1) - i_ * d1), (3, 1)),
            (i_ * o2, (2, 1)), (i_ * o1, (1, 1)), (-i_ * o1, (3, 3)),
        ],
        (3, 2): [
            (-(G(3, 2) - i_ * d2), (3, 2)),
            (i_ * o1, (1, 2)), (-i_ * o3, (3, 4)), (i_ * o2, (2, 2)), (-i_ * o2, (3, 3)),
        ],
        # +i*o2*rho_24: the Hamiltonian-consistent sign (the printed minus sign
        # breaks positivity of rho).
        (3, 4): [
            (-(G(3, 4) - i_ * (d2 - d3)), (3, 4)),
            (i_ * o1, (1, 4)), (i_ * o2, (2, 4)), (-i_ * c(o3), (3, 2)),
        ],
        (4, 1): [
            (-(G(4, 1) - i_ * (d1 - d2 + d3)), (4, 1)),
            (i_ * o3, (2, 1)), (-i_ * o1, (4, 3)),
        ],
        (4, 2): [
            (-(G(4, 2) - i_ * d3), (4, 2)),
            (i_ * o3, (2, 2)), (-i_ * o3, (4, 4)), (-i_ * o2, (4, 3)),
        ],
    }
    for (i, j), row in list(terms.items()):
        if i != j:
            terms[(j, i)] = [(np.conj(coef), (l, k)) for coef, (k, l) in row]
    return terms


def build_liouvillian(params: AtomicParams, fields: FieldConfig) -> Liouvillian:
    """Assemble the generator from the explicit term table."""
    gen = np.zeros((DIM, DIM), dtype=complex)
    for (i, j), row in equation_terms(params, fields).items():
        r = _index(i, j)
        for coef, (k, l) in row:
            gen[r, _index(k, l)] += coef
    return Liouvillian(gen)


def rhs(params: AtomicParams, fields: FieldConfig, rho: np.ndarray) -> np.ndarray:
    """Time derivative of ``rho`` in commutator form.

    Accepts a single 4x4 matrix or a stack ``(..., 4, 4)``.
    """
    rho = np.asarray(rho, dtype=complex)
    h = hamiltonian(fields)
    drho = -1j * (h @ rho - rho @ h) - dephasing_rates(params) * rho
    r33 = rho[..., 2, 2]
    r44 = rho[..., 3, 3]
    drho[..., 0, 0] += params.gamma_13 * r33 + params.gamma_14 * r44
    drho[..., 1, 1] += params.gamma_23 * r33 + params.gamma_24 * r44
    drho[..., 2, 2] -= (params.gamma_13 + params.gamma_23) * r33
    drho[..., 3, 3] -= (params.gamma_14 + params.gamma_24) * r44
    return drho


def _constrained_system(generator: np.ndarray):
    m = np.array(generator, dtype=complex, copy=True)
    m[..., 0, :] = 0.0
    m[..., 0, list(POPULATION_INDICES)] = 1.0
    b = np.zeros(m.shape[:-1], dtype=complex)
    b[..., 0] = 1.0
    return m, b


def steady_state(params: AtomicParams, fields: FieldConfig, cond_max: float = COND_MAX) -> np.ndarray:
    """Stationary density matrix with unit trace.

    The rho_11 row of the generator is replaced by the trace constraint and
    the resulting 16x16 system solved directly.

    Raises
    ------
    NonUniqueSteadyState
        if the constrained system's condition number exceeds ``cond_max``.
    """
    m, b = _constrained_system(build_liouvillian(params, fields).generator)
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > cond_max:
        raise NonUniqueSteadyState(
            f"stationary state is not unique (condition number {cond:.3g})"
        )
    rho = unvec(np.linalg.solve(m, b))
    return 0.5 * (rho + rho.conj().T)


def steady_states(params: AtomicParams, fields_seq, cond_max: float = COND_MAX):
    """Batched :func:`steady_state`.

    Returns ``(rhos, ok)``; entries with ``ok == False`` are degenerate and
    filled with NaN instead of raising.
    """
    fields_seq = list(fields_seq)
    gens = np.stack([build_liouvillian(params, f).generator for f in fields_seq])
    return _solve_stack(gens, cond_max)


def _solve_stack(gens: np.ndarray, cond_max: float = COND_MAX):
    m, b = _constrained_system(gens)
    cond = np.linalg.cond(m)
    ok = np.isfinite(cond) & (cond <= cond_max)
    rhos = np.full((len(gens), N_LEVELS, N_LEVELS), complex(np.nan, np.nan))
    if ok.any():
        sol = np.linalg.solve(m[ok], b[ok][..., None])[..., 0]
        r = sol.reshape(-1, N_LEVELS, N_LEVELS).transpose(0, 2, 1)
        rhos[ok] = 0.5 * (r + r.conj().transpose(0, 2, 1))
    return rhos, ok


class FieldDecomposition:
    """Generator split into its affine dependence on the three Rabi frequencies.

    ``generator(o1, o2, o3) = base + sum_k (o_k * A_k + conj(o_k) * B_k)`` with
    the detunings fixed. Used where the fields change every time step.
    """

    def __init__(self, params: AtomicParams, fields: FieldConfig):
        zero = fields.with_(omega_1=0.0, omega_2=0.0, omega_3=0.0)
        self.base = build_liouvillian(params, zero).generator
        self._a, self._b = [], []
        for name in ("omega_1", "omega_2", "omega_3"):
            re = build_liouvillian(params, zero.with_(**{name: 1.0})).generator - self.base
            im = build_liouvillian(params, zero.with_(**{name: 1j})).generator - self.base
            self._a.append(0.5 * (re - 1j * im))
            self._b.append(0.5 * (re + 1j * im))

    def generator(self, o1: complex, o2: complex, o3: complex) -> np.ndarray:
        g = self.base.copy()
        for o, a, b in zip((o1, o2, o3), self._a, self._b):
            if o != 0:
                g += o * a + np.conj(o) * b
        return g

    def stack(self, o1, o2, o3) -> np.ndarray:
        """Generators for broadcast arrays of Rabi frequencies, shape (n, 16, 16)."""
        o1, o2, o3 = np.broadcast_arrays(
            np.asarray(o1, complex), np.asarray(o2, complex), np.asarray(o3, complex)
        )
        g = np.broadcast_to(self.base, o1.shape + self.base.shape).copy()
        for o, a, b in zip((o1, o2, o3), self._a, self._b):
            g += o[..., None, None] * a + np.conj(o)[..., None, None] * b
        return g


def max_rate(params: AtomicParams, fields: FieldConfig) -> float:
    """Largest of |Omega|, |Delta| and the damping rates; sets the RK4 bound."""
    rates = [abs(complex(o)) for o in fields.omegas]
    rates += [abs(d) for d in fields.deltas]
    rates.append(float(dephasing_rates(params).max()))
    rates.append(float(params.decay_out().max()))
    return max(rates)


def check_step(params: AtomicParams, fields: FieldConfig, dt: float) -> None:
    rate = max_rate(params, fields)
    if dt <= 0 or dt * rate >= RK4_BOUND:
        raise StepTooLarge(
            f"dt={dt:g} violates dt*max_rate < {RK4_BOUND} (max_rate={rate:g})"
        )


def _n_steps(t_end: float, dt: float) -> int:
    if dt <= 0:
        raise StepTooLarge("dt must be positive")
    n = int(round(t_end / dt))
    if n < 0 or abs(n * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError("t_end must be a non-negative integer multiple of dt")
    return n


def rk4_step(deriv: Callable, t: float, rho: np.ndarray, dt: float) -> np.ndarray:
    k1 = deriv(t, rho)
    k2 = deriv(t + 0.5 * dt, rho + 0.5 * dt * k1)
    k3 = deriv(t + 0.5 * dt, rho + 0.5 * dt * k2)
    k4 = deriv(t + dt, rho + dt * k3)
    out = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return 0.5 * (out + out.conj().swapaxes(-1, -2))


FieldsLike = Union[FieldConfig, Callable[[float], FieldConfig]]


def evolve_rk4(
    params: AtomicParams,
    fields_of_t: FieldsLike,
    rho0: np.ndarray,
    t_end: float,
    dt: float,
    record_every: int = 1,
) -> Trajectory:
    """Fixed-step classical RK4 integration from ``rho0`` to ``t_end``.

    ``fields_of_t`` is either a constant :class:`FieldConfig` or a callable
    ``t -> FieldConfig``. The state is re-symmetrised after every step.

    Raises
    ------
    StepTooLarge
        if ``dt * max_rate >= 0.1`` at any step.
    """
    n = _n_steps(t_end, dt)
    rho = np.array(rho0, dtype=complex)
    times, states = [0.0], [rho.copy()]

    if isinstance(fields_of_t, FieldConfig):
        check_step(params, fields_of_t, dt)
        gen = build_liouvillian(params, fields_of_t).generator
        # vec/unvec via transposes keeps the loop on plain matmuls
        def deriv(t, r):
            return unvec(gen @ vec(r))
    else:
        def deriv(t, r):
            return rhs(params, fields_of_t(t), r)

    for step in range(n):
        t = step * dt
        if not isinstance(fields_of_t, FieldConfig):
            check_step(params, fields_of_t(t), dt)
        rho = rk4_step(deriv, t, rho, dt)
        if (step + 1) % record_every == 0 or step + 1 == n:
            times.append((step + 1) * dt)
            states.append(rho.copy())
    return Trajectory(np.array(times), np.array(states))


def ground_state() -> np.ndarray:
    """All population in |1>."""
    rho = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def is_density_matrix(rho: np.ndarray, herm_tol=1e-12, trace_tol=1e-9, eps=1e-9) -> bool:
    """Hermitian, unit trace, populations within [-eps, 1 + eps]."""
    rho = np.asarray(rho)
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        return False
    if abs(np.trace(rho) - 1) > trace_tol:
        return False
    pops = np.diag(rho).real
    return bool(np.all(pops >= -eps) and np.all(pops <= 1 + eps))

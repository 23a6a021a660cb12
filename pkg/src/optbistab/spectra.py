"""Probe coherence and absorption/gain spectra.

Positive Im(rho_32) is absorption of the probe, negative is gain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants

from .bloch import AtomicParams, FieldConfig, FieldDecomposition, _solve_stack, steady_state
from .errors import ValidationError

DEFAULT_SPAN = (-10.0, 10.0)
DEFAULT_POINTS = 801


@dataclass(frozen=True)
class SpectrumPoint:
    delta_2: float
    re_rho32: float
    im_rho32: float

    @property
    def rho32(self) -> complex:
        return complex(self.re_rho32, self.im_rho32)

    @property
    def is_gap(self) -> bool:
        return math.isnan(self.im_rho32)


@dataclass(frozen=True)
class PhysicalSusceptibility:
    """SI scaling chi = N |mu_32|^2 rho_32 / hbar.

    ``number_density`` in m^-3, ``dipole_moment_sq`` in (C m)^2. ``prefactor``
    may be given directly instead; it is then used as is.
    """

    number_density: float = 0.0
    dipole_moment_sq: float = 0.0
    prefactor: float | None = None

    def __post_init__(self):
        if self.prefactor is None:
            object.__setattr__(
                self, "prefactor",
                self.number_density * self.dipole_moment_sq / constants.hbar,
            )
        if not (math.isfinite(self.prefactor) and self.prefactor > 0):
            raise ValidationError("susceptibility prefactor > 0")

    @classmethod
    def from_prefactor(cls, prefactor: float) -> "PhysicalSusceptibility":
        return cls(prefactor=prefactor)


def default_grid(span=DEFAULT_SPAN, points: int = DEFAULT_POINTS) -> np.ndarray:
    return np.linspace(span[0], span[1], points)


def rho32_steady(params: AtomicParams, fields: FieldConfig) -> complex:
    """Probe coherence rho_32 of the stationary state."""
    return complex(steady_state(params, fields)[2, 1])


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValidationError("detuning grid must be a nonempty 1-D sequence")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValidationError("detuning grid must be strictly increasing")
    return grid


def rho32_scan(params: AtomicParams, base: FieldConfig, delta2_grid) -> np.ndarray:
    """rho_32 over a probe-detuning grid; degenerate points are NaN."""
    grid = _check_grid(delta2_grid)
    gens = []
    for d2 in grid:
        dec = FieldDecomposition(params, base.with_(delta_2=float(d2)))
        gens.append(dec.generator(*base.omegas))
    rhos, _ = _solve_stack(np.stack(gens))
    return rhos[:, 2, 1]


def absorption_scan(params: AtomicParams, base: FieldConfig, delta2_grid=None) -> list:
    """One :class:`SpectrumPoint` per detuning; degenerate points become NaN gaps."""
    grid = default_grid() if delta2_grid is None else _check_grid(delta2_grid)
    r32 = rho32_scan(params, base, grid)
    return [SpectrumPoint(float(d), float(r.real), float(r.imag)) for d, r in zip(grid, r32)]


def susceptibility_physical(point: SpectrumPoint, phys: PhysicalSusceptibility) -> complex:
    return phys.prefactor * point.rho32


def _as_arrays(points):
    d = np.array([p.delta_2 for p in points])
    im = np.array([p.im_rho32 for p in points])
    return d, im


def local_extrema(points, kind: str = "max") -> list:
    """Interior local maxima (``kind='max'``) or minima of Im rho_32.

    Returns ``(delta_2, im_rho32)`` pairs sorted by decreasing prominence of the
    value (largest first for maxima, most negative first for minima).
    """
    d, im = _as_arrays(points)
    sign = 1.0 if kind == "max" else -1.0
    v = sign * im
    found = []
    for k in range(1, len(v) - 1):
        if np.isnan(v[k - 1 : k + 2]).any():
            continue
        if v[k] > v[k - 1] and v[k] >= v[k + 1]:
            found.append((float(d[k]), float(im[k])))
    found.sort(key=lambda p: -sign * p[1])
    return found


def absorption_peaks(points, count: int = 2) -> list:
    """Detunings of the ``count`` largest absorption maxima, in increasing order."""
    return sorted(p[0] for p in local_extrema(points, "max")[:count])


def gain_dips(points) -> list:
    """All local minima with Im rho_32 < 0, ordered by detuning."""
    return sorted(p for p in local_extrema(points, "min") if p[1] < 0)


def weak_probe_lambda(params: AtomicParams, fields: FieldConfig) -> complex:
    """Linear-response rho_32 of the Lambda subsystem (probe off |3>-|2>,
    control |3>-|1>) with all population in |2> and no coupling field."""
    from .bloch import dephasing_rates

    g = dephasing_rates(params)
    d1, d2 = fields.delta_1, fields.delta_2
    o1, o2 = complex(fields.omega_1), complex(fields.omega_2)
    g32 = g[2, 1] - 1j * d2
    g12 = g[0, 1] - 1j * (d2 - d1)
    return 1j * o2 / (g32 + abs(o1) ** 2 / g12)

"""Control and coupling fields built from two LG beams of opposite charge.

At the beam waist the superposition A(e^{il phi} + e^{-il phi}) is the real
amplitude 2A cos(l phi); only the azimuthal dependence is modelled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .bloch import AtomicParams, FieldConfig
from .cavity import CavityConfig, trace_curve
from .errors import ValidationError


@dataclass(frozen=True)
class LGBeamSpec:
    amplitude: float
    topological_charge: int = 0
    azimuthal_angle: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.amplitude) or self.amplitude < 0:
            raise ValidationError("amplitude ≥ 0")
        if isinstance(self.topological_charge, bool) or int(self.topological_charge) != self.topological_charge:
            raise ValidationError("topological_charge must be an integer")
        object.__setattr__(self, "topological_charge", int(self.topological_charge))
        if not math.isfinite(self.azimuthal_angle):
            raise ValidationError("azimuthal_angle must be finite")
        # stored in [0, 2pi)
        object.__setattr__(self, "azimuthal_angle", self.azimuthal_angle % (2 * math.pi))

    def with_(self, **changes) -> "LGBeamSpec":
        return replace(self, **changes)


def lg_amplitude(spec: LGBeamSpec) -> float:
    """2 A cos(l phi); negative values carry the phase pi."""
    return 2.0 * spec.amplitude * math.cos(spec.topological_charge * spec.azimuthal_angle)


def effective_fields(beam1: LGBeamSpec, beam3: LGBeamSpec, base: FieldConfig) -> FieldConfig:
    """``base`` with Omega_1 and Omega_3 taken from the two structured beams."""
    if not math.isclose(beam1.azimuthal_angle, beam3.azimuthal_angle, abs_tol=1e-12):
        raise ValidationError("both beams must be sampled at the same azimuthal angle")
    return base.with_(omega_1=lg_amplitude(beam1), omega_3=lg_amplitude(beam3))


def oam_scan(beam1: LGBeamSpec, beam3: LGBeamSpec, base: FieldConfig, cav: CavityConfig,
             x_grid=None, sweep: str = "charge", values=(), params: AtomicParams | None = None,
             executor=None) -> list:
    """Trace one curve per sweep value.

    ``sweep='charge'`` varies l of beam 1; ``sweep='angle'`` varies the
    common angle phi of both beams. ``executor`` (any object with ``map``)
    parallelises the curves; results keep the order of ``values``.
    """
    params = params or AtomicParams()
    if sweep not in ("charge", "angle"):
        raise ValidationError("sweep must be 'charge' or 'angle'")
    jobs = []
    for v in values:
        if sweep == "charge":
            b1, b3 = beam1.with_(topological_charge=v), beam3
        else:
            b1, b3 = beam1.with_(azimuthal_angle=v), beam3.with_(azimuthal_angle=v)
        jobs.append(effective_fields(b1, b3, base))
    mapper = executor.map if executor is not None else map
    curves = list(mapper(lambda f: trace_curve(params, f, cav, x_grid), jobs))
    return list(zip(values, curves))

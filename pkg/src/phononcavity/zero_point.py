"""Coupling estimate from zero-point fluctuations of the SAW mode.

Chain: displacement U0 -> piezoelectric voltage V0 -> coupling ``h g = zeta e V0``.

The energy relation is taken linear in the voltage. A form quadratic in
V0 is not an energy, and the linear form gives g/2pi of about 10 MHz for
the default quartz cavity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import constants

from .device import DomainError, MaterialParams


@dataclass(frozen=True)
class ZeroPointInputs:
    material: MaterialParams = field(default_factory=MaterialParams)
    cavity_area: float = 1.5e-8     # m^2, 110 um x 140 um
    zeta: float = 1.0
    c_idt: float = 98e-15           # F, back-solved from mu_ac ~ 0.025 e
    c_gate: float = 0.1e-15         # F
    c_sigma: float = 90e-15         # F

    def __post_init__(self):
        for name in ("cavity_area", "zeta", "c_idt", "c_gate", "c_sigma"):
            if not getattr(self, name) > 0:
                raise DomainError(f"zero_point: {name} > 0 required")


def zero_point_displacement(material: MaterialParams, cavity_area: float) -> float:
    """U0 = sqrt(hbar / (2 rho A v)) in meters."""
    if not cavity_area > 0:
        raise DomainError("zero_point_displacement: cavity_area > 0 required")
    return float(np.sqrt(constants.hbar / (2.0 * material.density * cavity_area * material.saw_speed)))


def zero_point_voltage(material: MaterialParams, u0: float) -> float:
    if u0 < 0:
        raise DomainError("zero_point_voltage: u0 >= 0 required")
    return material.piezo_module * u0


def coupling_estimate(zeta: float, v0: float) -> float:
    """g / 2pi in Hz from ``h g = zeta e V0``."""
    return zeta * constants.e * v0 / constants.h


def drive_couplings(inputs: ZeroPointInputs, v0: float) -> tuple[float, float, float]:
    """Acoustic and electric drive couplings in units of e, and their ratio."""
    mu_ac = inputs.c_idt * v0 / constants.e
    mu_el = 2.0 * inputs.c_gate / inputs.c_sigma
    return mu_ac, mu_el, mu_ac / mu_el


@dataclass
class Estimate:
    u0: float
    v0: float
    zeta: float
    g: float
    mu_ac: float
    mu_el: float
    ratio: float

    def rows(self) -> list[tuple[str, float, str]]:
        return [
            ("U0", self.u0, "m"),
            ("V0", self.v0, "V"),
            ("zeta", self.zeta, "1"),
            ("g/2pi", self.g, "Hz"),
            ("mu_ac", self.mu_ac, "e"),
            ("mu_el", self.mu_el, "e"),
            ("mu_ac/mu_el", self.ratio, "1"),
        ]


def estimate(inputs: ZeroPointInputs) -> Estimate:
    u0 = zero_point_displacement(inputs.material, inputs.cavity_area)
    v0 = zero_point_voltage(inputs.material, u0)
    g = coupling_estimate(inputs.zeta, v0)
    mu_ac, mu_el, ratio = drive_couplings(inputs, v0)
    return Estimate(u0, v0, inputs.zeta, g, mu_ac, mu_el, ratio)

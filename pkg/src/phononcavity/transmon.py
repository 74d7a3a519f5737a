"""Transmon levels in the charge basis and asymptotic transmon formulas.

Energies are stored as E/h in Hz.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants
from scipy.linalg import eigvalsh_tridiagonal
from scipy.optimize import brentq

from .device import DomainError


class ConvergenceError(RuntimeError):
    """Raised when a truncated basis does not reproduce the converged result."""


@dataclass(frozen=True)
class TransmonParams:
    ec: float = 0.21e9
    ej0: float = 17.4e9
    charge_offset: float = 0.0
    charge_cutoff: int = 15
    # junction asymmetry (E_J1 - E_J2) / (E_J1 + E_J2); 0 for a symmetric SQUID
    asymmetry: float = 0.0

    def __post_init__(self):
        if not self.ec > 0:
            raise DomainError("transmon: ec > 0 required")
        if not self.ej0 > 0:
            raise DomainError("transmon: ej0 > 0 required")
        if self.charge_cutoff < 5:
            raise DomainError("transmon: charge_cutoff >= 5 required")
        if not 0 <= self.asymmetry < 1:
            raise DomainError("transmon: 0 <= asymmetry < 1 required")


@dataclass(frozen=True)
class TransmonSpectrum:
    levels: np.ndarray

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.size < 2 or lv[0] != 0.0:
            raise DomainError("spectrum: ground-referenced levels with levels[0] = 0 required")
        # non-decreasing: at E_J = 0 the charge states +n and -n are degenerate
        if np.any(np.diff(lv) < 0):
            raise DomainError("spectrum: levels must be ascending")
        object.__setattr__(self, "levels", lv)

    @property
    def e01(self) -> float:
        return float(self.levels[1])

    @property
    def e12(self) -> float:
        return float(self.levels[2] - self.levels[1])

    @property
    def anharmonicity(self) -> float:
        return self.e12 - self.e01


def ej_of_flux(ej0: float, flux_ratio, asymmetry: float = 0.0):
    """Effective SQUID Josephson energy at flux ``flux_ratio = Phi / Phi0``."""
    if not ej0 > 0:
        raise DomainError("ej_of_flux: ej0 > 0 required")
    c = np.cos(np.pi * np.asarray(flux_ratio, dtype=float))
    if asymmetry == 0.0:
        return ej0 * np.abs(c)
    s = np.sin(np.pi * np.asarray(flux_ratio, dtype=float))
    return ej0 * np.sqrt(c * c + asymmetry**2 * s * s)


def _levels(ec: float, ej: float, ng: float, cutoff: int, count: int) -> np.ndarray:
    n = np.arange(-cutoff, cutoff + 1)
    diag = 4.0 * ec * (n - ng) ** 2
    off = np.full(2 * cutoff, -ej / 2.0)
    w = eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, count - 1))
    return w - w[0]


def charge_basis_spectrum(params: TransmonParams, ej: float, n_levels: int = 6,
                          tolerance: float = 1e3) -> TransmonSpectrum:
    """Lowest ``n_levels`` eigen-energies of ``4 E_C (n - n_g)^2 - E_J cos(phi)``.

    The result is checked against the same calculation with five more
    charge states; a shift above ``tolerance`` Hz raises ConvergenceError.
    """
    if ej < 0:
        raise DomainError("charge_basis_spectrum: ej >= 0 required")
    N = params.charge_cutoff
    count = min(n_levels, 2 * N + 1)
    lv = _levels(params.ec, ej, params.charge_offset, N, count)
    ref = _levels(params.ec, ej, params.charge_offset, N + 5, count)
    check = min(count, 4)
    if np.max(np.abs(lv[:check] - ref[:check])) > tolerance:
        raise ConvergenceError(
            f"charge basis not converged at charge_cutoff={N}; increase charge_cutoff")
    return TransmonSpectrum(lv)


def spectrum_at_flux(params: TransmonParams, flux_ratio: float, n_levels: int = 6) -> TransmonSpectrum:
    ej = float(ej_of_flux(params.ej0, flux_ratio, params.asymmetry))
    return charge_basis_spectrum(params, ej, n_levels)


def e01_charge_basis(params: TransmonParams, flux_ratio) -> np.ndarray:
    """Vectorized E01 over a flux array (no convergence re-check)."""
    flux = np.atleast_1d(np.asarray(flux_ratio, dtype=float))
    ej = ej_of_flux(params.ej0, flux, params.asymmetry).ravel()
    out = [_levels(params.ec, e, params.charge_offset, params.charge_cutoff, 2)[1] for e in ej]
    return np.asarray(out).reshape(flux.shape)


def e01_asymptotic(ec: float, ej: float) -> float:
    return np.sqrt(8.0 * ec * ej) - ec


def ej_for_e01_asymptotic(ec: float, e01: float) -> float:
    """Inverse of :func:`e01_asymptotic` in ``ej``."""
    return (e01 + ec) ** 2 / (8.0 * ec)


def zeta(ec: float, ej: float) -> float:
    if not (ec > 0 and ej > 0):
        raise DomainError("zeta: ec > 0 and ej > 0 required")
    return (ej / (32.0 * ec)) ** 0.25


def charging_energy_from_capacitance(cs: float) -> float:
    """E_C / h = e^2 / (2 C_S h) in Hz."""
    if not cs > 0:
        raise DomainError("charging_energy_from_capacitance: cs > 0 required")
    return constants.e**2 / (2.0 * cs * constants.h)


def ej_at_e01(params: TransmonParams, e01: float) -> float:
    """Josephson energy at which the charge-basis E01 equals ``e01``."""
    def h(ej):
        return _levels(params.ec, ej, params.charge_offset, params.charge_cutoff, 2)[1] - e01
    lo = 1e-6 * params.ec
    hi = params.ej0
    if h(hi) < 0:
        raise DomainError("ej_at_e01: target above the maximal E01")
    return brentq(h, lo, hi, xtol=1e-3, rtol=1e-15)


def resonance_flux(params: TransmonParams, f_target: float) -> float:
    """Smallest flux in [0, 1/2] where the charge-basis E01 equals ``f_target``."""
    def h(x):
        return e01_charge_basis(params, x)[0] - f_target
    if h(0.0) < 0:
        raise DomainError("resonance_flux: target above the maximal E01")
    return brentq(h, 0.0, 0.5, xtol=1e-14)


def flux_sweep(params: TransmonParams, flux) -> tuple[np.ndarray, np.ndarray]:
    """E01 and E12 along a flux grid."""
    flux = np.asarray(flux, dtype=float)
    ej = ej_of_flux(params.ej0, flux, params.asymmetry)
    e01 = np.empty(flux.shape)
    e12 = np.empty(flux.shape)
    for i, e in enumerate(ej):
        lv = _levels(params.ec, e, params.charge_offset, params.charge_cutoff, 3)
        e01[i] = lv[1]
        e12[i] = lv[2] - lv[1]
    return e01, e12

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phononcavity.device import DomainError
from phononcavity.transmon import (
    ConvergenceError, TransmonParams, TransmonSpectrum, charge_basis_spectrum, charging_energy_from_capacitance, e01_asymptotic,
    e01_charge_basis, ej_at_e01, ej_for_e01_asymptotic, ej_of_flux, flux_sweep, resonance_flux,
    spectrum_at_flux, zeta,
)

REF = TransmonParams()


def test_ej_of_flux_examples():
    assert ej_of_flux(17.4e9, 0.0) == pytest.approx(17.4e9)
    assert ej_of_flux(17.4e9, 0.5) == pytest.approx(0.0, abs=1e-3)
    assert ej_of_flux(17.4e9, 1.0) == pytest.approx(17.4e9)


def test_ej_of_flux_asymmetric_floor():
    assert ej_of_flux(10e9, 0.5, asymmetry=0.2) == pytest.approx(2e9)


def test_params_invariants():
    for kw in (dict(ec=0.0), dict(ej0=-1.0), dict(charge_cutoff=4), dict(asymmetry=1.0)):
        with pytest.raises(DomainError):
            TransmonParams(**kw)


def test_charge_basis_vs_asymptotic():
    s = charge_basis_spectrum(REF, 17.4e9)
    assert e01_asymptotic(0.21e9, 17.4e9) == pytest.approx(5.197e9, abs=1e6)
    assert abs(s.e01 - 5.197e9) / 5.197e9 < 0.03


def test_zero_ej_degenerate_charge_states():
    s = charge_basis_spectrum(REF, 0.0)
    assert s.levels[0] == 0.0
    assert s.levels[1] == pytest.approx(4 * REF.ec)
    assert s.levels[2] == pytest.approx(4 * REF.ec)


def test_anharmonicity_close_to_minus_ec():
    s = charge_basis_spectrum(TransmonParams(charge_cutoff=30), 17.4e9)
    assert abs(s.anharmonicity + 0.21e9) / 0.21e9 < 0.15


def test_cutoff_convergence():
    a = charge_basis_spectrum(TransmonParams(charge_cutoff=15), 17.4e9).levels[1:4]
    b = charge_basis_spectrum(TransmonParams(charge_cutoff=30), 17.4e9).levels[1:4]
    assert np.max(np.abs(a - b)) < 1e3


def test_cutoff_too_small_raises():
    p = TransmonParams(ec=0.01e9, ej0=50e9, charge_cutoff=5)
    with pytest.raises(ConvergenceError):
        charge_basis_spectrum(p, 50e9)


def test_charge_offset_insensitivity():
    a = charge_basis_spectrum(TransmonParams(charge_offset=0.0), 80 * 0.21e9).e01
    b = charge_basis_spectrum(TransmonParams(charge_offset=0.5), 80 * 0.21e9).e01
    assert abs(a - b) / a < 1e-4


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-3, 3))
def test_flux_periodicity_and_parity(x):
    a = spectrum_at_flux(REF, x).levels
    assert np.array_equal(a, spectrum_at_flux(REF, -x).levels)
    assert np.allclose(a, spectrum_at_flux(REF, x + 1).levels, rtol=0, atol=1e-3)


@settings(max_examples=30, deadline=None)
@given(ratio=st.floats(50, 200))
def test_asymptotic_agreement(ratio):
    ec = 0.21e9
    e01 = charge_basis_spectrum(TransmonParams(ec=ec, ej0=ratio * ec), ratio * ec).e01
    assert abs(e01 - e01_asymptotic(ec, ratio * ec)) / e01 < 0.03


def test_levels_ascending_and_real():
    lv = charge_basis_spectrum(REF, 10e9, n_levels=8).levels
    assert np.all(np.diff(lv) > 0)
    assert lv.dtype.kind == "f"


def test_e01_asymptotic_limits():
    assert e01_asymptotic(0.21e9, 0.0) == pytest.approx(-0.21e9)
    assert ej_for_e01_asymptotic(0.21e9, 3.176e9) == pytest.approx(6.825e9, rel=1e-3)


def test_zeta_examples():
    assert zeta(0.21e9, 17.4e9) == pytest.approx(1.268, abs=1e-3)
    assert zeta(0.3e9, 32 * 0.3e9) == pytest.approx(1.0)
    assert zeta(0.21e9, 6.825e9) == pytest.approx(1.004, abs=1e-3)
    with pytest.raises(DomainError):
        zeta(0.21e9, 0.0)


def test_charging_energy_from_capacitance():
    assert charging_energy_from_capacitance(90e-15) == pytest.approx(0.2153e9, rel=1e-3)
    assert abs(charging_energy_from_capacitance(90e-15) - 0.21e9) / 0.21e9 < 0.03
    assert charging_energy_from_capacitance(180e-15) == pytest.approx(charging_energy_from_capacitance(90e-15) / 2)
    assert charging_energy_from_capacitance(0.1e-15) == pytest.approx(193.7e9, rel=1e-3)


def test_resonance_flux_hits_target():
    x = resonance_flux(REF, 3.176e9)
    assert 0 < x < 0.5
    assert e01_charge_basis(REF, x)[0] == pytest.approx(3.176e9, abs=1.0)
    ej = ej_at_e01(REF, 3.176e9)
    assert charge_basis_spectrum(REF, ej).e01 == pytest.approx(3.176e9, abs=1e3)
    with pytest.raises(DomainError):
        resonance_flux(REF, 8e9)


def test_flux_sweep_matches_pointwise():
    flux = np.linspace(0, 0.45, 7)
    e01, e12 = flux_sweep(REF, flux)
    for x, a, b in zip(flux, e01, e12):
        s = spectrum_at_flux(REF, x)
        assert a == pytest.approx(s.e01)
        assert b == pytest.approx(s.e12)


def test_spectrum_invariants():
    s = charge_basis_spectrum(REF, 17.4e9)
    assert s.levels[0] == 0.0 and np.all(np.diff(s.levels) > 0)
    with pytest.raises(DomainError):
        TransmonSpectrum(np.array([0.0, 2.0, 1.0]))
    with pytest.raises(DomainError):
        TransmonSpectrum(np.array([1.0, 2.0]))

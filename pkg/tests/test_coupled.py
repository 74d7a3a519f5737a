import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phononcavity.coupled import (
    JcParams, dispersive_shift, dressed_branches, dressed_level_sweep, jc_dressed_levels, jc_hamiltonian,
)
from phononcavity.device import DomainError
from phononcavity.transmon import TransmonParams, charge_basis_spectrum

F0 = 3.176e9
G = 13e6


def test_resonant_doublet():
    lv = jc_dressed_levels(JcParams(F0, F0, G))
    one = lv.block(1)
    assert np.allclose(one, [F0 - G, F0 + G], rtol=1e-12)
    assert one[1] - one[0] == pytest.approx(2 * G, rel=1e-10)


def test_uncoupled_levels_are_bare_sums():
    lv = jc_dressed_levels(JcParams(F0, 3.3e9, 0.0, n_phonon_max=3))
    for e, (q, n) in zip(lv.energies, lv.labels):
        assert e == pytest.approx(q * 3.3e9 + n * F0, abs=1e-6)


def test_detuned_block_matches_closed_form():
    lv = jc_dressed_levels(JcParams(F0, F0 + 50e6, G))
    up, lo = dressed_branches(F0, F0 + 50e6, G)
    assert np.allclose(lv.block(1), [lo, up], rtol=1e-10, atol=0)


def test_branch_examples():
    up, lo = dressed_branches(F0, F0, G)
    assert up == pytest.approx(3.189e9) and lo == pytest.approx(3.163e9)
    up, lo = dressed_branches(3.1e9, 3.2e9, 0.0)
    assert (up, lo) == (3.2e9, 3.1e9)
    with pytest.raises(DomainError):
        dressed_branches(F0, F0, -1.0)


def test_far_detuned_branches_second_order():
    d = 100 * G
    up, lo = dressed_branches(F0 + d, F0, G)
    assert up == pytest.approx(F0 + d + G**2 / d, abs=G**4 / d**3 * 2)
    assert lo == pytest.approx(F0 - G**2 / d, abs=G**4 / d**3 * 2)


def test_dispersive_shift():
    assert dispersive_shift(F0 + 100e6, F0, G) == pytest.approx(1.69e6)
    assert dispersive_shift(F0 + 100e6, F0, 0.0) == 0.0
    assert dispersive_shift(F0 - 100e6, F0, G) == -dispersive_shift(F0 + 100e6, F0, G)
    with pytest.raises(ZeroDivisionError):
        dispersive_shift(F0, F0, G)


def test_hamiltonian_symmetric_and_conserving():
    p = JcParams(F0, F0 + 20e6, G, n_phonon_max=5)
    H = jc_hamiltonian(p)
    assert np.array_equal(H, H.T)
    nb = p.n_phonon_max + 1
    N = np.diag([q + n for q in range(2) for n in range(nb)]).astype(float)
    assert np.max(np.abs(H @ N - N @ H)) == 0.0


def test_blocks_match_blockwise_diagonalization():
    p = JcParams(F0, F0 + 20e6, G, n_phonon_max=6)
    lv = jc_dressed_levels(p)
    for n in range(1, 5):
        block = np.array([[n * F0, G * np.sqrt(n)], [G * np.sqrt(n), (n - 1) * F0 + F0 + 20e6]])
        assert np.allclose(np.sort(lv.block(n)), np.linalg.eigvalsh(block), rtol=1e-12, atol=0)


@settings(max_examples=40, deadline=None)
@given(det=st.floats(-500e6, 500e6), g=st.floats(0.0, 50e6))
def test_single_excitation_equals_closed_form(det, g):
    lv = jc_dressed_levels(JcParams(F0, F0 + det, g))
    up, lo = dressed_branches(F0, F0 + det, g)
    assert np.allclose(np.sort(lv.block(1)), [lo, up], rtol=1e-10, atol=0)


def test_minimum_splitting_is_two_g():
    fq = np.linspace(F0 - 100e6, F0 + 100e6, 201)
    up, lo = dressed_branches(F0, fq, G)
    gap = up - lo
    assert gap.min() == pytest.approx(2 * G, rel=1e-14)
    assert fq[np.argmin(gap)] == pytest.approx(F0)


def test_labels_bijective_and_tie_break():
    lv = jc_dressed_levels(JcParams(F0, F0, G, n_phonon_max=4))
    assert len(set(lv.labels)) == len(lv.labels) == 10
    assert np.all(np.diff(lv.energies) >= 0)
    # exact resonance: the lower dressed state of each doublet goes to the lower qubit index
    one = [lab for lab, e in zip(lv.labels, lv.energies) if sum(lab) == 1]
    assert one[0] == (0, 1)


def test_multilevel_qubit_ladder():
    t = TransmonParams()
    s = charge_basis_spectrum(t, 6.85e9, n_levels=4)
    p = JcParams(F0, s.e01, G, n_phonon_max=4, qubit_levels=3, qubit_energies=tuple(s.levels[:3]))
    lv = jc_dressed_levels(p)
    assert lv.energies[0] == 0.0
    with pytest.raises(DomainError):
        JcParams(F0, F0, G, qubit_levels=3).ladder()


def test_truncation_convergence_error():
    from phononcavity.transmon import ConvergenceError
    with pytest.raises(ConvergenceError):
        jc_dressed_levels(JcParams(F0, F0, G), tolerance=-1.0)


def test_invariants():
    for kw in (dict(f_r=0.0), dict(g=-1.0), dict(n_phonon_max=0), dict(qubit_levels=1)):
        base = dict(f_r=F0, f_q=F0, g=G)
        base.update(kw)
        with pytest.raises(DomainError):
            JcParams(**base)


def test_dressed_level_sweep_rows():
    rows = dressed_level_sweep(F0, G, [F0 - 50e6, F0], n_phonon_max=2)
    assert len(rows) == 2 * 6
    assert rows[0][1] == 0 and rows[0][2] == 0.0

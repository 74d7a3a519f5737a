"""Jaynes-Cummings resonator-qubit system: dressed levels and closed forms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .device import DomainError
from .transmon import ConvergenceError


@dataclass(frozen=True)
class JcParams:
    f_r: float
    f_q: float
    g: float
    n_phonon_max: int = 4
    qubit_levels: int = 2
    # ground-referenced qubit ladder, e.g. TransmonSpectrum.levels; overrides f_q above level 1
    qubit_energies: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.f_r > 0:
            raise DomainError("jc: f_r > 0 required")
        if self.g < 0:
            raise DomainError("jc: g >= 0 required")
        if self.n_phonon_max < 1:
            raise DomainError("jc: n_phonon_max >= 1 required")
        if self.qubit_levels < 2:
            raise DomainError("jc: qubit_levels >= 2 required")
        if self.qubit_energies is not None and len(self.qubit_energies) < self.qubit_levels:
            raise DomainError("jc: qubit_energies must cover qubit_levels")

    def ladder(self) -> np.ndarray:
        if self.qubit_energies is not None:
            e = np.asarray(self.qubit_energies[: self.qubit_levels], dtype=float)
            return e - e[0]
        if self.qubit_levels == 2:
            return np.array([0.0, self.f_q])
        raise DomainError("jc: qubit_levels > 2 needs qubit_energies")


@dataclass(frozen=True)
class DressedLevels:
    energies: np.ndarray
    labels: list[tuple[int, int]]

    def excitations(self) -> np.ndarray:
        return np.array([q + n for q, n in self.labels])

    def block(self, n_exc: int) -> np.ndarray:
        return self.energies[self.excitations() == n_exc]


def jc_hamiltonian(params: JcParams) -> np.ndarray:
    """H/h on the product basis |qubit k> (x) |phonon n>, index k*(N+1) + n."""
    e = params.ladder()
    nq = params.qubit_levels
    nb = params.n_phonon_max + 1
    n = np.arange(nb)
    H = np.diag((e[:, None] + params.f_r * n[None, :]).ravel())
    for k in range(nq - 1):
        for m in range(1, nb):
            # |k, m> <-> |k+1, m-1>
            i = k * nb + m
            j = (k + 1) * nb + m - 1
            H[i, j] = H[j, i] = params.g * np.sqrt(k + 1) * np.sqrt(m)
    return H


def _diagonalize(params: JcParams):
    H = jc_hamiltonian(params)
    w, v = np.linalg.eigh(H)
    return w - w[0], v


def _labels(vecs: np.ndarray, nq: int, nb: int) -> list[tuple[int, int]]:
    # greedy in ascending energy; ties go to the lower bare qubit index
    weight = np.round(np.abs(vecs) ** 2, 9)
    free = np.ones(vecs.shape[0], dtype=bool)
    out = []
    for col in range(vecs.shape[1]):
        w = np.where(free, weight[:, col], -1.0)
        best = np.flatnonzero(w == w.max())
        idx = int(min(best, key=lambda b: (b // nb, b % nb)))
        free[idx] = False
        out.append((idx // nb, idx % nb))
    return out


def jc_dressed_levels(params: JcParams, tolerance: float = 1e3) -> DressedLevels:
    """Diagonalize the (rotating-wave) Jaynes-Cummings Hamiltonian.

    Levels of all complete excitation manifolds are compared against a run
    with two more phonon states; a shift above ``tolerance`` Hz raises
    ConvergenceError.
    """
    nq, nb = params.qubit_levels, params.n_phonon_max + 1
    w, v = _diagonalize(params)
    labels = _labels(v, nq, nb)
    exc = np.array([q + n for q, n in labels])
    complete = exc <= params.n_phonon_max
    bigger = JcParams(params.f_r, params.f_q, params.g, params.n_phonon_max + 2,
                      params.qubit_levels, params.qubit_energies)
    w2, v2 = _diagonalize(bigger)
    exc2 = np.array([q + n for q, n in _labels(v2, nq, nb + 2)])
    kept = w[complete]
    ref = np.sort(w2[exc2 <= params.n_phonon_max])
    if kept.size != ref.size or np.max(np.abs(np.sort(kept) - ref)) > tolerance:
        raise ConvergenceError("jc: phonon truncation not converged; increase n_phonon_max")
    return DressedLevels(w, labels)


def dressed_branches(f0: float, fq: float, g: float):
    """Upper and lower single-excitation branches of the resonant JC doublet."""
    if np.any(np.asarray(g) < 0):
        raise DomainError("dressed_branches: g >= 0 required")
    mean = 0.5 * (np.asarray(f0) + np.asarray(fq))
    half = 0.5 * np.sqrt((np.asarray(f0) - np.asarray(fq)) ** 2 + 4.0 * np.asarray(g) ** 2)
    return mean + half, mean - half


def dispersive_shift(fq: float, f0: float, g: float) -> float:
    """Dispersive pull chi = g^2 / (fq - f0)."""
    det = fq - f0
    if det == 0:
        raise ZeroDivisionError("dispersive_shift: zero detuning")
    return g * g / det


def dressed_level_sweep(f_r: float, g: float, fq_grid, n_phonon_max: int = 2):
    """Rows ``(fq, level_index, energy)`` for a two-level qubit swept across the resonator."""
    rows = []
    for fq in np.asarray(fq_grid, dtype=float):
        lv = jc_dressed_levels(JcParams(f_r, fq, g, n_phonon_max))
        for i, e in enumerate(lv.energies):
            rows.append((fq, i, e))
    return rows

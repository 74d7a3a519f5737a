"""Steady-state transmission of the driven cavity-qubit system.

Two routes to the weak-probe transmission ``t(f)`` are provided: the
closed-form linear response (:func:`linear_transmission`) and a full
Lindblad steady state (:func:`lindblad_steady_state_transmission`) that
serves as its independent numerical check. Rates and frequencies are all in
Hz; the master equation is solved in units where 2*pi is absorbed into time,
which leaves steady states unchanged.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coupled import JcParams, dispersive_shift
from .device import DomainError
from .transmon import ConvergenceError, TransmonParams, ej_of_flux, _levels


class SingularSystemError(RuntimeError):
    """Raised when the Liouvillian steady-state system cannot be solved."""


@dataclass(frozen=True)
class DecoherenceParams:
    kappa: float = 0.332e6
    gamma1: float = 10e6
    gamma_phi: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise DomainError("decoherence: kappa > 0 required")
        if self.gamma1 < 0 or self.gamma_phi < 0:
            raise DomainError("decoherence: gamma1 >= 0 and gamma_phi >= 0 required")

    @property
    def gamma2(self) -> float:
        return self.gamma1 + 2.0 * self.gamma_phi


@dataclass(frozen=True)
class DriveParams:
    omega_ac: float = 0.05 * 0.332e6
    omega_el: float = 0.0
    probe_f: float = 3.176e9
    second_tone_f: float | None = None

    def __post_init__(self):
        if self.omega_ac < 0 or self.omega_el < 0:
            raise DomainError("drive: amplitudes >= 0 required")


@dataclass(frozen=True)
class TransmissionTrace:
    f: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        t = np.asarray(self.t, dtype=complex)
        if f.shape != t.shape:
            raise DomainError("trace: f and t differ in length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise DomainError("trace: f must be strictly ascending")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "t", t)


@dataclass(frozen=True)
class SpectroscopyMap:
    """Complex values on a (flux, frequency) grid, ``values[i, j]`` at ``x_axis[i], y_axis[j]``."""
    x_axis: np.ndarray
    y_axis: np.ndarray
    values: np.ndarray
    flagged: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x_axis, dtype=float)
        y = np.asarray(self.y_axis, dtype=float)
        v = np.asarray(self.values)
        if v.shape != (x.size, y.size):
            raise DomainError("map: values shape does not match the axes")
        for a in (x, y):
            d = np.diff(a)
            if a.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
                raise DomainError("map: axes must be strictly monotone")
        object.__setattr__(self, "x_axis", x)
        object.__setattr__(self, "y_axis", y)
        object.__setattr__(self, "values", v)

    def column(self, i: int) -> TransmissionTrace:
        return TransmissionTrace(self.y_axis, self.values[i])


def linear_transmission(f, f0, fq, g, dec: DecoherenceParams):
    """Weak-probe transmission, unit peak for the bare cavity.

    ``t = (k/2) / (i (f0 - f) + k/2 + g^2 / (i (fq - f) + gamma2/2))``
    """
    f = np.asarray(f, dtype=float)
    half = dec.kappa / 2
    qubit = g * g / (1j * (np.asarray(fq) - f) + dec.gamma2 / 2)
    return half / (1j * (np.asarray(f0) - f) + half + qubit)


def transmission_poles(f0, fq, g, dec: DecoherenceParams) -> np.ndarray:
    """Complex frequencies where the denominator of :func:`linear_transmission` vanishes.

    In the variable ``z`` with ``f = z``, the denominator times
    ``(i (fq - z) + gamma2/2)`` is a quadratic in ``z``.
    """
    a = f0 - 0.5j * dec.kappa
    b = fq - 0.5j * dec.gamma2
    # (z - a)(z - b) = g^2
    mean = 0.5 * (a + b)
    root = np.sqrt(0.25 * (a - b) ** 2 + g * g)
    return np.array([mean + root, mean - root])


# ---------------------------------------------------------------- Lindblad


def _ops(sys: JcParams):
    nq, nb = sys.qubit_levels, sys.n_phonon_max + 1
    b = sp.diags(np.sqrt(np.arange(1, nb)), 1, format="csr")
    lower = sp.diags(np.sqrt(np.arange(1, nq)), 1, format="csr")
    B = sp.kron(sp.identity(nq), b, format="csr")
    S = sp.kron(lower, sp.identity(nb), format="csr")
    nqop = sp.kron(sp.diags(np.arange(nq, dtype=float)), sp.identity(nb), format="csr")
    return B, S, nqop


def _liouvillian(H, collapse, d):
    eye = sp.identity(d, format="csr")
    L = -1j * (sp.kron(eye, H) - sp.kron(H.T, eye))
    for c, rate in collapse:
        if rate == 0:
            continue
        cdc = (c.conj().T @ c).tocsr()
        L = L + rate * (sp.kron(c.conj(), c) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye))
    return L.tocsr()


def _steady_state(L, d):
    tr = sp.csr_matrix((np.ones(d), (np.zeros(d, dtype=int), np.arange(d) * (d + 1))), shape=(1, d * d))
    A = sp.vstack([tr, L[1:]]).tocsc()
    rhs = np.zeros(d * d, dtype=complex)
    rhs[0] = 1.0
    try:
        with np.errstate(all="raise"):
            x = spla.spsolve(A, rhs)
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise SingularSystemError(f"Liouvillian steady-state system is singular: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("Liouvillian steady-state system is singular")
    return x.reshape(d, d, order="F")


def _hamiltonian(sys: JcParams, drv: DriveParams, B, S):
    """H/h in the frame rotating at ``drv.probe_f``, minus the ``-f N`` frame term."""
    nb = sys.n_phonon_max + 1
    qubit_diag = np.repeat(sys.ladder(), nb)
    cav_diag = np.tile(sys.f_r * np.arange(nb), sys.qubit_levels)
    H = sp.diags(qubit_diag + cav_diag, format="csr")
    H = H + sys.g * (B.T @ S + S.T @ B)
    H = H + 0.5 * drv.omega_ac * (B + B.T) + 0.5 * drv.omega_el * (S + S.T)
    return H.tocsr()


def _excitations(sys: JcParams) -> np.ndarray:
    nb = sys.n_phonon_max + 1
    return (np.arange(sys.qubit_levels)[:, None] + np.arange(nb)[None, :]).ravel().astype(float)


def _liouvillian_parts(sys: JcParams, dec: DecoherenceParams, drv: DriveParams):
    """``L(f) = L0 + i f diag(frame)`` for the frame rotating at probe frequency f."""
    B, S, nqop = _ops(sys)
    d = sys.qubit_levels * (sys.n_phonon_max + 1)
    H0 = _hamiltonian(sys, drv, B, S)
    L0 = _liouvillian(H0, [(B, dec.kappa), (S, dec.gamma1), (nqop, 2 * dec.gamma_phi)], d)
    N = _excitations(sys)
    # -i [-f N, rho] = i f (N_i - N_j) rho_ij; vec index of rho[i, j] is i + j d
    frame = (N[:, None] - N[None, :]).ravel(order="F")
    return L0, frame, B, d


def _check_top(sys: JcParams, rho: np.ndarray, tol: float):
    nb = sys.n_phonon_max + 1
    pops = np.real(np.diagonal(rho, axis1=-2, axis2=-1)).reshape(rho.shape[:-2] + (sys.qubit_levels, nb))
    top = pops.sum(axis=-2)[..., -1]
    if np.max(top) > tol:
        raise ConvergenceError(
            f"lindblad: top Fock level holds {np.max(top):.2e} of the population; increase n_phonon_max")


def lindblad_steady_state_transmission(sys: JcParams, dec: DecoherenceParams, drv: DriveParams,
                                       top_population_tol: float = 1e-6) -> complex:
    """Transmission from the Lindblad steady state in the frame rotating at ``drv.probe_f``.

    Drives ``(omega_ac/2)(b + b^dag)`` on the cavity and
    ``(omega_el/2)(s^+ + s^-)`` on the qubit; dissipators ``kappa D[b]``,
    ``gamma1 D[s^-]`` and ``2 gamma_phi D[n_q]``. Returns
    ``t = i kappa <b> / omega_ac``, which is 1 on resonance for g = 0.
    """
    if not drv.omega_ac > 0:
        raise DomainError("lindblad: omega_ac > 0 required to normalize t")
    L0, frame, B, d = _liouvillian_parts(sys, dec, drv)
    L = (L0 + sp.diags(1j * drv.probe_f * frame)).tocsr()
    rho = _steady_state(L, d)
    _check_top(sys, rho, top_population_tol)
    bexp = B.multiply(rho.T).sum()
    return complex(1j * dec.kappa * bexp / drv.omega_ac)


def lindblad_trace(sys: JcParams, dec: DecoherenceParams, drv: DriveParams, f_grid,
                   top_population_tol: float = 1e-6, chunk: int = 64) -> np.ndarray:
    """:func:`lindblad_steady_state_transmission` along a probe-frequency grid.

    Small systems are solved as batched dense linear systems, larger ones
    point by point with a sparse factorization.
    """
    if not drv.omega_ac > 0:
        raise DomainError("lindblad: omega_ac > 0 required to normalize t")
    f_grid = np.asarray(f_grid, dtype=float)
    L0, frame, B, d = _liouvillian_parts(sys, dec, drv)
    if d * d > 900:
        out = []
        for f in f_grid:
            rho = _steady_state((L0 + sp.diags(1j * f * frame)).tocsr(), d)
            _check_top(sys, rho, top_population_tol)
            out.append(B.multiply(rho.T).sum())
        return 1j * dec.kappa * np.asarray(out) / drv.omega_ac
    L0d = L0.toarray()
    trace_row = np.zeros(d * d, dtype=complex)
    trace_row[:: d + 1] = 1.0
    Bd = B.toarray()
    out = np.empty(f_grid.size, dtype=complex)
    for s in range(0, f_grid.size, chunk):
        fs = f_grid[s:s + chunk]
        A = np.broadcast_to(L0d, (fs.size, d * d, d * d)).copy()
        idx = np.arange(d * d)
        A[:, idx, idx] += 1j * fs[:, None] * frame[None, :]
        A[:, 0, :] = trace_row
        rhs = np.zeros((fs.size, d * d), dtype=complex)
        rhs[:, 0] = 1.0
        try:
            x = np.linalg.solve(A, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(f"Liouvillian steady-state system is singular: {exc}") from exc
        rho = x.reshape(fs.size, d, d).transpose(0, 2, 1)
        _check_top(sys, rho, top_population_tol)
        out[s:s + chunk] = np.einsum("ij,kji->k", Bd, rho)
    return 1j * dec.kappa * out / drv.omega_ac


def lindblad_trace_auto(sys: JcParams, dec: DecoherenceParams, drv: DriveParams, f_grid,
                        tol: float = 1e-4, max_phonons: int = 120) -> tuple[np.ndarray, int]:
    """Lindblad trace with the phonon cutoff raised until ``|t|`` changes by less than ``tol``."""
    n = sys.n_phonon_max
    prev = None
    while n <= max_phonons:
        s = JcParams(sys.f_r, sys.f_q, sys.g, n, sys.qubit_levels, sys.qubit_energies)
        try:
            cur = lindblad_trace(s, dec, drv, f_grid)
        except ConvergenceError:
            cur = None
        if cur is not None and prev is not None and np.max(np.abs(cur - prev)) < tol:
            return cur, n
        prev = cur
        n = int(n * 1.5) + 2
    raise ConvergenceError("lindblad: trace did not converge in the phonon cutoff")


def lindblad_displaced_transmission(sys: JcParams, dec: DecoherenceParams, drv: DriveParams,
                                    max_iter: int = 20, tol: float = 1e-6) -> tuple[complex, float]:
    """Strong-drive steady state solved in a frame displaced by the mean field.

    With ``b = alpha + c`` the master equation keeps its form for ``c`` up
    to a qubit drive ``g alpha`` and a residual cavity drive. ``alpha`` is
    updated to the current mean ``<b>`` until ``t`` changes by less than
    ``tol``, so only fluctuations around the mean have to fit into the Fock
    cutoff. Returns ``(t, top)`` where ``top`` is the population of the
    highest retained Fock state of ``c``.
    """
    if not drv.omega_ac > 0:
        raise DomainError("lindblad: omega_ac > 0 required to normalize t")
    B, S, nqop = _ops(sys)
    nb = sys.n_phonon_max + 1
    d = sys.qubit_levels * nb
    f = drv.probe_f
    qubit_diag = np.repeat(sys.ladder() - f * np.arange(sys.qubit_levels), nb)
    cav_diag = np.tile((sys.f_r - f) * np.arange(nb), sys.qubit_levels)
    H0 = (sp.diags((qubit_diag + cav_diag).astype(complex)) + sys.g * (B.T @ S + S.T @ B)
          + 0.5 * drv.omega_el * (S + S.T)).tocsr()
    collapse = [(B, dec.kappa), (S, dec.gamma1), (nqop, 2 * dec.gamma_phi)]

    def iterate(alpha):
        t_prev = None
        for _ in range(max_iter):
            eps = alpha * ((sys.f_r - f) - 0.5j * dec.kappa) + 0.5 * drv.omega_ac
            H = H0 + sys.g * (np.conj(alpha) * S + alpha * S.T) + eps * B.T + np.conj(eps) * B
            rho = _steady_state(_liouvillian(H.tocsr(), collapse, d), d)
            mean = alpha + B.multiply(rho.T).sum()
            t = complex(1j * dec.kappa * mean / drv.omega_ac)
            if t_prev is not None and abs(t - t_prev) < tol:
                break
            t_prev, alpha = t, mean
        pops = np.real(np.diagonal(rho)).reshape(sys.qubit_levels, nb).sum(axis=0)
        return t, float(pops[-1])

    # start from the vacuum and from the empty-cavity response of a saturated
    # qubit; keep the run that fits the cutoff best
    bright = -0.5 * drv.omega_ac / ((sys.f_r - f) - 0.5j * dec.kappa)
    first = iterate(0j)
    if first[1] < 1e-9:
        return first
    return min(first, iterate(bright), key=lambda r: r[1])


def splitting_contrast(t_center: complex, t_branches) -> float:
    """``1 - |t(f0)| / max |t|`` over the vacuum-Rabi branch samples.

    Positive while the resonant transmission shows a central dip, zero or
    negative once the doublet has merged into a single peak.
    """
    return float(1.0 - abs(t_center) / np.max(np.abs(t_branches)))


def drive_contrast_sweep(f0: float, g: float, dec: DecoherenceParams, amplitudes,
                         branch_window: float = 2e6, points: int = 5, n_phonon_max: int = 30,
                         check_phonons: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """Resonant (fq = f0) splitting contrast versus acoustic drive amplitude.

    Each point is a displaced-frame Lindblad steady state. The second
    array is the largest change of ``|t|`` when the cutoff is raised from
    ``n_phonon_max`` to ``check_phonons``, a truncation-sensitivity measure.
    """
    upper, lower = transmission_poles(f0, f0, g, dec).real
    grid = np.concatenate([
        [f0],
        np.linspace(lower - branch_window, lower + branch_window, points),
        np.linspace(upper - branch_window, upper + branch_window, points),
    ])
    contrast, spread = [], []
    for om in amplitudes:
        runs = []
        for n in (n_phonon_max, check_phonons):
            sys = JcParams(f0, f0, g, n_phonon_max=n)
            runs.append(np.array([
                lindblad_displaced_transmission(sys, dec, DriveParams(omega_ac=float(om), probe_f=float(fp)))[0]
                for fp in grid]))
        contrast.append(splitting_contrast(runs[1][0], runs[1][1:]))
        spread.append(float(np.max(np.abs(np.abs(runs[1]) - np.abs(runs[0])))))
    return np.asarray(contrast), np.asarray(spread)


# ---------------------------------------------------------------- maps


def idt_envelope(f, idt, material) -> np.ndarray:
    """Power envelope ``|A(f)|^2`` of an input and an identical output IDT."""
    from .device import idt_array_factor
    return np.abs(idt_array_factor(idt, material, f)) ** 2


def _map_columns(fn, n, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, range(n)))
    return [fn(i) for i in range(n)]


def qubit_frequencies(transmon: TransmonParams, flux_grid, threads: int = 1) -> np.ndarray:
    flux = np.asarray(flux_grid, dtype=float)
    ej = ej_of_flux(transmon.ej0, flux, transmon.asymmetry)

    def col(i):
        return _levels(transmon.ec, ej[i], transmon.charge_offset, transmon.charge_cutoff, 2)[1]
    return np.asarray(_map_columns(col, flux.size, threads))


def anticrossing_map(transmon: TransmonParams, f0: float, g: float, dec: DecoherenceParams,
                     flux_grid, f_grid, order: str = "flux", envelope=None,
                     threads: int = 1) -> SpectroscopyMap:
    """Transmission near ``f0`` as the qubit is flux-tuned through the cavity.

    ``order`` selects which axis is the outer loop; the result does not
    depend on it. ``envelope`` is an optional multiplicative factor on the
    frequency axis (e.g. :func:`idt_envelope`).
    """
    flux = np.asarray(flux_grid, dtype=float)
    f = np.asarray(f_grid, dtype=float)
    if flux.size == 0 or f.size == 0:
        raise DomainError("anticrossing_map: grids must be non-empty")
    fq = qubit_frequencies(transmon, flux, threads)
    if order == "flux":
        vals = linear_transmission(f[None, :], f0, fq[:, None], g, dec)
    elif order == "frequency":
        vals = linear_transmission(f[:, None], f0, fq[None, :], g, dec).T
    else:
        raise DomainError("anticrossing_map: order must be 'flux' or 'frequency'")
    if envelope is not None:
        vals = vals * np.asarray(envelope)[None, :]
    return SpectroscopyMap(flux, f, vals, meta={"fq": fq, "f0": f0, "g": g})


def _pump_rate(omega: float, detuning, width: float):
    """Incoherent transition rate of a Rabi drive ``omega`` on a line of FWHM ``width``."""
    if omega == 0:
        return np.zeros(np.shape(detuning))
    if width <= 0:
        raise DomainError("two_tone: qubit linewidth must be positive when driven")
    return (omega**2 / width) / (1.0 + 4.0 * np.asarray(detuning) ** 2 / width**2)


def three_level_populations(w01, w12, gamma1: float) -> np.ndarray:
    """Steady populations of a driven three-level ladder with decay ``k * gamma1`` from level k.

    Pure two-level case (``w12 = 0``) gives ``p1 = w01 / (2 w01 + gamma1)``,
    the saturated Bloch result.
    """
    a = np.asarray(w01, dtype=float)
    c = np.broadcast_to(np.asarray(w12, dtype=float), a.shape)
    # detailed balance of the ladder: p0 : p1 = (a + gamma1) : a, p2 : p1 = c : (c + 2 gamma1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio2 = np.where(c > 0, c / (c + 2 * gamma1), 0.0)
    raw = np.stack([a + gamma1, a, a * ratio2], axis=-1)
    return raw / raw.sum(axis=-1, keepdims=True)


def two_tone_map(transmon: TransmonParams, f0: float, g: float, dec: DecoherenceParams, drv: DriveParams,
                 flux_grid, probe2_grid, pump_f: float | None = None, pump_omega: float = 0.0,
                 threads: int = 1) -> SpectroscopyMap:
    """Phase shift of the first tone at ``f0`` while a second tone sweeps the qubit.

    The qubit is a three-level ladder. Both the second tone (Rabi
    ``omega_el``) and the optional pump (``pump_omega`` at ``pump_f``) drive
    the 0-1 and 1-2 transitions; the 1-2 matrix element is sqrt(2) larger.
    Populations come from rate equations that reduce to the saturated Bloch
    result for a two-level line. The cavity line is pulled by the
    state-dependent dispersive shifts and the transmission is the
    population-weighted mixture. ``values`` holds ``t``; the phase shift is
    in ``meta['phase_shift']``. Columns with ``|E01 - f0| <= 3 g`` are flagged.
    """
    flux = np.asarray(flux_grid, dtype=float)
    f2 = np.asarray(probe2_grid, dtype=float)
    if flux.size == 0 or f2.size == 0:
        raise DomainError("two_tone_map: grids must be non-empty")
    ej = ej_of_flux(transmon.ej0, flux, transmon.asymmetry)
    w01_width = dec.gamma1 + 2 * dec.gamma_phi
    w12_width = 3 * dec.gamma1 + 2 * dec.gamma_phi
    half = dec.kappa / 2

    def col(i):
        lv = _levels(transmon.ec, ej[i], transmon.charge_offset, transmon.charge_cutoff, 4)
        e01, e12, e23 = lv[1], lv[2] - lv[1], lv[3] - lv[2]
        rate01 = _pump_rate(drv.omega_el, f2 - e01, w01_width)
        rate12 = _pump_rate(np.sqrt(2) * drv.omega_el, f2 - e12, w12_width)
        if pump_f is not None and pump_omega > 0:
            rate01 = rate01 + _pump_rate(pump_omega, pump_f - e01, w01_width)
            rate12 = rate12 + _pump_rate(np.sqrt(2) * pump_omega, pump_f - e12, w12_width)
        pops = three_level_populations(rate01, rate12, dec.gamma1)
        chi01 = dispersive_shift(e01, f0, g) if e01 != f0 else np.inf
        chi12 = dispersive_shift(e12, f0, np.sqrt(2) * g) if e12 != f0 else np.inf
        chi23 = dispersive_shift(e23, f0, np.sqrt(3) * g) if e23 != f0 else np.inf
        shifts = np.array([-chi01, chi01 - chi12, chi12 - chi23])
        with np.errstate(invalid="ignore", divide="ignore"):
            tk = half / (1j * shifts + half)
        # excited-state corrections vanish exactly when nothing is driven
        t = tk[0] + pops[:, 1:] @ (tk[1:] - tk[0])
        return t, tk[0], e01

    cols = _map_columns(col, flux.size, threads)
    values = np.array([c[0] for c in cols])
    ground = np.array([c[1] for c in cols])
    e01 = np.array([c[2] for c in cols])
    # wrapped difference of angles is exactly zero for identical values
    phase = (np.angle(values) - np.angle(ground)[:, None] + np.pi) % (2 * np.pi) - np.pi
    flagged = np.abs(e01 - f0) <= 3 * g
    return SpectroscopyMap(flux, f2, values, flagged,
                           meta={"phase_shift": phase, "e01": e01, "f0": f0, "g": g})


def ridge(map_: SpectroscopyMap) -> np.ndarray:
    """Second-tone frequency of maximal ``|phase shift|`` in each flux column."""
    ph = np.abs(map_.meta["phase_shift"])
    return map_.y_axis[np.argmax(ph, axis=1)]

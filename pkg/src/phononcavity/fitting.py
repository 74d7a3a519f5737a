"""Peak extraction and least-squares parameter extraction from traces and maps."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.signal import find_peaks

from .coupled import dressed_branches
from .device import DomainError, response_fwhm
from .response import SpectroscopyMap, TransmissionTrace
from .transmon import TransmonParams, _levels, ej_of_flux


@dataclass
class Dataset:
    kind: str
    payload: TransmissionTrace | SpectroscopyMap
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = {"trace": TransmissionTrace, "map": SpectroscopyMap}
        if self.kind not in expected or not isinstance(self.payload, expected[self.kind]):
            raise DomainError("dataset: kind must be 'trace' or 'map' and match the payload")


@dataclass
class FitResult:
    params: dict[str, float]
    residual_norm: float
    iterations: int
    converged: bool
    stderr_proxy: dict[str, float]
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cost_history: list[float] = field(default_factory=list)

    def __getitem__(self, name: str) -> float:
        return self.params[name]


# ---------------------------------------------------------------- optimizer


@dataclass
class _LmOutcome:
    x: np.ndarray
    jac: np.ndarray
    residuals: np.ndarray
    iterations: int
    converged: bool
    costs: list[float]


def _jacobian(fun, x, r0, rel_step):
    J = np.empty((r0.size, x.size))
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1.0)
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (fun(xp) - fun(xm)) / (2 * h)
    return J


def levenberg_marquardt(fun: Callable[[np.ndarray], np.ndarray], x0, rel_step: float = 1e-6,
                        xtol: float = 1e-9, max_iter: int = 200) -> _LmOutcome:
    """Minimize ``sum(fun(x)**2)``; ``x`` should be scaled to order one.

    Jacobians are central differences. A step is accepted only if it
    lowers the cost, so the recorded cost history never increases.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = fun(x)
    cost = float(r @ r)
    costs = [cost]
    lam = None
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        if cost == 0.0:
            converged = True
            break
        J = _jacobian(fun, x, r, rel_step)
        A = J.T @ J
        grad = J.T @ r
        diag = np.maximum(np.diag(A), 1e-12 * max(np.max(np.diag(A)), 1e-300))
        if lam is None:
            lam = 1e-3 * float(np.max(diag))
        accepted = False
        while lam < 1e20:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            xn = x + step
            rn = fun(xn)
            cn = float(rn @ rn)
            if np.isfinite(cn) and cn < cost:
                accepted = True
                break
            if np.max(np.abs(step) / np.maximum(np.abs(x), 1.0)) < xtol:
                break
            lam *= 10
        if not accepted:
            # no downhill step left at machine precision: a minimum
            converged = True
            break
        rel = np.max(np.abs(step) / np.maximum(np.abs(x), 1.0))
        x, r, cost = xn, rn, cn
        costs.append(cost)
        lam = max(lam / 10, 1e-15)
        if rel < xtol:
            converged = True
            break
    J = _jacobian(fun, x, r, rel_step)
    return _LmOutcome(x, J, r, it, converged, costs)


def _stderr(J: np.ndarray, r: np.ndarray, scale: np.ndarray) -> np.ndarray:
    m, n = J.shape
    dof = max(m - n, 1)
    s2 = float(r @ r) / dof
    cov = np.linalg.pinv(J.T @ J) * s2
    return np.sqrt(np.abs(np.diag(cov))) * np.abs(scale)


def _result(names, x, scale, shift, out: _LmOutcome, data_scale: float) -> FitResult:
    values = x * scale + shift
    err = _stderr(out.jac, out.residuals, scale)
    rms = float(np.sqrt(np.mean(out.residuals**2))) if out.residuals.size else 0.0
    return FitResult(
        params={n: float(v) for n, v in zip(names, values)},
        residual_norm=rms,
        iterations=out.iterations,
        converged=out.converged and np.isfinite(rms),
        stderr_proxy={n: float(e) for n, e in zip(names, err)},
        residuals=out.residuals * data_scale,
        cost_history=out.costs,
    )


# ---------------------------------------------------------------- peaks


def _parabola_vertex(x, y):
    (x0, x1, x2), (y0, y1, y2) = x, y
    d0, d2 = x0 - x1, x2 - x1
    den = d0 * d2 * (d0 - d2)
    if den == 0:
        return x1, y1
    a = (d2 * (y0 - y1) - d0 * (y2 - y1)) / den
    b = (d0 * d0 * (y2 - y1) - d2 * d2 * (y0 - y1)) / den
    if a >= 0:
        return x1, y1
    u = -b / (2 * a)
    u = min(max(u, min(d0, d2)), max(d0, d2))
    return x1 + u, y1 + b * u + a * u * u


def extract_peaks(trace: TransmissionTrace, min_prominence: float) -> list[tuple[float, float]]:
    """Local maxima of ``|t|`` with relative prominence above ``min_prominence``.

    Positions and heights are refined by a parabola through the three
    samples around each maximum.
    """
    if trace.f.size == 0:
        raise DomainError("extract_peaks: empty trace")
    if not 0 < min_prominence < 1:
        raise DomainError("extract_peaks: 0 < min_prominence < 1 required")
    mag = np.abs(trace.t)
    top = mag.max()
    if top == 0:
        return []
    idx, _ = find_peaks(mag, prominence=min_prominence * top)
    out = []
    for i in idx:
        fx, my = _parabola_vertex(trace.f[i - 1:i + 2], mag[i - 1:i + 2])
        out.append((float(fx), float(my)))
    return sorted(out)


def branch_points(map_: SpectroscopyMap, min_prominence: float = 0.1) -> list[tuple[float, float]]:
    """``(flux, frequency)`` of the transmission peaks in every flux column."""
    pts = []
    for i, x in enumerate(map_.x_axis):
        for f, _ in extract_peaks(map_.column(i), min_prominence):
            pts.append((float(x), f))
    return pts


# ---------------------------------------------------------------- models


def _lorentzian(x, center, width, amp, offset):
    hw = 0.5 * width
    return amp * hw * hw / ((x - center) ** 2 + hw * hw) + offset


def fit_lorentzian(trace: TransmissionTrace, init: dict | None = None, squared: bool = True,
                   max_iter: int = 200) -> FitResult:
    """Fit ``A (w/2)^2 / ((f - fc)^2 + (w/2)^2) + c`` to ``|t|^2`` (or to ``|t|``).

    Returns parameters ``center``, ``fwhm``, ``amplitude``, ``offset``.
    A trace without a peak is reported with ``converged=False``.
    """
    f = trace.f
    y = np.abs(trace.t) ** 2 if squared else np.abs(trace.t)
    names = ["center", "fwhm", "amplitude", "offset"]
    ymax, ymin = float(y.max()), float(y.min())
    i = int(np.argmax(y))
    if init is None:
        try:
            width = response_fwhm(f, np.sqrt(np.clip(y - ymin, 0, None)))
        except DomainError:
            width = 0.0
        init = {"center": f[i], "fwhm": width, "amplitude": ymax - ymin, "offset": ymin}
    if not (ymax > ymin and init["fwhm"] > 0):
        params = {n: float(init[n]) for n in names}
        return FitResult(params, float("nan"), 0, False, {n: float("nan") for n in names})
    # dimensionless frame: frequency about the seed center in units of the seed width
    fc, w = float(init["center"]), float(init["fwhm"])
    yscale = max(abs(ymax), abs(ymin))
    x = (f - fc) / w
    yn = y / yscale

    def res(q):
        return _lorentzian(x, q[0], q[1], q[2], q[3]) - yn

    q0 = np.array([0.0, 1.0, init["amplitude"] / yscale, init["offset"] / yscale])
    out = levenberg_marquardt(res, q0, max_iter=max_iter)
    scale = np.array([w, w, yscale, yscale])
    shift = np.array([fc, 0.0, 0.0, 0.0])
    result = _result(names, out.x, scale, shift, out, yscale)
    result.params["fwhm"] = abs(result.params["fwhm"])
    return result


def fit_anticrossing(branch_points: Sequence[tuple[float, float]], transmon_link: Callable,
                     init: dict | None = None, max_iter: int = 200) -> FitResult:
    """Fit the resonant doublet ``dressed_branches(f0, E01(flux), g)`` to branch centers.

    Each point is compared with whichever model branch is closer at the
    current parameters. Free parameters: ``g`` and ``f0``.
    """
    pts = np.asarray(branch_points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise DomainError("fit_anticrossing: need at least three branch points")
    flux, freq = pts[:, 0], pts[:, 1]
    fq = np.asarray(transmon_link(flux), dtype=float)
    cols = {}
    for x, fv in zip(flux, freq):
        cols.setdefault(x, []).append(fv)
    pairs = [(max(v), min(v)) for v in cols.values() if len(v) >= 2]
    if not pairs:
        raise DomainError("fit_anticrossing: degenerate data, no flux column shows both branches")
    if init is None:
        f0_seed = float(np.mean([(u + lo) / 2 for u, lo in pairs]))
        g_seed = 0.5 * float(min(u - lo for u, lo in pairs))
        init = {"g": g_seed, "f0": f0_seed}
    spread = float(np.ptp(freq)) or 1.0
    g_scale = init["g"] if init["g"] > 0 else 1e-3 * spread
    scale = np.array([g_scale, spread])
    shift = np.array([0.0, init["f0"]])

    def res(q):
        g, f0 = q[0] * scale[0], q[1] * scale[1] + shift[1]
        up, lo = dressed_branches(f0, fq, abs(g))
        model = np.where(np.abs(freq - up) <= np.abs(freq - lo), up, lo)
        return (freq - model) / spread

    q0 = np.array([init["g"] / g_scale, 0.0])
    up, lo = dressed_branches(init["f0"], fq, abs(init["g"]))
    if np.all(np.abs(freq - up) <= np.abs(freq - lo)) or np.all(np.abs(freq - up) > np.abs(freq - lo)):
        raise DomainError("fit_anticrossing: degenerate data, all points on one branch")
    out = levenberg_marquardt(res, q0, max_iter=max_iter)
    result = _result(["g", "f0"], out.x, scale, shift, out, spread)
    result.params["g"] = abs(result.params["g"])
    return result


def transmon_e01_link(transmon: TransmonParams) -> Callable:
    """``flux -> E01`` from the charge basis with fixed transmon parameters."""
    def link(flux):
        flux = np.atleast_1d(np.asarray(flux, dtype=float))
        ej = ej_of_flux(transmon.ej0, flux, transmon.asymmetry)
        return np.array([_levels(transmon.ec, e, transmon.charge_offset, transmon.charge_cutoff, 2)[1]
                         for e in ej])
    return link


def fit_flux_spectroscopy(points: Sequence[tuple[float, float]], init: dict | None = None,
                          charge_offset: float = 0.0, charge_cutoff: int = 15,
                          max_iter: int = 200) -> FitResult:
    """Fit charge-basis E01 to ridge points ``(bias, frequency)``.

    The bias maps to flux as ``flux = flux_period_scale * (bias - flux_offset)``.
    Returns ``ec``, ``ej0``, ``flux_offset``, ``flux_period_scale``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 5:
        raise DomainError("fit_flux_spectroscopy: need at least five ridge points")
    bias, freq = pts[:, 0], pts[:, 1]
    if init is None:
        fmax = float(freq.max())
        # transmon regime ratio E_J/E_C = 80 in the asymptotic formula
        ec = fmax / (np.sqrt(8 * 80) - 1)
        init = {"ec": ec, "ej0": 80 * ec, "flux_offset": float(bias[np.argmax(freq)]),
                "flux_period_scale": 1.0}
    names = ["ec", "ej0", "flux_offset", "flux_period_scale"]
    fscale = float(np.max(np.abs(freq)))
    bscale = float(np.ptp(bias)) or 1.0
    scale = np.array([init["ec"], init["ej0"], bscale, init["flux_period_scale"]])
    shift = np.array([0.0, 0.0, init["flux_offset"], 0.0])

    def model(p):
        ec, ej0, off, per = p
        if ec <= 0 or ej0 <= 0:
            return np.full(freq.shape, np.inf)
        ej = ej_of_flux(ej0, per * (bias - off))
        return np.array([_levels(ec, e, charge_offset, charge_cutoff, 2)[1] for e in ej])

    def res(q):
        return (model(q * scale + shift) - freq) / fscale

    q0 = np.array([1.0, 1.0, 0.0, 1.0])
    out = levenberg_marquardt(res, q0, max_iter=max_iter)
    return _result(names, out.x, scale, shift, out, fscale)


def qubit_linewidth_to_gamma1(fit: FitResult) -> float:
    """Relaxation rate Gamma1/2pi from the FWHM of a low-drive dispersive qubit line.

    Assumes no pure dephasing. Near resonance each anticrossing branch is
    broadened by Gamma1/2 instead.
    """
    if not fit.converged:
        raise DomainError("qubit_linewidth_to_gamma1: fit did not converge")
    return float(fit.params["fwhm"])


def qubit_line_trace(map_: SpectroscopyMap, column: int) -> TransmissionTrace:
    """Magnitude of the first-tone phase shift along one flux column of a two-tone map."""
    return TransmissionTrace(map_.y_axis, np.abs(map_.meta["phase_shift"][column]).astype(complex))

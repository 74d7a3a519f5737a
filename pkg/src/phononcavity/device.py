"""Acoustic response of the SAW cavity: IDTs, Bragg mirrors, cavity modes.

All lengths are in meters, all frequencies in Hz. Wave propagation uses the
``exp(-i k x)`` convention, so a reflection coming from deeper inside a
grating carries a more negative phase.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


@dataclass(frozen=True)
class MaterialParams:
    saw_speed: float = 3160.0          # m/s, quartz at low temperature
    density: float = 2647.0            # kg/m^3
    piezo_module: float = 2e9          # V/m, e_pz / epsilon
    strip_reflectivity: float = 0.02   # per-strip reflection magnitude

    def __post_init__(self):
        if not self.saw_speed > 0:
            raise DomainError("material: saw_speed > 0 required")
        if not self.density > 0:
            raise DomainError("material: density > 0 required")
        if not self.piezo_module > 0:
            raise DomainError("material: piezo_module > 0 required")
        if not 0 < self.strip_reflectivity < 0.1:
            raise DomainError("material: 0 < strip_reflectivity < 0.1 required")


@dataclass(frozen=True)
class IdtGeometry:
    period: float
    cells: int
    electrodes_per_period: int
    aperture: float
    center_position: float
    electrode_width: float
    polarity: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.period > 0:
            raise DomainError("idt: period > 0 required")
        if self.cells < 1:
            raise DomainError("idt: cells >= 1 required")
        if self.electrodes_per_period not in (2, 3):
            raise DomainError("idt: electrodes_per_period must be 2 or 3")
        if not 0 < self.electrode_width < self.period / self.electrodes_per_period:
            raise DomainError("idt: electrode_width < period / electrodes_per_period required")
        if self.polarity is not None and len(self.polarity) != self.electrodes_per_period:
            raise DomainError("idt: polarity needs one sign per electrode in a period")

    @property
    def length(self) -> float:
        return self.cells * self.period

    @property
    def signs(self) -> np.ndarray:
        """Bus polarity of each electrode within one period."""
        if self.polarity is not None:
            return np.asarray(self.polarity, dtype=float)
        if self.electrodes_per_period == 2:
            return np.array([1.0, -1.0])
        # one hot electrode, two on the grounded bus
        return np.array([1.0, -1.0, -1.0])

    def electrode_positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Centers and polarities of all electrodes, ordered along x."""
        pitch = self.period / self.electrodes_per_period
        start = self.center_position - self.length / 2
        cell = start + self.period * np.arange(self.cells)
        within = pitch * (np.arange(self.electrodes_per_period) + 0.5)
        x = (cell[:, None] + within[None, :]).ravel()
        s = np.tile(self.signs, self.cells)
        return x, s


@dataclass(frozen=True)
class MirrorGeometry:
    strip_period: float
    strips: int
    inner_edge_position: float
    # +1: strips extend towards +x from the inner edge (right mirror)
    direction: int = -1

    def __post_init__(self):
        if self.strips < 1:
            raise DomainError("mirror: strips >= 1 required")
        if not self.strip_period > 0:
            raise DomainError("mirror: strip_period > 0 required")
        if self.direction not in (-1, 1):
            raise DomainError("mirror: direction must be -1 or +1")

    @property
    def outer_edge_position(self) -> float:
        return self.inner_edge_position + self.direction * self.strips * self.strip_period


@dataclass(frozen=True)
class CavityGeometry:
    left_mirror: MirrorGeometry
    right_mirror: MirrorGeometry
    port_idts: tuple[IdtGeometry, IdtGeometry]
    qubit_idt: IdtGeometry
    port_offset: float

    def __post_init__(self):
        if self.left_mirror.direction != -1 or self.right_mirror.direction != 1:
            raise DomainError("cavity: left mirror must extend to -x, right mirror to +x")
        if not self.mirror_gap > 0:
            raise DomainError("cavity: mirror_gap > 0 required")
        lo = self.left_mirror.inner_edge_position
        hi = self.right_mirror.inner_edge_position
        for idt in (*self.port_idts, self.qubit_idt):
            a = idt.center_position - idt.length / 2
            b = idt.center_position + idt.length / 2
            if not (lo < a and b < hi):
                raise DomainError("cavity: every IDT must lie strictly between the mirrors")

    @property
    def mirror_gap(self) -> float:
        return self.right_mirror.inner_edge_position - self.left_mirror.inner_edge_position

    @property
    def center(self) -> float:
        return 0.5 * (self.left_mirror.inner_edge_position + self.right_mirror.inner_edge_position)

    def shifted(self, dx: float) -> "CavityGeometry":
        """Rigid translation of the whole device by ``dx``."""
        def mv(obj, attr):
            return replace(obj, **{attr: getattr(obj, attr) + dx})
        return CavityGeometry(
            left_mirror=mv(self.left_mirror, "inner_edge_position"),
            right_mirror=mv(self.right_mirror, "inner_edge_position"),
            port_idts=(mv(self.port_idts[0], "center_position"),
                       mv(self.port_idts[1], "center_position")),
            qubit_idt=mv(self.qubit_idt, "center_position"),
            port_offset=self.port_offset,
        )


@dataclass(frozen=True)
class ReflectionSpectrum:
    frequencies: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if f.shape != v.shape:
            raise DomainError("spectrum: frequencies and values differ in length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise DomainError("spectrum: frequencies must increase monotonically")
        if np.any(np.abs(v) > 1 + 1e-12):
            raise DomainError("spectrum: passive mirror requires |values| <= 1")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "values", v)


def build_cavity(port_period: float = 980e-9, port_cells: int = 29, port_electrode_width: float = 245e-9,
                 port_offset: float = 1.125 * 980e-9, qubit_period: float = 980e-9, qubit_cells: int = 18,
                 qubit_electrodes_per_period: int = 3, qubit_electrode_width: float = 980e-9 / 6,
                 qubit_polarity: tuple[int, ...] | None = None, qubit_center: float | None = None,
                 strip_period: float = 490e-9, mirror_strips: int = 200, mirror_gap: float = 225 * 490e-9,
                 aperture: float = 100e-6) -> CavityGeometry:
    """Symmetric cavity with the left grating's inner edge at x = 0.

    Ports sit ``port_offset`` inside each grating edge. With
    ``qubit_center=None`` the qubit IDT is placed next to the cavity center
    with its first electrode of every cell on an antinode of the standing
    wave at the Bragg frequency (antinodes repeat every ``strip_period``).
    """
    left = MirrorGeometry(strip_period, mirror_strips, 0.0, -1)
    right = MirrorGeometry(strip_period, mirror_strips, mirror_gap, 1)
    port_len = port_cells * port_period
    ports = (
        IdtGeometry(port_period, port_cells, 2, aperture, port_offset + port_len / 2, port_electrode_width),
        IdtGeometry(port_period, port_cells, 2, aperture, mirror_gap - port_offset - port_len / 2,
                    port_electrode_width),
    )
    qlen = qubit_cells * qubit_period
    first = qubit_period / (2 * qubit_electrodes_per_period)
    if qubit_center is None:
        hot = np.round((mirror_gap / 2 - qlen / 2 + first) / strip_period) * strip_period
        qubit_center = float(hot + qlen / 2 - first)
    qubit = IdtGeometry(qubit_period, qubit_cells, qubit_electrodes_per_period, aperture, qubit_center,
                        qubit_electrode_width, qubit_polarity)
    return CavityGeometry(left, right, ports, qubit, port_offset)


def reference_cavity(period: float = 980e-9, mirror_strips: int = 200, gap_half_periods: int = 225,
                 port_cells: int = 29, qubit_cells: int = 18, aperture: float = 100e-6) -> CavityGeometry:
    """Reference device: two 200-strip gratings, two 29-cell ports, an 18-cell qubit IDT.

    Port electrodes are p/4 wide, qubit electrodes p/6, ports sit
    (1 + 1/8) p inside the gratings.
    """
    return build_cavity(period, port_cells, period / 4, 1.125 * period, period, qubit_cells, 3, period / 6,
                        None, None, period / 2, mirror_strips, gap_half_periods * period / 2, aperture)


def synchronous_frequency(material: MaterialParams, period: float) -> float:
    if not period > 0:
        raise DomainError("synchronous_frequency: period > 0 required")
    return material.saw_speed / period


def idt_array_factor(geom: IdtGeometry, material: MaterialParams, f) -> np.ndarray:
    """Normalized uniform-array factor of an IDT, equal to 1 at its synchronous frequency.

    ``(1/N) sum_n exp(i 2 pi n (f - f0) p / v)`` over the ``N`` cells.
    Electrode element factors are ignored.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise DomainError("idt_array_factor: f > 0 required")
    f0 = synchronous_frequency(material, geom.period)
    x = (f - f0) * geom.period / material.saw_speed
    n = np.arange(geom.cells)
    # closed form would lose precision near x = 0; the sum is cheap
    return np.exp(2j * np.pi * np.multiply.outer(x, n)).mean(axis=-1)


def _strip_phases(geom: MirrorGeometry, material: MaterialParams, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise DomainError("mirror: f > 0 required")
    return 4 * np.pi * f * geom.strip_period / material.saw_speed


def mirror_array_sum(geom: MirrorGeometry, material: MaterialParams, f) -> np.ndarray:
    """Single-scattering reflective-array sum ``r_s sum_n exp(-i 4 pi f n d / v)``."""
    theta = _strip_phases(geom, material, f)
    n = np.arange(geom.strips)
    return material.strip_reflectivity * np.exp(-1j * np.multiply.outer(theta, n)).sum(axis=-1)


def mirror_reflection(geom: MirrorGeometry, material: MaterialParams, f, clamp: bool = True) -> np.ndarray:
    """Grating reflection referenced to its inner edge.

    The phase is that of the array sum. With ``clamp`` the magnitude is
    saturated as ``tanh(|sum|)`` so the mirror stays passive.
    """
    s = mirror_array_sum(geom, material, f)
    if not clamp:
        return s
    mag = np.abs(s)
    return np.tanh(mag) * np.exp(1j * np.angle(s))


def mirror_reflection_cascade(geom: MirrorGeometry, material: MaterialParams, f) -> np.ndarray:
    """Multiple-scattering reflection of the same strip array.

    Each strip is a lossless reflector with scattering matrix
    ``[[r, t], [t, -r]]``, ``t = sqrt(1 - r**2)``; the strips are composed
    from the back of the grating to its inner edge. To first order in ``r``
    this reduces to :func:`mirror_array_sum`; at the Bragg frequency it is
    ``tanh(N artanh r)``, real and positive.
    """
    theta = _strip_phases(geom, material, f)
    r = material.strip_reflectivity
    t2 = 1.0 - r * r
    hop = np.exp(-1j * theta)
    gamma = np.zeros(np.shape(theta), dtype=complex)
    for _ in range(geom.strips):
        seen = gamma * hop
        gamma = r + t2 * seen / (1.0 + r * seen)
    return gamma


def mirror_main_lobe(geom: MirrorGeometry, material: MaterialParams, resolution: float = 1e3) -> tuple[float, float]:
    """First nulls of the array sum on either side of the Bragg frequency."""
    fb = material.saw_speed / (2 * geom.strip_period)
    guess = material.saw_speed / (2 * geom.strips * geom.strip_period)
    span = 3 * guess
    f = np.arange(fb - span, fb + span + resolution / 2, resolution)
    mag = np.abs(mirror_array_sum(geom, material, f))
    c = int(np.argmin(np.abs(f - fb)))
    edges = []
    for step in (-1, 1):
        i = c
        while 0 < i + step < f.size - 1 and mag[i + step] <= mag[i]:
            i += step
        # parabolic refinement of the null
        a, b, cc = mag[i - 1], mag[i], mag[i + 1]
        den = a - 2 * b + cc
        off = 0.5 * (a - cc) / den if den != 0 else 0.0
        edges.append(f[i] + off * resolution)
    return edges[0], edges[1]


def bragg_frequency(geom: MirrorGeometry, material: MaterialParams) -> float:
    return material.saw_speed / (2 * geom.strip_period)


Reflection = Callable[[MirrorGeometry, MaterialParams, np.ndarray], np.ndarray]


def round_trip_phase(cav: CavityGeometry, material: MaterialParams, f,
                     reflection: Reflection = mirror_reflection_cascade) -> np.ndarray:
    """Unwrapped ``4 pi f L / v - arg G_left - arg G_right`` over ``f``."""
    f = np.asarray(f, dtype=float)
    gl = reflection(cav.left_mirror, material, f)
    gr = reflection(cav.right_mirror, material, f)
    prop = 4 * np.pi * f * cav.mirror_gap / material.saw_speed
    return prop - np.unwrap(np.angle(gl)) - np.unwrap(np.angle(gr))


def cavity_modes(cav: CavityGeometry, material: MaterialParams, search_band: Sequence[float],
                 reflection: Reflection = mirror_reflection_cascade,
                 grid_points: int = 4096, bisection_steps: int = 60) -> list[float]:
    """Frequencies in ``search_band`` where the round-trip phase is a multiple of 2 pi."""
    lo, hi = float(search_band[0]), float(search_band[1])
    if not 0 < lo < hi:
        raise DomainError("cavity_modes: search_band must be an increasing positive interval")
    n = max(grid_points, int(np.ceil((hi - lo) / 10e3)) + 1)
    f = np.linspace(lo, hi, n)

    def wrapped(x):
        ph = round_trip_phase(cav, material, np.atleast_1d(x), reflection)
        return np.angle(np.exp(1j * ph))

    h = wrapped(f)
    modes = []
    for i in np.flatnonzero((h[:-1] < 0) & (h[1:] >= 0)):
        a, b = f[i], f[i + 1]
        ha, hb = h[i], h[i + 1]
        if hb - ha > np.pi:
            # branch jump of the wrapped phase, not a root
            continue
        for _ in range(bisection_steps):
            m = 0.5 * (a + b)
            hm = wrapped(m)[0]
            if hm < 0:
                a = m
            else:
                b = m
        if abs(wrapped(0.5 * (a + b))[0]) > 1e-6:
            warnings.warn(f"cavity_modes: bracketing failed near {a:.6g} Hz (non-monotone phase)",
                          RuntimeWarning, stacklevel=2)
            continue
        modes.append(0.5 * (a + b))
    if h[-1] == 0.0 and (not modes or modes[-1] != hi):
        modes.append(hi)
    return sorted(modes)


def mode_coupling_weight(qubit_idt: IdtGeometry, cav: CavityGeometry, material: MaterialParams, f_mode: float,
                         reflection: Reflection = mirror_reflection_cascade) -> float:
    """Overlap of the qubit IDT with the standing wave of a cavity mode, in [0, 1].

    The standing wave ``cos(k x + theta)`` has its antinode at the left
    mirror's effective reflection plane. The electrode sum is normalized by
    the travelling-wave amplitude ``|sum_j s_j exp(i k x_j)|``, so 1 means the
    transducer's phase center sits on an antinode and 0 on a node.
    """
    k = 2 * np.pi * f_mode / material.saw_speed
    phi = np.angle(reflection(cav.left_mirror, material, np.array([f_mode]))[0])
    theta = -k * cav.left_mirror.inner_edge_position - phi / 2
    x, s = qubit_idt.electrode_positions()
    # reference positions to the left edge so large offsets keep precision
    x_rel = x - cav.left_mirror.inner_edge_position
    theta_rel = theta + k * cav.left_mirror.inner_edge_position
    amp = np.sum(s * np.exp(1j * k * x_rel))
    if abs(amp) == 0:
        return 0.0
    overlap = np.sum(s * np.cos(k * x_rel + theta_rel))
    return float(min(1.0, abs(overlap) / abs(amp)))


def response_fwhm(f, magnitude) -> float:
    """Full width at half maximum of ``magnitude**2`` with linear interpolation."""
    f = np.asarray(f, dtype=float)
    p = np.asarray(magnitude, dtype=float) ** 2
    i = int(np.argmax(p))
    if i == 0 or i == p.size - 1:
        raise DomainError("response_fwhm: maximum lies on the grid boundary")
    half = p[i] / 2
    left = np.flatnonzero(p[:i] < half)
    right = np.flatnonzero(p[i:] < half)
    if left.size == 0 or right.size == 0:
        raise DomainError("response_fwhm: half-maximum crossing not bracketed")
    a = left[-1]
    fl = f[a] + (half - p[a]) * (f[a + 1] - f[a]) / (p[a + 1] - p[a])
    b = i + right[0]
    fr = f[b - 1] + (half - p[b - 1]) * (f[b] - f[b - 1]) / (p[b] - p[b - 1])
    return float(fr - fl)


def central_mode_index(modes: Sequence[float], f_bragg: float) -> int:
    return int(np.argmin(np.abs(np.asarray(modes) - f_bragg)))


@dataclass
class DeviceReport:
    """Summary numbers of the calculated device response."""
    f_sync: float
    port_fwhm: float
    qubit_fwhm: float
    mirror_lobe: tuple[float, float]
    modes: list[float] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)

    @property
    def mirror_width(self) -> float:
        return self.mirror_lobe[1] - self.mirror_lobe[0]


def analyze_device(cav: CavityGeometry, material: MaterialParams, resolution: float = 50e3) -> DeviceReport:
    port = cav.port_idts[0]
    fs = synchronous_frequency(material, port.period)
    f = np.arange(fs - 400e6, fs + 400e6 + resolution / 2, resolution)
    port_fwhm = response_fwhm(f, np.abs(idt_array_factor(port, material, f)))
    fq = synchronous_frequency(material, cav.qubit_idt.period)
    fqg = np.arange(fq - 400e6, fq + 400e6 + resolution / 2, resolution)
    qubit_fwhm = response_fwhm(fqg, np.abs(idt_array_factor(cav.qubit_idt, material, fqg)))
    lobe = mirror_main_lobe(cav.left_mirror, material)
    modes = cavity_modes(cav, material, lobe)
    weights = [mode_coupling_weight(cav.qubit_idt, cav, material, m) for m in modes]
    return DeviceReport(fs, port_fwhm, qubit_fwhm, lobe, modes, weights)

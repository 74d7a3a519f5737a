"""Flat ``key = value`` experiment configuration.

Keys are dotted paths whose last component carries the SI unit, e.g.
``device.idt_port.period_m = 980e-9``. Every key has a default describing
the reference device, so an empty file is a complete configuration. All
frequencies are linear frequencies in Hz (E/h for energies, omega/2pi for
rates and couplings).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .device import CavityGeometry, DomainError, MaterialParams, build_cavity
from .response import DecoherenceParams, DriveParams
from .transmon import TransmonParams, resonance_flux
from .zero_point import ZeroPointInputs


class ConfigError(DomainError):
    """Malformed configuration text, unknown key, or violated invariant."""


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    v = float(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _auto_float(text: str):
    return "auto" if text.strip().lower() == "auto" else float(text)


def _opt_float(text: str):
    return None if text.strip().lower() == "none" else float(text)


def _polarity(text: str):
    if text.strip().lower() == "auto":
        return "auto"
    signs = tuple(int(s) for s in text.replace(" ", "").split(","))
    if any(s not in (-1, 1) for s in signs):
        raise ValueError("polarity entries must be +1 or -1")
    return signs


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    return parse


def _text(text: str) -> str:
    return text.strip()


@dataclass(frozen=True)
class Key:
    name: str
    default: Any
    parse: Callable[[str], Any]
    doc: str


P = 980e-9

KEYS: tuple[Key, ...] = (
    Key("material.saw_speed_m_per_s", 3160.0, _float, "SAW speed in quartz at low temperature"),
    Key("material.density_kg_per_m3", 2647.0, _float, "quartz density"),
    Key("material.piezo_module_v_per_m", 2e9, _float, "e_pz / epsilon"),
    Key("material.strip_reflectivity", 0.02, _float, "per-strip reflection magnitude (assumed)"),
    Key("device.idt_port.period_m", P, _float, "port IDT period p"),
    Key("device.idt_port.cells", 29, _int, "port IDT cells"),
    Key("device.idt_port.electrode_width_m", P / 4, _float, "port electrode width p/4"),
    Key("device.idt_port.offset_m", 1.125 * P, _float, "port distance d1 from the grating edge"),
    Key("device.idt_qubit.period_m", P, _float, "qubit IDT period"),
    Key("device.idt_qubit.cells", 18, _int, "qubit IDT cells"),
    Key("device.idt_qubit.electrodes_per_period", 3, _int, "electrodes per qubit IDT period"),
    Key("device.idt_qubit.electrode_width_m", P / 6, _float, "qubit electrode width p/6"),
    Key("device.idt_qubit.polarity", "auto", _polarity,
        "bus sign per electrode in a period, e.g. 1,-1,-1; auto picks one hot and the rest grounded"),
    Key("device.idt_qubit.center_m", "auto", _auto_float,
        "qubit IDT center; auto puts its hot electrodes on antinodes near the cavity center"),
    Key("device.idt.aperture_m", 100e-6, _float, "electrode length W"),
    Key("device.mirror.strip_period_m", P / 2, _float, "grating strip period p/2"),
    Key("device.mirror.strips", 200, _int, "strips per grating"),
    Key("device.mirror.gap_m", 225 * P / 2, _float, "distance between the inner grating edges"),
    Key("transmon.ec_hz", 0.21e9, _float, "charging energy E_C/h"),
    Key("transmon.ej0_hz", 17.4e9, _float, "maximal Josephson energy E_J0/h"),
    Key("transmon.charge_offset", 0.0, _float, "offset charge n_g"),
    Key("transmon.charge_cutoff", 15, _int, "charge basis n in [-N, N]"),
    Key("transmon.asymmetry", 0.0, _float, "SQUID junction asymmetry d"),
    Key("coupling.f0_hz", 3.176e9, _float, "cavity mode coupled to the qubit"),
    Key("coupling.g_hz", 13e6, _float, "qubit-phonon coupling g/2pi"),
    Key("decoherence.kappa_hz", 0.332e6, _float, "cavity power linewidth"),
    Key("decoherence.gamma1_hz", 10e6, _float, "qubit relaxation rate"),
    Key("decoherence.gamma_phi_hz", 0.0, _float, "qubit pure dephasing rate"),
    Key("drive.omega_ac_hz", 0.05 * 0.332e6, _float, "acoustic probe drive amplitude"),
    Key("drive.omega_el_hz", 0.5e6, _float, "second-tone (electric) drive amplitude"),
    Key("drive.pump_f_hz", None, _opt_float, "optional third tone on the qubit; none disables it"),
    Key("drive.pump_omega_hz", 0.0, _float, "third-tone drive amplitude"),
    Key("grid.device.f_start_hz", 3.0245e9, _float, "device response sweep start"),
    Key("grid.device.f_stop_hz", 3.4245e9, _float, "device response sweep stop"),
    Key("grid.device.points", 4001, _int, "device response sweep points"),
    Key("grid.transmon.flux_start", 0.0, _float, "flux sweep start (flux quanta)"),
    Key("grid.transmon.flux_stop", 1.0, _float, "flux sweep stop"),
    Key("grid.transmon.points", 201, _int, "flux sweep points"),
    Key("grid.anticrossing.flux_center", "auto", _auto_float,
        "flux at the center of the map; auto solves E01(flux) = f0"),
    Key("grid.anticrossing.flux_halfspan", 0.006, _float, "map extends this far on each side in flux"),
    Key("grid.anticrossing.flux_points", 201, _int, "flux points of the map"),
    Key("grid.anticrossing.f_halfspan_hz", 40e6, _float, "map extends this far on each side of f0"),
    Key("grid.anticrossing.f_points", 401, _int, "frequency points of the map"),
    Key("grid.twotone.flux_start", 0.0, _float, "two-tone flux start"),
    Key("grid.twotone.flux_stop", 0.45, _float, "two-tone flux stop"),
    Key("grid.twotone.flux_points", 91, _int, "two-tone flux points"),
    Key("grid.twotone.f_start_hz", 1.5e9, _float, "second-tone sweep start"),
    Key("grid.twotone.f_stop_hz", 5.4e9, _float, "second-tone sweep stop"),
    Key("grid.twotone.f_points", 1301, _int, "second-tone sweep points"),
    Key("estimate.cavity_area_m2", 1.5e-8, _float, "effective cavity area A_c"),
    Key("estimate.zeta_mode", "resonance", _choice("resonance", "max", "value"),
        "zeta at the resonance bias, at maximal E_J, or the value below"),
    Key("estimate.zeta", 1.0, _float, "zeta used when zeta_mode = value"),
    Key("estimate.c_idt_f", 98e-15, _float, "input IDT capacitance, back-solved from mu_ac = 0.025 e"),
    Key("estimate.c_gate_f", 0.1e-15, _float, "qubit gate capacitance C_g"),
    Key("estimate.c_sigma_f", 90e-15, _float, "total qubit capacitance C_Sigma"),
    Key("fit.model", "lorentzian", _choice("lorentzian", "anticrossing", "flux", "qubit_line"),
        "model fitted by the fit subcommand"),
    Key("fit.input", "", _text, "input CSV for the fit subcommand"),
    Key("fit.min_prominence", 0.1, _float, "relative prominence for peak extraction"),
    Key("fit.flux", None, _opt_float, "flux column used by qubit_line on a two-tone map; none needs a single column"),
    Key("noise.relative_sigma", 0.0, _float, "Gaussian noise added to map magnitudes, relative to the maximum"),
)

KEY_INDEX = {k.name: k for k in KEYS}


@dataclass(frozen=True)
class Grid:
    start: float
    stop: float
    points: int

    def __post_init__(self):
        if self.points < 2:
            raise ConfigError("grid: points >= 2 required per swept axis")
        if not self.stop > self.start:
            raise ConfigError("grid: stop > start required")

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


@dataclass(frozen=True)
class Grids:
    device: Grid
    transmon: Grid
    anticrossing_flux: Grid
    anticrossing_f: Grid
    twotone_flux: Grid
    twotone_f: Grid


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration; ``values`` holds every key with auto fields resolved."""
    material: MaterialParams
    device: CavityGeometry
    transmon: TransmonParams
    decoherence: DecoherenceParams
    drives: DriveParams
    grids: Grids
    zero_point: ZeroPointInputs
    values: tuple[tuple[str, Any], ...]

    def __getitem__(self, key: str):
        return dict(self.values)[key]

    @property
    def f0(self) -> float:
        return self["coupling.f0_hz"]

    @property
    def g(self) -> float:
        return self["coupling.g_hz"]


def format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ",".join(f"{s:+d}" for s in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_lines(lines, source: str = "<config>") -> dict[str, Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, Any] = {}
    for no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{no}: expected 'key = value'")
        key, text = (s.strip() for s in line.split("=", 1))
        out[key] = _parse_item(key, text, f"{source}:{no}")
    return out


def _parse_item(key: str, text: str, where: str):
    if key not in KEY_INDEX:
        raise ConfigError(f"{where}: unknown key '{key}'")
    try:
        return KEY_INDEX[key].parse(text)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for '{key}': {exc}") from None


def parse_overrides(items) -> dict[str, Any]:
    """``key=value`` strings from the command line."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override '{item}': expected key=value")
        key, text = (s.strip() for s in item.split("=", 1))
        out[key] = _parse_item(key, text, f"override '{item}'")
    return out


def _build(v: dict[str, Any]) -> ExperimentConfig:
    try:
        material = MaterialParams(v["material.saw_speed_m_per_s"], v["material.density_kg_per_m3"],
                                  v["material.piezo_module_v_per_m"], v["material.strip_reflectivity"])
        polarity = v["device.idt_qubit.polarity"]
        center = v["device.idt_qubit.center_m"]
        device = build_cavity(
            port_period=v["device.idt_port.period_m"], port_cells=v["device.idt_port.cells"],
            port_electrode_width=v["device.idt_port.electrode_width_m"],
            port_offset=v["device.idt_port.offset_m"],
            qubit_period=v["device.idt_qubit.period_m"], qubit_cells=v["device.idt_qubit.cells"],
            qubit_electrodes_per_period=v["device.idt_qubit.electrodes_per_period"],
            qubit_electrode_width=v["device.idt_qubit.electrode_width_m"],
            qubit_polarity=None if polarity == "auto" else polarity,
            qubit_center=None if center == "auto" else center,
            strip_period=v["device.mirror.strip_period_m"], mirror_strips=v["device.mirror.strips"],
            mirror_gap=v["device.mirror.gap_m"], aperture=v["device.idt.aperture_m"])
        v["device.idt_qubit.center_m"] = device.qubit_idt.center_position
        transmon = TransmonParams(v["transmon.ec_hz"], v["transmon.ej0_hz"], v["transmon.charge_offset"],
                                  v["transmon.charge_cutoff"], v["transmon.asymmetry"])
        if not v["coupling.f0_hz"] > 0:
            raise ConfigError("coupling: f0 > 0 required")
        if v["coupling.g_hz"] < 0:
            raise ConfigError("coupling: g >= 0 required")
        dec = DecoherenceParams(v["decoherence.kappa_hz"], v["decoherence.gamma1_hz"],
                                v["decoherence.gamma_phi_hz"])
        drives = DriveParams(v["drive.omega_ac_hz"], v["drive.omega_el_hz"], v["coupling.f0_hz"])
        if v["drive.pump_omega_hz"] < 0:
            raise ConfigError("drive: pump amplitude >= 0 required")
        if v["noise.relative_sigma"] < 0:
            raise ConfigError("noise: relative_sigma >= 0 required")
        if not 0 < v["fit.min_prominence"] < 1:
            raise ConfigError("fit: 0 < min_prominence < 1 required")
        if v["grid.anticrossing.flux_center"] == "auto":
            v["grid.anticrossing.flux_center"] = resonance_flux(transmon, v["coupling.f0_hz"])
        fc, fh = v["grid.anticrossing.flux_center"], v["grid.anticrossing.flux_halfspan"]
        f0, span = v["coupling.f0_hz"], v["grid.anticrossing.f_halfspan_hz"]
        grids = Grids(
            Grid(v["grid.device.f_start_hz"], v["grid.device.f_stop_hz"], v["grid.device.points"]),
            Grid(v["grid.transmon.flux_start"], v["grid.transmon.flux_stop"], v["grid.transmon.points"]),
            Grid(fc - fh, fc + fh, v["grid.anticrossing.flux_points"]),
            Grid(f0 - span, f0 + span, v["grid.anticrossing.f_points"]),
            Grid(v["grid.twotone.flux_start"], v["grid.twotone.flux_stop"], v["grid.twotone.flux_points"]),
            Grid(v["grid.twotone.f_start_hz"], v["grid.twotone.f_stop_hz"], v["grid.twotone.f_points"]),
        )
        if grids.device.start <= 0:
            raise ConfigError("grid: device frequencies > 0 required")
        zp = ZeroPointInputs(material, v["estimate.cavity_area_m2"], v["estimate.zeta"],
                             v["estimate.c_idt_f"], v["estimate.c_gate_f"], v["estimate.c_sigma_f"])
    except ConfigError:
        raise
    except DomainError as exc:
        raise ConfigError(f"validation: {exc}") from None
    values = tuple((k.name, v[k.name]) for k in KEYS)
    return ExperimentConfig(material, device, transmon, dec, drives, grids, zp, values)


def build_config(settings: dict[str, Any] | None = None) -> ExperimentConfig:
    """Defaults updated by ``settings`` (already parsed values), then validated."""
    v = {k.name: k.default for k in KEYS}
    v.update(settings or {})
    return _build(v)


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Read a config file (``None`` for pure defaults) and apply ``key=value`` overrides."""
    settings: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
        settings.update(parse_lines(text.splitlines(), str(path)))
    settings.update(parse_overrides(overrides))
    return build_config(settings)


def serialize(cfg: ExperimentConfig, comments: bool = True) -> str:
    """Config text that loads back to an identical configuration."""
    lines = []
    for name, value in cfg.values:
        if comments:
            lines.append(f"# {KEY_INDEX[name].doc}")
        lines.append(f"{name} = {format_value(value)}")
    return "\n".join(lines) + "\n"


def flat_dict(cfg: ExperimentConfig) -> dict[str, str]:
    """Resolved values as strings, for manifests."""
    return {name: format_value(value) for name, value in cfg.values}

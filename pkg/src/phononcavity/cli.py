"""Command-line interface: reproducible simulation and fitting runs.

Every run writes CSV files plus ``manifest.json`` into ``--out``. The
manifest holds the fully resolved configuration, the seed, the tool
version and SHA-256 hashes of inputs and outputs; ``replay`` re-runs a
manifest and checks that the outputs are byte-identical.

Exit codes: 0 success, 2 invalid configuration or usage, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, build_config, flat_dict, load_config, parse_lines
from .coupled import dressed_level_sweep
from .device import (DomainError, analyze_device, idt_array_factor, mirror_reflection,
                     mirror_reflection_cascade)
from .fitting import (branch_points, fit_anticrossing, fit_flux_spectroscopy, fit_lorentzian,
                      qubit_linewidth_to_gamma1, transmon_e01_link)
from .response import SingularSystemError, TransmissionTrace, anticrossing_map, ridge, two_tone_map
from .transmon import ConvergenceError, ej_at_e01, flux_sweep, zeta
from .zero_point import ZeroPointInputs, estimate

SUBCOMMANDS = ("device", "transmon", "anticrossing", "twotone", "estimate", "fit")
NUMERICAL_ERRORS = (ConvergenceError, SingularSystemError, FloatingPointError, ZeroDivisionError,
                    np.linalg.LinAlgError)


class NumericalFailure(RuntimeError):
    """A run finished without a trustworthy numerical result."""


def fmt(x) -> str:
    return "{:.12g}".format(x)


def write_csv(path: Path, header: str, columns) -> None:
    """Columns of equal length, formatted with 12 significant digits, LF line ends."""
    cols = [np.asarray(c).ravel() for c in columns]
    rows = ["\n".join(",".join(fmt(c[i]) for c in cols) for i in range(cols[0].size))]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        if cols[0].size:
            fh.write(rows[0] + "\n")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: cannot read dataset: {exc}") from None
    if data.shape[1] != len(header):
        raise ConfigError(f"{path}: column count does not match the header")
    return header, data


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _noise(values: np.ndarray, cfg: ExperimentConfig, seed: int) -> np.ndarray:
    sigma = cfg["noise.relative_sigma"]
    if sigma == 0:
        return values
    rng = np.random.default_rng(seed)
    scale = sigma * np.max(np.abs(values))
    return values + scale * (rng.standard_normal(values.shape) + 1j * rng.standard_normal(values.shape))


# ---------------------------------------------------------------- subcommands


def run_device(cfg: ExperimentConfig, out: Path, threads: int, seed: int, log) -> list[Path]:
    cav, mat = cfg.device, cfg.material
    f = cfg.grids.device.values()
    files = []
    for name, values in (
        ("mirror_reflection.csv", mirror_reflection(cav.left_mirror, mat, f)),
        ("mirror_reflection_cascade.csv", mirror_reflection_cascade(cav.left_mirror, mat, f)),
        ("port_idt_response.csv", idt_array_factor(cav.port_idts[0], mat, f)),
        ("qubit_idt_response.csv", idt_array_factor(cav.qubit_idt, mat, f)),
    ):
        write_csv(out / name, "f_hz,re,im", [f, values.real, values.imag])
        files.append(out / name)
    rep = analyze_device(cav, mat)
    write_csv(out / "modes.csv", "f_hz,weight", [rep.modes, rep.weights])
    names = ["f_sync_hz", "port_fwhm_hz", "qubit_fwhm_hz", "mirror_lobe_low_hz", "mirror_lobe_high_hz",
             "mirror_width_hz"]
    values = [rep.f_sync, rep.port_fwhm, rep.qubit_fwhm, *rep.mirror_lobe, rep.mirror_width]
    _write_table(out / "device_summary.csv", "quantity,value", zip(names, values))
    files += [out / "modes.csv", out / "device_summary.csv"]
    log(f"synchronous frequency   {rep.f_sync / 1e9:.4f} GHz")
    log(f"port IDT FWHM           {rep.port_fwhm / 1e6:.1f} MHz")
    log(f"qubit IDT FWHM          {rep.qubit_fwhm / 1e6:.1f} MHz")
    log(f"mirror main lobe width  {rep.mirror_width / 1e6:.1f} MHz")
    for m, w in zip(rep.modes, rep.weights):
        log(f"mode {m / 1e9:.6f} GHz  qubit weight {w:.3f}")
    return files


def _write_table(path: Path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(r if isinstance(r, str) else fmt(r) for r in row) + "\n")


def run_transmon(cfg, out, threads, seed, log):
    flux = cfg.grids.transmon.values()
    e01, e12 = flux_sweep(cfg.transmon, flux)
    path = out / "transmon_flux_sweep.csv"
    write_csv(path, "flux_ratio,e01_hz,e12_hz", [flux, e01, e12])
    log(f"E01 at flux 0: {e01[np.argmin(np.abs(flux))] / 1e9:.4f} GHz")
    return [path]


def _map_csv(path, x, y, mag, phase):
    xx = np.repeat(x, y.size)
    yy = np.tile(y, x.size)
    write_csv(path, "flux_ratio,f_hz,mag,phase_rad", [xx, yy, mag, phase])


def run_anticrossing(cfg, out, threads, seed, log):
    flux = cfg.grids.anticrossing_flux.values()
    f = cfg.grids.anticrossing_f.values()
    m = anticrossing_map(cfg.transmon, cfg.f0, cfg.g, cfg.decoherence, flux, f, threads=threads)
    values = _noise(m.values, cfg, seed)
    path = out / "anticrossing_map.csv"
    _map_csv(path, flux, f, np.abs(values), np.angle(values))
    lv_path = out / "dressed_levels.csv"
    rows = dressed_level_sweep(cfg.f0, cfg.g, m.meta["fq"], n_phonon_max=2)
    write_csv(lv_path, "fq_hz,level_index,energy_hz", list(zip(*rows)))
    gaps = []
    for i in range(flux.size):
        peaks = [p for p in branch_points_column(m, i, cfg["fit.min_prominence"])]
        if len(peaks) >= 2:
            gaps.append(peaks[-1] - peaks[0])
    if gaps:
        log(f"minimum peak-to-peak splitting {min(gaps) / 1e6:.2f} MHz")
    return [path, lv_path]


def branch_points_column(m, i, prominence):
    from .fitting import extract_peaks
    return [fp for fp, _ in extract_peaks(m.column(i), prominence)]


def run_twotone(cfg, out, threads, seed, log):
    flux = cfg.grids.twotone_flux.values()
    f2 = cfg.grids.twotone_f.values()
    m = two_tone_map(cfg.transmon, cfg.f0, cfg.g, cfg.decoherence, cfg.drives, flux, f2,
                     pump_f=cfg["drive.pump_f_hz"], pump_omega=cfg["drive.pump_omega_hz"], threads=threads)
    values = _noise(m.values, cfg, seed)
    ground = m.values / np.exp(1j * m.meta["phase_shift"])
    phase = np.angle(values / ground)
    path = out / "twotone_map.csv"
    _map_csv(path, flux, f2, np.abs(values), phase)
    r_path = out / "twotone_ridge.csv"
    write_csv(r_path, "flux_ratio,f_hz,e01_hz,flagged",
              [flux, ridge(m), m.meta["e01"], m.flagged.astype(int)])
    log(f"{int(m.flagged.sum())} of {flux.size} flux columns flagged (|E01 - f0| <= 3 g)")
    return [path, r_path]


def resolve_zeta(cfg: ExperimentConfig) -> tuple[float, str]:
    mode = cfg["estimate.zeta_mode"]
    ec = cfg.transmon.ec
    if mode == "value":
        return cfg["estimate.zeta"], "configured value"
    if mode == "max":
        return zeta(ec, cfg.transmon.ej0), "transmon at maximal E_J"
    return zeta(ec, ej_at_e01(cfg.transmon, cfg.f0)), "transmon at the bias where E01 = f0"


def run_estimate(cfg, out, threads, seed, log):
    z, source = resolve_zeta(cfg)
    zp = cfg.zero_point
    est = estimate(ZeroPointInputs(zp.material, zp.cavity_area, z, zp.c_idt, zp.c_gate, zp.c_sigma))
    provenance = {
        "U0": "sqrt(hbar / (2 rho A_c v))",
        "V0": "(e_pz / eps) U0",
        "zeta": source,
        "g/2pi": "zeta e V0 / h",
        "mu_ac": "C_IDT V0 / e (C_IDT back-solved default)",
        "mu_el": "2 C_g / C_Sigma",
        "mu_ac/mu_el": "ratio",
    }
    rows = [(name, value, unit, provenance[name]) for name, value, unit in est.rows()]
    log(f"{'quantity':<12} {'value':>12}  {'unit':<4} provenance")
    for name, value, unit, prov in rows:
        log(f"{name:<12} {value:>12.4g}  {unit:<4} {prov}")
    path = out / "estimate.csv"
    _write_table(path, "quantity,value,unit,provenance", rows)
    return [path]


def _trace_from(header, data) -> TransmissionTrace:
    if header[:3] == ["f_hz", "re", "im"]:
        return TransmissionTrace(data[:, 0], data[:, 1] + 1j * data[:, 2])
    if header[:2] == ["f_hz", "mag"]:
        phase = data[:, 2] if len(header) > 2 else 0.0
        return TransmissionTrace(data[:, 0], data[:, 1] * np.exp(1j * phase))
    raise ConfigError("fit: trace input needs header f_hz,re,im or f_hz,mag,phase_rad")


def _map_from(header, data):
    from .response import SpectroscopyMap
    if header[:4] != ["flux_ratio", "f_hz", "mag", "phase_rad"]:
        raise ConfigError("fit: map input needs header flux_ratio,f_hz,mag,phase_rad")
    x = np.unique(data[:, 0])
    y = np.unique(data[:, 1])
    if x.size * y.size != data.shape[0]:
        raise ConfigError("fit: map input is not a complete grid")
    order = np.lexsort((data[:, 1], data[:, 0]))
    d = data[order]
    vals = (d[:, 2] * np.exp(1j * d[:, 3])).reshape(x.size, y.size)
    return SpectroscopyMap(x, y, vals)


def _line_from(m, flux) -> TransmissionTrace:
    """|phase shift| along the flux column of a two-tone map nearest to ``flux``."""
    if flux is None:
        if m.x_axis.size != 1:
            raise ConfigError("fit: two-tone map has several flux columns; set fit.flux")
        col = 0
    else:
        col = int(np.argmin(np.abs(m.x_axis - flux)))
    return TransmissionTrace(m.y_axis, np.abs(np.angle(m.values[col])).astype(complex))


def run_fit(cfg, out, threads, seed, log):
    src = cfg["fit.input"]
    if not src:
        raise ConfigError("fit: set fit.input to a dataset CSV")
    header, data = read_csv(src)
    model = cfg["fit.model"]
    if model == "qubit_line" and header[0] == "flux_ratio":
        trace = _line_from(_map_from(header, data), cfg["fit.flux"])
        res = fit_lorentzian(trace, squared=False)
        x = trace.f
    elif model in ("lorentzian", "qubit_line"):
        trace = _trace_from(header, data)
        res = fit_lorentzian(trace, squared=(model == "lorentzian"))
        x = trace.f
    elif model == "anticrossing":
        pts = branch_points(_map_from(header, data), cfg["fit.min_prominence"])
        res = fit_anticrossing(pts, transmon_e01_link(cfg.transmon))
        x = np.array([p[0] for p in pts])
    else:
        if header[0] != "flux_ratio" or len(header) < 2:
            raise ConfigError("fit: ridge input needs flux_ratio as first column")
        pts = data[:, :2]
        res = fit_flux_spectroscopy(pts, charge_offset=cfg.transmon.charge_offset,
                                    charge_cutoff=cfg.transmon.charge_cutoff)
        x = pts[:, 0]
    path = out / "fit_result.csv"
    rows = [(k, v, res.stderr_proxy[k]) for k, v in res.params.items()]
    if model == "qubit_line" and res.converged:
        g1 = qubit_linewidth_to_gamma1(res)
        rows.append(("gamma1", g1, res.stderr_proxy["fwhm"]))
    _write_table(path, "param,value,stderr_proxy", rows)
    r_path = out / "fit_residuals.csv"
    if res.residuals.size == x.size:
        write_csv(r_path, "x,residual", [x, res.residuals])
    else:
        write_csv(r_path, "x,residual", [np.zeros(0), np.zeros(0)])
    for k, v, e in rows:
        log(f"{k:<18} {v:.9g}  +/- {e:.3g}")
    log(f"residual_norm {res.residual_norm:.3g}  iterations {res.iterations}  converged {res.converged}")
    if not res.converged:
        raise NumericalFailure("fit did not converge")
    return [path, r_path]


RUNNERS = {
    "device": run_device,
    "transmon": run_transmon,
    "anticrossing": run_anticrossing,
    "twotone": run_twotone,
    "estimate": run_estimate,
    "fit": run_fit,
}


# ---------------------------------------------------------------- driver


def execute(name: str, cfg: ExperimentConfig, out: Path, threads: int = 1, seed: int = 0,
            log=print) -> dict:
    """Run one subcommand and write its manifest; returns the manifest dict."""
    out.mkdir(parents=True, exist_ok=True)
    inputs = {}
    if name == "fit" and cfg["fit.input"]:
        inputs[cfg["fit.input"]] = sha256(Path(cfg["fit.input"])) if Path(cfg["fit.input"]).exists() else None
    failure = None
    try:
        files = RUNNERS[name](cfg, out, threads, seed, log)
    except NumericalFailure as exc:
        failure = exc
        files = sorted(p for p in out.glob("*.csv"))
    manifest = {
        "tool": "phononcavity",
        "version": __version__,
        "subcommand": name,
        "seed": seed,
        "threads": threads,
        "config": flat_dict(cfg),
        "inputs": inputs,
        "outputs": {p.name: sha256(p) for p in sorted(files)},
    }
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if failure is not None:
        raise failure
    return manifest


def config_from_manifest(manifest: dict) -> ExperimentConfig:
    lines = [f"{k} = {v}" for k, v in manifest["config"].items()]
    return build_config(parse_lines(lines, "manifest"))


def replay(manifest_path, out: Path, threads: int | None = None, log=print) -> bool:
    """Re-run a manifest into ``out``; True when every output hash matches."""
    try:
        manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{manifest_path}: cannot read manifest: {exc}") from None
    if manifest.get("subcommand") not in RUNNERS:
        raise ConfigError(f"{manifest_path}: unknown subcommand in manifest")
    cfg = config_from_manifest(manifest)
    for path, digest in manifest.get("inputs", {}).items():
        if digest is not None and Path(path).exists() and sha256(Path(path)) != digest:
            log(f"warning: input {path} changed since the manifest was written")
    new = execute(manifest["subcommand"], cfg, out, threads or manifest.get("threads", 1),
                  manifest.get("seed", 0), log)
    same = new["outputs"] == manifest["outputs"]
    for fname, digest in manifest["outputs"].items():
        if new["outputs"].get(fname) != digest:
            log(f"mismatch: {fname}")
    return same


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads for map columns")
    p.add_argument("--seed", type=int, default=0, help="seed for optional noise injection")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phononcavity",
                                     description="SAW phonon cavity and transmon simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "device": "acoustic responses, cavity modes and qubit weights",
        "transmon": "E01 and E12 versus flux",
        "anticrossing": "transmission map across the qubit-cavity anticrossing",
        "twotone": "first-tone phase shift versus flux and second-tone frequency",
        "estimate": "zero-point coupling estimate table",
        "fit": "fit a model to a dataset CSV",
    }
    for name in SUBCOMMANDS:
        _common(sub.add_parser(name, help=helps[name]))
    rp = sub.add_parser("replay", help="re-run a manifest and verify byte-identical outputs")
    rp.add_argument("manifest", type=Path)
    rp.add_argument("--out", type=Path, default=Path("replay"))
    rp.add_argument("--threads", type=int, default=None)
    sub.add_parser("config", help="print the default configuration")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    def log(msg):
        print(msg)

    try:
        if args.command == "config":
            from .config import serialize
            sys.stdout.write(serialize(build_config()))
            return 0
        if args.command == "replay":
            ok = replay(args.manifest, args.out, args.threads, log)
            if not ok:
                print("error: replay outputs differ from the manifest", file=sys.stderr)
                return 3
            log("replay reproduced all outputs byte-identically")
            return 0
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, args.overrides)
        execute(args.command, cfg, args.out, args.threads, args.seed, log)
        return 0
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3

import json
import subprocess
import sys

import numpy as np
import pytest

from phononcavity.cli import main, read_csv, write_csv
from phononcavity.config import ConfigError, build_config, load_config, parse_lines, serialize
from phononcavity.device import reference_cavity, response_fwhm
from phononcavity.transmon import resonance_flux


def test_empty_file_gives_reference_device(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("")
    cfg = load_config(p)
    assert cfg.device == reference_cavity()
    assert cfg.transmon.ec == 0.21e9 and cfg.transmon.ej0 == 17.4e9
    assert cfg.decoherence.kappa == 0.332e6
    assert cfg["device.idt_port.period_m"] == 980e-9


def test_negative_ec_names_invariant(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("transmon.ec_hz = -1\n")
    with pytest.raises(ConfigError, match="ec > 0"):
        load_config(p)


def test_round_trip_identical(tmp_path):
    cfg = load_config(None, ["coupling.g_hz=12.5e6", "device.idt_qubit.polarity=1,-1,1"])
    p = tmp_path / "rt.cfg"
    p.write_text(serialize(cfg))
    again = load_config(p)
    assert again == cfg
    p.write_text(serialize(again, comments=False))
    assert load_config(p) == cfg


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match=":3: unknown key"):
        parse_lines(["# comment", "transmon.ec_hz = 0.2e9", "transmon.bogus = 1"], "x.cfg")
    with pytest.raises(ConfigError, match=":1: expected"):
        parse_lines(["no equals sign"], "x.cfg")
    with pytest.raises(ConfigError, match=":1: bad value"):
        parse_lines(["device.mirror.strips = 2.5"], "x.cfg")


def test_grid_points_invariant():
    with pytest.raises(ConfigError, match="points >= 2"):
        load_config(None, ["grid.transmon.points=1"])


def test_auto_flux_center_resolved():
    cfg = build_config()
    center = cfg["grid.anticrossing.flux_center"]
    assert center == pytest.approx(resonance_flux(cfg.transmon, 3.176e9))
    flux = cfg.grids.anticrossing_flux.values()
    assert flux[100] == pytest.approx(center)


def test_override_errors():
    with pytest.raises(ConfigError):
        load_config(None, ["justakey"])
    with pytest.raises(ConfigError):
        load_config(None, ["nope.key=1"])


def test_csv_format(tmp_path):
    p = tmp_path / "x.csv"
    write_csv(p, "f_hz,re,im", [[1.0, 2.5], [1 / 3, 0.0], [-1e-20, 3e9]])
    text = p.read_bytes().decode("utf-8")
    assert text == "f_hz,re,im\n1,0.333333333333,-1e-20\n2.5,0,3000000000\n"
    header, data = read_csv(p)
    assert header == ["f_hz", "re", "im"] and data.shape == (2, 3)


def run(args, capsys=None):
    return main([str(a) for a in args])


def test_unknown_subcommand_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_validation_exit_2(tmp_path, capsys):
    assert run(["transmon", "--set", "transmon.ec_hz=-1", "--out", tmp_path]) == 2
    assert "ec > 0" in capsys.readouterr().err


def test_numerical_failure_exit_3(tmp_path, capsys):
    trace = tmp_path / "flat.csv"
    write_csv(trace, "f_hz,mag,phase_rad", [np.linspace(1, 2, 11), np.ones(11), np.zeros(11)])
    assert run(["fit", "--set", f"fit.input={trace}", "--out", tmp_path / "fit"]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_transmon_csv(tmp_path):
    assert run(["transmon", "--out", tmp_path]) == 0
    header, data = read_csv(tmp_path / "transmon_flux_sweep.csv")
    assert header == ["flux_ratio", "e01_hz", "e12_hz"]
    assert data[0, 1] == pytest.approx(5.1875e9, rel=1e-3)


def test_device_csv_mirror_width(tmp_path):
    assert run(["device", "--out", tmp_path]) == 0
    header, data = read_csv(tmp_path / "mirror_reflection.csv")
    assert header == ["f_hz", "re", "im"]
    f, mag = data[:, 0], np.hypot(data[:, 1], data[:, 2])
    c = int(np.argmax(mag))
    lo = c - int(np.argmax(np.diff(mag[c::-1]) > 0))
    hi = c + int(np.argmax(np.diff(mag[c:]) > 0))
    width = f[hi] - f[lo]
    assert abs(width - 33e6) / 33e6 < 0.1
    assert read_csv(tmp_path / "port_idt_response.csv")[0] == ["f_hz", "re", "im"]
    _, port = read_csv(tmp_path / "port_idt_response.csv")
    assert abs(response_fwhm(port[:, 0], np.hypot(port[:, 1], port[:, 2])) - 95e6) / 95e6 < 0.15


def test_estimate_prints_table(tmp_path, capsys):
    assert run(["estimate", "--out", tmp_path]) == 0
    out = capsys.readouterr().out
    for name in ("U0", "V0", "zeta", "g/2pi", "mu_ac", "mu_el", "mu_ac/mu_el"):
        assert name in out
    assert (tmp_path / "manifest.json").exists()


def test_anticrossing_and_fit_round_trip(tmp_path):
    out = tmp_path / "ac"
    assert run(["anticrossing", "--set", "grid.anticrossing.flux_points=41", "--out", out]) == 0
    header, _ = read_csv(out / "anticrossing_map.csv")
    assert header == ["flux_ratio", "f_hz", "mag", "phase_rad"]
    assert read_csv(out / "dressed_levels.csv")[0] == ["fq_hz", "level_index", "energy_hz"]
    fit_out = tmp_path / "fit"
    assert run(["fit", "--set", "fit.model=anticrossing", "--set", f"fit.input={out / 'anticrossing_map.csv'}",
                "--out", fit_out]) == 0
    rows = (fit_out / "fit_result.csv").read_text().splitlines()
    assert rows[0] == "param,value,stderr_proxy"
    g = float(rows[1].split(",")[1])
    assert abs(g - 13e6) / 13e6 < 0.02


def test_twotone_and_flux_fit(tmp_path):
    out = tmp_path / "tt"
    assert run(["twotone", "--set", "grid.twotone.flux_points=31", "--set", "grid.twotone.f_points=400",
                "--out", out]) == 0
    assert read_csv(out / "twotone_map.csv")[0] == ["flux_ratio", "f_hz", "mag", "phase_rad"]
    tr = tmp_path / "tr"
    assert run(["transmon", "--set", "grid.transmon.flux_start=-0.4", "--set", "grid.transmon.flux_stop=0.4",
                "--set", "grid.transmon.points=41", "--out", tr]) == 0
    assert run(["fit", "--set", "fit.model=flux", "--set", f"fit.input={tr / 'transmon_flux_sweep.csv'}",
                "--out", tmp_path / "ff"]) == 0
    rows = dict(line.split(",")[:2] for line in (tmp_path / "ff" / "fit_result.csv").read_text().splitlines()[1:])
    assert abs(float(rows["ec"]) - 0.21e9) / 0.21e9 < 5e-3


def test_seeded_noise_is_deterministic(tmp_path):
    args = ["anticrossing", "--set", "noise.relative_sigma=0.01", "--set", "grid.anticrossing.flux_points=11"]
    assert run(args + ["--seed", "7", "--out", tmp_path / "a"]) == 0
    assert run(args + ["--seed", "7", "--out", tmp_path / "b"]) == 0
    assert run(args + ["--seed", "8", "--out", tmp_path / "c"]) == 0
    a = (tmp_path / "a" / "anticrossing_map.csv").read_bytes()
    assert a == (tmp_path / "b" / "anticrossing_map.csv").read_bytes()
    assert a != (tmp_path / "c" / "anticrossing_map.csv").read_bytes()


def test_manifest_and_replay(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("coupling.g_hz = 12e6\n")
    out = tmp_path / "run"
    assert run(["anticrossing", "--config", cfg, "--set", "grid.anticrossing.flux_points=21", "--threads", "2",
                "--out", out]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["coupling.g_hz"] == "12000000.0"
    assert manifest["config"]["grid.anticrossing.flux_center"] != "auto"
    assert set(manifest["outputs"]) == {"anticrossing_map.csv", "dressed_levels.csv"}
    assert run(["replay", out / "manifest.json", "--out", tmp_path / "again"]) == 0
    for name in manifest["outputs"]:
        assert (out / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_replay_detects_tampering(tmp_path, capsys):
    out = tmp_path / "run"
    assert run(["transmon", "--out", out]) == 0
    m = json.loads((out / "manifest.json").read_text())
    m["outputs"]["transmon_flux_sweep.csv"] = "0" * 64
    (out / "manifest.json").write_text(json.dumps(m))
    assert run(["replay", out / "manifest.json", "--out", tmp_path / "again"]) == 3


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "phononcavity", "estimate", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "g/2pi" in res.stdout


def test_qubit_line_fit_from_twotone_map(tmp_path, capsys):
    out = tmp_path / "tt"
    assert run(["twotone", "--set", "grid.twotone.flux_start=0.1", "--set", "grid.twotone.flux_stop=0.3",
                "--set", "grid.twotone.flux_points=3", "--set", "grid.twotone.f_start_hz=4.45e9",
                "--set", "grid.twotone.f_stop_hz=4.85e9", "--set", "grid.twotone.f_points=2001",
                "--out", out]) == 0
    src = f"fit.input={out / 'twotone_map.csv'}"
    assert run(["fit", "--set", "fit.model=qubit_line", "--set", src, "--out", tmp_path / "a"]) == 2
    assert "set fit.flux" in capsys.readouterr().err
    assert run(["fit", "--set", "fit.model=qubit_line", "--set", "fit.flux=0.2", "--set", src,
                "--out", tmp_path / "b"]) == 0
    rows = dict(line.split(",")[:2] for line in (tmp_path / "b" / "fit_result.csv").read_text().splitlines()[1:])
    assert abs(float(rows["gamma1"]) - 10e6) / 10e6 < 0.05

import json

import numpy as np
import pytest
import yaml

from maglev_ff.cli import main
from maglev_ff.config import ExperimentConfig, config_from_dict, load_config, parse_quantity
from maglev_ff.errors import ConfigError
from maglev_ff.experiments import read_metrics_csv
from maglev_ff.sim import SimulationRecord, error_metrics


@pytest.mark.parametrize(
    "text, value",
    [("5 urad", 5e-6), ("5µrad", 5e-6), ("10 mm", 1e-2), ("1 mrad", 1e-3), ("65 us", 65e-6), ("0.5", 0.5), (3, 3.0)],
)
def test_parse_quantity(text, value):
    assert parse_quantity(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("bad", ["5 furlongs", "mm", True, [1]])
def test_parse_quantity_rejects(bad):
    with pytest.raises(ConfigError):
        parse_quantity(bad)


def test_defaults_roundtrip(tmp_path):
    cfg = ExperimentConfig()
    path = tmp_path / "c.yaml"
    path.write_text(cfg.to_yaml())
    assert load_config(path) == cfg
    assert load_config(path).digest() == cfg.digest()


def test_partial_config_materializes_defaults(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("plant:\n  m: 12\nmismatch: {chi: 5 urad}\nmethods: [mass, nonlinear]\n")
    cfg = load_config(path)
    assert cfg.plant.m == 12 and cfg.plant.I_zeta == 0.2
    assert cfg.mismatch == pytest.approx((0, 0, 0, 5e-6, 0, 0), rel=1e-15)
    dumped = yaml.safe_load(cfg.to_yaml())
    assert dumped["sim"]["Ts"] == 65e-6 and dumped["methods"] == ["mass", "nonlinear"]
    assert config_from_dict(dumped) == cfg


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": 1},
        {"plant": {"mass": 3}},
        {"plant": {"m": -1}},
        {"methods": ["nope"]},
        {"scenarios": ["ol-sideways"]},
        {"sim": {"substeps": 2.5}},
        {"sim": {"horizon": 0.3}},
        {"trajectory": {"kind": "wiggle"}},
        {"disturbance": {"channel": "w"}},
        {"mismatch": {"theta": 1}},
        {"scheduling": "nope"},
    ],
)
def test_invalid_configs_rejected(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_methods_all_expands_to_comparison_set():
    assert len(config_from_dict({"methods": "all"}).methods) == 5


SHORT = """
trajectory: {strokes: [1 mm, 1 mm, 0.1 mm, 0.1 mrad, 0.1 mrad, 0.1 mrad], start_time: 0.01, duration: 0.05}
sim: {horizon: 0.08}
disturbance: {amplitude: 1.0e-3, onset: 0.03, duration: 0.01, ramp: 0.001}
"""


@pytest.fixture
def short_cfg(tmp_path):
    p = tmp_path / "short.yaml"
    p.write_text(SHORT)
    return p


def test_cli_simulate_writes_grid(short_cfg, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["simulate", "--config", str(short_cfg), "--method", "mass,nonlinear",
                 "--scenario", "ol-match,cl-mismatch-dist", "--mismatch", "chi=5urad", "--out", str(out)])
    assert code == 0
    names = sorted(p.name for p in out.iterdir())
    runs = [n for n in names if n.startswith("run_")]
    assert len(runs) == 4 and "metrics.csv" in names and "manifest.json" in names
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["config_sha256"]) == 64 and "numpy" in manifest["versions"]
    rows = read_metrics_csv(out / "metrics.csv")
    assert len(rows) == 4 * 6
    # metrics are recomputable from the per-run CSVs
    for r in rows:
        rec = SimulationRecord.from_csv(out / f"run_{r.scenario}_{r.method}.csv")
        i = ["x", "y", "z", "chi", "psi", "zeta"].index(r.coord)
        assert error_metrics(rec).l2[i] == r.l2
    mis = [r for r in rows if r.scenario == "cl-mismatch-dist" and r.coord == "chi"]
    assert all(r.linf == pytest.approx(5e-6) for r in mis)


def test_cli_compare_tables_and_traces(short_cfg, tmp_path, capsys):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(short_cfg), "--method", "mass,nonlinear", "--scenario", "ol-match",
                 "--out", str(out)]) == 0
    table = (out / "tables.txt").read_text()
    assert "[ol-match]" in table
    nonlinear_line = next(line for line in table.splitlines() if "nonlinear" in line)
    assert nonlinear_line.split()[2:] == ["0"] * 6
    traces = np.genfromtxt(out / "traces_ol-match.csv", delimiter=",", names=True)
    assert "mass_e_chi" in traces.dtype.names and len(traces) == 1232
    assert json.loads((out / "metrics.json").read_text())["ol-match"]["nonlinear"]["method_index"] == 3


def test_cli_env_config_and_errors(short_cfg, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MAGLEV_FF_CONFIG", str(tmp_path / "missing.yaml"))
    assert main(["simulate", "--out", str(tmp_path / "x")]) == 2
    monkeypatch.setenv("MAGLEV_FF_CONFIG", str(short_cfg))
    assert main(["simulate", "--method", "nope"]) == 2
    assert main(["simulate", "--mismatch", "theta=1"]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_stability_kp_zero_rejected(short_cfg, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(SHORT + "stability: {kp: 0}\n")
    assert main(["stability", "--config", str(bad), "--out", str(tmp_path / "s")]) == 2


def test_cli_stability_without_dissipation_reports_no_epsilon(short_cfg, tmp_path, capsys):
    bad = tmp_path / "nodamp.yaml"
    bad.write_text(SHORT + "stability: {kv: 0}\n")
    assert main(["stability", "--config", str(bad), "--out", str(tmp_path / "s")]) == 4
    assert "no feasible epsilon" in capsys.readouterr().err


def test_cli_stability_verdict(short_cfg, tmp_path, capsys):
    out = tmp_path / "st"
    assert main(["stability", "--config", str(short_cfg), "--out", str(out)]) == 0
    verdict = capsys.readouterr().out.strip()
    assert verdict.startswith("stable: ε* = ") and verdict.endswith("V̇ ≤ 0 at all samples")
    data = np.genfromtxt(out / "stability.csv", delimiter=",", names=True)
    assert np.all(data["Vdot"] <= 0) and np.all(data["V"] >= 0)

import copy
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from turnpike_lab.cli import main
from turnpike_lab.config import PAPER_CONFIG, ExperimentConfig, evaluate_field
from turnpike_lab.exceptions import ConfigError
from turnpike_lab.experiments import JOBS_ENV, resolve_jobs

ROOT = Path(__file__).resolve().parents[1]

SMALL = {
    "grid": {"n_cells": 40},
    "time": {"T": 4.0, "n_steps": 40},
    "coefficients": {"a": {"kind": "periodic_sin2", "params": {"offset": 0.5, "amplitude": 1.0}, "epsilon": 0.5}},
    "epsilon_list": [0.5, 0.1],
    "window": {"x_lo": 0.0, "x_hi": 1.0},
    "y0": {"kind": "polynomial", "params": {"coeffs": [0.0, -1.0, 1.0]}},
    "y_d": {"kind": "constant", "params": {"value": 1.0}},
    "turnpike": {"C": 10.0, "mu": 4.0},
    "riccati_study": {"n_cells": 30, "cross_check_n_cells": 30, "T": 1.0, "n_steps": 50, "epsilons": [0.5, 0.1]},
    "hum": {"n_cells": 30, "T": 0.5, "n_steps": 20, "epsilons": [0.5, 0.1], "delta_ladder": [1e-2, 1e-4]},
}


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return p


def _run(args):
    return main(args + ["--quiet"])


def test_checked_in_paper_config_matches_defaults():
    on_disk = json.loads((ROOT / "configs" / "paper.json").read_text())
    assert on_disk == PAPER_CONFIG
    exp = ExperimentConfig.paper()
    assert (exp.raw["time"]["T"], exp.raw["time"]["n_steps"], exp.raw["grid"]["n_cells"]) == (50.0, 168, 421)
    assert exp.epsilons == [1.0, 0.5, 0.1, 0.05, 0.01, 0.005]
    assert (exp.C, exp.mu) == (10.0, 4.0)
    x = np.linspace(0, 1, 5)
    np.testing.assert_allclose(evaluate_field(exp.raw["y0"], x), x * (x - 1))
    np.testing.assert_allclose(evaluate_field(exp.raw["y_d"], x), 1.0)
    assert exp.a_recipe(np.array([0.5]))[0] == pytest.approx(1.5)


@pytest.mark.parametrize("drop, field", [("grid", "grid"), ("turnpike", "turnpike"), ("y0", "y0")])
def test_missing_field_names_it(drop, field):
    raw = copy.deepcopy(SMALL)
    del raw[drop]
    with pytest.raises(ConfigError, match=f"'{field}'"):
        ExperimentConfig.from_dict(raw)


def test_nested_missing_field():
    raw = copy.deepcopy(SMALL)
    del raw["time"]["n_steps"]
    with pytest.raises(ConfigError, match="'time.n_steps'"):
        ExperimentConfig.from_dict(raw)


@pytest.mark.parametrize("path, value", [
    (("grid", "n_cells"), 2), (("time", "T"), -1.0), (("window", "x_hi"), 1.5),
    (("coefficients", "a", "kind"), "nope"), (("turnpike", "mu"), 0),
])
def test_invalid_values(path, value):
    raw = copy.deepcopy(SMALL)
    d = raw
    for k in path[:-1]:
        d = d[k]
    d[path[-1]] = value
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_field_recipes():
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(evaluate_field({"kind": "sine", "params": {"mode": 2}}, x), np.sin(2 * np.pi * x))
    np.testing.assert_allclose(
        evaluate_field({"kind": "tabulated", "params": {"x": [0, 1], "values": [0, 2]}}, x), 2 * x)
    with pytest.raises(ConfigError):
        evaluate_field({"kind": "wavelet"}, x)
    with pytest.raises(ConfigError):
        evaluate_field({"kind": "constant", "params": {}}, x)


def test_sha_is_key_order_independent():
    a = ExperimentConfig.from_dict(SMALL)
    b = ExperimentConfig.from_dict(json.loads(json.dumps(SMALL, sort_keys=True)))
    assert a.sha256 == b.sha256


def test_jobs_resolution(monkeypatch):
    monkeypatch.delenv(JOBS_ENV, raising=False)
    assert resolve_jobs(None) == 1
    monkeypatch.setenv(JOBS_ENV, "3")
    assert resolve_jobs(None) == 3
    assert resolve_jobs(2) == 2
    monkeypatch.setenv(JOBS_ENV, "x")
    with pytest.raises(ConfigError):
        resolve_jobs(None)
    with pytest.raises(ConfigError):
        resolve_jobs(0)


@pytest.mark.parametrize("sub, files", [
    ("solve", ["state.csv", "control.csv", "adjoint.csv", "solve.json", "norms.svg"]),
    ("steady", ["steady.csv", "steady.json"]),
    ("turnpike", ["deviation.csv", "report.json", "deviation.svg"]),
    ("riccati", ["cross_check.json", "gap_fits.json", "gap_eps0.5.csv", "riccati_gap.svg"]),
    ("sweep", ["deviation.csv", "norms.csv", "gaps.csv", "sweep_report.json", "deviation.svg"]),
    ("tube", ["tube.csv", "tube.json", "tube.svg"]),
    ("hum", ["hum.csv", "hum_delta.csv", "hum.json"]),
])
def test_subcommands_write_artifacts_and_manifest(sub, files, small_config, tmp_path):
    out = tmp_path / sub
    assert _run([sub, "--config", str(small_config), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    for key in ("config_sha256", "started_at", "wall_seconds", "artifact_files", "versions", "timings"):
        assert key in man
    for f in files:
        assert (out / f).exists(), f
        assert f in man["artifact_files"]
    assert man["config_sha256"] == ExperimentConfig.from_dict(SMALL).sha256


def test_csv_schemas(small_config, tmp_path):
    _run(["sweep", "--config", str(small_config), "--out", str(tmp_path / "s")])
    _run(["hum", "--config", str(small_config), "--out", str(tmp_path / "h")])
    _run(["riccati", "--config", str(small_config), "--out", str(tmp_path / "r")])
    _run(["solve", "--config", str(small_config), "--out", str(tmp_path / "v")])
    head = lambda p: p.read_text().splitlines()[0]
    assert head(tmp_path / "s" / "deviation.csv") == "epsilon,t,d,bound"
    assert head(tmp_path / "h" / "hum.csv") == "epsilon,delta,control_norm,terminal_norm,cost_estimate"
    assert head(tmp_path / "r" / "gap_eps0.1.csv") == "t,gap"
    assert head(tmp_path / "v" / "state.csv") == "t,x,value"
    fits = json.loads((tmp_path / "r" / "gap_fits.json").read_text())["fits"]
    assert {"slope", "intercept", "r2"} <= set(fits["0.1"])
    rows = (tmp_path / "s" / "deviation.csv").read_text().splitlines()
    assert {r.split(",")[0] for r in rows[1:]} == {"0.5", "0.1", "homogenized"}


def test_determinism_and_manifest_round_trip(small_config, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    _run(["sweep", "--config", str(small_config), "--out", str(a)])
    _run(["sweep", "--config", str(small_config), "--out", str(b), "--jobs", "2"])
    _run(["sweep", "--config", str(a / "manifest.json"), "--out", str(c)])
    for name in ("deviation.csv", "norms.csv", "gaps.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
        assert (a / name).read_bytes() == (c / name).read_bytes()
    ma, mc = (json.loads((d / "manifest.json").read_text()) for d in (a, c))
    assert ma["config_sha256"] == mc["config_sha256"]
    assert ma["artifact_files"] == mc["artifact_files"]


def test_manifest_replays_recorded_epsilon(small_config, tmp_path):
    _run(["solve", "--config", str(small_config), "--out", str(tmp_path / "a"), "--epsilon", "0.1"])
    _run(["solve", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "state.csv").read_bytes() == (tmp_path / "b" / "state.csv").read_bytes()


def test_validation_error_json(tmp_path, capsys):
    raw = copy.deepcopy(SMALL)
    del raw["window"]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(raw))
    code = _run(["steady", "--config", str(p), "--out", str(tmp_path / "o")])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["kind"] == "validation" and "'window'" in err["message"]


def test_solver_error_json(tmp_path, capsys):
    raw = copy.deepcopy(SMALL)
    raw["solver"] = {"cg_max_iter": 1, "cg_tol": 1e-14}
    p = tmp_path / "cap.json"
    p.write_text(json.dumps(raw))
    out = tmp_path / "o"
    assert _run(["solve", "--config", str(p), "--out", str(out)]) == 3
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "ConvergenceError" and err["iterations"] == 1


def test_missing_file_and_bad_json(tmp_path):
    assert _run(["steady", "--config", str(tmp_path / "nope.json")]) == 2
    p = tmp_path / "x.json"
    p.write_text("{not json")
    assert _run(["steady", "--config", str(p)]) == 2


def test_module_entry_point_oracle(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "turnpike_lab", "oracle", "--out", str(tmp_path)],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert "FAIL" not in proc.stdout and proc.stdout.count("PASS") >= 10
    assert (tmp_path / "manifest.json").exists()

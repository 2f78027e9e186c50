"""Command line entry point: ``turnpike-lab <subcommand> --config FILE``."""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import platform
import sys
import time
import warnings
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig
from .exceptions import ConfigError, TurnpikeLabError
from .experiments import (
    cross_check,
    epsilon_sweep,
    hum_study,
    rate_spread,
    resolve_jobs,
    riccati_gap_study,
    tube_study,
    turnpike_job,
)
from .ocp import solve_evolutive_ocp, solve_steady_ocp
from .pde_solvers import write_trajectory_csv
from .plotting import line_plot

log = logging.getLogger("turnpike_lab")

SUBCOMMANDS = ("solve", "steady", "riccati", "turnpike", "sweep", "tube", "hum", "oracle")


def _num(v) -> str:
    return repr(float(v))


def write_csv(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


class Run:
    """Collects artifacts and timings for the manifest."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[Path] = []
        self.timings: dict[str, float] = {}

    def add(self, path: Path) -> Path:
        self.files.append(path)
        return path

    @contextmanager
    def timed(self, label: str):
        t0 = time.perf_counter()
        yield
        self.timings[label] = round(time.perf_counter() - t0, 4)


# ------------------------------------------------------------------ subcommands


def _epsilon(exp: ExperimentConfig, opts):
    return exp.a_recipe.epsilon if opts.epsilon is None else opts.epsilon


def cmd_solve(exp, run: Run, opts):
    eps = _epsilon(exp, opts)
    cfg = exp.ocp_config(eps)
    with run.timed("solve"):
        sol = solve_evolutive_ocp(cfg)
    for name, tr in (("state", sol.y), ("control", sol.f), ("adjoint", sol.psi)):
        run.add(write_trajectory_csv(run.out / f"{name}.csv", {"value": tr}))
    t = cfg.timegrid.times
    run.add(line_plot(run.out / "norms.svg", {"|y(t)|": (t, sol.y.norms()), "|f(t)|": (t, sol.f.norms())},
                      title=f"optimal pair, eps={eps}", xlabel="t", ylabel="L2 norm"))
    run.add(write_json(run.out / "solve.json", {"epsilon": eps, **sol.summary(),
                                                "internal_cost": sol.internal_cost}))
    return {"cost": sol.cost, "iterations": sol.iterations}


def cmd_steady(exp, run: Run, opts):
    eps = _epsilon(exp, opts)
    cfg = exp.ocp_config(eps)
    with run.timed("steady"):
        st = solve_steady_ocp(cfg)
    x = cfg.grid.interior
    run.add(write_csv(run.out / "steady.csv", ["x", "y_bar", "f_bar", "psi_bar"],
                      zip(x, st.y_bar, st.f_bar, st.psi_bar)))
    run.add(write_json(run.out / "steady.json", {"epsilon": eps, **st.summary()}))
    return st.summary()


def cmd_riccati(exp, run: Run, opts):
    with run.timed("cross_check"):
        cc = cross_check(exp, opts.epsilon)
    run.add(write_json(run.out / "cross_check.json", cc))
    with run.timed("gap_study"):
        res = riccati_gap_study(exp, opts.jobs)
    fits = {}
    series = {}
    for r in res:
        tag = repr(r["epsilon"])
        run.add(write_csv(run.out / f"gap_eps{tag}.csv", ["t", "gap"], zip(r["times"], r["gap"])))
        fits[tag] = {**r["fit"], "P_hat_norm": r["P_hat_norm"]}
        series[f"eps={tag}"] = (r["times"], r["gap"])
    summary = {"fits": fits, "rate_spread": rate_spread(res)}
    run.add(write_json(run.out / "gap_fits.json", summary))
    run.add(line_plot(run.out / "riccati_gap.svg", series, title="|E(t) - E_hat|", xlabel="t", logy=True,
                      floor=1e-17))
    return {"cross_check": cc, **summary}


def _deviation_csv(run: Run, rows):
    return run.add(write_csv(run.out / "deviation.csv", ["epsilon", "t", "d", "bound"], rows))


def cmd_turnpike(exp, run: Run, opts):
    eps = _epsilon(exp, opts)
    with run.timed("turnpike"):
        tp = turnpike_job(exp.raw, eps)
    rep = tp.report
    tag = repr(float(eps)) if eps is not None else "homogenized"
    _deviation_csv(run, ((tag, t, d, b) for t, d, b in zip(rep.times, rep.d, rep.bound)))
    summary = rep.summary()
    run.add(write_json(run.out / "report.json", summary))
    run.add(line_plot(run.out / "deviation.svg", {f"d, eps={tag}": (rep.times, rep.d),
                                                  "bound": (rep.times, rep.bound, "dashed")},
                      title="turnpike deviation", xlabel="t", logy=True))
    return summary


def cmd_sweep(exp, run: Run, opts):
    with run.timed("sweep"):
        res = epsilon_sweep(exp, opts.jobs, partial_dir=run.out / "partial")
    run.files.extend(sorted((run.out / "partial").glob("*.json")))
    _deviation_csv(run, res.deviation_rows())
    norm_rows = []
    norm_fig, dev_fig = {}, {}
    for eps, r in list(zip(res.epsilons, res.runs)) + [(None, res.homogenized)]:
        tag = "homogenized" if eps is None else repr(float(eps))
        t = r.cfg.timegrid.times
        ny, nf = r.best.y.norms(), r.best.f.norms()
        norm_rows += [(tag, a, b, c) for a, b, c in zip(t, ny, nf)]
        norm_fig[f"eps={tag}"] = (t, ny)
        dev_fig[f"eps={tag}"] = (t, r.report.d)
    rep = res.homogenized.report
    dev_fig["bound"] = (rep.times, rep.bound, "dashed")
    run.add(write_csv(run.out / "norms.csv", ["epsilon", "t", "state_norm", "control_norm"], norm_rows))
    run.add(write_csv(run.out / "gaps.csv", ["epsilon", "control_gap", "state_gap", "steady_gap"],
                      [(repr(float(e)), a, b, c) for e, a, b, c in
                       zip(res.epsilons, res.report.control_gap, res.report.state_gap, res.report.steady_gap)]))
    summary = res.report.summary()
    summary["envelope_ok_all"] = bool(all(r.envelope_ok for r in res.report.reports) and rep.envelope_ok)
    run.add(write_json(run.out / "sweep_report.json", summary))
    run.add(line_plot(run.out / "state_norms.svg", norm_fig, title="|y(t)|", xlabel="t"))
    run.add(line_plot(run.out / "deviation.svg", dev_fig, title="turnpike deviation", xlabel="t", logy=True))
    return {"envelope_ok_all": summary["envelope_ok_all"], "gaps_monotone": summary["gaps_monotone"]}


def cmd_tube(exp, run: Run, opts):
    with run.timed("sweep"):
        res = epsilon_sweep(exp, opts.jobs)
    rep = tube_study(res, exp)
    rows, series = [], {}
    for tag, nrm in rep["norms"].items():
        rows += [(tag, t, v, b) for t, v, b in zip(rep["times"], nrm, rep["bound"])]
        series[f"eps={tag}"] = (rep["times"], nrm)
    series["tube"] = (rep["times"], rep["bound"], "dashed")
    run.add(write_csv(run.out / "tube.csv", ["epsilon", "t", "norm", "bound"], rows))
    summary = {"inside": rep["inside"], "steady_norms": rep["steady_norms"]}
    run.add(write_json(run.out / "tube.json", summary))
    run.add(line_plot(run.out / "tube.svg", series, title="state norms and tube", xlabel="t"))
    return summary


def cmd_hum(exp, run: Run, opts):
    with run.timed("hum"), warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = hum_study(exp)
    for w in caught:
        log.warning("%s", w.message)
    cols = ["epsilon", "delta", "control_norm", "terminal_norm", "cost_estimate"]
    run.add(write_csv(run.out / "hum.csv", cols, ([r[c] for c in cols] for r in res["rows"])))
    run.add(write_csv(run.out / "hum_delta.csv", cols, ([r[c] for c in cols] for r in res["ladder"])))
    summary = {"ratio": res["ratio"], "ratio_warning": res["ratio"] > 2.0}
    run.add(write_json(run.out / "hum.json", summary))
    return summary


def cmd_oracle(exp, run: Run, opts):
    from .oracles import run_all

    with run.timed("oracles"):
        results = run_all(seed=int(exp.raw.get("seed", 0)))
    rows = [r.row() for r in results]
    run.add(write_csv(run.out / "oracles.csv", ["name", "error", "tol", "passed"],
                      ([r["name"], r["error"], r["tol"], r["passed"]] for r in rows)))
    if not opts.quiet:
        width = max(len(r["name"]) for r in rows)
        for r in rows:
            flag = "PASS" if r["passed"] else "FAIL"
            print(f"{flag}  {r['name']:<{width}}  err={r['error']:.3e}  tol={r['tol']:.1e}")
    failed = [r["name"] for r in rows if not r["passed"]]
    return {"passed": not failed, "failed": failed}


COMMANDS = {
    "solve": cmd_solve, "steady": cmd_steady, "riccati": cmd_riccati, "turnpike": cmd_turnpike,
    "sweep": cmd_sweep, "tube": cmd_tube, "hum": cmd_hum, "oracle": cmd_oracle,
}


# ----------------------------------------------------------------------- driver


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="turnpike-lab", description=__doc__)
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="experiment JSON (or a run manifest); defaults to the bundled configs/paper.json")
    p.add_argument("--out", help="output directory (default: output_dir from the config)")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (env TURNPIKE_LAB_JOBS)")
    p.add_argument("--epsilon", type=float, default=None, help="override the epsilon of coefficient a")
    p.add_argument("--quiet", action="store_true")
    return p


def versions() -> dict:
    return {"turnpike_lab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _load(opts) -> ExperimentConfig:
    if opts.config is None:
        return ExperimentConfig.paper()
    path = Path(opts.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if isinstance(data, dict) and "config_sha256" in data and "config" in data:
        # rerun a manifest with the options it recorded
        recorded = data.get("options", {})
        if opts.epsilon is None:
            opts.epsilon = recorded.get("epsilon")
        return ExperimentConfig.from_dict(data["config"])
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(data)


def _error_payload(exc: BaseException, subcommand: str) -> dict:
    kind = "validation" if isinstance(exc, ConfigError) else "solver"
    payload = {"error": type(exc).__name__, "kind": kind, "message": str(exc), "subcommand": subcommand}
    for attr in ("residual", "iterations"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    return payload


def main(argv=None) -> int:
    opts = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if opts.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    started = _dt.datetime.now(_dt.timezone.utc)
    t0 = time.perf_counter()
    out = None
    try:
        opts.jobs = resolve_jobs(opts.jobs)
        exp = _load(opts)
        out = Path(opts.out or exp.raw["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        run = Run(out)
        result = COMMANDS[opts.subcommand](exp, run, opts)
    except (TurnpikeLabError, ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        payload = _error_payload(exc, opts.subcommand)
        text = json.dumps(payload, sort_keys=True, default=_jsonable)
        print(text, file=sys.stderr)
        if out is not None:
            (out / "error.json").write_text(text + "\n")
        return 2 if payload["kind"] == "validation" else 3
    manifest = {
        "subcommand": opts.subcommand,
        "config_sha256": exp.sha256,
        "started_at": started.isoformat(timespec="seconds"),
        "wall_seconds": round(time.perf_counter() - t0, 3),
        "artifact_files": sorted(str(p.relative_to(out)) for p in run.files),
        "versions": versions(),
        "timings": run.timings,
        "options": {"epsilon": opts.epsilon, "jobs": opts.jobs},
        "result": result,
        "config": exp.raw,
    }
    write_json(out / "manifest.json", manifest)
    if not opts.quiet:
        print(json.dumps({"subcommand": opts.subcommand, "out": str(out), "result": result},
                         sort_keys=True, default=_jsonable))
    if opts.subcommand == "oracle" and not result["passed"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

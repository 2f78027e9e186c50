"""Multi-epsilon studies: turnpike sweep, Riccati gap decay, controllability cost.

Each epsilon is an independent job. Jobs receive the plain config dict and
return plain results, so they can run on a process pool; merging happens in
the caller's process in input order, which keeps outputs deterministic.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import (
    SweepReport,
    TurnpikeRun,
    build_sweep_report,
    control_gap,
    fit_decay_rate,
    run_turnpike,
    tubular_report,
)
from .config import ExperimentConfig, evaluate_field
from .exceptions import ConfigError
from .grid_coeff import build_grid, homogenized_constant
from .hum import controllability_cost_sweep, penalized_null_control
from .grid_coeff import make_window, sample_coefficients
from .ocp import solve_evolutive_ocp, solve_steady_ocp
from .operators import assemble, l2_norm
from .pde_solvers import TimeGrid
from .riccati import riccati_gap, solve_are, solve_dre, solve_h_equation, synthesize_feedback

log = logging.getLogger(__name__)

JOBS_ENV = "TURNPIKE_LAB_JOBS"


def resolve_jobs(jobs: int | None) -> int:
    """``--jobs`` value, else ``$TURNPIKE_LAB_JOBS``, else 1."""
    if jobs is None:
        env = os.environ.get(JOBS_ENV)
        if env:
            try:
                jobs = int(env)
            except ValueError:
                raise ConfigError(f"{JOBS_ENV} must be an integer, got {env!r}") from None
        else:
            jobs = 1
    if jobs < 1:
        raise ConfigError("jobs must be at least 1")
    return jobs


def _map(fn, args: list, jobs: int) -> list:
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as pool:
        futures = [pool.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


def _eps_label(eps) -> str:
    return "homogenized" if eps is None else repr(float(eps))


# --------------------------------------------------------------------- turnpike


def turnpike_job(raw: dict, epsilon: float | None) -> TurnpikeRun:
    """One epsilon (``None`` = homogenised coefficient) of the turnpike pipeline."""
    exp = ExperimentConfig.from_dict(raw)
    cfg = exp.ocp_config(epsilon, homogenized=epsilon is None)
    s = exp.solver
    run = run_turnpike(cfg, exp.C, exp.mu, deviation=s["deviation"],
                       riccati_max_dim=int(s["riccati_max_dim"]), epsilon=epsilon)
    cfg._lu = None  # keep the pickled result small
    log.info("turnpike eps=%s: envelope_ok=%s worst=%.3g", _eps_label(epsilon),
             run.report.envelope_ok, run.report.worst_margin)
    return run


@dataclass
class SweepResult:
    epsilons: list
    runs: list
    homogenized: TurnpikeRun
    report: SweepReport

    def deviation_rows(self):
        """``(epsilon, t, d, bound)`` rows, homogenised run last."""
        for eps, run in list(zip(self.epsilons, self.runs)) + [(None, self.homogenized)]:
            rep = run.report
            for t, d, b in zip(rep.times, rep.d, rep.bound):
                yield _eps_label(eps), float(t), float(d), float(b)


def epsilon_sweep(exp: ExperimentConfig, jobs: int = 1, partial_dir: Path | None = None) -> SweepResult:
    """Turnpike runs for every epsilon of the config plus the homogenised problem.

    With ``partial_dir`` each finished run's report is written as it completes,
    so an interrupted sweep leaves its finished part on disk.
    """
    eps_list = exp.epsilons
    if not eps_list:
        raise ConfigError("epsilon_list is empty")
    targets = eps_list + [None]
    runs = _map(turnpike_job, [(exp.raw, e) for e in targets], jobs)
    if partial_dir is not None:
        partial_dir = Path(partial_dir)
        partial_dir.mkdir(parents=True, exist_ok=True)
        for e, r in zip(targets, runs):
            (partial_dir / f"report_{_eps_label(e)}.json").write_text(
                json.dumps(r.report.summary(), indent=2, sort_keys=True))
    homog = runs.pop()
    a_h = homogenized_constant(exp.a_recipe)
    return SweepResult(eps_list, runs, homog, build_sweep_report(eps_list, runs, homog, a_h))


def tube_study(result: SweepResult, exp: ExperimentConfig) -> dict:
    sols = {_eps_label(e): r.best for e, r in zip(result.epsilons, result.runs)}
    sols["homogenized"] = result.homogenized.best
    cfg = result.homogenized.cfg
    steady = {_eps_label(e): r.steady for e, r in zip(result.epsilons, result.runs)}
    steady["homogenized"] = result.homogenized.steady
    rep = tubular_report(sols, exp.C, exp.mu, l2_norm(cfg.y0, cfg.grid), l2_norm(cfg.y_d, cfg.grid))
    rep["steady_norms"] = {k: l2_norm(v.y_bar, cfg.grid) for k, v in steady.items()}
    return rep


# ---------------------------------------------------------------------- riccati


def cross_check(exp: ExperimentConfig, epsilon: float | None = None) -> dict:
    """Riccati feedback vs CG optimum on the cross-check grid.

    Returns relative ``L2(0,T;omega)`` discrepancies of control and state plus
    both costs.
    """
    n_cells = int(exp.raw["riccati_study"]["cross_check_n_cells"])
    eps = exp.a_recipe.epsilon if epsilon is None else epsilon
    cfg = exp.ocp_config(eps, n_cells=n_cells)
    steady = solve_steady_ocp(cfg)
    cg = solve_evolutive_ocp(cfg)
    fam = solve_dre(cfg.operator, cfg.window, cfg.timegrid, max_dim=int(exp.solver["riccati_max_dim"]))
    h = solve_h_equation(fam, steady.psi_bar)
    fb = synthesize_feedback(fam, steady, h, cfg.y0, cfg.y_d)
    dt, dx, mask = cfg.timegrid.dt, cfg.grid.dx, cfg.mask

    def rel(a, b, w=1.0):
        num = np.sqrt(dt * dx * np.sum((w * (a - b)) ** 2))
        den = np.sqrt(dt * dx * np.sum((w * b) ** 2))
        return float(num / den) if den > 0 else float(num)

    return {
        "epsilon": eps, "n_cells": n_cells,
        "control_rel": rel(fb.f.values[:-1], cg.f.values[:-1], mask),
        "state_rel": rel(fb.y.values, cg.y.values),
        "cost_cg": cg.cost, "cost_feedback": fb.cost,
        "value_function": 0.5 * dx * float((cfg.y0 - steady.y_bar) @ fam.P[0] @ (cfg.y0 - steady.y_bar)),
    }


def gap_job(raw: dict, epsilon: float) -> dict:
    exp = ExperimentConfig.from_dict(raw)
    rs = exp.raw["riccati_study"]
    tg = TimeGrid(float(rs["T"]), int(rs["n_steps"]))
    cfg = exp.ocp_config(epsilon, n_cells=int(rs["n_cells"]), timegrid=tg)
    max_dim = int(exp.solver["riccati_max_dim"])
    fam = solve_dre(cfg.operator, cfg.window, tg, max_dim=max_dim)
    stat = solve_are(cfg.operator, cfg.window, dt=tg.dt, max_dim=max_dim)
    gap = riccati_gap(fam, stat)
    rate, r2 = fit_decay_rate(gap, tg.times, window=(0.0, tg.T / 2))
    sel = tg.times <= tg.T / 2
    sel &= gap > 1e-14
    slope, intercept = np.polyfit(tg.times[sel], np.log(gap[sel]), 1)
    log.info("riccati gap eps=%s: rate %.4g r2 %.5f", epsilon, rate, r2)
    return {"epsilon": epsilon, "times": tg.times, "gap": gap,
            "fit": {"slope": float(slope), "intercept": float(intercept), "r2": float(r2), "rate": rate},
            "P_hat_norm": float(np.max(np.abs(np.linalg.eigvalsh(stat.P_hat)))),
            "residual": stat.residual}


def riccati_gap_study(exp: ExperimentConfig, jobs: int = 1) -> list[dict]:
    eps = [float(e) for e in exp.raw["riccati_study"]["epsilons"]]
    return _map(gap_job, [(exp.raw, e) for e in eps], jobs)


def rate_spread(results: list[dict]) -> float:
    """``(max - min) / max`` of the fitted decay rates."""
    rates = np.array([r["fit"]["rate"] for r in results])
    return float((rates.max() - rates.min()) / rates.max())


# -------------------------------------------------------------------------- hum


def hum_study(exp: ExperimentConfig) -> dict:
    """Controllability-cost sweep over epsilon plus a delta ladder at the first epsilon."""
    hs = exp.raw["hum"]
    grid = build_grid(int(hs["n_cells"]))
    y0 = evaluate_field(exp.raw["y0"], grid.interior)
    win = (float(hs["window"]["x_lo"]), float(hs["window"]["x_hi"]))
    eps = [float(e) for e in hs["epsilons"]]
    results, ratio, homog = controllability_cost_sweep(
        exp.a_recipe, eps, grid, y0, window=win, T=float(hs["T"]), n_steps=int(hs["n_steps"]),
        delta=float(hs["delta"]), cg_tol=float(hs["cg_tol"]))
    rows = [dict(epsilon=repr(e), **r.row()) for e, r in zip(eps, results)]
    rows.append(dict(epsilon="homogenized", **homog.row()))
    ladder = []
    tg = TimeGrid(float(hs["T"]), int(hs["n_steps"]))
    cf = sample_coefficients(exp.a_recipe, grid, epsilon=eps[0])
    w = make_window(grid, *win)
    op = assemble(cf, grid, window=w)
    for delta in hs["delta_ladder"]:
        r = penalized_null_control(op, w, y0, tg, float(delta), cg_tol=float(hs["cg_tol"]))
        ladder.append(dict(epsilon=repr(eps[0]), **r.row()))
    return {"rows": rows, "ratio": ratio, "ladder": ladder}


__all__ = [
    "JOBS_ENV", "SweepResult", "control_gap", "cross_check", "epsilon_sweep", "gap_job",
    "hum_study", "rate_spread", "resolve_jobs", "riccati_gap_study", "tube_study", "turnpike_job",
]

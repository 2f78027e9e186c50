"""Invariants of the full-size setup in configs/paper.json.

The sweep is shared with the acceptance module so it runs once per session.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from turnpike_lab.analysis import run_turnpike
from turnpike_lab.pde_solvers import TimeGrid
from test_acceptance import PAPER_JSON, paper, paper_sweep


def _all_runs():
    res, _ = paper_sweep()
    return list(zip(res.epsilons, res.runs)) + [(None, res.homogenized)]


def test_midpoint_deviation_small_for_unit_epsilon():
    res, _ = paper_sweep()
    rep = dict(zip(res.epsilons, res.runs))[1.0].report
    k = int(np.argmin(np.abs(rep.times - rep.times[-1] / 2)))
    assert rep.d[k] <= 1e-5


@pytest.mark.parametrize("idx", range(7))
def test_deviation_minimum_in_middle_third(idx):
    eps, run = _all_runs()[idx]
    rep = run.report
    T = rep.times[-1]
    t_min = rep.times[int(np.argmin(rep.d))]
    assert T / 3 <= t_min <= 2 * T / 3, f"eps={eps}: argmin at t={t_min:.2f}"


def test_homogenized_inside_envelope():
    res, _ = paper_sweep()
    assert res.homogenized.report.envelope_ok


def test_every_run_inside_tube():
    from turnpike_lab.experiments import tube_study

    res, _ = paper_sweep()
    tube = tube_study(res, paper())
    assert all(tube["inside"].values()), tube["inside"]


def test_fitted_rate_uniform_across_sweep():
    rates = np.array([r.report.fitted_mu for _, r in _all_runs()])
    spread = (rates.max() - rates.min()) / rates.max()
    assert spread <= 0.10, f"rates {np.round(rates, 3)}, spread {spread:.1%}"


@pytest.mark.slow
def test_integral_deviation_shrinks_with_horizon():
    exp = paper()
    lhs = []
    for T, M in ((50.0, 168), (100.0, 336)):
        cfg = exp.ocp_config(None, homogenized=True, timegrid=TimeGrid(T, M))
        lhs.append(run_turnpike(cfg, exp.C, exp.mu, deviation="cg").report.integral_lhs)
    assert lhs[1] < lhs[0]


@pytest.mark.slow
def test_cli_turnpike_paper_config_inside_envelope(tmp_path):
    out = tmp_path / "tp"
    proc = subprocess.run([sys.executable, "-m", "turnpike_lab", "turnpike", "--config", str(PAPER_JSON),
                           "--out", str(out), "--quiet"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    report = json.loads((out / "report.json").read_text())
    assert report["envelope_ok"], f"worst d/bound {report['worst_margin']:.3g}"

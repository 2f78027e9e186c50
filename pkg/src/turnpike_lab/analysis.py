"""Turnpike diagnostics and the homogenisation study."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import ConfigError, DimensionError, TurnpikeLabError
from .ocp import OCPConfig, OptimalSolution, SteadySolution, solve_evolutive_ocp, solve_steady_ocp
from .operators import l2_norm
from .pde_solvers import TimeGrid
from .riccati import solve_dre, solve_h_equation, synthesize_feedback

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-14


@dataclass
class TurnpikeReport:
    times: np.ndarray
    d: np.ndarray
    envelope_C: float
    envelope_mu: float
    envelope_ok: bool
    worst_margin: float
    bound: np.ndarray = field(repr=False)
    # same check with the (|y0| + |y_d|) factor of the theorem kept explicit
    envelope_ok_theorem: bool = True
    worst_margin_theorem: float = 0.0
    fitted_mu: float = float("nan")
    fit_r2: float = float("nan")
    integral_lhs: float = float("nan")
    integral_bound: float = float("nan")
    epsilon: float | None = None

    @property
    def integral_ok(self) -> bool:
        return bool(self.integral_lhs <= self.integral_bound)

    def summary(self) -> dict:
        return {
            "epsilon": self.epsilon, "envelope_C": self.envelope_C, "envelope_mu": self.envelope_mu,
            "envelope_ok": bool(self.envelope_ok), "worst_margin": float(self.worst_margin),
            "envelope_ok_theorem": bool(self.envelope_ok_theorem),
            "worst_margin_theorem": float(self.worst_margin_theorem),
            "fitted_mu": float(self.fitted_mu), "fit_r2": float(self.fit_r2),
            "integral_lhs": float(self.integral_lhs), "integral_bound": float(self.integral_bound),
            "integral_ok": self.integral_ok,
        }


@dataclass
class SweepReport:
    epsilons: list
    reports: list
    homogenized: TurnpikeReport | None
    control_gap: np.ndarray
    state_gap: np.ndarray
    steady_gap: np.ndarray
    steady_energy: list = field(default_factory=list)
    a_h: float = float("nan")

    @property
    def gaps_monotone(self) -> bool:
        return nearly_monotone_decreasing(self.control_gap) and nearly_monotone_decreasing(self.state_gap)

    def summary(self) -> dict:
        return {
            "epsilons": list(self.epsilons), "a_h": self.a_h,
            "reports": [r.summary() for r in self.reports],
            "homogenized": self.homogenized.summary() if self.homogenized else None,
            "control_gap": [float(v) for v in self.control_gap],
            "state_gap": [float(v) for v in self.state_gap],
            "steady_gap": [float(v) for v in self.steady_gap],
            "steady_energy": self.steady_energy,
            "gaps_monotone": self.gaps_monotone,
        }


def nearly_monotone_decreasing(values, allowed_violations: int = 1) -> bool:
    v = np.asarray(values, dtype=float)
    return int(np.sum(np.diff(v) > 0)) <= allowed_violations


def deviation_curve(sol: OptimalSolution, steady: SteadySolution) -> np.ndarray:
    """``|y(t_k) - y_bar| + |f(t_k) - f_bar|`` in the lumped L2 norm.

    Uses the directly integrated deviations when ``sol`` carries them, so the
    curve keeps relative accuracy where the deviation is far below ``|y|``.
    """
    grid = sol.y.grid
    if sol.y.values.shape[1] != steady.y_bar.size:
        raise DimensionError("solution and steady state live on different grids")
    if sol.y_dev is not None and sol.f_dev is not None:
        m, g = sol.y_dev, sol.f_dev
    else:
        m = sol.y.values - steady.y_bar
        g = sol.f.values - steady.f_bar
    return np.sqrt(grid.dx * np.sum(m**2, axis=1)) + np.sqrt(grid.dx * np.sum(g**2, axis=1))


def turnpike_bound(times, T: float, C: float, mu: float) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    return C * (np.exp(-mu * t) + np.exp(-mu * (T - t)))


def check_envelope(d, C: float, mu: float, tg: TimeGrid, norms: tuple[float, float] = (0.0, 0.0),
                   epsilon=None) -> TurnpikeReport:
    """Pointwise test of ``d_k <= C (e^{-mu t_k} + e^{-mu (T - t_k)})``.

    The plotted (figure) form folds the data norms into ``C`` and decides
    ``envelope_ok``; the theorem form multiplies by ``|y0| + |y_d|`` and is
    reported alongside.
    """
    if not (C > 0 and mu > 0):
        raise ConfigError("envelope constants must be positive")
    d = np.asarray(d, dtype=float)
    t = tg.times
    if d.shape != t.shape:
        raise DimensionError("deviation curve does not match the time grid")
    bound = turnpike_bound(t, tg.T, C, mu)
    margin = d / bound
    scale = norms[0] + norms[1]
    margin_th = d / (bound * scale) if scale > 0 else np.where(d > 0, np.inf, 0.0)
    return TurnpikeReport(
        times=t, d=d, envelope_C=C, envelope_mu=mu,
        envelope_ok=bool(np.all(d <= bound)), worst_margin=float(margin.max()), bound=bound,
        envelope_ok_theorem=bool(np.all(margin_th <= 1.0)), worst_margin_theorem=float(margin_th.max()),
        epsilon=epsilon,
    )


def fit_decay_rate(d, times, window: tuple[float, float] | None = None, floor: float = NOISE_FLOOR):
    """Least-squares fit of ``log d`` against ``t`` on ``window``; returns ``(mu_hat, r2)``.

    Samples at or below ``floor`` carry no signal and are dropped; fewer than
    three usable samples is an error.
    """
    d = np.asarray(d, dtype=float)
    t = np.asarray(times, dtype=float)
    if window is None:
        T = t[-1]
        window = (0.05 * T, 0.4 * T)
    lo, hi = window
    sel = (t >= lo) & (t <= hi)
    if not sel.any():
        raise TurnpikeLabError(f"fit window {window} contains no samples")
    sel &= d > floor
    if sel.sum() < 3:
        raise TurnpikeLabError(f"signal is below the noise floor {floor:g} on the fit window {window}")
    x, yv = t[sel], np.log(d[sel])
    slope, intercept = np.polyfit(x, yv, 1)
    resid = yv - (slope * x + intercept)
    ss_tot = float(np.sum((yv - yv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), r2


def _time_averages(sol: OptimalSolution, steady: SteadySolution):
    # same rectangle rules as the cost: states at t_1..t_M, controls at t_0..t_{M-1}
    tg = sol.y.timegrid
    if sol.y_dev is not None and sol.f_dev is not None:
        m, g = sol.y_dev, sol.f_dev
    else:
        m, g = sol.y.values - steady.y_bar, sol.f.values - steady.f_bar
    return tg.dt * m[1:].sum(axis=0) / tg.T, tg.dt * g[:-1].sum(axis=0) / tg.T, m, g


def integral_turnpike_check(sol: OptimalSolution, steady: SteadySolution, C: float, mu: float,
                            norms: tuple[float, float]):
    """Time-averaged turnpike: returns ``(lhs, bound, ok)``."""
    grid, tg = sol.y.grid, sol.y.timegrid
    my, mf, _, _ = _time_averages(sol, steady)
    lhs = l2_norm(my, grid) + l2_norm(mf, grid)
    T = tg.T
    bound = 2 * C * (norms[0] + norms[1]) * (1 - np.exp(-mu * T)) / (mu * T)
    return float(lhs), float(bound), bool(lhs <= bound)


def averaged_deviation(sol: OptimalSolution, steady: SteadySolution) -> float:
    """``(1/T) sum dt |y_k - y_bar| + (1/T) sum dt |f_k - f_bar|`` with the cost's index sets."""
    grid, tg = sol.y.grid, sol.y.timegrid
    _, _, m, g = _time_averages(sol, steady)
    ny = np.sqrt(grid.dx * np.sum(m[1:] ** 2, axis=1))
    nf = np.sqrt(grid.dx * np.sum(g[:-1] ** 2, axis=1))
    return float(tg.dt * (ny.sum() + nf.sum()) / tg.T)


def tube_bound(times, T, C, mu, y0_norm, yd_norm) -> np.ndarray:
    return C * (y0_norm + yd_norm) * (np.exp(-mu * np.asarray(times)) + np.exp(-mu * (T - np.asarray(times))) + yd_norm)


def tubular_report(sols: dict, C: float, mu: float, y0_norm: float, yd_norm: float) -> dict:
    """State norms per run and the common tube ``C(|y0|+|y_d|)(e^{-mu t}+e^{-mu(T-t)}+|y_d|)``."""
    if not sols:
        return {"bound": np.empty(0), "norms": {}, "inside": {}}
    first = next(iter(sols.values()))
    tg = first.y.timegrid
    bound = tube_bound(tg.times, tg.T, C, mu, y0_norm, yd_norm)
    norms, inside = {}, {}
    for key, sol in sols.items():
        nrm = sol.y.norms()
        norms[key] = nrm
        inside[key] = bool(np.all(nrm <= bound))
    return {"times": tg.times, "bound": bound, "norms": norms, "inside": inside}


@dataclass
class TurnpikeRun:
    """Everything computed for one coefficient choice."""

    cfg: OCPConfig
    steady: SteadySolution
    solution: OptimalSolution
    feedback: OptimalSolution | None
    report: TurnpikeReport

    @property
    def best(self) -> OptimalSolution:
        return self.feedback if self.feedback is not None else self.solution


def run_turnpike(cfg: OCPConfig, C: float = 10.0, mu: float = 4.0, deviation: str = "riccati",
                 riccati_max_dim: int = 401, epsilon=None, fit_window=None) -> TurnpikeRun:
    """Steady + evolutive solves and the full turnpike report for one configuration.

    ``deviation="riccati"`` additionally synthesises the optimum by feedback and
    measures the deviation curve on the directly integrated deviations.
    """
    steady = solve_steady_ocp(cfg)
    sol = solve_evolutive_ocp(cfg)
    fb = None
    if deviation == "riccati":
        fam = solve_dre(cfg.operator, cfg.window, cfg.timegrid, max_dim=riccati_max_dim)
        h = solve_h_equation(fam, steady.psi_bar)
        fb = synthesize_feedback(fam, steady, h, cfg.y0, cfg.y_d)
        del fam
    elif deviation != "cg":
        raise ConfigError(f"unknown deviation method {deviation!r}")
    best = fb if fb is not None else sol
    norms = (l2_norm(cfg.y0, cfg.grid), l2_norm(cfg.y_d, cfg.grid))
    d = deviation_curve(best, steady)
    rep = check_envelope(d, C, mu, cfg.timegrid, norms, epsilon=epsilon)
    try:
        rep.fitted_mu, rep.fit_r2 = fit_decay_rate(d, cfg.timegrid.times, fit_window)
    except TurnpikeLabError as exc:
        log.warning("decay fit skipped: %s", exc)
    rep.integral_lhs, rep.integral_bound, _ = integral_turnpike_check(best, steady, C, mu, norms)
    return TurnpikeRun(cfg, steady, sol, fb, rep)


def steady_energy(steady: SteadySolution, cfg: OCPConfig) -> dict:
    lhs = l2_norm(steady.y_bar, cfg.grid) ** 2 + l2_norm(steady.f_bar, cfg.grid) ** 2
    rhs = l2_norm(cfg.y_d, cfg.grid) ** 2
    return {"lhs": lhs, "rhs": rhs, "ok": bool(lhs <= rhs)}


def control_gap(a: OptimalSolution, b: OptimalSolution) -> float:
    """``|f_a - f_b|`` in ``L2(0, T; L2)`` over the decision variables ``t_0 .. t_{M-1}``."""
    tg, grid = a.f.timegrid, a.f.grid
    diff = a.f.values[:-1] - b.f.values[:-1]
    return float(np.sqrt(tg.dt * grid.dx * np.sum(diff**2)))


def state_gap(a: OptimalSolution, b: OptimalSolution) -> float:
    diff = a.y.values - b.y.values
    return float(np.sqrt(a.y.grid.dx * np.sum(diff**2, axis=1)).max())


def build_sweep_report(epsilons: Sequence, runs: list, homog: TurnpikeRun | None, a_h: float) -> SweepReport:
    reports = [r.report for r in runs]
    if homog is not None:
        cg = np.array([control_gap(r.best, homog.best) for r in runs])
        sg = np.array([state_gap(r.best, homog.best) for r in runs])
        stg = np.array([l2_norm(r.steady.f_bar - homog.steady.f_bar, r.cfg.grid) for r in runs])
    else:
        cg = sg = stg = np.full(len(runs), np.nan)
    energy = [steady_energy(r.steady, r.cfg) for r in runs]
    if homog is not None:
        energy.append(steady_energy(homog.steady, homog.cfg))
    return SweepReport(list(epsilons), reports, homog.report if homog else None, cg, sg, stg, energy, a_h)

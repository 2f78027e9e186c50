"""Penalised HUM null controls and controllability-cost sweeps."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .grid_coeff import CoefficientRecipe, ControlWindow, Grid, homogenized_constant, constant, \
    sample_coefficients, make_window
from .ocp import conjugate_gradient
from .operators import DiscreteOperator, assemble, l2_norm
from .pde_solvers import TimeGrid, Trajectory, solve_backward, solve_forward

log = logging.getLogger(__name__)


@dataclass
class HumResult:
    control: Trajectory
    terminal_norm: float
    control_norm: float
    delta: float
    cost_estimate: float
    iterations: int = 0

    def row(self) -> dict:
        return {"delta": self.delta, "control_norm": self.control_norm,
                "terminal_norm": self.terminal_norm, "cost_estimate": self.cost_estimate}


def penalized_null_control(op: DiscreteOperator, window: ControlWindow | None, y0, tg: TimeGrid,
                           delta: float, cg_tol: float = 1e-10, cg_max_iter: int = 5000) -> HumResult:
    """Minimise ``|f|^2_{L2(0,T;omega)} + |y(T)|^2 / delta``.

    Solved through the dual (HUM) variable ``phi_T = y(T)/delta``:
    ``(delta I + Lambda Lambda*) phi_T = y_free(T)`` with ``f = -chi Lambda* phi_T``,
    where ``Lambda`` maps a control to the final state. CG runs in the lumped
    ``L2`` inner product on ``phi_T``.
    """
    if not delta > 0:
        raise ConfigError("delta must be positive")
    grid = op.grid
    mask = op.mask if window is None else window.mask
    y0 = np.asarray(y0, dtype=float)
    lu = op.shifted(tg.dt)
    n = op.n
    y_free_T = solve_forward(op, y0, None, tg, lu=lu).values[-1]

    def adjoint_control(phi_T):
        return -mask * solve_backward(op.T, phi_T, None, tg, lu=lu).values

    def gramian(phi_T):
        f = adjoint_control(phi_T)
        # Lambda Lambda* phi = -Lambda f
        yT = solve_forward(op, np.zeros(n), f, tg, lu=lu).values[-1]
        return delta * phi_T - yT

    def dot(u, v):
        return float(np.dot(u, v) * grid.dx)

    phi, _, its, _ = conjugate_gradient(gramian, y_free_T, dot, cg_tol, cg_max_iter)
    f = adjoint_control(phi)
    f[-1] = 0.0
    yT = solve_forward(op, y0, f, tg, lu=lu).values[-1]
    control_norm = float(np.sqrt(tg.dt * grid.dx * np.sum(f[:-1] ** 2)))
    y0n = l2_norm(y0, grid)
    return HumResult(Trajectory(f, tg, grid), l2_norm(yT, grid), control_norm, float(delta),
                     control_norm / y0n if y0n > 0 else 0.0, its)


def dense_penalized_control(op: DiscreteOperator, window: ControlWindow | None, y0, tg: TimeGrid,
                            delta: float) -> np.ndarray:
    """Brute-force oracle: weighted least squares on the stacked control vector (tiny instances)."""
    n, M, dt = op.n, tg.n_steps, tg.dt
    mask = op.mask if window is None else window.mask
    L = np.eye(n) + dt * op.to_dense()
    Linv = np.linalg.inv(L)
    # y_M = L^{-M} y0 + sum_k L^{-(M-k)} dt B f_k
    blocks = [np.linalg.matrix_power(Linv, M - k) * dt * mask[None, :] for k in range(M)]
    Lam = np.hstack(blocks)
    yfree = np.linalg.matrix_power(Linv, M) @ np.asarray(y0, float)
    # weights: |f|^2 dt dx and |y_M|^2 dx / delta
    Wf = np.sqrt(dt)
    top = Wf * np.eye(n * M)
    bot = Lam / np.sqrt(delta)
    K = np.vstack([top, bot])
    rhs = np.concatenate([np.zeros(n * M), -yfree / np.sqrt(delta)])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    f = np.zeros((M + 1, n))
    f[:-1] = sol.reshape(M, n)
    return f


def controllability_cost_sweep(recipe: CoefficientRecipe, epsilons, grid: Grid, y0,
                               window: tuple[float, float] = (0.3, 0.7), T: float = 1.0,
                               n_steps: int = 100, delta: float = 1e-6, ratio_warn: float = 2.0,
                               include_homogenized: bool = True, cg_tol: float = 1e-10):
    """Penalised null-control cost per epsilon with ``y0`` and ``delta`` fixed.

    Returns ``(results, ratio, homogenized)``; ``ratio`` is max/min over the
    epsilon runs. A ratio above ``ratio_warn`` emits a warning only.
    """
    tg = TimeGrid(T, n_steps)
    win = make_window(grid, *window)
    results = []
    for eps in epsilons:
        cf = sample_coefficients(recipe, grid, epsilon=eps if recipe.kind != "constant" else None)
        op = assemble(cf, grid, window=win)
        res = penalized_null_control(op, win, y0, tg, delta, cg_tol=cg_tol)
        log.info("HUM eps=%s: cost %.4g, |y(T)| %.2e", eps, res.cost_estimate, res.terminal_norm)
        results.append(res)
    costs = np.array([r.cost_estimate for r in results])
    ratio = float(costs.max() / costs.min()) if costs.min() > 0 else float("inf")
    if ratio > ratio_warn:
        warnings.warn(f"controllability cost ratio {ratio:.3f} exceeds {ratio_warn}", RuntimeWarning)
    homog = None
    if include_homogenized:
        cf = sample_coefficients(constant(homogenized_constant(recipe)), grid)
        op = assemble(cf, grid, window=win)
        homog = penalized_null_control(op, win, y0, tg, delta, cg_tol=cg_tol)
    return results, ratio, homog

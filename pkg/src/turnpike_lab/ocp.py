"""Evolutive and stationary linear-quadratic optimal control of the heat equation.

The evolutive problem is solved in the reduced space of controls by conjugate
gradients; the state/adjoint pair comes from the exactly transposed solvers in
:mod:`turnpike_lab.pde_solvers`. The discrete cost is

    J(f) = 1/2 * sum_{k=0}^{M-1} dt * (|f_k|^2 + |y_{k+1} - y_d|^2)

in the mass-lumped norm, whose exact gradient is ``f + chi * psi``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .exceptions import ConfigError, ConvergenceError, DimensionError, SingularSystemError
from .grid_coeff import CoefficientField, ControlWindow, Grid, make_window
from .operators import (
    WELLPOSED_TOL,
    DiscreteOperator,
    assemble,
    check_wellposedness,
    l2_norm,
)
from .pde_solvers import TimeGrid, Trajectory, solve_backward, solve_forward

log = logging.getLogger(__name__)


@dataclass
class OCPConfig:
    grid: Grid
    timegrid: TimeGrid
    coeffs: CoefficientField
    window: ControlWindow | None
    y0: np.ndarray
    y_d: np.ndarray
    cg_tol: float = 1e-8
    cg_max_iter: int = 500
    operator: DiscreteOperator = field(init=False, repr=False)

    def __post_init__(self):
        if not self.cg_tol > 0:
            raise ConfigError("cg_tol must be positive")
        if self.window is None:
            self.window = make_window(self.grid)
        n = self.grid.n_interior
        self.y0 = np.asarray(self.y0, dtype=float)
        self.y_d = np.asarray(self.y_d, dtype=float)
        if self.y_d.ndim != 1:
            raise ConfigError("the target y_d must be time-independent (a single grid function)")
        if self.y0.shape != (n,) or self.y_d.shape != (n,):
            raise DimensionError(f"y0/y_d must have length {n}")
        self.operator = assemble(self.coeffs, self.grid, window=self.window)
        self._lu = None

    @property
    def mask(self) -> np.ndarray:
        return self.window.mask

    @property
    def lu(self):
        if self._lu is None:
            self._lu = self.operator.shifted(self.timegrid.dt)
        return self._lu

    def replace(self, **changes) -> "OCPConfig":
        kw = dict(grid=self.grid, timegrid=self.timegrid, coeffs=self.coeffs, window=self.window,
                  y0=self.y0, y_d=self.y_d, cg_tol=self.cg_tol, cg_max_iter=self.cg_max_iter)
        kw.update(changes)
        return OCPConfig(**kw)


@dataclass
class OptimalSolution:
    y: Trajectory
    f: Trajectory
    psi: Trajectory
    cost: float
    iterations: int = 0
    grad_norm: float = 0.0
    internal_cost: float | None = None
    # Deviations from the steady optimum, when the producer integrated them directly.
    y_dev: np.ndarray | None = field(default=None, repr=False)
    f_dev: np.ndarray | None = field(default=None, repr=False)

    def summary(self) -> dict:
        return {"cost": self.cost, "iterations": self.iterations, "grad_norm": self.grad_norm}


@dataclass
class SteadySolution:
    y_bar: np.ndarray
    f_bar: np.ndarray
    psi_bar: np.ndarray
    cost: float
    residual: float = 0.0

    def summary(self) -> dict:
        return {"cost": self.cost, "residual": self.residual}


def _dot(u, v, cfg: OCPConfig) -> float:
    # dt*dx weighted pairing over the decision variables f_0 .. f_{M-1}
    return float(np.sum(u[:-1] * v[:-1]) * cfg.timegrid.dt * cfg.grid.dx)


def _as_values(f, cfg: OCPConfig) -> np.ndarray:
    arr = f.values if isinstance(f, Trajectory) else np.asarray(f, dtype=float)
    shape = (cfg.timegrid.n_steps + 1, cfg.grid.n_interior)
    if arr.shape != shape:
        raise DimensionError(f"control of shape {arr.shape}, expected {shape}")
    return arr


def state_of(f, cfg: OCPConfig, y0=None) -> Trajectory:
    f = _as_values(f, cfg)
    return solve_forward(cfg.operator, cfg.y0 if y0 is None else y0, f * cfg.mask, cfg.timegrid, lu=cfg.lu)


def adjoint_of(y: Trajectory, cfg: OCPConfig, y_d=None) -> Trajectory:
    y_d = cfg.y_d if y_d is None else y_d
    return solve_backward(cfg.operator.T, None, y.values - y_d, cfg.timegrid, lu=cfg.lu)


def evaluate_cost(f, cfg: OCPConfig) -> float:
    f = _as_values(f, cfg)
    y = state_of(f, cfg)
    dt, dx = cfg.timegrid.dt, cfg.grid.dx
    return 0.5 * dt * dx * float(np.sum(f[:-1] ** 2) + np.sum((y.values[1:] - cfg.y_d) ** 2))


def reduced_gradient(f, cfg: OCPConfig) -> Trajectory:
    """``f + chi * psi(f)``; the last snapshot is not a decision variable and is set to 0."""
    f = _as_values(f, cfg)
    psi = adjoint_of(state_of(f, cfg), cfg)
    g = f + cfg.mask * psi.values
    g[-1] = 0.0
    return Trajectory(g, cfg.timegrid, cfg.grid)


def hessian_apply(u, cfg: OCPConfig) -> np.ndarray:
    """Reduced Hessian ``u + chi S* S chi u`` (homogeneous data)."""
    u = _as_values(u, cfg)
    n = cfg.grid.n_interior
    y = solve_forward(cfg.operator, np.zeros(n), u * cfg.mask, cfg.timegrid, lu=cfg.lu)
    psi = solve_backward(cfg.operator.T, None, y.values, cfg.timegrid, lu=cfg.lu)
    out = u + cfg.mask * psi.values
    out[-1] = 0.0
    return out


def conjugate_gradient(apply, b, dot, tol, max_iter, x0=None):
    """Plain CG for a self-adjoint positive definite ``apply``.

    Returns ``(x, Ax, iterations, relative_residual)``; raises
    ``ConvergenceError`` if ``max_iter`` is exhausted.
    """
    bnorm = np.sqrt(dot(b, b))
    x = np.zeros_like(b) if x0 is None else x0.copy()
    Ax = np.zeros_like(b) if x0 is None else apply(x)
    if bnorm == 0.0:
        return x, Ax, 0, 0.0
    r = b - Ax
    p = r.copy()
    rr = dot(r, r)
    for it in range(1, max_iter + 1):
        Ap = apply(p)
        alpha = rr / dot(p, Ap)
        x += alpha * p
        Ax += alpha * Ap
        r -= alpha * Ap
        rr_new = dot(r, r)
        if np.sqrt(rr_new) <= tol * bnorm:
            return x, Ax, it, float(np.sqrt(rr_new) / bnorm)
        p = r + (rr_new / rr) * p
        rr = rr_new
    res = float(np.sqrt(rr) / bnorm)
    raise ConvergenceError(f"CG did not converge in {max_iter} iterations (relative residual {res:.3e})",
                           residual=res, iterations=max_iter)


def _require_wellposed(cfg: OCPConfig):
    smin = check_wellposedness(cfg.operator.T)
    if smin <= WELLPOSED_TOL:
        raise SingularSystemError(f"adjoint operator has a kernel (sigma_min = {smin:.3e})")


def solve_evolutive_ocp(cfg: OCPConfig, check: bool = True) -> OptimalSolution:
    if check:
        _require_wellposed(cfg)
    tg, grid = cfg.timegrid, cfg.grid
    y_free = solve_forward(cfg.operator, cfg.y0, None, tg, lu=cfg.lu)
    psi_free = adjoint_of(y_free, cfg)
    b = -cfg.mask * psi_free.values
    b[-1] = 0.0
    cost0 = 0.5 * tg.dt * grid.dx * float(np.sum((y_free.values[1:] - cfg.y_d) ** 2))

    def dot(u, v):
        return _dot(u, v, cfg)

    u, Hu, its, rel = conjugate_gradient(lambda v: hessian_apply(v, cfg), b, dot,
                                         cfg.cg_tol, cfg.cg_max_iter)
    internal = cost0 - dot(b, u) + 0.5 * dot(u, Hu)
    y = state_of(u, cfg)
    psi = adjoint_of(y, cfg)
    f = -cfg.mask * psi.values
    grad = u + cfg.mask * psi.values
    grad[-1] = 0.0
    cost = evaluate_cost(f, cfg)
    log.debug("evolutive OCP: %d CG iterations, relative residual %.2e", its, rel)
    return OptimalSolution(
        y=y, f=Trajectory(f, tg, grid), psi=psi, cost=cost, iterations=its,
        grad_norm=float(np.sqrt(dot(grad, grad))), internal_cost=internal,
    )


def _steady_banded(op: DiscreteOperator, mask: np.ndarray) -> np.ndarray:
    n = op.n
    ab = np.zeros((5, 2 * n))

    def put(i, j, v):
        ab[2 + i - j, j] = v

    for j in range(n):
        ry, rp = 2 * j, 2 * j + 1
        put(ry, 2 * j, op.diag[j])
        put(ry, 2 * j + 1, mask[j])
        put(rp, 2 * j + 1, op.diag[j])
        put(rp, 2 * j, -1.0)
        if j > 0:
            put(ry, 2 * (j - 1), op.lower[j - 1])
            put(rp, 2 * (j - 1) + 1, op.upper[j - 1])
        if j < n - 1:
            put(ry, 2 * (j + 1), op.upper[j])
            put(rp, 2 * (j + 1) + 1, op.lower[j])
    return ab


def solve_steady_ocp(cfg: OCPConfig, check: bool = True) -> SteadySolution:
    """Coupled system ``A y + chi psi = 0``, ``A^T psi - y = -y_d`` by banded LU."""
    if check:
        _require_wellposed(cfg)
    op, mask, n = cfg.operator, cfg.mask, cfg.grid.n_interior
    rhs = np.zeros(2 * n)
    rhs[1::2] = -cfg.y_d
    try:
        z = solve_banded((2, 2), _steady_banded(op, mask), rhs)
    except (LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"steady optimality system is singular: {exc}") from exc
    y_bar, psi_bar = z[0::2], z[1::2]
    r1 = op.matvec(y_bar) + mask * psi_bar
    r2 = op.T.matvec(psi_bar) - y_bar + cfg.y_d
    scale = max(1.0, float(np.linalg.norm(cfg.y_d)))
    residual = float(np.hypot(np.linalg.norm(r1), np.linalg.norm(r2)) / scale)
    f_bar = -mask * psi_bar
    cost = 0.5 * (l2_norm(f_bar, cfg.grid) ** 2 + l2_norm(y_bar - cfg.y_d, cfg.grid) ** 2)
    return SteadySolution(y_bar, f_bar, psi_bar, cost, residual)


def solve_kkt_dense(cfg: OCPConfig) -> OptimalSolution:
    """Brute-force oracle: assemble and directly solve the full discrete optimality system.

    Unknowns are ``y_1..y_M`` and ``psi_0..psi_{M-1}`` (``2 M (N-1)`` of them);
    only meant for tiny instances.
    """
    tg, grid = cfg.timegrid, cfg.grid
    M, n, dt = tg.n_steps, grid.n_interior, tg.dt
    if M * n > 4000:
        raise DimensionError("dense KKT oracle is limited to tiny instances")
    A = cfg.operator.to_dense()
    L = np.eye(n) + dt * A
    B = np.diag(cfg.mask)
    size = 2 * M * n
    K = np.zeros((size, size))
    rhs = np.zeros(size)

    def yi(k):  # y_k, k = 1..M
        return slice((k - 1) * n, k * n)

    def pi(k):  # psi_k, k = 0..M-1
        return slice(M * n + k * n, M * n + (k + 1) * n)

    for k in range(M):
        # state: L y_{k+1} - y_k + dt B psi_k = 0
        row = yi(k + 1)
        K[row, yi(k + 1)] += L
        if k > 0:
            K[row, yi(k)] -= np.eye(n)
        else:
            rhs[row] += cfg.y0
        K[row, pi(k)] += dt * B
        # adjoint: L^T psi_k - psi_{k+1} - dt y_{k+1} = -dt y_d
        row = pi(k)
        K[row, pi(k)] += L.T
        if k + 1 < M:
            K[row, pi(k + 1)] -= np.eye(n)
        K[row, yi(k + 1)] -= dt * np.eye(n)
        rhs[row] -= dt * cfg.y_d
    z = np.linalg.solve(K, rhs)
    y = np.vstack([cfg.y0, z[: M * n].reshape(M, n)])
    psi = np.vstack([z[M * n:].reshape(M, n), np.zeros(n)])
    f = -cfg.mask * psi
    return OptimalSolution(Trajectory(y, tg, grid), Trajectory(f, tg, grid), Trajectory(psi, tg, grid),
                           evaluate_cost(f, cfg))

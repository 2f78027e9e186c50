"""Riccati decoupling of the optimality system.

Convention: ``P`` maps the state to the adjoint state, ``psi_k = P_k y_k`` for the
null-target problem, so that the optimal value is ``1/2 (P_0 y_0, y_0)``.

The family is the exact discrete counterpart of the implicit Euler optimality
system used by :mod:`turnpike_lab.ocp`.  With ``L = I + dt A`` and
``G = L^{-T} (P_{k+1} + dt I) L^{-1}``::

    P_k = (I + dt G B)^{-1} G = G - dt G S (I + dt S^T G S)^{-1} S^T G

where ``S`` selects the control window (``B = S S^T``).  As ``dt -> 0`` this
is a first order scheme for ``-P' = I - A^T P - P A - P B P``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import ConvergenceError, DimensionError, SingularSystemError
from .grid_coeff import ControlWindow, Grid
from .ocp import OptimalSolution, SteadySolution
from .operators import DiscreteOperator, TridiagonalLU
from .pde_solvers import TimeGrid, Trajectory

log = logging.getLogger(__name__)

MAX_DIM = 401
SYM_WARN = 1e-8
SYM_ABORT = 1e-4


@dataclass
class RiccatiFamily:
    """``P[k] ~ E(T - t_k)``; ``P[-1]`` is the zero matrix."""

    P: np.ndarray
    timegrid: TimeGrid
    operator: DiscreteOperator
    mask: np.ndarray
    convention: str = "psi = P y; optimal value = 1/2 (P y0, y0)"

    @property
    def grid(self) -> Grid:
        return self.operator.grid

    def __len__(self):
        return self.P.shape[0]


@dataclass
class StationaryRiccati:
    P_hat: np.ndarray
    closed_loop: np.ndarray = field(repr=False)
    residual: float = 0.0
    dt: float | None = None


def _window_indices(op: DiscreteOperator, window: ControlWindow | None) -> np.ndarray:
    mask = op.mask if window is None else window.mask
    if mask.size != op.n:
        raise DimensionError("control window does not match operator")
    return np.flatnonzero(mask)


def _mask(op, window):
    return op.mask if window is None else np.asarray(window.mask, dtype=float)


def _sandwich(lu: TridiagonalLU, X: np.ndarray) -> np.ndarray:
    """``L^{-T} X L^{-1}`` for symmetric ``X``."""
    W = lu.solve(X, transpose=True)
    G = lu.solve(W.T.copy(), transpose=True).T
    return 0.5 * (G + G.T)


def riccati_step(lu: TridiagonalLU, P_next: np.ndarray, idx: np.ndarray, dt: float) -> np.ndarray:
    """One backward step of the discrete Riccati recursion."""
    n = P_next.shape[0]
    G = _sandwich(lu, P_next + dt * np.eye(n))
    GS = G[:, idx]
    K = np.eye(idx.size) + dt * G[np.ix_(idx, idx)]
    try:
        c = linalg.cho_factor(K, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularSystemError("Riccati step lost positive definiteness") from exc
    P = G - dt * GS @ linalg.cho_solve(c, GS.T, check_finite=False)
    return _symmetrize(P)


def _symmetrize(P: np.ndarray) -> np.ndarray:
    scale = max(np.abs(P).max(), 1e-300)
    asym = np.abs(P - P.T).max() / scale
    if asym > SYM_ABORT:
        raise SingularSystemError(f"Riccati iterate lost symmetry ({asym:.2e})")
    if asym > SYM_WARN:
        warnings.warn(f"Riccati iterate asymmetric by {asym:.2e}; re-symmetrising", RuntimeWarning)
    return 0.5 * (P + P.T)


def solve_dre(op: DiscreteOperator, window: ControlWindow | None, tg: TimeGrid,
              max_dim: int = MAX_DIM) -> RiccatiFamily:
    """Backward sweep ``P_M = 0 -> P_0`` on the time grid of the optimal control problem."""
    n = op.n
    if n > max_dim:
        raise DimensionError(f"dense Riccati limited to {max_dim} unknowns (got {n}); pass max_dim to override")
    idx = _window_indices(op, window)
    lu = op.shifted(tg.dt)
    P = np.empty((tg.n_steps + 1, n, n))
    P[-1] = 0.0
    for k in range(tg.n_steps - 1, -1, -1):
        P[k] = riccati_step(lu, P[k + 1], idx, tg.dt)
    return RiccatiFamily(P, tg, op, _mask(op, window))


def care_residual(A: np.ndarray, P: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """``A^T P + P A + P B P - I`` for the continuous-time problem."""
    return A.T @ P + P @ A + (P * mask) @ P - np.eye(A.shape[0])


def solve_are(op: DiscreteOperator, window: ControlWindow | None = None, dt: float | None = None,
              method: str = "algebraic", max_dim: int = MAX_DIM, t_max: float = 200.0) -> StationaryRiccati:
    """Stationary Riccati operator.

    ``dt=None`` gives the continuous algebraic Riccati equation. With a time step
    the result is the fixed point of :func:`riccati_step`, i.e. the limit of the
    discrete family; ``method="iterate"`` reaches it by marching the recursion
    until ``|P_k - P_{k-1}|_F / dt <= 1e-11``, ``"algebraic"`` by a DARE solve.
    """
    n = op.n
    if n > max_dim:
        raise DimensionError(f"dense Riccati limited to {max_dim} unknowns (got {n})")
    idx = _window_indices(op, window)
    mask = _mask(op, window)
    A = op.to_dense()
    S = np.eye(n)[:, idx]
    if dt is None:
        if method != "algebraic":
            raise ValueError("the continuous ARE is only solved algebraically; pass dt to iterate")
        P = linalg.solve_continuous_are(-A, S, np.eye(n), np.eye(idx.size))
        P = _newton_kleinman_polish(A, _symmetrize(P), mask)
        res = float(np.linalg.norm(care_residual(A, P, mask)))
    elif method == "algebraic":
        Finv = np.eye(n) + dt * A  # L
        F = np.linalg.solve(Finv, np.eye(n))
        H = dt * F @ S
        Q = dt * F.T @ F
        R = dt * (np.eye(idx.size) + H.T @ H)
        N = dt * F.T @ H
        P = _symmetrize(linalg.solve_discrete_are(F, H, Q, R, s=N))
        res = float(np.linalg.norm(riccati_step(op.shifted(dt), P, idx, dt) - P))
    elif method == "iterate":
        lu = op.shifted(dt)
        P = np.zeros((n, n))
        steps = int(np.ceil(t_max / dt))
        for _ in range(steps):
            P_new = riccati_step(lu, P, idx, dt)
            change = np.linalg.norm(P_new - P) / dt
            P = P_new
            if change <= 1e-11:
                break
        else:
            raise ConvergenceError(f"Riccati iteration not stationary after t={t_max} (change {change:.2e})")
        res = float(change * dt)
    else:
        raise ValueError(f"unknown method {method!r}")
    return StationaryRiccati(P, A + mask[:, None] * P, res, dt)


def _newton_kleinman_polish(A, P, mask, steps: int = 2):
    """A couple of Newton-Kleinman sweeps to push the CARE residual to roundoff."""
    n = A.shape[0]
    best, best_res = P, np.linalg.norm(care_residual(A, P, mask))
    for _ in range(steps):
        Acl = A + mask[:, None] * P
        # Acl^T X + X Acl = I + P B P
        rhs = np.eye(n) + (P * mask) @ P
        X = linalg.solve_continuous_lyapunov(Acl.T, rhs)
        X = 0.5 * (X + X.T)
        r = np.linalg.norm(care_residual(A, X, mask))
        if r < best_res:
            best, best_res = X, r
        P = X
    return best


def solve_h_equation(fam: RiccatiFamily, psi_bar, tg: TimeGrid | None = None) -> Trajectory:
    """Backward ``h_k = (I - dt P_k B) L^{-T} h_{k+1}``, ``h_M = -psi_bar``.

    This is the discrete form of ``-h' + (A^T + E(T-t) chi) h = 0``.
    """
    tg = tg or fam.timegrid
    if tg != fam.timegrid:
        raise DimensionError("h-equation time grid differs from the Riccati family's")
    lu = fam.operator.shifted(tg.dt)
    mask, dt = fam.mask, tg.dt
    h = np.empty((tg.n_steps + 1, fam.operator.n))
    h[-1] = -np.asarray(psi_bar, dtype=float)
    for k in range(tg.n_steps - 1, -1, -1):
        v = lu.solve(h[k + 1], transpose=True)
        h[k] = v - dt * fam.P[k] @ (mask * v)
    return Trajectory(h, tg, fam.grid)


def synthesize_feedback(fam: RiccatiFamily, steady: SteadySolution, h: Trajectory, y0,
                        y_d=None) -> OptimalSolution:
    """Closed-loop integration of ``f = f_bar - chi (E(T-t)(y - y_bar) + h)``.

    The deviations ``y - y_bar`` and ``f - f_bar`` are integrated directly and
    returned alongside, so their decay is resolved far below the size of ``y``.
    """
    tg, op, mask = fam.timegrid, fam.operator, fam.mask
    lu = op.shifted(tg.dt)
    dt, n, M = tg.dt, op.n, tg.n_steps
    m = np.empty((M + 1, n))
    g = np.empty((M + 1, n))
    m[0] = np.asarray(y0, dtype=float) - steady.y_bar
    for k in range(M + 1):
        g[k] = -mask * (fam.P[k] @ m[k] + h.values[k])
        if k < M:
            m[k + 1] = lu.solve(m[k] + dt * g[k])
    y = steady.y_bar + m
    f = steady.f_bar + g
    psi = steady.psi_bar + np.einsum("kij,kj->ki", fam.P, m) + h.values
    if y_d is None:
        y_d = steady.y_bar - op.T.matvec(steady.psi_bar)
    dx = fam.grid.dx
    cost = 0.5 * dt * dx * float(np.sum(f[:-1] ** 2) + np.sum((y[1:] - y_d) ** 2))
    grid = fam.grid
    return OptimalSolution(Trajectory(y, tg, grid), Trajectory(f, tg, grid), Trajectory(psi, tg, grid),
                           cost, y_dev=m, f_dev=g)


def riccati_gap(fam: RiccatiFamily, stat: StationaryRiccati) -> np.ndarray:
    """``g_k = ||E(t_k) - E_hat||`` with ``E(t_k) = P[M - k]``, in the L2 operator norm.

    The mass-lumped weight is uniform, so the weighted and Euclidean spectral
    norms coincide.
    """
    M = fam.timegrid.n_steps
    out = np.empty(M + 1)
    for k in range(M + 1):
        D = fam.P[M - k] - stat.P_hat
        out[k] = np.max(np.abs(linalg.eigvalsh(D)))
    return out


def value_function(fam: RiccatiFamily, y0, k: int = 0) -> float:
    """Optimal null-target cost from ``t_k``: ``1/2 (P_k y0, y0)`` in the lumped L2 product."""
    y0 = np.asarray(y0, dtype=float)
    return 0.5 * fam.grid.dx * float(y0 @ fam.P[k] @ y0)

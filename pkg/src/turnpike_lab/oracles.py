"""Closed-form and brute-force reference checks.

Every fixture builds its own small problem, compares the production code
against an independent route and returns an :class:`OracleResult`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .grid_coeff import build_grid, constant, homogenized_constant, make_window, sample_coefficients, sin2_recipe
from .hum import dense_penalized_control, penalized_null_control
from .ocp import (
    OCPConfig,
    evaluate_cost,
    hessian_apply,
    reduced_gradient,
    solve_evolutive_ocp,
    solve_kkt_dense,
    solve_steady_ocp,
)
from .operators import assemble, l2_norm
from .pde_solvers import TimeGrid, solve_forward
from .riccati import solve_are, solve_dre, value_function


@dataclass
class OracleResult:
    name: str
    error: float
    tol: float
    seconds: float = 0.0
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tol)

    def row(self) -> dict:
        return {"name": self.name, "error": self.error, "tol": self.tol, "passed": self.passed,
                "seconds": round(self.seconds, 3), "detail": self.detail}


def _rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    den = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / den) if den > 0 else float(np.linalg.norm(a - b))


def _laplacian_cfg(n_cells: int, T: float, n_steps: int, y0, y_d, window=(0.0, 1.0), a=None, eps=None):
    grid = build_grid(n_cells)
    cf = sample_coefficients(a or constant(1.0), grid, epsilon=eps)
    x = grid.interior
    y0v = y0(x) if callable(y0) else np.full(x.size, float(y0))
    ydv = y_d(x) if callable(y_d) else np.full(x.size, float(y_d))
    return OCPConfig(grid, TimeGrid(T, n_steps), cf, make_window(grid, *window), y0v, ydv, cg_tol=1e-12,
                     cg_max_iter=2000)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def homogenized_constant_oracle() -> OracleResult:
    """Harmonic mean of ``sin^2(pi s) + 1/2``: ``(int 1/a)^{-1} = sqrt(1/2 * 3/2)``."""
    val = homogenized_constant(sin2_recipe(1.0))
    exact = np.sqrt(0.75)
    return OracleResult("homogenized_constant", abs(val - 0.86603), 1e-4, detail=f"a_h={val:.10f} exact={exact:.10f}")


@_timed
def are_spectral_oracle(n_cells: int = 60) -> OracleResult:
    """CARE for the Laplacian with full control: ``P = V diag(-l + sqrt(l^2 + 1)) V^T``."""
    cfg = _laplacian_cfg(n_cells, 1.0, 2, 0.0, 0.0)
    A = cfg.operator.to_dense()
    lam, V = np.linalg.eigh(0.5 * (A + A.T))
    exact = (V * (-lam + np.sqrt(lam**2 + 1))) @ V.T
    stat = solve_are(cfg.operator, cfg.window)
    return OracleResult("are_spectral", _rel(stat.P_hat, exact), 1e-8, detail=f"n={cfg.grid.n_interior}")


@_timed
def steady_modal_oracle(n_cells: int = 200) -> OracleResult:
    """Steady optimum with full control solves ``(A^2 + I) y = y_d``; compared modally."""
    cfg = _laplacian_cfg(n_cells, 1.0, 2, 0.0, lambda x: 1.0 + np.sin(3 * np.pi * x))
    st = solve_steady_ocp(cfg)
    A = cfg.operator.to_dense()
    lam, V = np.linalg.eigh(A)
    exact = V @ ((V.T @ cfg.y_d) / (lam**2 + 1))
    return OracleResult("steady_modal", _rel(st.y_bar, exact), 1e-6)


@_timed
def evolutive_cost_oracle(n_cells: int = 200, T: float = 5.0, n_steps: int = 10000) -> OracleResult:
    """Null target, ``y0 = sin(pi x)``: cost tends to ``p1/2 |y0|^2``, ``p1 = -l1 + sqrt(l1^2 + 1)``.

    ``l1`` is the first eigenvalue of the discrete operator, so the remaining
    error is the time discretisation, first order in ``dt``.
    """
    cfg = _laplacian_cfg(n_cells, T, n_steps, lambda x: np.sin(np.pi * x), 0.0)
    dx = cfg.grid.dx
    lam1 = 4.0 / dx**2 * np.sin(np.pi * dx / 2) ** 2
    p1 = -lam1 + np.sqrt(lam1**2 + 1)
    expected = 0.5 * p1 * l2_norm(cfg.y0, cfg.grid) ** 2
    sol = solve_evolutive_ocp(cfg)
    err = abs(sol.cost - expected) / expected
    return OracleResult("evolutive_cost", err, 5e-3, detail=f"cost={sol.cost:.6e} expected={expected:.6e} dt={cfg.timegrid.dt:g}")


def small_problem(n_cells: int = 10, n_steps: int = 8, T: float = 1.0, window=(0.2, 0.8)) -> OCPConfig:
    """N=9 interior nodes, oscillating ``a``, advection and reaction, partial control."""
    grid = build_grid(n_cells)
    a = sin2_recipe(0.5)
    cf = sample_coefficients(a, grid, constant(0.3), constant(0.2), epsilon=0.5)
    x = grid.interior
    return OCPConfig(grid, TimeGrid(T, n_steps), cf, make_window(grid, *window), x * (x - 1) * 4,
                     np.ones_like(x), cg_tol=1e-13, cg_max_iter=1000)


@_timed
def kkt_dense_oracle() -> OracleResult:
    """CG optimum against the directly solved discrete optimality system (N=9, M=8)."""
    cfg = small_problem()
    cg = solve_evolutive_ocp(cfg)
    kkt = solve_kkt_dense(cfg)
    err = max(float(np.max(np.abs(cg.y.values - kkt.y.values))),
              float(np.max(np.abs(cg.f.values - kkt.f.values))),
              float(np.max(np.abs(cg.psi.values - kkt.psi.values))))
    return OracleResult("kkt_dense", err, 1e-9, detail=f"cg iterations={cg.iterations}")


@_timed
def gradient_fd_oracle(seed: int = 0, pairs: int = 10) -> OracleResult:
    """Central differences of the cost against the adjoint gradient on random directions."""
    cfg = _laplacian_cfg(40, 0.5, 30, lambda x: x * (1 - x), 1.0, window=(0.25, 0.7), a=sin2_recipe(0.2), eps=0.2)
    rng = np.random.default_rng(seed)
    dt, dx = cfg.timegrid.dt, cfg.grid.dx
    shape = (cfg.timegrid.n_steps + 1, cfg.grid.n_interior)
    worst = 0.0
    for _ in range(pairs):
        f = rng.standard_normal(shape)
        v = rng.standard_normal(shape)
        f[-1] = v[-1] = 0.0
        h = 1e-3
        fd = (evaluate_cost(f + h * v, cfg) - evaluate_cost(f - h * v, cfg)) / (2 * h)
        g = reduced_gradient(f, cfg).values
        ad = float(np.sum(g[:-1] * v[:-1]) * dt * dx)
        worst = max(worst, abs(fd - ad) / max(abs(ad), 1e-300))
    return OracleResult("gradient_fd", worst, 1e-6, detail=f"{pairs} random pairs, seed {seed}")


@_timed
def hessian_symmetry_oracle(seed: int = 0, pairs: int = 10) -> OracleResult:
    cfg = _laplacian_cfg(40, 0.5, 30, 0.0, 0.0, window=(0.25, 0.7), a=sin2_recipe(0.2), eps=0.2)
    rng = np.random.default_rng(seed + 1)
    shape = (cfg.timegrid.n_steps + 1, cfg.grid.n_interior)
    w = cfg.timegrid.dt * cfg.grid.dx
    worst = 0.0
    for _ in range(pairs):
        f = rng.standard_normal(shape)
        g = rng.standard_normal(shape)
        f[-1] = g[-1] = 0.0
        a = float(np.sum(hessian_apply(f, cfg) * g) * w)
        b = float(np.sum(f * hessian_apply(g, cfg)) * w)
        worst = max(worst, abs(a - b) / max(abs(a), abs(b)))
    return OracleResult("hessian_symmetry", worst, 1e-10)


@_timed
def riccati_value_oracle() -> OracleResult:
    """Null-target optimal cost equals ``1/2 (P_0 y0, y0)`` from the discrete Riccati family."""
    cfg = _laplacian_cfg(30, 2.0, 40, lambda x: np.sin(np.pi * x) + x * (1 - x), 0.0,
                         window=(0.1, 0.6), a=sin2_recipe(0.25), eps=0.25)
    sol = solve_evolutive_ocp(cfg)
    fam = solve_dre(cfg.operator, cfg.window, cfg.timegrid)
    v = value_function(fam, cfg.y0)
    return OracleResult("riccati_value", abs(v - sol.cost) / sol.cost, 1e-9)


@_timed
def discrete_are_oracle() -> OracleResult:
    """Stationary discrete Riccati: DARE solve against marching the recursion to its fixed point."""
    grid = build_grid(30)
    cf = sample_coefficients(sin2_recipe(0.25), grid, epsilon=0.25)
    win = make_window(grid, 0.2, 0.7)
    op = assemble(cf, grid, window=win)
    a = solve_are(op, win, dt=0.05, method="algebraic")
    b = solve_are(op, win, dt=0.05, method="iterate")
    return OracleResult("discrete_are", _rel(a.P_hat, b.P_hat), 1e-9)


@_timed
def forward_mode_oracle() -> OracleResult:
    """Implicit Euler on an eigenmode: ``y_k = (1 + dt l1)^{-k} y_0``."""
    grid = build_grid(50)
    op = assemble(sample_coefficients(constant(1.0), grid), grid)
    tg = TimeGrid(1.0, 20)
    y0 = np.sin(np.pi * grid.interior)
    lam1 = 4.0 / grid.dx**2 * np.sin(np.pi * grid.dx / 2) ** 2
    y = solve_forward(op, y0, None, tg).values
    exact = np.outer((1 + tg.dt * lam1) ** -np.arange(tg.n_steps + 1.0), y0)
    return OracleResult("forward_mode", float(np.max(np.abs(y - exact))), 1e-12)


@_timed
def hum_dense_oracle() -> OracleResult:
    """Penalised null control by dual CG against stacked least squares."""
    grid = build_grid(10)
    cf = sample_coefficients(sin2_recipe(0.5), grid, epsilon=0.5)
    win = make_window(grid, 0.3, 0.7)
    op = assemble(cf, grid, window=win)
    tg = TimeGrid(0.5, 8)
    y0 = grid.interior * (grid.interior - 1)
    res = penalized_null_control(op, win, y0, tg, 1e-3, cg_tol=1e-14)
    dense = dense_penalized_control(op, win, y0, tg, 1e-3)
    return OracleResult("hum_dense", float(np.max(np.abs(res.control.values - dense))), 1e-9,
                        detail="N=9, M=8")


FIXTURES = [
    homogenized_constant_oracle,
    are_spectral_oracle,
    steady_modal_oracle,
    evolutive_cost_oracle,
    kkt_dense_oracle,
    gradient_fd_oracle,
    hessian_symmetry_oracle,
    riccati_value_oracle,
    discrete_are_oracle,
    forward_mode_oracle,
    hum_dense_oracle,
]


def run_all(seed: int = 0) -> list[OracleResult]:
    out = []
    for fx in FIXTURES:
        if fx in (gradient_fd_oracle, hessian_symmetry_oracle):
            out.append(fx(seed=seed))
        else:
            out.append(fx())
    return out

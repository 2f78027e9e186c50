import numpy as np
import pytest

from turnpike_lab.grid_coeff import build_grid, constant, make_window, sample_coefficients, sin2_recipe
from turnpike_lab.ocp import OCPConfig
from turnpike_lab.pde_solvers import TimeGrid


def make_cfg(n_cells=40, T=1.0, n_steps=40, eps=0.25, window=(0.0, 1.0), b=0.0, p=0.0,
             y0=lambda x: x * (x - 1), y_d=1.0, **kw):
    grid = build_grid(n_cells)
    a = constant(1.0) if eps is None else sin2_recipe(eps)
    cf = sample_coefficients(a, grid, constant(b), constant(p), epsilon=eps)
    x = grid.interior
    y0v = y0(x) if callable(y0) else np.full(x.size, float(y0))
    ydv = y_d(x) if callable(y_d) else np.full(x.size, float(y_d))
    return OCPConfig(grid, TimeGrid(T, n_steps), cf, make_window(grid, *window), y0v, ydv, **kw)


@pytest.fixture
def cfg():
    return make_cfg(cg_tol=1e-12)


@pytest.fixture
def partial_cfg():
    return make_cfg(window=(0.2, 0.7), b=0.4, p=0.1, cg_tol=1e-12)


# criterion number -> (passed, message); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {msg}")

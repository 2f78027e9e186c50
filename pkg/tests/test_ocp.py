import numpy as np
import pytest

from conftest import make_cfg
from turnpike_lab.exceptions import ConfigError, ConvergenceError, DimensionError, SingularSystemError
from turnpike_lab.grid_coeff import build_grid, constant, make_window, sample_coefficients
from turnpike_lab.ocp import (
    OCPConfig,
    conjugate_gradient,
    evaluate_cost,
    hessian_apply,
    reduced_gradient,
    solve_evolutive_ocp,
    solve_kkt_dense,
    solve_steady_ocp,
)
from turnpike_lab.oracles import small_problem
from turnpike_lab.pde_solvers import TimeGrid


def test_kkt_oracle_every_variable():
    cfg = small_problem()
    assert cfg.grid.n_interior == 9 and cfg.timegrid.n_steps == 8
    cg, kkt = solve_evolutive_ocp(cfg), solve_kkt_dense(cfg)
    for a, b in [(cg.y, kkt.y), (cg.f, kkt.f), (cg.psi, kkt.psi)]:
        np.testing.assert_allclose(a.values, b.values, atol=1e-9, rtol=0)
    assert cg.cost == pytest.approx(kkt.cost, rel=1e-10)


def test_optimality_relations(partial_cfg):
    sol = solve_evolutive_ocp(partial_cfg)
    np.testing.assert_allclose(sol.f.values, -partial_cfg.mask * sol.psi.values, atol=1e-15)
    np.testing.assert_array_equal(sol.psi.values[-1], 0.0)
    assert sol.grad_norm < 1e-9
    assert sol.internal_cost == pytest.approx(sol.cost, rel=1e-9)


def test_optimum_beats_perturbations(partial_cfg):
    sol = solve_evolutive_ocp(partial_cfg)
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = rng.standard_normal(sol.f.values.shape) * 1e-2
        assert evaluate_cost(sol.f.values + v, partial_cfg) > sol.cost


def test_gradient_central_differences(partial_cfg):
    rng = np.random.default_rng(3)
    f = rng.standard_normal((partial_cfg.timegrid.n_steps + 1, partial_cfg.grid.n_interior))
    v = rng.standard_normal(f.shape)
    f[-1] = v[-1] = 0
    h = 1e-4
    fd = (evaluate_cost(f + h * v, partial_cfg) - evaluate_cost(f - h * v, partial_cfg)) / (2 * h)
    g = reduced_gradient(f, partial_cfg).values
    w = partial_cfg.timegrid.dt * partial_cfg.grid.dx
    assert fd == pytest.approx(np.sum(g * v) * w, rel=1e-7)


def test_hessian_is_identity_plus_psd(partial_cfg):
    rng = np.random.default_rng(5)
    u = rng.standard_normal((partial_cfg.timegrid.n_steps + 1, partial_cfg.grid.n_interior))
    u[-1] = 0
    w = partial_cfg.timegrid.dt * partial_cfg.grid.dx
    assert np.sum(hessian_apply(u, partial_cfg) * u) * w >= np.sum(u * u) * w


def test_steady_residual_and_relations(partial_cfg):
    st = solve_steady_ocp(partial_cfg)
    op, mask = partial_cfg.operator, partial_cfg.mask
    assert st.residual < 1e-10
    np.testing.assert_allclose(op @ st.y_bar, st.f_bar, atol=1e-9)
    np.testing.assert_allclose(op.T @ st.psi_bar, st.y_bar - partial_cfg.y_d, atol=1e-9)
    np.testing.assert_allclose(st.f_bar, -mask * st.psi_bar)


def test_long_horizon_middle_matches_steady():
    cfg = make_cfg(T=20.0, n_steps=200, cg_tol=1e-12)
    sol, st = solve_evolutive_ocp(cfg), solve_steady_ocp(cfg)
    mid = cfg.timegrid.n_steps // 2
    assert np.max(np.abs(sol.y[mid] - st.y_bar)) < 1e-8


def test_cg_iteration_cap_raises():
    A = np.diag(np.linspace(1, 100, 50))
    with pytest.raises(ConvergenceError) as ei:
        conjugate_gradient(lambda v: A @ v, np.ones(50), np.dot, 1e-14, 3)
    assert ei.value.iterations == 3 and ei.value.residual > 0


def test_cg_solves_spd():
    rng = np.random.default_rng(0)
    Q = rng.standard_normal((20, 20))
    A = Q @ Q.T + 20 * np.eye(20)
    b = rng.standard_normal(20)
    x, Ax, its, rel = conjugate_gradient(lambda v: A @ v, b, np.dot, 1e-12, 100)
    np.testing.assert_allclose(A @ x, b, atol=1e-9)
    assert its <= 20


def test_zero_rhs():
    x, _, its, _ = conjugate_gradient(lambda v: v, np.zeros(4), np.dot, 1e-8, 10)
    assert its == 0 and not x.any()


def test_singular_operator_is_refused():
    g = build_grid(10)
    cf = sample_coefficients(constant(1.0), g)
    # reaction that cancels the first Dirichlet eigenvalue exactly
    lam1 = 4 / g.dx**2 * np.sin(np.pi * g.dx / 2) ** 2
    cf = type(cf)(cf.a_interface, cf.b_node, np.full(g.n_interior, -lam1), cf.a0, None, g)
    cfg = OCPConfig(g, TimeGrid(1.0, 10), cf, make_window(g), np.zeros(9), np.ones(9))
    with pytest.raises(SingularSystemError):
        solve_steady_ocp(cfg)


def test_config_validation():
    g = build_grid(10)
    cf = sample_coefficients(constant(1.0), g)
    with pytest.raises(DimensionError):
        OCPConfig(g, TimeGrid(1, 4), cf, None, np.zeros(5), np.zeros(9))
    with pytest.raises(ConfigError):
        OCPConfig(g, TimeGrid(1, 4), cf, None, np.zeros(9), np.zeros((2, 9)))
    with pytest.raises(ConfigError):
        OCPConfig(g, TimeGrid(1, 4), cf, None, np.zeros(9), np.zeros(9), cg_tol=0)


def test_dense_kkt_size_limit():
    with pytest.raises(DimensionError):
        solve_kkt_dense(make_cfg(n_cells=100, n_steps=100))


def test_cost_trivia():
    cfg = make_cfg(n_cells=20, y0=0.0, y_d=0.0, eps=None)
    zero = np.zeros((cfg.timegrid.n_steps + 1, cfg.grid.n_interior))
    assert evaluate_cost(zero, cfg) == 0.0
    cfg1 = make_cfg(n_cells=20, T=1.0, y0=0.0, y_d=1.0, eps=None)
    assert evaluate_cost(zero, cfg1) == pytest.approx(0.5 * 19 / 20, rel=1e-12)


def test_uncontrolled_sine_cost():
    cfg = make_cfg(n_cells=200, T=2.0, n_steps=400, eps=None, y0=lambda x: np.sin(np.pi * x), y_d=0.0)
    zero = np.zeros((401, 199))
    assert evaluate_cost(zero, cfg) == pytest.approx(1 / (8 * np.pi**2), rel=0.03)


def test_null_data_gives_null_control():
    cfg = make_cfg(n_cells=20, y0=0.0, y_d=0.0)
    sol = solve_evolutive_ocp(cfg)
    assert sol.cost == 0.0 and sol.iterations == 0 and not sol.f.values.any()
    st = solve_steady_ocp(cfg)
    assert not (st.y_bar.any() or st.f_bar.any() or st.psi_bar.any())


def test_steady_first_mode_coefficient():
    cfg = make_cfg(n_cells=200, eps=None, y_d=1.0)
    st = solve_steady_ocp(cfg)
    s = np.sin(np.pi * cfg.grid.interior)
    lam1 = 4 / cfg.grid.dx**2 * np.sin(np.pi * cfg.grid.dx / 2) ** 2
    # discrete sine modes are exact eigenvectors; coefficients w.r.t. sin(pi x)
    c_bar = (st.y_bar @ s) / (s @ s)
    c_d = (cfg.y_d @ s) / (s @ s)
    assert c_bar == pytest.approx(c_d / (lam1**2 + 1), rel=1e-6)
    assert c_bar == pytest.approx((4 / np.pi) / (np.pi**4 + 1), rel=1e-3)


def test_optimality_closure_uniform_in_time(partial_cfg):
    sol = solve_evolutive_ocp(partial_cfg)
    resid = sol.f.values + partial_cfg.mask * sol.psi.values
    assert np.abs(resid).max() <= 10 * partial_cfg.cg_tol * np.abs(partial_cfg.y_d).max()


def test_null_target_value_nondecreasing_in_horizon():
    costs = [solve_evolutive_ocp(make_cfg(n_cells=30, T=T, n_steps=int(20 * T), y_d=0.0, window=(0.2, 0.6),
                                          cg_tol=1e-12)).cost for T in (0.5, 1.0, 2.0, 4.0)]
    assert np.all(np.diff(costs) >= 0)

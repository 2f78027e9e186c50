import numpy as np
import pytest

from turnpike_lab.exceptions import ConfigError, EllipticityError, ResolutionError
from turnpike_lab.grid_coeff import (
    CoefficientRecipe,
    arithmetic_mean,
    build_grid,
    constant,
    ellipticity_floor,
    homogenized_constant,
    make_window,
    sample_coefficients,
    sin2_recipe,
)


def test_grid_geometry():
    g = build_grid(10)
    assert g.dx == pytest.approx(0.1)
    assert g.n_interior == 9
    np.testing.assert_allclose(g.interior, np.arange(1, 10) / 10)


@pytest.mark.parametrize("n", [3, 0, -2, 4.5])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(ConfigError):
        build_grid(n)


def test_sin2_harmonic_mean_closed_form():
    # 1/(sin^2 + c) integrates to 1/sqrt(c (1 + c))
    assert homogenized_constant(sin2_recipe()) == pytest.approx(np.sqrt(0.75), rel=1e-12)
    assert homogenized_constant(sin2_recipe(offset=2.0)) == pytest.approx(np.sqrt(6.0), rel=1e-12)


def test_piecewise_harmonic_mean():
    r = CoefficientRecipe("piecewise_periodic", {"values": [1.0, 4.0], "breakpoints": [0.0, 0.5]}, 0.1)
    assert homogenized_constant(r) == pytest.approx(1.6, rel=1e-12)
    assert arithmetic_mean(r) == pytest.approx(2.5, rel=1e-12)


def test_homogenized_is_below_arithmetic_mean():
    r = sin2_recipe(0.1)
    assert homogenized_constant(r) < arithmetic_mean(r)
    assert arithmetic_mean(r) == pytest.approx(1.0, rel=1e-12)


def test_constant_coefficient_is_exact_on_interfaces():
    cf = sample_coefficients(constant(2.5), build_grid(20))
    np.testing.assert_allclose(cf.a_interface, 2.5)
    assert cf.epsilon is None


def test_cell_averages_converge_to_harmonic_mean():
    # one period per cell: every cell average equals a_h
    cf = sample_coefficients(sin2_recipe(0.05), build_grid(20), epsilon=0.05)
    # 32 Gauss points per period leave a ~6e-8 quadrature error
    np.testing.assert_allclose(cf.a_interface, np.sqrt(0.75), rtol=1e-6)


def test_piecewise_breakpoints_are_integrated_exactly():
    r = CoefficientRecipe("piecewise_periodic", {"values": [1.0, 4.0], "breakpoints": [0.0, 0.3]}, 1.0)
    g = build_grid(10)
    cf = sample_coefficients(r, g)
    # cell [0.2, 0.3] has a = 1, cell [0.3, 0.4] has a = 4, none straddle
    assert cf.a_interface[2] == pytest.approx(1.0)
    assert cf.a_interface[3] == pytest.approx(4.0)
    r2 = CoefficientRecipe("piecewise_periodic", {"values": [1.0, 4.0], "breakpoints": [0.0, 0.25]}, 1.0)
    cf2 = sample_coefficients(r2, g)
    # cell [0.2, 0.3] half 1 half 4: harmonic mean 1.6
    assert cf2.a_interface[2] == pytest.approx(1.6, rel=1e-13)


def test_epsilon_override():
    cf = sample_coefficients(sin2_recipe(1.0), build_grid(50), epsilon=0.1)
    assert cf.epsilon == 0.1


def test_underresolved_quadrature_is_refused():
    with pytest.raises(ResolutionError):
        sample_coefficients(sin2_recipe(0.005), build_grid(50), panels_per_cell=1)
    cf = sample_coefficients(sin2_recipe(0.005), build_grid(50), panels_per_cell=1, allow_underresolved=True)
    assert cf.a_interface.size == 50


def test_ellipticity_violation():
    bad = sin2_recipe(0.1, offset=-0.2)
    assert ellipticity_floor(bad) < 0
    with pytest.raises(EllipticityError):
        sample_coefficients(bad, build_grid(20))
    with pytest.raises(EllipticityError):
        homogenized_constant(bad)


def test_ellipticity_floor_value():
    assert ellipticity_floor(sin2_recipe(0.01)) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("d", [
    {"kind": "bogus"},
    {"kind": "constant", "params": {}},
    {"kind": "piecewise_periodic", "params": {"values": [1], "breakpoints": [0.2]}},
    {"kind": "tabulated", "params": {"x": [0.0], "values": [1.0]}},
    {"kind": "periodic_sin2", "epsilon": -1.0},
])
def test_bad_recipes(d):
    with pytest.raises(ConfigError):
        CoefficientRecipe.from_dict(d)


def test_recipe_round_trip():
    r = sin2_recipe(0.05)
    assert CoefficientRecipe.from_dict(r.to_dict()) == r
    assert CoefficientRecipe.from_dict(3) == constant(3.0)


def test_tabulated_recipe():
    r = CoefficientRecipe("tabulated", {"x": [0, 1], "values": [1, 3]})
    assert r(0.5) == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        homogenized_constant(r)
    cf = sample_coefficients(r, build_grid(4))
    # harmonic mean of the linear profile on [0, 1/4]: 0.5 / ln(1.5)
    assert cf.a_interface[0] == pytest.approx(0.5 / np.log(1.5), rel=1e-7)


def test_window_mask():
    g = build_grid(10)
    w = make_window(g, 0.3, 0.7)
    np.testing.assert_array_equal(w.indices, [2, 3, 4, 5, 6])
    assert make_window(g).is_full
    with pytest.raises(ConfigError):
        make_window(g, 0.7, 0.3)
    with pytest.raises(ConfigError):
        make_window(g, 0.31, 0.39)


def test_small_and_paper_grids():
    np.testing.assert_allclose(build_grid(4).nodes, [0, 0.25, 0.5, 0.75, 1])
    assert build_grid(421).dx == 1 / 421


def test_constant_and_two_phase_homogenized():
    assert homogenized_constant(constant(2.0)) == 2.0
    r = CoefficientRecipe("piecewise_periodic", {"values": [1.0, 3.0], "breakpoints": [0.0, 0.5]}, 0.2)
    assert homogenized_constant(r) == pytest.approx(1.5, rel=1e-12)


def test_negative_linear_coefficient():
    with pytest.raises(EllipticityError):
        sample_coefficients(CoefficientRecipe("tabulated", {"x": [0, 1], "values": [-1, 0]}), build_grid(10))


def test_small_epsilon_cell_averages_tend_to_sqrt3_over_2():
    g = build_grid(50)
    errs = [np.abs(sample_coefficients(sin2_recipe(e), g, epsilon=e).a_interface - np.sqrt(0.75)).max()
            for e in (0.3, 0.007, 0.005)]
    # partial periods leave O(eps/dx); whole periods per cell are exact up to quadrature
    assert errs[1] < 0.05 * errs[0]
    assert errs[2] < 1e-6


def test_sampling_is_bit_deterministic():
    a = sample_coefficients(sin2_recipe(0.01), build_grid(421))
    b = sample_coefficients(sin2_recipe(0.01), build_grid(421))
    assert a.a_interface.tobytes() == b.a_interface.tobytes()


def test_aligned_piecewise_averaging_exact():
    # phases of length 0.05 on cells of width 0.025: every cell lies in one phase
    r = CoefficientRecipe("piecewise_periodic", {"values": [2.0, 5.0], "breakpoints": [0.0, 0.5]}, 0.1)
    cf = sample_coefficients(r, build_grid(40))
    near = np.minimum(np.abs(cf.a_interface - 2.0), np.abs(cf.a_interface - 5.0))
    assert near.max() < 1e-12

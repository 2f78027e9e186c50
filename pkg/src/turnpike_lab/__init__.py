"""Long-horizon LQ control of the 1-D heat equation with oscillating coefficients."""

__version__ = "0.1.0"

from .config import ExperimentConfig
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    EllipticityError,
    ResolutionError,
    SingularSystemError,
    TurnpikeLabError,
)
from .grid_coeff import (
    CoefficientRecipe,
    build_grid,
    constant,
    homogenized_constant,
    make_window,
    sample_coefficients,
    sin2_recipe,
)
from .ocp import OCPConfig, solve_evolutive_ocp, solve_kkt_dense, solve_steady_ocp
from .operators import assemble, l2_inner, l2_norm
from .pde_solvers import TimeGrid, Trajectory, solve_backward, solve_forward
from .riccati import solve_are, solve_dre, solve_h_equation, synthesize_feedback
from .analysis import run_turnpike
from .hum import penalized_null_control

__all__ = [
    "CoefficientRecipe", "ConfigError", "ConvergenceError", "DimensionError", "EllipticityError",
    "ExperimentConfig", "OCPConfig", "ResolutionError", "SingularSystemError", "TimeGrid", "Trajectory",
    "TurnpikeLabError", "assemble", "build_grid", "constant", "homogenized_constant", "l2_inner", "l2_norm",
    "make_window", "penalized_null_control", "run_turnpike", "sample_coefficients", "sin2_recipe",
    "solve_are", "solve_backward", "solve_dre", "solve_evolutive_ocp", "solve_forward",
    "solve_h_equation", "solve_kkt_dense", "solve_steady_ocp", "synthesize_feedback",
]

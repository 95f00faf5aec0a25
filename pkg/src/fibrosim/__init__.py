"""Three-phase mixture model of tumor cells, healthy cells and extracellular matrix."""
from .model import (
    CellKinetics,
    ModelParams,
    Mollifier,
    RateFunction,
    VolumeState,
    check_gamma_ordering,
    default_params,
    enzyme_concentration,
    growth_rate,
    matrix_rate,
    validate_params,
)
from .ode import Trajectory, continuous_dependence_check, gronwall_bound, integrate_picard, integrate_rk, rhs
from .equilibria import (
    EquilibriumReport,
    classify_stability,
    find_matrix_root,
    jacobian,
    mixed_equilibrium_scan,
    nontrivial_equilibrium,
    trivial_equilibrium,
)
from .portrait import basin_boundary, classify_initial, gamma_roots, separatrix_test, sweep_grid
from .pde import ConstitutiveLaw, FieldState, Grid1D, cell_flux, invasion_initial, simulate, step, wave_speed
from .config import Scenario, parse_config, write_config

__version__ = "0.1.0"

__all__ = [
    "CellKinetics", "ModelParams", "Mollifier", "RateFunction", "VolumeState",
    "check_gamma_ordering", "default_params", "enzyme_concentration", "growth_rate", "matrix_rate",
    "validate_params",
    "Trajectory", "continuous_dependence_check", "gronwall_bound", "integrate_picard", "integrate_rk", "rhs",
    "EquilibriumReport", "classify_stability", "find_matrix_root", "jacobian", "mixed_equilibrium_scan",
    "nontrivial_equilibrium", "trivial_equilibrium",
    "basin_boundary", "classify_initial", "gamma_roots", "separatrix_test", "sweep_grid",
    "ConstitutiveLaw", "FieldState", "Grid1D", "cell_flux", "invasion_initial", "simulate", "step", "wave_speed",
    "Scenario", "parse_config", "write_config",
]

"""MAP estimation for ordinary differential equations under Gauss-Markov priors."""

from .bench import (
    ConvergenceRow,
    ExperimentConfig,
    build_decimated_mesh,
    dump_solution,
    fill_distance,
    fit_rate,
    read_rows,
    run_experiment,
    sup_errors,
    write_rows,
)
from .exceptions import (
    ConfigError,
    NoStationaryDistributionError,
    OdeMapError,
    RateFitError,
    ReferenceFailureError,
    SingularInnovationError,
    SingularMatrixError,
    SingularPredictionError,
)
from .inference import (
    AffineObservation,
    GaussianState,
    SmoothedTrajectory,
    UpdateDiagnostics,
    init_update,
    predict,
    smooth,
    update,
)
from .linalg import matrix_exponential
from .priors import (
    StateSpaceModel,
    TransitionModel,
    build_ioup,
    build_iwp,
    build_matern,
    discretize,
    stationary_covariance,
)
from .problems import NamedProblem, fitzhugh_nagumo, get_problem, logistic, nonsmooth, reference_on_grid, riccati
from .solvers import (
    ODEProblem,
    Solution,
    SolverConfig,
    calibrate_sigma2,
    constraint_residuals,
    map_objective,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AffineObservation",
    "ConfigError",
    "ConvergenceRow",
    "ExperimentConfig",
    "GaussianState",
    "NamedProblem",
    "NoStationaryDistributionError",
    "ODEProblem",
    "OdeMapError",
    "RateFitError",
    "ReferenceFailureError",
    "SingularInnovationError",
    "SingularMatrixError",
    "SingularPredictionError",
    "SmoothedTrajectory",
    "Solution",
    "SolverConfig",
    "StateSpaceModel",
    "TransitionModel",
    "UpdateDiagnostics",
    "build_decimated_mesh",
    "build_ioup",
    "build_iwp",
    "build_matern",
    "calibrate_sigma2",
    "constraint_residuals",
    "discretize",
    "dump_solution",
    "fill_distance",
    "fit_rate",
    "fitzhugh_nagumo",
    "get_problem",
    "init_update",
    "logistic",
    "map_objective",
    "matrix_exponential",
    "nonsmooth",
    "predict",
    "read_rows",
    "reference_on_grid",
    "riccati",
    "run_experiment",
    "smooth",
    "solve",
    "stationary_covariance",
    "sup_errors",
    "update",
    "write_rows",
]

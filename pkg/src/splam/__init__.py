"""Sparse partially linear additive models."""

from .estimator import SPLAMClassifier, SPLAMPath, SPLAMRegressor, SplineBasis
from .io import DataError, ModelBundle, read_csv, read_svmlight
from .objective import Penalty, Problem, feature_status, penalty
from .path import (
    THEORY_ALPHA,
    PathGrid,
    fit_grid,
    fit_path,
    lambda_init,
    lambda_max,
    select_model,
)
from .prox import project_ball, prox_block, prox_full
from .solvers import (
    FitResult,
    SolverConfig,
    fit,
    fit_bcd,
    fit_bcgd,
    fit_fista,
    fit_ista,
    run_active_set,
)
from .spline_basis import BlockDesign, build_design, choose_knots, expand, orthonormalize_block

__version__ = "0.1.0"

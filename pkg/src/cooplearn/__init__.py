"""Cooperative learning: multi-view regression with an agreement penalty."""
from .core import (
    AugmentedSystem,
    CoopFit,
    CoopPath,
    Fitter,
    LassoFitter,
    PairSpec,
    add_paired_rows,
    build_augmented,
    coop_direct_fit,
    coop_iterative_fit,
    coop_objective,
    early_fusion_fit,
    late_fusion_fit,
    predict,
)
from .data import DataError, DataView, MultiViewDataset, load_response, load_view, standardize
from .enet import PenaltySpec, SolverError, coordinate_descent, fit_path, lambda_grid
from .glm import fit_coop_logistic, irls_update
from .selection import CVResult, FoldPlan, adaptive_direct, adaptive_one_at_a_time, cv_coop, make_folds

__version__ = "0.1.0"

"""Joint linked component analysis for multiview data.

Shared (joint) low-rank structure across several data views is estimated
from their pairwise cross-covariances, with a group penalty that selects
the joint rank.
"""

from .data import (
    CrossCovarianceSet,
    DataError,
    DegeneratePairError,
    MultiviewDataset,
    ViewMatrix,
    cross_covariances,
    load_view_csv,
    load_views,
)
from .metrics import BenchmarkRecord, rank_accuracy, run_benchmark, subspace_error
from .model import JointLCAModel, estimated_rank, fidelity, objective, reconstruct_pair
from .selection import CvResult, cross_validate, lambda_grid, one_se_select, select_rank
from .simulation import SimConfig, SimGroundTruth, generate
from .solver import (
    FitTrace,
    SolverOptions,
    fit_penalized,
    initialize,
    orthogonal_procrustes,
    refit,
    update_sigma_group,
)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkRecord",
    "CrossCovarianceSet",
    "CvResult",
    "DataError",
    "DegeneratePairError",
    "FitTrace",
    "JointLCAModel",
    "MultiviewDataset",
    "SimConfig",
    "SimGroundTruth",
    "SolverOptions",
    "ViewMatrix",
    "cross_covariances",
    "cross_validate",
    "estimated_rank",
    "fidelity",
    "fit_penalized",
    "generate",
    "initialize",
    "lambda_grid",
    "load_view_csv",
    "load_views",
    "objective",
    "one_se_select",
    "orthogonal_procrustes",
    "rank_accuracy",
    "reconstruct_pair",
    "refit",
    "run_benchmark",
    "select_rank",
    "subspace_error",
    "update_sigma_group",
]

"""Alternating projections between manifolds, with the Hankel / rank-k instance
for fitting sums of exponentials."""

from .driver import (
    DriverConfig,
    IterationTrace,
    NonFiniteIterateError,
    ProjectablePair,
    RateEstimate,
    alternate_project,
    estimate_rate,
)
from .hankel import (
    AmbiguousTruncationError,
    DegenerateModelError,
    ExpModel,
    RankError,
    exp_signal,
    fit_exponentials,
    hankel_embed,
    hankel_extract,
    rank_project,
    recover_nodes,
    weighted_norm,
)
from .tangent import (
    AngleReport,
    Projector,
    SubspaceBasis,
    classify_point,
    hankel_tangent_projector,
    intersection_tangent_basis,
    rank_tangent_projector,
    rho_project,
    sigma_angle,
)
from .toy import AffineSubspace, ParametricCurve, make_example, project_affine, project_curve

__version__ = "0.1.0"

"""bakerlab: a numerical laboratory for generalized baker transformations.

Exact piecewise-affine maps, transfer operators on strip-adapted grids,
LP-based anisotropic norm estimation, Ulam spectral analysis, limit
theorems, the singular lambda -> 0 limit, and the contracting interval
model, with property checks for every quantitative inequality involved.
"""

from .maps import (BakerMap, BranchPlacement, Point, StableLeaf, UnstableLeaf,
                   forward, inverse_on_image, leaf_distance, pullback_leaves)
from .grids import (GridFunction, HolderParams, LeafFunction, holder_seminorm,
                    mollify, multiply, restrict_to_leaf)
from .norms import (LpConfig, NormReport, TestBall, maximize_over_ball, norm_report,
                    strong_stable_norm, strong_unstable_norm,
                    triple_operator_norm, weak_norm)
from .transfer import TransferOperator, TwistedOperator, apply_transfer, koopman, twisted_apply

__all__ = [
    "BakerMap", "BranchPlacement", "Point", "StableLeaf", "UnstableLeaf",
    "forward", "inverse_on_image", "leaf_distance", "pullback_leaves",
    "GridFunction", "HolderParams", "LeafFunction", "holder_seminorm",
    "mollify", "multiply", "restrict_to_leaf",
    "LpConfig", "NormReport", "TestBall", "maximize_over_ball", "norm_report",
    "strong_stable_norm", "strong_unstable_norm", "triple_operator_norm",
    "weak_norm",
    "TransferOperator", "TwistedOperator", "apply_transfer", "koopman",
    "twisted_apply",
]

__version__ = "0.1.0"

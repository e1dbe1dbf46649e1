"""Numerical laboratory for maximal directional Hilbert transforms.

Builds frequency-localised test functions over ordered conic sector
chains on a discrete torus and certifies the partial-sum, level-set and
norm-growth bounds that drive the sqrt(log #U) lower bound for the
maximal directional transform.
"""

from .construction import (
    ConstructionConfig,
    ConstructionState,
    build_construction,
    verify_construction,
)
from .experiments import ExperimentConfig, build_pipeline, run_sweep, run_verify
from .geometry import (
    Sector,
    SectorChain,
    build_sector_chain,
    order_directions,
    random_directions,
    validate_directions,
)
from .grid import GridFunction, TorusGrid, lp_norm, superlevel_fraction
from .operators import directional_hilbert, halfspace_projection, maximal_transform
from .tree import (
    FunctionSystem,
    TreePermutation,
    decode_index,
    dyadic_midpoint,
    encode_index,
    haar_system,
    midpoint_permutation,
    verify_partial_sum_bound,
    verify_signed_tree,
)

__version__ = "0.1.0"

__all__ = [
    "ConstructionConfig",
    "ConstructionState",
    "ExperimentConfig",
    "FunctionSystem",
    "GridFunction",
    "Sector",
    "SectorChain",
    "TorusGrid",
    "TreePermutation",
    "build_construction",
    "build_pipeline",
    "build_sector_chain",
    "decode_index",
    "directional_hilbert",
    "dyadic_midpoint",
    "encode_index",
    "haar_system",
    "halfspace_projection",
    "lp_norm",
    "maximal_transform",
    "midpoint_permutation",
    "order_directions",
    "random_directions",
    "run_sweep",
    "run_verify",
    "superlevel_fraction",
    "validate_directions",
    "verify_construction",
    "verify_partial_sum_bound",
    "verify_signed_tree",
    "__version__",
]

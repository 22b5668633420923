"""Database alignment: correlated database pairs, MAP matching, cycle mutual information."""

from dbalign.errors import (
    AlignError,
    DegenerateEps,
    DimensionMismatch,
    EigenNoConvergence,
    Infeasible,
    NegativeEntry,
    NotADistribution,
    NotNormalized,
    NotStochastic,
    SizeOverflow,
    TooLarge,
)
from dbalign.dist import (
    DatabasePair,
    JointDistribution,
    Matching,
    ProductForm,
    entrywise_power,
    log_likelihood,
    new_joint,
    sample_pair,
    tensor_power,
)
from dbalign.spectral import (
    SpectralProfile,
    check_majorization,
    cycle_mi,
    dpi_gap,
    gram_matrix,
    renyi_entropy,
    spectral_profile,
)
from dbalign.matching import (
    CycleType,
    brute_force_map,
    build_weights,
    cycle_type,
    map_estimate,
)

__version__ = "0.1.0"

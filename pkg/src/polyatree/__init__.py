"""Polya tree density estimation and differential entropy estimation on [0, 1]^p."""

from .divergence import (
    CellProbabilityTable,
    cell_probabilities,
    entropy_series,
    expected_posterior_kl,
    kl_series,
    total_variation,
)
from .entropy import (
    EntropyEstimate,
    TruncationPolicy,
    deterministic_truncation,
    entropy_estimate,
    max_impact_level,
    posterior_variance,
    tail_correction,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DepthCapWarning,
    DomainError,
    EstimateUndefinedError,
    PrecisionError,
    PriorConditionWarning,
)
from .partition import BinaryPath, CellBox, PartitionSpec, cell_bounds, encode
from .specfun import digamma, log_gamma, trigamma
from .tree import (
    CountTree,
    PosteriorTree,
    PriorSchedule,
    SampledDensity,
    build_count_tree,
    density_envelope,
    posterior_split_params,
    predictive_log_density,
    sample_density,
)

__version__ = "0.1.0"

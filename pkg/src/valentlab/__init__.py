"""Numerical laboratory for alternating-inequality chain sums.

Three layers: exact/truncated evaluation of the chain sum itself
(:mod:`valentlab.chainsum`), the closed-form constants it converges to
(:mod:`valentlab.specialfn`), and the dyadic-combinatorial approximation chain
connecting the two (:mod:`valentlab.pipeline`).  The CLI harness in
:mod:`valentlab.cli` drives sweeps and invariant checks over all of them.
"""

from .lognum import LOG_ZERO, LogNum
from .chainsum import (
    BRUTE_MAX_N,
    BRUTE_MAX_T,
    DEFAULT_HARD_CAP,
    ChainSpec,
    ChainSumResult,
    FunctionWeight,
    PowerWeight,
    ResourceCapError,
    SizeLimitError,
    TruncationDeficit,
    admissible_tuples,
    chain_sum,
    chain_sum_adaptive,
    chain_sum_brute,
    enumerate_chains,
    growth_offset,
    k_value,
    power_tail_bound,
    truncation_deficit,
)
from .specialfn import (
    ConstantsReport,
    beta,
    constants_report,
    j_constant,
    j_constant_quadrature,
    limit_value,
    log_beta,
    log_gamma,
    nevanlinna_type,
    valent_type,
    valent_type_bounds,
    valent_type_quadrature,
)
from .pipeline import (
    DyadicPartition,
    PipelineResult,
    continuous_max,
    dyadic_chain_sum,
    dyadic_weight,
    group_count,
    log_level_weight,
    make_partition,
    multiplier_asymptote,
    occupancy_at,
    occupancy_count,
    occupancy_max_integer,
    occupancy_sum_smooth,
    occupancy_summand_smooth,
    partition_for_domain,
    shift_inverse,
    shift_map,
    solve_multiplier,
    stirling_exponent,
    stirling_gap,
    stirling_gradient,
    xi_bounds,
    xi_bounds_check,
)

__version__ = "0.1.0"

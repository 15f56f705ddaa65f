"""Joint detection and lossless compression for finite-alphabet memoryless sources."""

from .analysis import (
    exact_region_prob,
    exponent_fit,
    monte_carlo_region_prob,
    binary_q_threshold,
    sweep_binary_example,
)
from .codec import (
    CodeLengths,
    exp_moment_exact,
    kraft_check,
    l_star_length,
    two_part_decode,
    two_part_encode,
)
from .core import (
    ExponentResult,
    Pmf,
    RuleKind,
    RuleSpec,
    TypeComposition,
    binary_divergence,
    empirical_type,
    entropy,
    kl_divergence,
    tilted_family,
    type_stats,
)
from .exponents import (
    ExponentKind,
    LinearConstraint,
    exponent_e1,
    exponent_e2,
    exponent_e_c,
    exponent_e_fa,
    exponent_e_md,
    invert_exponent,
    min_kl_linear,
    min_kl_two_linear,
    plan_parameters,
    simplex_grid_oracle,
)
from .regions import (
    Region,
    ScoredSpace,
    lemma1_region,
    materialize_region,
    membership,
    membership_known,
    membership_universal,
)

__all__ = [
    "binary_divergence",
    "binary_q_threshold",
    "CodeLengths",
    "empirical_type",
    "entropy",
    "exact_region_prob",
    "exp_moment_exact",
    "exponent_e1",
    "exponent_e2",
    "exponent_e_c",
    "exponent_e_fa",
    "exponent_e_md",
    "exponent_fit",
    "ExponentKind",
    "ExponentResult",
    "invert_exponent",
    "kl_divergence",
    "kraft_check",
    "l_star_length",
    "lemma1_region",
    "LinearConstraint",
    "materialize_region",
    "membership",
    "membership_known",
    "membership_universal",
    "min_kl_linear",
    "min_kl_two_linear",
    "monte_carlo_region_prob",
    "plan_parameters",
    "Pmf",
    "Region",
    "RuleKind",
    "RuleSpec",
    "ScoredSpace",
    "simplex_grid_oracle",
    "sweep_binary_example",
    "tilted_family",
    "two_part_decode",
    "two_part_encode",
    "type_stats",
    "TypeComposition",
]

__version__ = "0.1.0"

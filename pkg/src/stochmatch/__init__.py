"""Fractional online stochastic bipartite matching: simulation, measurement,
and numerical certification."""

from .errors import StochMatchError
from .estimators import EstimatorKind, EstimatorSpec, FractionalOutcome, run_fractional
from .instances import (
    Instance,
    OfflineVertex,
    OnlineType,
    TypeDistribution,
    generate_random,
    hardness_instance,
    load_instance,
    save_instance,
    validate,
    worst_case_instance,
)
from .oracle import (
    ExactMode,
    ExactOracle,
    MonteCarloMode,
    PolicyMode,
    SelectionOutcome,
    TieBreakPolicy,
    cond_match_prob,
    exact_enumerate,
    max_weight_matching,
    window_match_probability,
)
from .rules import PermutationRule, permutation_select

__version__ = "0.1.0"

__all__ = [
    "EstimatorKind",
    "EstimatorSpec",
    "ExactMode",
    "ExactOracle",
    "FractionalOutcome",
    "Instance",
    "MonteCarloMode",
    "OfflineVertex",
    "OnlineType",
    "PermutationRule",
    "PolicyMode",
    "SelectionOutcome",
    "StochMatchError",
    "TieBreakPolicy",
    "TypeDistribution",
    "cond_match_prob",
    "exact_enumerate",
    "generate_random",
    "hardness_instance",
    "load_instance",
    "max_weight_matching",
    "permutation_select",
    "run_fractional",
    "save_instance",
    "validate",
    "window_match_probability",
    "worst_case_instance",
    "__version__",
]

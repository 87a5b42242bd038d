"""Black-box optimization via learned space partitioning.

A Monte Carlo tree search over regions carved out by learned classifiers
(2-means on [x, f(x)] followed by an SVM boundary), with UCB-guided region
selection and trust-region or GP/EI local sampling inside the chosen region.
Includes plain single-solver baselines and a reproducible benchmark harness.
"""

from .core import (
    Bounds,
    ComparisonError,
    ConfigError,
    Dataset,
    DomainError,
    Evaluation,
    EvaluationError,
    InfeasibleRegionError,
    NumericalError,
    Objective,
    RngFactory,
    SplitDegenerateError,
    StateError,
    best_so_far,
    evaluate,
    rng_stream,
)
from .objectives import make_objective, objective_names
from .optimizer import LamctsConfig, RunTrace, optimize, regret_trace, run_baseline
from .sampling import ExpansionConfig
from .turbo import TurboConfig

__all__ = [
    "Bounds",
    "ComparisonError",
    "ConfigError",
    "Dataset",
    "DomainError",
    "Evaluation",
    "EvaluationError",
    "ExpansionConfig",
    "InfeasibleRegionError",
    "LamctsConfig",
    "NumericalError",
    "Objective",
    "RngFactory",
    "RunTrace",
    "SplitDegenerateError",
    "StateError",
    "TurboConfig",
    "best_so_far",
    "evaluate",
    "make_objective",
    "objective_names",
    "optimize",
    "regret_trace",
    "rng_stream",
    "run_baseline",
]

__version__ = "0.1.0"

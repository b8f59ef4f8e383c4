"""Causal representation learning from multiple interventional environments
with normalizing-flow models and likelihood-based candidate selection."""
from .estimator import CandidateSearch, CausalFlow
from .exceptions import (
    ConfigError,
    CrlError,
    EvaluationError,
    FormatError,
    GenerationError,
    InputError,
    NumericError,
    SearchError,
    TrainingError,
)

__version__ = "0.1.0"

__all__ = [
    "CausalFlow",
    "CandidateSearch",
    "CrlError",
    "ConfigError",
    "EvaluationError",
    "FormatError",
    "GenerationError",
    "InputError",
    "NumericError",
    "SearchError",
    "TrainingError",
]

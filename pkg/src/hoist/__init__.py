"""Multi-fidelity Bayesian hyperparameter optimization with a weighted ensemble
of per-stage random-forest surrogates driven by Hyperband."""

from .config_space import ConfigSpace, Configuration, ParameterSpec, encode, sample_uniform
from .ensemble import EnsembleSurrogate, WeightVector, learn_weights
from .optimizer import RunOptions, RunResult, run
from .scheduler import plan_brackets
from .store import EvaluationStore
from .surrogate import ForestParams, fit_forest

__all__ = [
    "ConfigSpace",
    "Configuration",
    "EnsembleSurrogate",
    "EvaluationStore",
    "ForestParams",
    "ParameterSpec",
    "RunOptions",
    "RunResult",
    "WeightVector",
    "encode",
    "fit_forest",
    "learn_weights",
    "plan_brackets",
    "run",
    "sample_uniform",
]

"""Expected improvement and pool-based candidate selection (minimization)."""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .config_space import ConfigSpace, Configuration, encode_many, sample_uniform
from .surrogate import PosteriorPrediction

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class AcquisitionContext:
    y_star: float
    pool_size: int = 500
    random_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if not 0.0 <= self.random_fraction <= 1.0:
            raise ValueError("random_fraction must lie in [0, 1]")


def expected_improvement_array(mean, variance, y_star: float) -> np.ndarray:
    mean, variance = np.broadcast_arrays(
        np.asarray(mean, dtype=float), np.asarray(variance, dtype=float)
    )
    sigma = np.sqrt(np.maximum(variance, 0.0))
    diff = y_star - mean
    out = np.maximum(diff, 0.0)
    pos = sigma > 0
    if np.any(pos):
        s, d = sigma[pos], diff[pos]
        z = d / s
        out[pos] = d * ndtr(z) + s * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    return np.maximum(out, 0.0)


def expected_improvement(pred: PosteriorPrediction, y_star: float) -> float:
    """E[max(y_star - y, 0)] for y ~ N(pred.mean, pred.variance)."""
    if pred.variance < 0:
        raise ValueError("variance must be non-negative")
    return float(expected_improvement_array(np.array([pred.mean]), np.array([pred.variance]), y_star)[0])


def rank_by_ei(mean: np.ndarray, variance: np.ndarray, y_star: float) -> np.ndarray:
    """Indices sorted by EI descending; equal scores keep pool order."""
    ei = expected_improvement_array(mean, variance, y_star)
    return np.argsort(-ei, kind="stable")


def select_candidates(
    ensemble,
    space: ConfigSpace,
    count: int,
    ctx: AcquisitionContext,
    rng: np.random.Generator,
    ids: Iterator[int] | None = None,
) -> list[Configuration]:
    """Score a uniform pool by EI under ``ensemble`` and return the top ``count``.

    ``ensemble`` is anything exposing ``predict_batch(X) -> (mean, variance)``
    over encoded rows.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if ctx.pool_size < count:
        raise ValueError(f"pool_size {ctx.pool_size} < requested count {count}")
    pool = sample_uniform(space, ctx.pool_size, rng, ids)
    mean, var = ensemble.predict_batch(encode_many(space, pool))
    order = rank_by_ei(mean, var, ctx.y_star)
    chosen = [pool[i] for i in order[:count]]
    n_random = int(math.floor(ctx.random_fraction * count))
    if n_random > 0:
        chosen = chosen[: count - n_random] + sample_uniform(space, n_random, rng, ids)
    return chosen

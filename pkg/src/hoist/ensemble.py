"""Weighted-bagging ensemble of per-stage surrogates and its weight learning."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .config_space import ConfigSpace, Configuration, encode
from .store import EvaluationStore
from .surrogate import PosteriorPrediction


class EnsembleError(RuntimeError):
    pass


class InsufficientDataError(EnsembleError):
    pass


@dataclass(frozen=True)
class WeightVector:
    weights: tuple[float, ...]
    iteration: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.weights:
            raise ValueError("weight vector is empty")
        if any(not (-1e-12 <= w <= 1 + 1e-12) for w in self.weights):
            raise ValueError(f"weights must lie in [0, 1]: {self.weights}")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1: {self.weights}")

    @classmethod
    def uniform(cls, k: int) -> WeightVector:
        return cls(tuple([1.0 / k] * k), 0)

    def __len__(self) -> int:
        return len(self.weights)

    def as_array(self) -> np.ndarray:
        return np.array(self.weights)


@dataclass
class EnsembleSurrogate:
    """f_global = sum_i c_i f_i over the fitted (active) members.

    Members are any objects with ``predict_batch(X) -> (mean, variance)``;
    ``None`` marks a stage without enough data.
    """

    members: list
    weights: WeightVector
    active_mask: list[bool] = field(init=False)

    def __post_init__(self) -> None:
        if len(self.members) != len(self.weights):
            raise ValueError("member count and weight count differ")
        self.active_mask = [m is not None for m in self.members]

    @property
    def usable(self) -> bool:
        return any(self.active_mask)

    def effective_weights(self) -> np.ndarray:
        if not self.usable:
            raise EnsembleError("ensemble unusable: no fitted member; fall back to random sampling")
        c = self.weights.as_array() * np.array(self.active_mask, dtype=float)
        total = c.sum()
        if total <= 0:
            # every fitted member currently carries zero weight
            c = np.array(self.active_mask, dtype=float)
            total = c.sum()
        return c / total

    def predict_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = self.effective_weights()
        X = np.atleast_2d(X)
        mean = np.zeros(len(X))
        var = np.zeros(len(X))
        for ci, member in zip(c, self.members):
            if member is None or ci == 0:
                continue
            m, v = member.predict_batch(X)
            mean += ci * m
            var += ci * ci * v
        return mean, var


def ensemble_predict(
    ens: EnsembleSurrogate, config: Configuration, space: ConfigSpace
) -> PosteriorPrediction:
    mean, var = ens.predict_batch(encode(space, config)[None, :])
    return PosteriorPrediction(float(mean[0]), float(var[0]))


def min_max_normalize(values: Sequence[float]) -> list[float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("values must be nonempty")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return [0.0] * v.size
    return [float(x) for x in (v - lo) / (hi - lo)]


def pearson_correlation(a: Sequence[float], b: Sequence[float]) -> float:
    """Sample correlation coefficient; 0.0 when either input is constant."""
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be 1-D and of equal length")
    if len(x) < 2:
        raise ValueError("need at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    r = float(dx @ dy) / (math.sqrt(sxx) * math.sqrt(syy))
    return min(1.0, max(-1.0, r))


def amplify(delta: Sequence[float]) -> np.ndarray | None:
    """Clip at zero, square, and normalize by the sum of squares.

    Returns None when nothing survives the clip.
    """
    d = np.maximum(np.asarray(delta, dtype=float), 0.0)
    sq = d * d
    total = sq.sum()
    if total == 0.0:
        return None
    return sq / total


@dataclass(frozen=True)
class WeightUpdate:
    weights: WeightVector
    delta_raw: tuple[float, ...]
    delta: tuple[float, ...] | None


def learn_weights_detailed(
    store: EvaluationStore,
    members: Sequence,
    c_prev: WeightVector,
    rho: float = 0.5,
) -> WeightUpdate:
    if len(members) != len(c_prev):
        raise ValueError("member count and weight count differ")
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    complete = store.complete
    if len(complete) < 2:
        raise InsufficientDataError("insufficient complete data: need >= 2 records in D_K")
    # Y: normalized D_K losses; the store itself is never rewritten
    y = np.array(min_max_normalize(complete.losses))
    X = complete.features(store.space)
    raw = []
    for member in members:
        if member is None:
            raw.append(0.0)
            continue
        y_pred, _ = member.predict_batch(X)
        raw.append(pearson_correlation(y_pred, y))
    delta = amplify(raw)
    if delta is None:
        c_next = c_prev.weights
    else:
        c_next = rho * c_prev.as_array() + (1.0 - rho) * delta
        c_next = tuple(float(c) for c in c_next)
    return WeightUpdate(
        WeightVector(c_next, c_prev.iteration + 1),
        tuple(raw),
        None if delta is None else tuple(float(d) for d in delta),
    )


def learn_weights(
    store: EvaluationStore,
    members: Sequence,
    c_prev: WeightVector,
    rho: float = 0.5,
) -> WeightVector:
    """One weight-learning step: correlate each member's mean prediction
    with the normalized complete-data losses, clip negatives, amplify, and
    blend with the previous weights (``c_next = rho*c_prev + (1-rho)*delta``).
    """
    return learn_weights_detailed(store, members, c_prev, rho).weights

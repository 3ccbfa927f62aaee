"""Probabilistic random-forest regressor in the SMAC style.

Each tree is grown to purity with squared-error splits on a per-node
feature subsample.  The posterior at a point is Gaussian, with the mean
and population variance taken over the per-tree predictions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config_space import ConfigSpace, Configuration, encode, encode_many
from .store import StageDataset


class SurrogateError(ValueError):
    pass


@dataclass(frozen=True)
class ForestParams:
    tree_count: int = 10
    max_features_fraction: float = 0.8
    min_samples_split: int = 2
    bootstrap: bool = True
    variance_floor: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.tree_count < 1:
            raise ValueError("tree_count must be >= 1")
        if not 0 < self.max_features_fraction <= 1:
            raise ValueError("max_features_fraction must lie in (0, 1]")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be > 0")


@dataclass(frozen=True)
class PosteriorPrediction:
    mean: float
    variance: float


@dataclass
class RegressionTree:
    # parallel node arrays; feature == -1 marks a leaf
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return self.value[node]
            idx = rows[inner]
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])


def _best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray):
    """Return (gain, feature, threshold) of the best split among ``features``.

    Gain is the reduction in summed squared error.  Ties keep the lowest
    feature index, then the lowest threshold.
    """
    features = np.sort(features)
    n = len(y)
    total = y.sum()
    Xf = X[:, features]
    order = np.argsort(Xf, axis=0, kind="stable")
    xs = np.take_along_axis(Xf, order, axis=0)
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    csum = np.cumsum(y[order], axis=0)[:-1]
    n_left = np.arange(1, n)[:, None]
    score = csum * csum / n_left + (total - csum) ** 2 / (n - n_left) - total * total / n
    score[~valid] = -np.inf
    pos = np.argmax(score, axis=0)
    gains = score[pos, np.arange(len(features))]
    j = int(np.argmax(gains))
    p = pos[j]
    return float(gains[j]), int(features[j]), 0.5 * (xs[p, j] + xs[p + 1, j])


def _grow_tree(
    X: np.ndarray, y: np.ndarray, n_sub: int, min_split: int, rng: np.random.Generator
) -> RegressionTree:
    d = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        ys = y[idx]
        value[node] = float(np.add.reduce(ys) / len(ys))
        if len(idx) < min_split or (ys == ys[0]).all():
            continue
        Xn = X[idx]
        chosen = rng.choice(d, size=n_sub, replace=False) if n_sub < d else np.arange(d)
        split = _best_split(Xn, ys, chosen)
        if split is None and n_sub < d:
            # the sampled features are all constant here; fall back to the rest
            rest = np.setdiff1d(np.arange(d), chosen)
            split = _best_split(Xn, ys, rest)
        if split is None:
            continue
        _, f, thr = split
        mask = Xn[:, f] <= thr
        feature[node], threshold[node] = f, thr
        lnode, rnode = new_node(), new_node()
        left[node], right[node] = lnode, rnode
        # push right first so the left subtree is grown first
        stack.append((rnode, idx[~mask]))
        stack.append((lnode, idx[mask]))

    return RegressionTree(
        np.array(feature, dtype=np.intp),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(value, dtype=float),
    )


def normalize_targets(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    lo, hi = float(np.min(y)), float(np.max(y))
    if hi == lo:
        return np.zeros_like(y, dtype=float), lo, hi
    return (y - lo) / (hi - lo), lo, hi


@dataclass
class ForestModel:
    trees: list[RegressionTree]
    training_normalization: tuple[float, float]
    feature_dim: int
    variance_floor: float

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.vstack([t.predict(X) for t in self.trees])

    def predict_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance on the normalized loss scale for each row of X."""
        per_tree = self.tree_predictions(X)
        mean = per_tree.mean(axis=0)
        var = np.maximum(per_tree.var(axis=0), self.variance_floor)
        return mean, var


def fit_arrays(X: np.ndarray, losses: np.ndarray, params: ForestParams) -> ForestModel:
    X = np.asarray(X, dtype=float)
    losses = np.asarray(losses, dtype=float)
    if len(losses) < 2:
        raise SurrogateError("a forest needs at least 2 training records")
    if X.shape[0] != len(losses):
        raise SurrogateError("feature and target counts differ")
    y, lo, hi = normalize_targets(losses)
    n, d = X.shape
    n_sub = max(1, math.ceil(params.max_features_fraction * d))
    trees = []
    for t in range(params.tree_count):
        rng = np.random.default_rng([params.seed, t])
        rows = rng.integers(0, n, n) if params.bootstrap else np.arange(n)
        trees.append(_grow_tree(X[rows], y[rows], n_sub, params.min_samples_split, rng))
    return ForestModel(trees, (lo, hi), d, params.variance_floor)


def fit_forest(dataset: StageDataset, space: ConfigSpace, params: ForestParams) -> ForestModel:
    return fit_arrays(dataset.features(space), dataset.losses, params)


def predict(model: ForestModel, config: Configuration, space: ConfigSpace) -> PosteriorPrediction:
    mean, var = model.predict_batch(encode(space, config)[None, :])
    return PosteriorPrediction(float(mean[0]), float(var[0]))


def predict_many(
    model: ForestModel, configs: list[Configuration], space: ConfigSpace
) -> tuple[np.ndarray, np.ndarray]:
    return model.predict_batch(encode_many(space, configs))

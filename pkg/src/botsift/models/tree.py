"""Greedy CART decision tree with the Gini criterion.

Nodes are stored as flat parallel lists, which keeps single-sample
prediction to a tight Python loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..dataset import Dataset

# Relative tolerance used when comparing split scores. Distinct scores on
# realistic node sizes differ by far more; float noise is ~1e-16.
_SCORE_RTOL = 1e-12


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_split: int = 2

    def __post_init__(self) -> None:
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_samples_split < 2:
            raise ValueError(f"min_samples_split must be >= 2, got {self.min_samples_split}")


class DecisionTree:
    """A fitted tree. Internal node ``i`` routes a sample left iff
    ``x[feature[i]] <= threshold[i]``; leaves have ``feature[i] == -1``."""

    def __init__(self, schema: Sequence[str], classes: Sequence[str],
                 feature: list[int], threshold: list[float], left: list[int],
                 right: list[int], counts: np.ndarray, params: TreeParams | None = None):
        self.schema = tuple(schema)
        self.classes = tuple(classes)
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.counts = np.asarray(counts, dtype=np.int64)
        self.params = params or TreeParams()
        # first maximum wins: ties go to the class listed first
        self.value = [int(i) for i in self.counts.argmax(axis=1)]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f < 0)

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] >= 0:
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best

    def leaf_index(self, x: Sequence[float]) -> int:
        feature, threshold, left, right = self.feature, self.threshold, self.left, self.right
        node = 0
        f = feature[0]
        while f >= 0:
            node = left[node] if x[f] <= threshold[node] else right[node]
            f = feature[node]
        return node

    def predict_index(self, x: Sequence[float]) -> int:
        return self.value[self.leaf_index(x)]

    def predict_one(self, x: Sequence[float]) -> str:
        if len(x) != len(self.schema):
            raise ValueError(f"sample has {len(x)} values, model expects {len(self.schema)}")
        return self.classes[self.predict_index(x)]

    def predict(self, X: np.ndarray | Sequence[Sequence[float]]) -> list[str]:
        rows = np.asarray(X, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != len(self.schema):
            raise ValueError(f"expected samples with {len(self.schema)} values")
        return [self.classes[self.predict_index(r)] for r in rows.tolist()]

    def prepare(self, X: np.ndarray) -> list[list[float]]:
        """Queries in the form ``predict_index`` consumes fastest."""
        return np.asarray(X, dtype=np.float64).tolist()

    def impurity_decrease(self) -> np.ndarray:
        """Per-feature sum of (n_node / n_root) * (node Gini - weighted child Gini)."""
        out = np.zeros(len(self.schema))
        n_root = self.counts[0].sum()
        for i, f in enumerate(self.feature):
            if f < 0:
                continue
            n = self.counts[i].sum()
            l, r = self.left[i], self.right[i]
            child = (self.counts[l].sum() * _gini(self.counts[l])
                     + self.counts[r].sum() * _gini(self.counts[r])) / n
            out[f] += n / n_root * (_gini(self.counts[i]) - child)
        return out


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    p = counts / n
    return float(1.0 - np.dot(p, p))


def _split_scores(Xn: np.ndarray, yn: np.ndarray, n_classes: int,
                  features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For every candidate feature and cut position, the score
    S_L/n_L + S_R/n_R (S = sum of squared class counts). Maximising it
    minimises the size-weighted child Gini. Invalid cuts (between equal
    values) score -inf. Returns (scores[q, n-1], sorted values[q, n])."""
    n = Xn.shape[0]
    sub = Xn[:, features]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    onehot = np.eye(n_classes, dtype=np.int64)[yn[order]]         # (n, q, C)
    left = np.cumsum(onehot, axis=0)[:-1]                          # (n-1, q, C)
    right = left[-1:] + onehot[-1:] - left if n > 1 else left
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    scores = (left * left).sum(axis=2) / n_left + (right * right).sum(axis=2) / (n - n_left)
    scores[xs[1:] <= xs[:-1]] = -np.inf
    return scores.T, xs.T


def find_split(Xn: np.ndarray, yn: np.ndarray, n_classes: int,
               features: Sequence[int]) -> tuple[int, float] | None:
    """Best (feature, threshold) among ``features``, or None when every
    candidate feature is constant. A zero-gain cut is still taken (XOR-like
    nodes need it). Ties: lowest feature, then lowest threshold."""
    n = Xn.shape[0]
    if n < 2:
        return None
    feats = np.sort(np.asarray(features, dtype=np.int64))
    scores, xs = _split_scores(Xn, yn, n_classes, feats)
    best = scores.max()
    if not np.isfinite(best):
        return None
    tol = _SCORE_RTOL * max(1.0, abs(best))
    j, pos = divmod(int(np.argmax((scores >= best - tol).ravel())), n - 1)
    lo, hi = xs[j, pos], xs[j, pos + 1]
    thr = (lo + hi) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return int(feats[j]), float(thr)


def grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, params: TreeParams,
              max_features: int | None = None,
              rng: np.random.Generator | None = None) -> tuple[list, list, list, list, np.ndarray]:
    """Grow a tree on integer-coded labels ``y``; returns the flat node arrays.

    With ``max_features`` set, each node first scores a random subset of that
    many features; if all of them are constant there, the rest are scored too.
    """
    n_features = X.shape[1]
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    counts: list[np.ndarray] = []

    def new_node(idx: np.ndarray) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=n_classes))
        return len(feature) - 1

    all_features = np.arange(n_features)
    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        c = counts[node]
        if (np.count_nonzero(c) <= 1 or len(idx) < params.min_samples_split
                or (params.max_depth is not None and depth >= params.max_depth)):
            continue
        Xn, yn = X[idx], y[idx]
        if max_features is None or max_features >= n_features:
            split = find_split(Xn, yn, n_classes, all_features)
        else:
            perm = rng.permutation(n_features)
            split = find_split(Xn, yn, n_classes, perm[:max_features])
            if split is None:
                split = find_split(Xn, yn, n_classes, perm)
        if split is None:
            continue
        f, thr = split
        go_left = Xn[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is expanded first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return feature, threshold, left, right, np.array(counts, dtype=np.int64).reshape(-1, n_classes)


def train_tree(dataset: Dataset, params: TreeParams | None = None,
               classes: Sequence[str] | None = None) -> DecisionTree:
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    params = params or TreeParams()
    classes = tuple(classes or dataset.classes)
    arrays = grow_tree(dataset.X, dataset.y(classes), len(classes), params)
    return DecisionTree(dataset.schema, classes, *arrays, params=params)


def predict_tree(tree: DecisionTree, sample: Sequence[float]) -> str:
    return tree.predict_one(sample)

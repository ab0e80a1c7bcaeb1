"""Bagged random forest of CART trees with majority voting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..dataset import Dataset
from .tree import DecisionTree, TreeParams, grow_tree


def resolve_max_features(spec: int | str | None, n_features: int) -> int | None:
    """``"sqrt"`` -> ceil(sqrt(d)); ``None``/``"all"`` -> all features."""
    if spec is None or spec == "all":
        return None
    if spec == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    if isinstance(spec, int) and spec >= 1:
        return min(spec, n_features)
    raise ValueError(f"bad max_features {spec!r}")


@dataclass(frozen=True)
class ForestParams:
    m: int = 10
    bootstrap: bool = True
    max_features: int | str | None = "sqrt"
    tree: TreeParams = field(default_factory=TreeParams)

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        resolve_max_features(self.max_features, 1)


class RandomForest:
    def __init__(self, trees: Sequence[DecisionTree], params: ForestParams, seed: int,
                 bootstrap_indices: Sequence[np.ndarray] | None = None):
        if not trees:
            raise ValueError("a forest needs at least one tree")
        self.trees = list(trees)
        self.params = params
        self.seed = seed
        self.schema = self.trees[0].schema
        self.classes = self.trees[0].classes
        # training rows of each tree; kept in memory only, not serialised
        self.bootstrap_indices = list(bootstrap_indices) if bootstrap_indices is not None else None

    @property
    def m(self) -> int:
        return len(self.trees)

    def votes(self, x: Sequence[float]) -> list[int]:
        tally = [0] * len(self.classes)
        for tree in self.trees:
            tally[tree.predict_index(x)] += 1
        return tally

    def predict_index(self, x: Sequence[float]) -> int:
        tally = self.votes(x)
        return tally.index(max(tally))

    def predict_one(self, x: Sequence[float]) -> str:
        if len(x) != len(self.schema):
            raise ValueError(f"sample has {len(x)} values, model expects {len(self.schema)}")
        return self.classes[self.predict_index(x)]

    def predict(self, X) -> list[str]:
        rows = np.asarray(X, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != len(self.schema):
            raise ValueError(f"expected samples with {len(self.schema)} values")
        return [self.classes[self.predict_index(r)] for r in rows.tolist()]

    def prepare(self, X: np.ndarray) -> list[list[float]]:
        return np.asarray(X, dtype=np.float64).tolist()

    def feature_importances(self) -> np.ndarray:
        """Mean over trees of each tree's impurity decrease, normalised to 1."""
        raw = np.mean([t.impurity_decrease() for t in self.trees], axis=0)
        total = raw.sum()
        if total <= 0:
            raise ValueError("forest made no splits; importances are undefined")
        return raw / total


def train_forest(dataset: Dataset, m: int = 10, params: ForestParams | None = None,
                 seed: int = 0, classes: Sequence[str] | None = None) -> RandomForest:
    """Train ``m`` trees, each on its own bootstrap sample and sub-seed."""
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    params = params or ForestParams(m=m)
    if params.m != m:
        params = ForestParams(m, params.bootstrap, params.max_features, params.tree)
    classes = tuple(classes or dataset.classes)
    X, y, n = dataset.X, dataset.y(classes), len(dataset)
    max_features = resolve_max_features(params.max_features, X.shape[1])

    trees, rows = [], []
    for child in np.random.SeedSequence(seed).spawn(m):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        arrays = grow_tree(X[idx], y[idx], len(classes), params.tree, max_features, rng)
        trees.append(DecisionTree(dataset.schema, classes, *arrays, params=params.tree))
        rows.append(idx)
    return RandomForest(trees, params, seed, rows)


def predict_forest(forest: RandomForest, sample: Sequence[float]) -> str:
    return forest.predict_one(sample)

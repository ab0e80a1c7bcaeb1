"""From-scratch classifiers: CART tree, random forest and exact k-NN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import Dataset
from .forest import ForestParams, RandomForest, predict_forest, train_forest
from .knn import KnnModel, build_knn, predict_knn
from .serialize import Model, ModelFormatError, dumps_model, load_model, save_model
from .tree import DecisionTree, TreeParams, predict_tree, train_tree

MODEL_KINDS = ("dt", "rf", "knn")


@dataclass(frozen=True)
class ModelSpec:
    """What to train: ``kind`` is ``dt``, ``rf`` or ``knn``."""

    kind: str = "dt"
    m: int = 10
    k: int = 1
    max_depth: int | None = None
    min_samples_split: int = 2
    max_features: int | str | None = "sqrt"
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.m < 1 or self.k < 1:
            raise ValueError("m and k must be >= 1")
        TreeParams(self.max_depth, self.min_samples_split)

    @property
    def name(self) -> str:
        if self.kind == "rf":
            return f"rf-m{self.m}"
        if self.kind == "knn":
            return f"knn-k{self.k}"
        return "dt"

    def tree_params(self) -> TreeParams:
        return TreeParams(self.max_depth, self.min_samples_split)

    def forest_params(self) -> ForestParams:
        return ForestParams(self.m, self.bootstrap, self.max_features, self.tree_params())

    def to_dict(self) -> dict:
        if self.kind == "dt":
            return {"kind": "dt", "max_depth": self.max_depth,
                    "min_samples_split": self.min_samples_split}
        if self.kind == "rf":
            return {"kind": "rf", "m": self.m, "max_depth": self.max_depth,
                    "min_samples_split": self.min_samples_split,
                    "max_features": self.max_features, "bootstrap": self.bootstrap}
        return {"kind": "knn", "k": self.k}


def fit(spec: ModelSpec, dataset: Dataset, seed: int = 0, classes=None) -> Model:
    """Train the model described by ``spec``. ``classes`` fixes the label
    order (defaults to the dataset's first-appearance order)."""
    if spec.kind == "dt":
        return train_tree(dataset, spec.tree_params(), classes)
    if spec.kind == "rf":
        return train_forest(dataset, spec.m, spec.forest_params(), seed, classes)
    return build_knn(dataset, min(spec.k, len(dataset)), classes)


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic 32-bit sub-seed for (seed, path...)."""
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


__all__ = [
    "DecisionTree", "ForestParams", "KnnModel", "Model", "ModelFormatError", "ModelSpec",
    "RandomForest", "TreeParams", "build_knn", "derive_seed", "dumps_model", "fit",
    "load_model", "predict_forest", "predict_knn", "predict_tree", "save_model",
    "train_forest", "train_tree",
]

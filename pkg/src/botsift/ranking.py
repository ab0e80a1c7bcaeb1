"""Feature importance (Gini Importance, Information Gain), rankings, and
F1-versus-feature-count curves."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import Dataset, FoldAssignment, project, stratified_folds
from .models import ForestParams, ModelSpec, train_forest

GI = "gi"
IG = "ig"
METHODS = (GI, IG)


def _as_counts(counts: Mapping[object, int] | Sequence[int] | np.ndarray) -> np.ndarray:
    values = list(counts.values()) if isinstance(counts, Mapping) else counts
    arr = np.asarray(values, dtype=np.float64).ravel()
    if np.any(arr < 0):
        raise ValueError("class counts must be non-negative")
    return arr


def gini_impurity(counts) -> float:
    """Sum of p(i) * (1 - p(i)) over classes."""
    c = _as_counts(counts)
    total = c.sum()
    if total <= 0:
        raise ValueError("Gini impurity of an empty subset is undefined")
    p = c / total
    return float(np.sum(p * (1.0 - p)))


def weighted_impurity(subsets: Sequence) -> float:
    """Size-weighted mean Gini impurity of a partition (empty parts ignored)."""
    parts = [_as_counts(s) for s in subsets]
    sizes = np.array([p.sum() for p in parts])
    total = sizes.sum()
    if total <= 0:
        raise ValueError("all subsets are empty")
    return float(sum(n / total * gini_impurity(p) for n, p in zip(sizes, parts) if n > 0))


def entropy(counts) -> float:
    """Shannon entropy in bits, with 0 log 0 = 0."""
    c = _as_counts(counts)
    total = c.sum()
    if total <= 0:
        raise ValueError("entropy of an empty subset is undefined")
    p = c[c > 0] / total
    return float(max(0.0, -np.sum(p * np.log2(p))))


def equal_frequency_bins(values: np.ndarray, bins: int) -> np.ndarray:
    """Bin index per value, using at most ``bins`` bins.

    Features with no more distinct values than ``bins`` get one bin per
    value. Otherwise cut values are taken at the ends of ``bins`` equal-count
    chunks of the sorted data (bin = number of cuts strictly below the value),
    and repeated cuts collapse.
    """
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    v = np.asarray(values, dtype=np.float64)
    distinct = np.unique(v)
    if len(distinct) <= bins:
        return np.searchsorted(distinct, v)
    s = np.sort(v)
    n = len(s)
    cuts = np.unique([s[math.ceil(i * n / bins) - 1] for i in range(1, bins)])
    return np.searchsorted(cuts, v, side="left")


def information_gain(dataset: Dataset, feature: str, bins: int = 10) -> float:
    """H(class) - H(class | binned feature), clamped at zero."""
    if len(dataset) == 0:
        raise ValueError("information gain of an empty dataset is undefined")
    col = dataset.X[:, dataset.schema.index(feature)]
    b = equal_frequency_bins(col, bins)
    y = dataset.y()
    table = np.zeros((b.max() + 1, len(dataset.classes)))
    np.add.at(table, (b, y), 1)
    n = len(dataset)
    h = entropy(table.sum(axis=0))
    h_cond = sum(row.sum() / n * entropy(row) for row in table if row.sum() > 0)
    return max(0.0, h - h_cond)


@dataclass(frozen=True)
class ImportanceScores:
    method: str
    features: tuple[str, ...]
    scores: tuple[float, ...]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.features, self.scores))


@dataclass(frozen=True)
class FeatureRanking:
    method: str
    features: tuple[str, ...]
    scores: tuple[float, ...] = ()


@dataclass(frozen=True)
class FeatureCurve:
    method: str
    model: str
    features: tuple[str, ...]          # ranked order; point n adds features[n-1]
    f1: tuple[float, ...]

    def rows(self) -> list[tuple[int, str, float]]:
        return [(n, f, s) for n, (f, s) in enumerate(zip(self.features, self.f1), 1)]


def gini_importance(dataset: Dataset, forest_params: ForestParams | None = None,
                    seed: int = 0) -> ImportanceScores:
    """Mean decrease in Gini impurity over a seeded random forest."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if len(dataset.classes) < 2:
        raise ValueError("Gini importance needs at least two classes")
    params = forest_params or ForestParams()
    forest = train_forest(dataset, params.m, params, seed)
    imp = forest.feature_importances()
    return ImportanceScores(GI, dataset.schema, tuple(float(v) for v in imp))


def information_gains(dataset: Dataset, bins: int = 10) -> ImportanceScores:
    return ImportanceScores(IG, dataset.schema,
                            tuple(information_gain(dataset, f, bins) for f in dataset.schema))


def score_features(dataset: Dataset, method: str, *, bins: int = 10,
                   forest_params: ForestParams | None = None, seed: int = 0) -> ImportanceScores:
    if method == GI:
        return gini_importance(dataset, forest_params, seed)
    if method == IG:
        return information_gains(dataset, bins)
    raise ValueError(f"unknown ranking method {method!r}")


def ranking_from_scores(scores: ImportanceScores) -> FeatureRanking:
    """Descending score; equal scores keep schema order."""
    order = sorted(range(len(scores.features)), key=lambda i: (-scores.scores[i], i))
    return FeatureRanking(scores.method, tuple(scores.features[i] for i in order),
                          tuple(scores.scores[i] for i in order))


def rank_features(dataset: Dataset, method: str, *, bins: int = 10,
                  forest_params: ForestParams | None = None, seed: int = 0) -> FeatureRanking:
    return ranking_from_scores(score_features(dataset, method, bins=bins,
                                              forest_params=forest_params, seed=seed))


def feature_curve(dataset: Dataset, ranking: FeatureRanking, model_spec: ModelSpec,
                  k_folds: int = 10, seed: int = 0,
                  folds: FoldAssignment | None = None) -> FeatureCurve:
    """Weighted F1 of k-fold CV using the top-n ranked features, n = 1..d.

    One fold assignment is shared by every point. Each top-n set is laid out
    in schema order, so the last point is exactly a full-schema CV run.
    """
    from .evaluation import cross_validate

    if sorted(ranking.features) != sorted(dataset.schema):
        raise ValueError("ranking must be a permutation of the dataset schema")
    folds = folds or stratified_folds(dataset, k_folds, seed)
    pos = {f: i for i, f in enumerate(dataset.schema)}
    f1 = []
    for n in range(1, len(ranking.features) + 1):
        chosen = sorted(ranking.features[:n], key=pos.__getitem__)
        report = cross_validate(project(dataset, chosen), model_spec, folds.k, seed, folds=folds)
        f1.append(report.weighted_f1)
    return FeatureCurve(ranking.method, model_spec.name, ranking.features, tuple(f1))

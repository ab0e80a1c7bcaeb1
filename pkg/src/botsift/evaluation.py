"""Classification metrics, cross-validation, latency benchmarking and the
F1-per-millisecond performance ratio."""

from __future__ import annotations

import gc
import json
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from . import __version__
from .dataset import Dataset, FoldAssignment, holdout_split, project, stratified_folds
from .features import FEATURE_NAMES
from .models import Model, ModelSpec, derive_seed, fit

SUBSETS: dict[str, tuple[str, ...]] = {
    "five": ("dPort", "nPackets", "nBytes", "vLen", "mLen"),
    "six": ("dPort", "nPackets", "nBytes", "vLen", "mLen", "mTime"),
    "seven": ("dPort", "nPackets", "nBytes", "vLen", "mLen", "mTime", "vTime"),
    "all": FEATURE_NAMES,
}


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: np.ndarray                  # counts[true, predicted]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.classes == other.classes and np.array_equal(self.counts, other.counts)

    def get(self, true: str, pred: str) -> int:
        return int(self.counts[self.classes.index(true), self.classes.index(pred)])

    def support(self) -> dict[str, int]:
        return {c: int(n) for c, n in zip(self.classes, self.counts.sum(axis=1))}


def confusion_matrix(truth: Sequence[str], predicted: Sequence[str],
                     classes: Sequence[str] | None = None) -> ConfusionMatrix:
    """Counts over ``classes``; by default every label seen in either
    sequence, in first-appearance order (truth first)."""
    if len(truth) != len(predicted):
        raise ValueError(f"length mismatch: {len(truth)} truths, {len(predicted)} predictions")
    if not truth:
        raise ValueError("no labels to compare")
    seen = dict.fromkeys(classes or ())
    seen.update(dict.fromkeys(truth))
    seen.update(dict.fromkeys(predicted))
    order = tuple(seen)
    index = {c: i for i, c in enumerate(order)}
    counts = np.zeros((len(order), len(order)), dtype=np.int64)
    np.add.at(counts, ([index[t] for t in truth], [index[p] for p in predicted]), 1)
    return ConfusionMatrix(order, counts)


@dataclass(frozen=True)
class Metrics:
    classes: tuple[str, ...]
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    support: dict[str, int]
    weighted_f1: float
    macro_f1: float


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def prf1(matrix: ConfusionMatrix) -> Metrics:
    """Per-class precision/recall/F1 (0/0 := 0), support-weighted and macro F1.

    Macro F1 averages over classes with non-zero support.
    """
    c = matrix.counts
    if c.size == 0 or c.sum() == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(c).astype(float)
    pred_tot = c.sum(axis=0).astype(float)
    true_tot = c.sum(axis=1).astype(float)
    precision, recall, f1, support = {}, {}, {}, {}
    for i, cls in enumerate(matrix.classes):
        p = _ratio(tp[i], pred_tot[i])
        r = _ratio(tp[i], true_tot[i])
        precision[cls], recall[cls] = p, r
        f1[cls] = _ratio(2 * p * r, p + r)
        support[cls] = int(true_tot[i])
    n = true_tot.sum()
    weighted = float(sum(f1[cls] * support[cls] for cls in matrix.classes) / n)
    present = [cls for cls in matrix.classes if support[cls] > 0]
    macro = float(np.mean([f1[cls] for cls in present]))
    return Metrics(matrix.classes, precision, recall, f1, support, weighted, macro)


def performance_ratio(f1: float, seconds_per_sample: float) -> float:
    """F1 per millisecond of classification time (ms^-1)."""
    if not seconds_per_sample > 0:
        raise ValueError(f"time per sample must be positive, got {seconds_per_sample}")
    return f1 / (seconds_per_sample * 1000.0)


@dataclass
class EvalReport:
    model: str
    model_params: dict[str, Any]
    subset: str | None
    features: tuple[str, ...]
    metrics: Metrics
    confusion: ConfusionMatrix
    seed: int
    k_folds: int | None = None
    seconds_per_sample: float | None = None
    version: str = __version__
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def weighted_f1(self) -> float:
        return self.metrics.weighted_f1

    @property
    def macro_f1(self) -> float:
        return self.metrics.macro_f1

    def performance(self) -> dict[str, float] | None:
        if self.seconds_per_sample is None:
            return None
        return {c: performance_ratio(v, self.seconds_per_sample)
                for c, v in self.metrics.f1.items()}

    def to_dict(self) -> dict[str, Any]:
        m = self.metrics
        perf = self.performance()
        doc: dict[str, Any] = {
            "tool": "botsift", "version": self.version, "seed": self.seed,
            "model": self.model, "model_params": self.model_params,
            "subset": self.subset, "features": list(self.features), "k_folds": self.k_folds,
            "classes": list(m.classes),
            "per_class": {c: {"f1": m.f1[c], "recall": m.recall[c], "precision": m.precision[c],
                              "support": m.support[c],
                              "performance": perf[c] if perf else None} for c in m.classes},
            "weighted_f1": m.weighted_f1, "macro_f1": m.macro_f1,
            "confusion": self.confusion.counts.tolist(),
            "seconds_per_sample": self.seconds_per_sample,
            "performance_weighted": (performance_ratio(m.weighted_f1, self.seconds_per_sample)
                                     if self.seconds_per_sample else None),
            "performance_macro": (performance_ratio(m.macro_f1, self.seconds_per_sample)
                                  if self.seconds_per_sample else None),
        }
        doc.update(self.extra)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> EvalReport:
        classes = tuple(doc["classes"])
        pc = doc["per_class"]
        metrics = Metrics(classes, {c: pc[c]["precision"] for c in classes},
                          {c: pc[c]["recall"] for c in classes}, {c: pc[c]["f1"] for c in classes},
                          {c: pc[c]["support"] for c in classes}, doc["weighted_f1"], doc["macro_f1"])
        known = {"tool", "version", "seed", "model", "model_params", "subset", "features",
                 "k_folds", "classes", "per_class", "weighted_f1", "macro_f1", "confusion",
                 "seconds_per_sample", "performance_weighted", "performance_macro"}
        return cls(doc["model"], dict(doc["model_params"]), doc["subset"], tuple(doc["features"]),
                   metrics, ConfusionMatrix(classes, np.array(doc["confusion"], dtype=np.int64)),
                   doc["seed"], doc.get("k_folds"), doc.get("seconds_per_sample"),
                   doc.get("version", __version__),
                   {k: v for k, v in doc.items() if k not in known})

    def table_rows(self) -> list[dict[str, Any]]:
        """One row per class: class, f1, recall, precision, performance."""
        perf = self.performance() or {}
        m = self.metrics
        return [{"class": c, "f1": m.f1[c], "recall": m.recall[c], "precision": m.precision[c],
                 "performance": perf.get(c)} for c in m.classes]


def cross_val_predict(dataset: Dataset, model_spec: ModelSpec, folds: FoldAssignment,
                      seed: int) -> list[str]:
    """Out-of-fold prediction for every sample (each predicted exactly once)."""
    pred: list[str | None] = [None] * len(dataset)
    classes = dataset.classes
    for fold in range(folds.k):
        test = folds.test_indices(fold)
        train = folds.train_indices(fold)
        if len(test) == 0:
            continue
        if len(train) == 0:
            raise ValueError("a fold leaves no training data")
        model = fit(model_spec, dataset.subset(train), derive_seed(seed, fold), classes)
        for i, p in zip(test.tolist(), model.predict(dataset.X[test])):
            pred[i] = p
    return pred  # type: ignore[return-value]


def cross_validate(dataset: Dataset, model_spec: ModelSpec, k_folds: int = 10, seed: int = 0,
                   folds: FoldAssignment | None = None, subset: str | None = None) -> EvalReport:
    """Stratified k-fold CV; metrics from the pooled out-of-fold predictions."""
    folds = folds or stratified_folds(dataset, k_folds, seed)
    pred = cross_val_predict(dataset, model_spec, folds, seed)
    cm = confusion_matrix(list(dataset.labels), pred, dataset.classes)
    return EvalReport(model_spec.name, model_spec.to_dict(), subset, dataset.schema, prf1(cm),
                      cm, seed, folds.k)


@dataclass(frozen=True)
class LatencyResult:
    seconds_per_sample: float
    total_seconds: float
    classifications: int
    checksum: int


def benchmark_latency(model: Model, samples: np.ndarray, warmup_passes: int = 3,
                      measured_passes: int = 10) -> LatencyResult:
    """Mean wall-clock seconds to classify one sample, one sample at a time.

    Runs on the calling thread with the garbage collector paused. Query
    conversion happens before timing. Predictions feed a checksum so the
    loop cannot be skipped.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("benchmark needs a non-empty 2-D sample matrix")
    if measured_passes < 1 or warmup_passes < 0:
        raise ValueError("need measured_passes >= 1 and warmup_passes >= 0")
    queries = model.prepare(X)
    predict = model.predict_index
    checksum = 0
    gc_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(warmup_passes):
            for q in queries:
                checksum += predict(q)
        total_ns = 0
        for _ in range(measured_passes):
            acc = 0
            t0 = time.perf_counter_ns()
            for q in queries:
                acc += predict(q)
            total_ns += time.perf_counter_ns() - t0
            checksum += acc
    finally:
        if gc_enabled:
            gc.enable()
    n = measured_passes * len(queries)
    total = total_ns / 1e9
    return LatencyResult(total / n, total, n, checksum)


def evaluate_subsets(dataset: Dataset, subsets: Mapping[str, Sequence[str]],
                     model_specs: Sequence[ModelSpec], k_folds: int = 10, seed: int = 0,
                     holdout_fraction: float = 0.1, warmup_passes: int = 3,
                     measured_passes: int = 10) -> list[EvalReport]:
    """For each (subset, model): CV weighted/macro F1 plus per-sample latency of
    a model trained on ``1 - holdout_fraction`` of the data and timed on the rest."""
    folds = stratified_folds(dataset, k_folds, seed)
    train_idx, test_idx = holdout_split(dataset, holdout_fraction, seed)
    reports = []
    for name, features in subsets.items():
        view = project(dataset, features)
        for spec in model_specs:
            report = cross_validate(view, spec, k_folds, seed, folds=folds, subset=name)
            model = fit(spec, view.subset(train_idx), derive_seed(seed, k_folds), view.classes)
            lat = benchmark_latency(model, view.X[test_idx], warmup_passes, measured_passes)
            report.seconds_per_sample = lat.seconds_per_sample
            report.extra["latency"] = {"classifications": lat.classifications,
                                       "total_seconds": lat.total_seconds,
                                       "checksum": lat.checksum,
                                       "holdout_fraction": holdout_fraction}
            reports.append(report)
    return reports

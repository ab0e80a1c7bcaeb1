"""Labelled flow datasets: CSV persistence, quasi-balancing, projection and
stratified folds."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .capture import TcpFlow
from .features import FEATURE_NAMES, FeatureVector, extract_features

LABEL_RE = re.compile(r"[A-Za-z0-9_-]+")


class DatasetError(ValueError):
    """Malformed dataset file or invalid dataset operation."""


@dataclass(frozen=True)
class LabeledSample:
    features: tuple[float, ...]
    label: str


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable sample matrix ``X`` (n x len(schema)) with string labels."""

    schema: tuple[str, ...]
    X: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=np.float64).reshape(len(self.labels), len(self.schema))
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.schema)) != len(self.schema):
            raise DatasetError(f"duplicate feature names in schema {self.schema}")
        for lab in self.labels:
            if not LABEL_RE.fullmatch(lab):
                raise DatasetError(f"invalid class label {lab!r}")
        if not np.all(np.isfinite(X)):
            raise DatasetError("dataset contains non-finite values")

    @classmethod
    def from_samples(cls, samples: Iterable[LabeledSample | tuple[Sequence[float], str]],
                     schema: Sequence[str] = FEATURE_NAMES) -> Dataset:
        rows, labels = [], []
        for s in samples:
            feats, lab = (s.features, s.label) if isinstance(s, LabeledSample) else s
            if isinstance(feats, FeatureVector):
                feats = feats.as_tuple()
            if len(feats) != len(schema):
                raise DatasetError(f"sample has {len(feats)} values, schema has {len(schema)}")
            rows.append(feats)
            labels.append(lab)
        return cls(tuple(schema), np.array(rows, dtype=np.float64).reshape(len(rows), len(schema)),
                   tuple(labels))

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.schema == other.schema and self.labels == other.labels
                and np.array_equal(self.X, other.X))

    @property
    def classes(self) -> tuple[str, ...]:
        """Distinct labels in first-appearance order."""
        return tuple(dict.fromkeys(self.labels))

    @property
    def samples(self) -> list[LabeledSample]:
        return [LabeledSample(tuple(row), lab) for row, lab in zip(self.X.tolist(), self.labels)]

    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for lab in self.labels:
            counts[lab] = counts.get(lab, 0) + 1
        return counts

    def y(self, classes: Sequence[str] | None = None) -> np.ndarray:
        """Labels as integer indices into ``classes`` (default: self.classes)."""
        index = {c: i for i, c in enumerate(classes or self.classes)}
        return np.array([index[lab] for lab in self.labels], dtype=np.int64)

    def subset(self, indices: Sequence[int] | np.ndarray) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.schema, self.X[idx], tuple(self.labels[i] for i in idx.tolist()))


def from_flows(labeled: Iterable[tuple[TcpFlow, str]], min_packets: int = 2) -> Dataset:
    """Extract features for labelled flows, keeping flows with at least
    ``min_packets`` packets."""
    samples = [(extract_features(flow), lab) for flow, lab in labeled if len(flow) >= min_packets]
    return Dataset.from_samples(samples)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return "%.17g" % v


def format_csv(dataset: Dataset, meta: Mapping[str, object] | None = None) -> str:
    """``label,<schema...>`` rows; ``meta`` entries become leading ``#`` lines."""
    lines = [f"# {k}={v}" for k, v in (meta or {}).items()]
    lines.append(",".join(("label",) + dataset.schema))
    for row, lab in zip(dataset.X.tolist(), dataset.labels):
        lines.append(",".join([lab] + [_fmt(v) for v in row]))
    return "\n".join(lines) + "\n"


def write_csv(dataset: Dataset, path: str | Path, meta: Mapping[str, object] | None = None) -> None:
    Path(path).write_text(format_csv(dataset, meta), encoding="utf-8")


def read_csv(path: str | Path, schema: Sequence[str] | None = None) -> Dataset:
    """Read a dataset CSV; rows in error messages are 1-based file lines.

    With ``schema`` given, those columns must be present and the result is
    projected onto them; otherwise the header defines the schema.
    """
    text = Path(path).read_text(encoding="utf-8")
    header: list[str] | None = None
    rows: list[list[float]] = []
    labels: list[str] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split(",")
        if header is None:
            header = [c.strip() for c in cells]
            if header[0] != "label":
                raise DatasetError(f"{path}: row {lineno}: first column must be 'label'")
            missing = [c for c in (schema or ()) if c not in header[1:]]
            if missing:
                raise DatasetError(f"{path}: row {lineno}: missing column(s) {', '.join(missing)}")
            continue
        if len(cells) != len(header):
            raise DatasetError(f"{path}: row {lineno}: expected {len(header)} fields, got {len(cells)}")
        lab = cells[0].strip()
        if not LABEL_RE.fullmatch(lab):
            raise DatasetError(f"{path}: row {lineno}: invalid label {lab!r}")
        try:
            rows.append([float(c) for c in cells[1:]])
        except ValueError:
            bad = next(c for c in cells[1:] if not _is_float(c))
            raise DatasetError(f"{path}: row {lineno}: non-numeric value {bad!r}") from None
        labels.append(lab)
    if header is None:
        raise DatasetError(f"{path}: missing header row")
    names = header[1:]
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    if not np.all(np.isfinite(X)):
        raise DatasetError(f"{path}: non-finite value in data")
    ds = Dataset(tuple(names), X, tuple(labels))
    if schema is not None:
        ds = project(ds, schema)
    return ds


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def quasi_balance(dataset: Dataset, cap: int, seed: int) -> Dataset:
    """Cap every class at ``cap`` samples by seeded sampling without
    replacement; smaller classes are kept whole. Sample order is preserved."""
    if cap < 1:
        raise DatasetError(f"cap must be >= 1, got {cap}")
    rng = np.random.default_rng(seed)
    labels = np.array(dataset.labels, dtype=object)
    keep = []
    for cls in dataset.classes:
        idx = np.flatnonzero(labels == cls)
        if len(idx) > cap:
            idx = np.sort(rng.choice(idx, size=cap, replace=False))
        keep.append(idx)
    return dataset.subset(np.sort(np.concatenate(keep)) if keep else [])


def project(dataset: Dataset, subset: Sequence[str]) -> Dataset:
    """Keep only ``subset`` columns, in the given order."""
    subset = list(subset)
    if not subset:
        raise DatasetError("feature subset is empty")
    if len(set(subset)) != len(subset):
        raise DatasetError(f"duplicate feature in subset {subset}")
    pos = {name: i for i, name in enumerate(dataset.schema)}
    for name in subset:
        if name not in pos:
            raise DatasetError(f"unknown feature {name!r}")
    cols = [pos[name] for name in subset]
    return Dataset(tuple(subset), dataset.X[:, cols], dataset.labels)


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    fold_of: np.ndarray

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != fold)


def stratified_folds(dataset: Dataset, k: int, seed: int) -> FoldAssignment:
    """Shuffle each class with a seeded generator, then deal its samples
    round-robin over the folds. The dealing position carries over from one
    class to the next so total fold sizes stay balanced too."""
    if k < 2:
        raise DatasetError(f"fold count must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    labels = np.array(dataset.labels, dtype=object)
    fold_of = np.empty(len(dataset), dtype=np.int64)
    offset = 0
    for cls in dataset.classes:
        idx = rng.permutation(np.flatnonzero(labels == cls))
        fold_of[idx] = (offset + np.arange(len(idx))) % k
        offset += len(idx)
    fold_of.setflags(write=False)
    return FoldAssignment(k, fold_of)


def holdout_split(dataset: Dataset, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/test index split with ``round(fraction * n_c)`` test
    samples per class (at least one test sample overall)."""
    if not 0 < fraction < 1:
        raise DatasetError(f"holdout fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    labels = np.array(dataset.labels, dtype=object)
    test = []
    for cls in dataset.classes:
        idx = rng.permutation(np.flatnonzero(labels == cls))
        test.append(idx[:int(round(fraction * len(idx)))])
    test_idx = np.sort(np.concatenate(test)) if test else np.array([], dtype=np.int64)
    if test_idx.size == 0:
        if len(dataset) < 2:
            raise DatasetError("need at least two samples for a holdout split")
        test_idx = np.array([int(rng.integers(len(dataset)))])
    mask = np.ones(len(dataset), dtype=bool)
    mask[test_idx] = False
    return np.flatnonzero(mask), test_idx

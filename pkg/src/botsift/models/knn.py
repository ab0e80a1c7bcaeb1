"""Exact k-nearest-neighbours classifier (Euclidean, unscaled features)."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..dataset import Dataset

# rows of the query block in batch prediction; bounds temporary memory
_BLOCK_BYTES = 32 * 1024 * 1024


class KnnModel:
    def __init__(self, X: np.ndarray, y: np.ndarray, classes: Sequence[str],
                 schema: Sequence[str], k: int):
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self._cols = np.ascontiguousarray(self.X.T)
        self.y = np.asarray(y, dtype=np.int64)
        self.classes = tuple(classes)
        self.schema = tuple(schema)
        if not 1 <= k <= len(self.y):
            raise ValueError(f"k must be in [1, {len(self.y)}], got {k}")
        self.k = k

    def sq_distances(self, q: np.ndarray) -> np.ndarray:
        """Squared Euclidean distances from query ``q`` (d,) or queries (b, d)
        to every training row, summed feature by feature."""
        q = np.asarray(q, dtype=np.float64)
        d2 = None
        for j, col in enumerate(self._cols):
            diff = col - q[..., j, None]
            d2 = diff * diff if d2 is None else d2 + diff * diff
        return d2

    def neighbors(self, x: np.ndarray) -> np.ndarray:
        """Indices of the k nearest training rows, nearest first; equal
        distances are ordered by training index."""
        return self._select(self.sq_distances(x))

    def _select(self, d2: np.ndarray) -> np.ndarray:
        if self.k == 1:
            return np.array([int(d2.argmin())])
        kth = np.partition(d2, self.k - 1)[self.k - 1]
        cand = np.flatnonzero(d2 <= kth)
        cand = cand[np.argsort(d2[cand], kind="stable")]
        return cand[:self.k]

    def _vote(self, nn: np.ndarray) -> int:
        labels = self.y[nn]
        if len(labels) == 1:
            return int(labels[0])
        tally = np.bincount(labels, minlength=len(self.classes))
        top = tally.max()
        # tie between classes: the one owning the nearest neighbour wins
        for lab in labels:
            if tally[lab] == top:
                return int(lab)
        raise AssertionError("unreachable")

    def predict_index(self, x: np.ndarray) -> int:
        if self.k == 1:
            return int(self.y[int(self.sq_distances(x).argmin())])
        return self._vote(self.neighbors(x))

    def predict_one(self, x: Sequence[float]) -> str:
        q = np.asarray(x, dtype=np.float64)
        if q.shape != (len(self.schema),):
            raise ValueError(f"sample has {q.size} values, model expects {len(self.schema)}")
        return self.classes[self.predict_index(q)]

    def predict(self, X) -> list[str]:
        Q = np.asarray(X, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != len(self.schema):
            raise ValueError(f"expected samples with {len(self.schema)} values")
        block = max(1, _BLOCK_BYTES // max(1, len(self.y) * 8 * 3))
        out: list[str] = []
        for start in range(0, len(Q), block):
            q = Q[start:start + block]
            for row in self.sq_distances(q):
                out.append(self.classes[self._vote(self._select(row))])
        return out

    def prepare(self, X: np.ndarray) -> list[np.ndarray]:
        return list(np.asarray(X, dtype=np.float64))


def build_knn(dataset: Dataset, k: int = 1, classes: Sequence[str] | None = None) -> KnnModel:
    classes = tuple(classes or dataset.classes)
    if not 1 <= k <= len(dataset):
        raise ValueError(f"k must be in [1, {len(dataset)}], got {k}")
    return KnnModel(dataset.X, dataset.y(classes), classes, dataset.schema, k)


def predict_knn(model: KnnModel, sample: Sequence[float]) -> str:
    return model.predict_one(sample)

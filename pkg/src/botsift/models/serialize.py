"""Versioned JSON model files.

Layout (``version`` 1)::

    {"format": "botsift-model", "version": 1, "kind": "tree" | "forest" | "knn",
     "schema": [...], "classes": [...], "params": {...}, ...}

Trees are nested nodes, ``{"f": index, "t": threshold, "l": ..., "r": ...,
"counts": {...}}`` for splits and ``{"leaf": label, "counts": {...}}`` for
leaves. Forests add ``"seed"`` and ``"trees"``; k-NN files embed the
training matrix as ``"X"`` and labels as ``"y"``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Union

import numpy as np

from .forest import ForestParams, RandomForest
from .knn import KnnModel
from .tree import DecisionTree, TreeParams

FORMAT = "botsift-model"
VERSION = 1

Model = Union[DecisionTree, RandomForest, KnnModel]


class ModelFormatError(ValueError):
    """Unreadable, corrupt or unsupported model file."""


def _tree_to_nested(tree: DecisionTree) -> dict:
    def counts(i: int) -> dict[str, int]:
        return {c: int(n) for c, n in zip(tree.classes, tree.counts[i]) if n}

    def build(i: int) -> dict:
        if tree.feature[i] < 0:
            return {"leaf": tree.classes[tree.value[i]], "counts": counts(i)}
        return {"f": tree.feature[i], "t": tree.threshold[i],
                "l": build(tree.left[i]), "r": build(tree.right[i]), "counts": counts(i)}

    return build(0)


def _tree_from_nested(root: dict, schema, classes, params: TreeParams) -> DecisionTree:
    index = {c: i for i, c in enumerate(classes)}
    feature, threshold, left, right, counts = [], [], [], [], []
    stack = [(root, None, None)]
    while stack:
        node, parent, side = stack.pop()
        i = len(feature)
        row = np.zeros(len(classes), dtype=np.int64)
        for c, n in node["counts"].items():
            row[index[c]] = n
        counts.append(row)
        if "leaf" in node:
            feature.append(-1)
            threshold.append(0.0)
        else:
            f = int(node["f"])
            if not 0 <= f < len(schema):
                raise ModelFormatError(f"feature index {f} out of range")
            feature.append(f)
            threshold.append(float(node["t"]))
        left.append(-1)
        right.append(-1)
        if parent is not None:
            (left if side == "l" else right)[parent] = i
        if "leaf" not in node:
            stack.append((node["r"], i, "r"))
            stack.append((node["l"], i, "l"))
    return DecisionTree(schema, classes, feature, threshold, left, right,
                        np.array(counts, dtype=np.int64), params)


def _tree_params_dict(p: TreeParams) -> dict:
    return {"max_depth": p.max_depth, "min_samples_split": p.min_samples_split}


def model_to_dict(model: Model) -> dict[str, Any]:
    doc: dict[str, Any] = {"format": FORMAT, "version": VERSION}
    if isinstance(model, DecisionTree):
        doc.update(kind="tree", schema=list(model.schema), classes=list(model.classes),
                   params=_tree_params_dict(model.params), root=_tree_to_nested(model))
    elif isinstance(model, RandomForest):
        p = model.params
        doc.update(kind="forest", schema=list(model.schema), classes=list(model.classes),
                   params={"m": p.m, "bootstrap": p.bootstrap, "max_features": p.max_features,
                           "tree": _tree_params_dict(p.tree)},
                   seed=model.seed, trees=[_tree_to_nested(t) for t in model.trees])
    elif isinstance(model, KnnModel):
        doc.update(kind="knn", schema=list(model.schema), classes=list(model.classes),
                   params={"k": model.k}, X=model.X.tolist(),
                   y=[model.classes[i] for i in model.y])
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    return doc


def model_from_dict(doc: dict[str, Any]) -> Model:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError("not a botsift model file")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    try:
        kind = doc["kind"]
        schema, classes, params = tuple(doc["schema"]), tuple(doc["classes"]), doc["params"]
        if kind == "tree":
            return _tree_from_nested(doc["root"], schema, classes, TreeParams(**params))
        if kind == "forest":
            tp = TreeParams(**params["tree"])
            fp = ForestParams(params["m"], params["bootstrap"], params["max_features"], tp)
            trees = [_tree_from_nested(t, schema, classes, tp) for t in doc["trees"]]
            if len(trees) != fp.m:
                raise ModelFormatError(f"forest declares m={fp.m} but holds {len(trees)} trees")
            return RandomForest(trees, fp, doc["seed"])
        if kind == "knn":
            index = {c: i for i, c in enumerate(classes)}
            X = np.array(doc["X"], dtype=np.float64).reshape(len(doc["y"]), len(schema))
            return KnnModel(X, np.array([index[c] for c in doc["y"]]), classes, schema,
                            params["k"])
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {type(exc).__name__}: {exc}") from None
    raise ModelFormatError(f"unknown model kind {kind!r}")


def dumps_model(model: Model) -> str:
    return json.dumps(model_to_dict(model), separators=(",", ":"))


def save_model(model: Model, path: str | Path, meta: dict[str, Any] | None = None) -> None:
    doc = model_to_dict(model)
    if meta:
        doc["meta"] = meta
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> Model:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFormatError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: corrupt model file ({exc.msg} at char {exc.pos})") from None
    return model_from_dict(doc)

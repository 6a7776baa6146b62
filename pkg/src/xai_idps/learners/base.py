"""Shared plumbing for the classifier suite: label indexing, scoring, JSON."""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from ..errors import ArityMismatch, ValidationError

MODEL_FORMAT = "xai_idps.model"
MODEL_VERSION = 1

_REGISTRY: dict[str, type] = {}


def register(cls):
    _REGISTRY[cls.kind] = cls
    return cls


def as_matrix(X) -> np.ndarray:
    """Accept an EncodedMatrix or anything array-like; return a 2-D float array."""
    values = getattr(X, "values", X)
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-D feature matrix, got shape {arr.shape}")
    return arr


def index_labels(y: Sequence, classes: Sequence[str] | None = None) -> tuple[tuple[str, ...], np.ndarray]:
    """Return (class order, integer label per row).  Class order is sorted."""
    labels = [str(v) for v in np.asarray(y, dtype=object).ravel()]
    if classes is None:
        classes = tuple(sorted(set(labels)))
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        idx = np.fromiter((lookup[v] for v in labels), dtype=np.int64, count=len(labels))
    except KeyError as exc:
        raise ValidationError(f"label {exc.args[0]!r} not among classes {classes}") from None
    return tuple(classes), idx


def check_training(X: np.ndarray, y: Sequence) -> None:
    if X.shape[0] == 0:
        raise ValidationError("no training rows")
    if len(y) != X.shape[0]:
        raise ValidationError(f"{len(y)} labels for {X.shape[0]} rows")


def check_arity(model, X: np.ndarray) -> None:
    if X.shape[1] != model.n_features:
        raise ArityMismatch(f"model expects {model.n_features} features, row has {X.shape[1]}")


def predict_scores(model, x) -> np.ndarray:
    """Per-class scores (order ``model.classes``) for one encoded row."""
    X = as_matrix(x)
    if X.shape[0] != 1:
        raise ValidationError("predict_scores takes a single row; use model.predict_proba")
    return model.predict_proba(X)[0]


def argmax_first(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; exact ties resolve to the earliest class."""
    return np.argmax(scores, axis=-1)


def predict_label(model, x) -> str:
    return model.classes[int(argmax_first(predict_scores(model, x)))]


def predict_labels(model, X) -> np.ndarray:
    X = as_matrix(X)
    return np.array(model.classes, dtype=object)[argmax_first(model.predict_proba(X))]


def to_document(model) -> dict:
    return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": model.kind, **model.to_dict()}


def from_document(doc: dict):
    if doc.get("format") != MODEL_FORMAT:
        raise ValidationError("not a model document")
    if doc.get("version") != MODEL_VERSION:
        raise ValidationError(f"unsupported model document version {doc.get('version')}")
    kind = doc.get("kind")
    if kind not in _REGISTRY:
        raise ValidationError(f"unknown model kind {kind!r}")
    body = {k: v for k, v in doc.items() if k not in ("format", "version", "kind")}
    return _REGISTRY[kind].from_dict(body)


def dumps(model) -> str:
    return json.dumps(to_document(model), sort_keys=True)


def loads(text: str):
    return from_document(json.loads(text))

"""Decision table classifier (Kohavi-style lookup over a greedy feature subset)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .base import as_matrix, check_arity, check_training, index_labels, register


def equal_frequency_edges(values: np.ndarray, bins: int) -> np.ndarray:
    """Strictly increasing cut points giving roughly equal-count bins.

    Columns with at most ``bins`` distinct values get one bin per value.
    """
    distinct = np.unique(values)
    if distinct.size <= 1:
        return np.zeros(0)
    if distinct.size <= bins:
        return 0.5 * (distinct[:-1] + distinct[1:])
    xs = np.sort(values)
    n = xs.size
    cuts = []
    for i in range(1, bins):
        pos = int(round(i * n / bins))
        # slide to the next change point so the cut separates distinct values
        change = np.searchsorted(xs, xs[min(pos, n - 1)], side="left")
        if change == 0:
            change = np.searchsorted(xs, xs[0], side="right")
        if change >= n:
            continue
        cuts.append(0.5 * (xs[change - 1] + xs[change]))
    return np.unique(np.array(cuts))


def _bin(column: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.searchsorted(edges, column, side="right")


def _cell_keys(binned: np.ndarray, radices: list[int]) -> np.ndarray:
    key = np.zeros(binned.shape[0], dtype=np.int64)
    for j, r in enumerate(radices):
        key = key * r + binned[:, j]
    return key


def _loo_accuracy(keys: np.ndarray, yi: np.ndarray, k: int) -> float:
    """Leave-one-out accuracy of majority-per-cell lookup.

    Each row is predicted from its cell with itself removed; a row alone in
    its cell falls back to the training majority, again without itself.
    Ties go to the earliest class.
    """
    _, inverse = np.unique(keys, return_inverse=True)
    inverse = inverse.ravel()
    counts = np.zeros((inverse.max() + 1, k))
    np.add.at(counts, (inverse, yi), 1.0)
    eye = np.eye(k)
    # loo[c, y] = predicted class for a row of class y in cell c
    loo = np.argmax(counts[:, None, :] - eye[None, :, :], axis=2)
    fallback = np.argmax(counts.sum(axis=0)[None, :] - eye, axis=1)
    alone = counts.sum(axis=1)[inverse] == 1
    pred = np.where(alone, fallback[yi], loo[inverse, yi])
    return float(np.mean(pred == yi))


@register
@dataclass(frozen=True, eq=False)
class DecisionTable:
    kind = "decision_table"

    classes: tuple[str, ...]
    n_features: int
    selected: tuple[int, ...]
    edges: tuple[np.ndarray, ...]
    cells: dict
    default: np.ndarray

    def __post_init__(self):
        for e in self.edges:
            if np.any(np.diff(e) <= 0):
                raise ValidationError("bin edges must be strictly increasing")
        for dist in self.cells.values():
            if abs(dist.sum() - 1.0) > 1e-9:
                raise ValidationError("cell distributions must sum to 1")
        radices = [len(e) + 1 for e in self.edges]
        items = sorted(self.cells.items())
        keys = np.array([_cell_keys(np.array([c]), radices)[0] if c else 0 for c, _ in items], dtype=np.int64)
        order = np.argsort(keys)
        object.__setattr__(self, "_radices", radices)
        object.__setattr__(self, "_keys", keys[order])
        object.__setattr__(self, "_dists", np.array([d for _, d in items]).reshape(len(items), -1)[order])

    def cell_keys(self, X: np.ndarray) -> np.ndarray:
        if not self.selected:
            return np.zeros(X.shape[0], dtype=np.int64)
        binned = np.column_stack([_bin(X[:, j], e) for j, e in zip(self.selected, self.edges)])
        return _cell_keys(binned, self._radices)

    def predict_proba(self, X) -> np.ndarray:
        X = as_matrix(X)
        check_arity(self, X)
        keys = self.cell_keys(X)
        pos = np.clip(np.searchsorted(self._keys, keys), 0, len(self._keys) - 1)
        hit = self._keys[pos] == keys
        return np.where(hit[:, None], self._dists[pos], self.default[None, :])

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "n_features": self.n_features,
            "selected": list(self.selected),
            "edges": [e.tolist() for e in self.edges],
            "cells": [[list(c), d.tolist()] for c, d in sorted(self.cells.items())],
            "default": self.default.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTable":
        return cls(tuple(d["classes"]), int(d["n_features"]), tuple(d["selected"]),
                   tuple(np.asarray(e, float) for e in d["edges"]),
                   {tuple(c): np.asarray(v, float) for c, v in d["cells"]},
                   np.asarray(d["default"], float))


def train_decision_table(X, y, max_features: int = 8, bins: int = 10, seed: int = 0) -> DecisionTable:
    """Greedy forward selection of lookup attributes.

    Each step adds the attribute whose inclusion gives the highest
    leave-one-out accuracy of the binned lookup table (lowest index on ties).
    The walk runs to ``max_features`` (or a perfect score) even through
    steps that lose accuracy, then keeps the best-scoring prefix, the longer
    one on exact ties, so a conjunction whose parts are individually useless
    is still found.
    """
    if max_features < 1:
        raise ValidationError("max_features must be >= 1")
    if bins < 2:
        raise ValidationError("bins must be >= 2")
    X = as_matrix(X)
    check_training(X, y)
    classes, yi = index_labels(y)
    n, p = X.shape
    k = len(classes)
    all_edges = [equal_frequency_edges(X[:, j], bins) for j in range(p)]
    binned = np.column_stack([_bin(X[:, j], all_edges[j]) for j in range(p)]) if p else np.zeros((n, 0), int)
    radix = [len(e) + 1 for e in all_edges]

    path: list[int] = []
    key = np.zeros(n, dtype=np.int64)
    scores = [_loo_accuracy(key, yi, k)]
    while len(path) < max_features and scores[-1] < 1.0:
        best_j, best_score, best_key = None, -1.0, None
        for j in range(p):
            if j in path or radix[j] == 1:
                continue
            cand = key * radix[j] + binned[:, j]
            s = _loo_accuracy(cand, yi, k)
            if s > best_score + 1e-12:
                best_j, best_score, best_key = j, s, cand
        if best_j is None:
            break
        path.append(best_j)
        scores.append(best_score)
        key = best_key
    top = max(scores)
    length = max(i for i, s in enumerate(scores) if s >= top - 1e-12)
    selected = tuple(path[:length])

    counts_all = np.bincount(yi, minlength=k).astype(float)
    default = counts_all / counts_all.sum()
    cells: dict[tuple[int, ...], np.ndarray] = {}
    if selected:
        sub = binned[:, list(selected)]
        uniq, inverse = np.unique(sub, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        counts = np.zeros((uniq.shape[0], k))
        np.add.at(counts, (inverse, yi), 1.0)
        for row, c in zip(uniq, counts):
            cells[tuple(int(v) for v in row)] = c / c.sum()
    else:
        cells[()] = default.copy()
    return DecisionTable(classes, p, selected, tuple(all_edges[j] for j in selected), cells, default)

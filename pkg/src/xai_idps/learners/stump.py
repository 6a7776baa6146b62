"""One-split classifiers and regressors.

Candidate thresholds are midpoints between consecutive distinct sorted values
of a feature; rows with ``x <= threshold`` go left.  Among equally good
candidates the lowest feature index wins, then the lowest threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateData, ValidationError
from .base import as_matrix, check_arity, check_training, index_labels, register

_TIE = 1e-12


def presort(X: np.ndarray) -> np.ndarray:
    return np.argsort(X, axis=0, kind="stable")


def _midpoint(lo: float, hi: float) -> float:
    mid = 0.5 * (lo + hi)
    # rounding can land on `hi` for adjacent floats, which would flip its side
    return lo if mid >= hi else mid


@register
@dataclass(frozen=True, eq=False)
class Stump:
    kind = "decision_stump"

    classes: tuple[str, ...]
    n_features: int
    feature: int
    threshold: float
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        for dist in (self.left, self.right):
            if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
                raise ValidationError("stump vote distributions must be non-negative and sum to 1")

    def predict_proba(self, X) -> np.ndarray:
        X = as_matrix(X)
        check_arity(self, X)
        go_left = X[:, self.feature] <= self.threshold
        return np.where(go_left[:, None], self.left[None, :], self.right[None, :])

    def predict_index(self, X: np.ndarray) -> np.ndarray:
        """Voted class index per row (argmax of the side's distribution)."""
        go_left = X[:, self.feature] <= self.threshold
        return np.where(go_left, int(np.argmax(self.left)), int(np.argmax(self.right)))

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "n_features": self.n_features,
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.tolist(),
            "right": self.right.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Stump":
        return cls(tuple(d["classes"]), int(d["n_features"]), int(d["feature"]),
                   float(d["threshold"]), np.asarray(d["left"], float), np.asarray(d["right"], float))


def constant_stump(classes, n_features: int, label_index: int) -> Stump:
    onehot = np.zeros(len(classes))
    onehot[label_index] = 1.0
    return Stump(tuple(classes), n_features, 0, float("inf"), onehot, onehot.copy())


def _normalize(counts: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    total = counts.sum()
    return counts / total if total > 0 else fallback


def fit_stump_indexed(X: np.ndarray, yi: np.ndarray, w: np.ndarray, classes, order=None) -> Stump:
    """Weighted-misclassification stump on integer labels ``yi``."""
    n, p = X.shape
    k = len(classes)
    Yw = np.zeros((n, k))
    Yw[np.arange(n), yi] = w
    totals = Yw.sum(axis=0)
    W = totals.sum()
    overall = totals / W
    if np.count_nonzero(np.bincount(yi, minlength=k)) == 1:
        return constant_stump(classes, p, int(yi[0]))
    if order is None:
        order = presort(X)
    best_err, best = np.inf, None
    for j in range(p):
        idx = order[:, j]
        xs = X[idx, j]
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if valid.size == 0:
            continue
        cw = np.cumsum(Yw[idx], axis=0)[valid]
        err = W - cw.max(axis=1) - (totals - cw).max(axis=1)
        i = int(np.flatnonzero(err <= err.min() + _TIE * W)[0])
        if err[i] < best_err - _TIE * W:
            best_err = float(err[i])
            pos = valid[i]
            best = (j, _midpoint(xs[pos], xs[pos + 1]))
    if best is None:
        raise DegenerateData("all rows are identical; no split exists")
    j, thr = best
    # side masses summed directly: totals - cumsum can dip below zero
    left = X[:, j] <= thr
    return Stump(tuple(classes), p, j, float(thr),
                 _normalize(Yw[left].sum(axis=0), overall), _normalize(Yw[~left].sum(axis=0), overall))


def train_stump(X, y, w=None) -> Stump:
    """Decision stump minimising weighted misclassification.

    ``w`` defaults to uniform weights.  Raises DegenerateData when every row
    is identical but the labels disagree.
    """
    X = as_matrix(X)
    check_training(X, y)
    classes, yi = index_labels(y)
    w = np.full(len(yi), 1.0 / len(yi)) if w is None else np.asarray(w, dtype=float)
    if w.shape != yi.shape or np.any(w < 0) or not w.sum() > 0:
        raise ValidationError("weights must be non-negative with a positive sum")
    return fit_stump_indexed(X, yi, w, classes)


@dataclass(frozen=True)
class RegressionStump:
    feature: int
    threshold: float
    left: float
    right: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(X[:, self.feature] <= self.threshold, self.left, self.right)

    def to_list(self) -> list:
        return [self.feature, self.threshold, self.left, self.right]

    @classmethod
    def from_list(cls, v) -> "RegressionStump":
        return cls(int(v[0]), float(v[1]), float(v[2]), float(v[3]))


def fit_regression_stump(X: np.ndarray, z: np.ndarray, w: np.ndarray, order=None) -> RegressionStump:
    """Weighted least-squares stump; falls back to the weighted mean when no split exists."""
    n, p = X.shape
    W = w.sum()
    wz = w * z
    mean = float(wz.sum() / W)
    if order is None:
        order = presort(X)
    best_gain, best = -np.inf, None
    for j in range(p):
        idx = order[:, j]
        xs = X[idx, j]
        valid = np.flatnonzero(xs[:-1] < xs[1:])
        if valid.size == 0:
            continue
        sw = np.cumsum(w[idx])[valid]
        swz = np.cumsum(wz[idx])[valid]
        sw_r = W - sw
        swz_r = wz.sum() - swz
        ok = (sw > 0) & (sw_r > 0)
        if not ok.any():
            continue
        gain = np.full(valid.size, -np.inf)
        gain[ok] = swz[ok] ** 2 / sw[ok] + swz_r[ok] ** 2 / sw_r[ok]
        top = gain[ok].max()
        i = int(np.flatnonzero(gain >= top - _TIE * max(1.0, abs(top)))[0])
        if best is None or gain[i] > best_gain + _TIE * max(1.0, abs(best_gain)):
            best_gain = float(gain[i])
            pos = valid[i]
            best = RegressionStump(j, _midpoint(xs[pos], xs[pos + 1]),
                                   float(swz[i] / sw[i]), float(swz_r[i] / sw_r[i]))
    if best is None:
        return RegressionStump(0, float("inf"), mean, mean)
    return best

"""AdaBoost.M1 and one-vs-rest LogitBoost over decision stumps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateData, RoundsZero, ValidationError
from .base import as_matrix, check_arity, check_training, index_labels, register
from .stump import (
    RegressionStump,
    Stump,
    constant_stump,
    fit_regression_stump,
    fit_stump_indexed,
    presort,
)

PROB_CLIP = 1e-5
# Working responses are capped as in Friedman, Hastie & Tibshirani (2000);
# without it a clipped probability of 1e-5 yields |z| near 1e5.
Z_MAX = 4.0


def m1_vote_weight(eps: float) -> float:
    """Vote weight ln(1/beta) with beta = eps / (1 - eps)."""
    if not 0.0 < eps < 0.5:
        raise ValidationError(f"M1 vote weight needs 0 < eps < 0.5, got {eps}")
    return math.log((1.0 - eps) / eps)


@register
@dataclass(frozen=True, eq=False)
class AdaBoostM1:
    kind = "adaboost_m1"

    classes: tuple[str, ...]
    n_features: int
    members: tuple[tuple[Stump, float], ...]
    errors: tuple[float, ...] = field(default=())
    weight_sums: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not self.members:
            raise ValidationError("boosted ensemble needs at least one member")
        if not all(math.isfinite(a) and a >= 0 for _, a in self.members):
            raise ValidationError("vote weights must be finite and non-negative")

    def predict_proba(self, X) -> np.ndarray:
        X = as_matrix(X)
        check_arity(self, X)
        votes = np.zeros((X.shape[0], len(self.classes)))
        rows = np.arange(X.shape[0])
        for stump, alpha in self.members:
            votes[rows, stump.predict_index(X)] += alpha
        total = sum(a for _, a in self.members)
        return votes / total

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "n_features": self.n_features,
            "members": [[s.to_dict(), a] for s, a in self.members],
            "errors": list(self.errors),
            "weight_sums": list(self.weight_sums),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdaBoostM1":
        members = tuple((Stump.from_dict(s), float(a)) for s, a in d["members"])
        return cls(tuple(d["classes"]), int(d["n_features"]), members,
                   tuple(d.get("errors", ())), tuple(d.get("weight_sums", ())))


def train_adaboost_m1(X, y, rounds: int = 50, seed: int = 0) -> AdaBoostM1:
    """Freund & Schapire's AdaBoost.M1 with reweighting.

    Boosting stops at the first round whose weighted error is 0 or >= 0.5.
    A perfect first stump is kept as the sole member; an unusable first
    stump leaves a single majority-class stump.  ``seed`` is accepted for a
    uniform trainer signature; reweighting is deterministic.
    """
    if rounds < 1:
        raise RoundsZero("rounds must be >= 1")
    X = as_matrix(X)
    check_training(X, y)
    classes, yi = index_labels(y)
    n, p = X.shape
    order = presort(X)
    w = np.full(n, 1.0 / n)
    members: list[tuple[Stump, float]] = []
    errors: list[float] = []
    sums: list[float] = []
    for _ in range(rounds):
        try:
            stump = fit_stump_indexed(X, yi, w, classes, order)
        except DegenerateData:
            break
        miss = stump.predict_index(X) != yi
        eps = float(w[miss].sum())
        if eps <= 0.0:
            if not members:
                members.append((stump, 1.0))
                errors.append(0.0)
            break
        if eps >= 0.5:
            break
        beta = eps / (1.0 - eps)
        w = np.where(miss, w, w * beta)
        w = w / w.sum()
        members.append((stump, math.log(1.0 / beta)))
        errors.append(eps)
        sums.append(float(w.sum()))
    if not members:
        majority = int(np.argmax(np.bincount(yi, minlength=len(classes))))
        members.append((constant_stump(classes, p, majority), 1.0))
    return AdaBoostM1(classes, p, tuple(members), tuple(errors), tuple(sums))


@register
@dataclass(frozen=True, eq=False)
class LogitBoost:
    """Binary LogitBoost heads; one head per class (one-vs-rest) when k > 2.

    With two classes a single head models the second class.  A single-class
    model has no heads and scores its class 1.0.
    """

    kind = "logitboost"

    classes: tuple[str, ...]
    n_features: int
    heads: tuple[tuple[RegressionStump, ...], ...]

    def _head_probability(self, head, X: np.ndarray) -> np.ndarray:
        F = np.zeros(X.shape[0])
        for stump in head:
            F += 0.5 * stump.predict(X)
        return 1.0 / (1.0 + np.exp(-2.0 * F))

    def predict_proba(self, X) -> np.ndarray:
        X = as_matrix(X)
        check_arity(self, X)
        k = len(self.classes)
        if k == 1:
            return np.ones((X.shape[0], 1))
        if k == 2:
            p1 = self._head_probability(self.heads[0], X)
            return np.column_stack([1.0 - p1, p1])
        probs = np.column_stack([self._head_probability(h, X) for h in self.heads])
        return probs / probs.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "n_features": self.n_features,
            "heads": [[s.to_list() for s in head] for head in self.heads],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogitBoost":
        heads = tuple(tuple(RegressionStump.from_list(s) for s in head) for head in d["heads"])
        return cls(tuple(d["classes"]), int(d["n_features"]), heads)


def _fit_binary_logitboost(X: np.ndarray, target: np.ndarray, rounds: int, order) -> tuple[RegressionStump, ...]:
    F = np.zeros(X.shape[0])
    prob = np.full(X.shape[0], 0.5)
    head = []
    for _ in range(rounds):
        pc = np.clip(prob, PROB_CLIP, 1.0 - PROB_CLIP)
        w = pc * (1.0 - pc)
        z = np.clip((target - pc) / w, -Z_MAX, Z_MAX)
        stump = fit_regression_stump(X, z, w, order)
        head.append(stump)
        F += 0.5 * stump.predict(X)
        prob = 1.0 / (1.0 + np.exp(-2.0 * F))
    return tuple(head)


def train_logitboost(X, y, rounds: int = 50, seed: int = 0) -> LogitBoost:
    """Friedman-Hastie-Tibshirani LogitBoost with regression stumps.

    Multi-class problems train one binary head per class and normalise the
    head probabilities.  ``seed`` is unused (fitting is deterministic).
    """
    if rounds < 1:
        raise RoundsZero("rounds must be >= 1")
    X = as_matrix(X)
    check_training(X, y)
    classes, yi = index_labels(y)
    k = len(classes)
    if k == 1:
        return LogitBoost(classes, X.shape[1], ())
    order = presort(X)
    targets = [1] if k == 2 else range(k)
    heads = tuple(
        _fit_binary_logitboost(X, (yi == c).astype(float), rounds, order) for c in targets
    )
    return LogitBoost(classes, X.shape[1], heads)

"""Shapley-value attribution for any model with ``predict_proba``.

Coalition value ``v(S)`` is the mean model output over a background set in
which the features of ``S`` are replaced by the explained instance's values
(interventional expectation).  Features outside the explained subset are held
at the instance's values throughout, so with ``base_value = v({})``::

    base_value + sum(phi) == f(x)

holds exactly for :func:`shap_exact` and, by telescoping, for every
:func:`shap_permutation` estimate too.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data_ingest import is_normal
from .errors import EmptyData, KOutOfRange, ShapeMismatch, SubsetTooLarge, ValidationError

MAX_EXACT_FEATURES = 15
PATTERN = "pattern"
ANOMALY = "anomaly"
_ROW_BUDGET = 2_000_000  # floats per evaluation batch


@dataclass(frozen=True, eq=False)
class BackgroundSet:
    rows: np.ndarray

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape[0] == 0:
            raise ValidationError("background set must be a non-empty 2-D array")

    @property
    def size(self) -> int:
        return self.rows.shape[0]


def make_background(X, size: int = 100, seed: int = 0) -> BackgroundSet:
    """Seed-deterministic sample of ``size`` rows (all rows if fewer)."""
    values = np.asarray(getattr(X, "values", X), dtype=float)
    if values.shape[0] == 0:
        raise EmptyData("no rows to draw a background from")
    if values.shape[0] <= size:
        return BackgroundSet(values.copy())
    idx = np.sort(np.random.default_rng(seed).choice(values.shape[0], size=size, replace=False))
    return BackgroundSet(values[idx].copy())


@dataclass(frozen=True, eq=False)
class ShapExplanation:
    base_value: float
    phi: np.ndarray
    f_x: float
    target: str
    features: tuple[int, ...]
    row: int | None = None

    @property
    def residual(self) -> float:
        """f(x) - base_value - sum(phi); zero up to rounding."""
        return self.f_x - self.base_value - float(self.phi.sum())

    def to_dict(self) -> dict:
        return {
            "row": self.row,
            "target": self.target,
            "base_value": self.base_value,
            "f_x": self.f_x,
            "features": list(self.features),
            "phi": self.phi.tolist(),
        }


def output_function(model, target) -> tuple[Callable[[np.ndarray], np.ndarray], str]:
    """Scalar model output to explain.

    ``target`` is a class name or index (that class's score) or ``"anomaly"``
    (one minus the Normal score).
    """
    if isinstance(target, str) and target == ANOMALY:
        normal = [i for i, c in enumerate(model.classes) if is_normal(c)]
        if not normal:
            return (lambda X: np.ones(X.shape[0])), ANOMALY
        j = normal[0]
        return (lambda X: 1.0 - model.predict_proba(X)[:, j]), ANOMALY
    if isinstance(target, (int, np.integer)):
        j = int(target)
    elif target in model.classes:
        j = model.classes.index(target)
    else:
        raise ValidationError(f"unknown explanation target {target!r}")
    return (lambda X: model.predict_proba(X)[:, j]), str(model.classes[j])


def _coalition_values(f, x: np.ndarray, bg: np.ndarray, features: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """``v(S)`` for each boolean coalition row of ``masks`` (over ``features``)."""
    B, p = bg.shape
    base = bg.copy()
    held = np.ones(p, dtype=bool)
    held[features] = False
    base[:, held] = x[held]
    xf = x[features]
    chunk = max(1, _ROW_BUDGET // max(1, B * p))
    out = np.empty(masks.shape[0])
    for start in range(0, masks.shape[0], chunk):
        sel = masks[start:start + chunk]
        Z = np.broadcast_to(base, (sel.shape[0], B, p)).copy()
        Z[:, :, features] = np.where(sel[:, None, :], xf, Z[:, :, features])
        out[start:start + sel.shape[0]] = f(Z.reshape(-1, p)).reshape(sel.shape[0], B).mean(axis=1)
    return out


def _prepare(model, x, background, features):
    x = np.asarray(x, dtype=float).ravel()
    bg = background.rows if isinstance(background, BackgroundSet) else np.asarray(background, dtype=float)
    if bg.ndim != 2 or bg.shape[1] != x.size:
        raise ShapeMismatch("background arity differs from the instance")
    if x.size != model.n_features:
        raise ShapeMismatch(f"model expects {model.n_features} features, instance has {x.size}")
    features = np.arange(x.size) if features is None else np.asarray(sorted(set(int(f) for f in features)))
    if features.size and (features.min() < 0 or features.max() >= x.size):
        raise ValidationError("feature index out of range")
    return x, bg, features


def shap_exact(model, x, background, features: Sequence[int] | None = None,
               target=ANOMALY, row: int | None = None) -> ShapExplanation:
    """Shapley values by enumerating every coalition of ``features``."""
    x, bg, feats = _prepare(model, x, background, features)
    m = feats.size
    if m > MAX_EXACT_FEATURES:
        raise SubsetTooLarge(f"{m} features exceed the exact-enumeration bound of {MAX_EXACT_FEATURES}")
    f, label = output_function(model, target)
    codes = np.arange(1 << m)
    masks = ((codes[:, None] >> np.arange(m)[None, :]) & 1).astype(bool)
    v = _coalition_values(f, x, bg, feats, masks)
    size = masks.sum(axis=1)
    weight = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) for s in range(m)])
    phi = np.zeros(m)
    for i in range(m):
        without = codes[(codes >> i) & 1 == 0]
        phi[i] = float(np.sum(weight[size[without]] * (v[without | (1 << i)] - v[without])))
    return ShapExplanation(float(v[0]), phi, float(v[-1]), label, tuple(int(j) for j in feats), row)


def shap_permutation(model, x, background, n_permutations: int = 100, seed: int = 0,
                     features: Sequence[int] | None = None, target=ANOMALY,
                     row: int | None = None) -> ShapExplanation:
    """Monte Carlo Shapley values from random feature orderings.

    Along each ordering the features flip from background to instance values
    one at a time; each marginal change of ``v`` is credited to the feature
    that flipped.
    """
    if n_permutations < 1:
        raise ValidationError("n_permutations must be >= 1")
    x, bg, feats = _prepare(model, x, background, features)
    m = feats.size
    f, label = output_function(model, target)
    rng = np.random.default_rng(seed)
    perms = np.array([rng.permutation(m) for _ in range(n_permutations)]).reshape(n_permutations, m)
    # chain masks: step j includes perm[:j]
    rank = np.empty_like(perms)
    rank[np.arange(n_permutations)[:, None], perms] = np.arange(m)[None, :]
    steps = np.arange(m + 1)[None, :, None]
    masks = (rank[:, None, :] < steps).reshape(-1, m)
    v = _coalition_values(f, x, bg, feats, masks).reshape(n_permutations, m + 1)
    deltas = np.diff(v, axis=1)
    phi = np.zeros(m)
    np.add.at(phi, perms.ravel(), deltas.ravel())
    phi /= n_permutations
    return ShapExplanation(float(v[0, 0]), phi, float(v[0, -1]), label, tuple(int(j) for j in feats), row)


def stratified_sample(labels: Sequence, budget: int, seed: int) -> np.ndarray:
    """``budget`` row indices, class shares kept by largest remainder."""
    labels = np.asarray(labels, dtype=object)
    n = labels.size
    if budget >= n:
        return np.arange(n)
    classes = sorted(set(labels.tolist()))
    members = {c: np.flatnonzero(labels == c) for c in classes}
    quota = {c: budget * members[c].size / n for c in classes}
    take = {c: int(quota[c]) for c in classes}
    for c in sorted(classes, key=lambda c: (-(quota[c] - take[c]), c))[: budget - sum(take.values())]:
        take[c] += 1
    rng = np.random.default_rng(seed)
    picked = [rng.permutation(members[c])[: take[c]] for c in classes]
    return np.sort(np.concatenate(picked))


def explain_dataset(model, X, background, mode: str = ANOMALY, budget: int = 200, seed: int = 0,
                    n_permutations: int = 10, method: str = "auto") -> list[ShapExplanation]:
    """Explain a stratified sample of ``budget`` rows of ``X``.

    ``mode="anomaly"`` explains 1 - score(Normal); ``mode="pattern"`` explains
    the score of each row's predicted class.  ``method`` is ``"exact"``,
    ``"permutation"`` or ``"auto"`` (exact when the model has at most
    ``MAX_EXACT_FEATURES`` features).  Row ``i`` of the sample uses seed
    ``seed + i``.
    """
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    if mode not in (PATTERN, ANOMALY):
        raise ValidationError(f"mode must be {PATTERN!r} or {ANOMALY!r}")
    values = np.asarray(getattr(X, "values", X), dtype=float)
    if values.shape[0] == 0:
        raise EmptyData("nothing to explain")
    labels = getattr(X, "labels", None)
    labels = np.zeros(values.shape[0], dtype=object) if labels is None else labels
    rows = stratified_sample(labels, budget, seed)
    if method == "auto":
        method = "exact" if values.shape[1] <= MAX_EXACT_FEATURES else "permutation"
    out = []
    for i, r in enumerate(rows):
        x = values[r]
        target = ANOMALY if mode == ANOMALY else int(np.argmax(model.predict_proba(x[None, :])[0]))
        if method == "exact":
            out.append(shap_exact(model, x, background, target=target, row=int(r)))
        else:
            out.append(shap_permutation(model, x, background, n_permutations, seed + i,
                                        target=target, row=int(r)))
    return out


@dataclass(frozen=True)
class FeatureRanking:
    mode: str
    items: tuple[tuple[str, float], ...] = field(default=())

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.items]

    def __len__(self):
        return len(self.items)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "mean_abs_shap"])
        for name, value in self.items:
            w.writerow([name, repr(float(value))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"mode": self.mode, "ranking": [{"feature": n, "mean_abs_shap": v} for n, v in self.items]}


def rank_features(explanations: Sequence[ShapExplanation], feature_names: Sequence[str],
                  sources: Sequence[str] | None = None, mode: str = ANOMALY) -> FeatureRanking:
    """Mean |phi| per attribute, largest first (name order on ties).

    Encoded columns sharing a source attribute (one-hot blocks named
    ``attr=value``) are summed into that attribute.
    """
    if not explanations:
        raise EmptyData("no explanations to rank")
    width = {e.phi.size for e in explanations}
    if len(width) != 1:
        raise ShapeMismatch("explanations have different feature counts")
    features = explanations[0].features
    if any(e.features != features for e in explanations):
        raise ShapeMismatch("explanations cover different feature subsets")
    if max(features) >= len(feature_names):
        raise ShapeMismatch("more explained features than feature names")
    if sources is None:
        sources = [n.split("=", 1)[0] for n in feature_names]
    mean_abs = np.mean([np.abs(e.phi) for e in explanations], axis=0)
    totals: dict[str, float] = {}
    for j, value in zip(features, mean_abs):
        totals[sources[j]] = totals.get(sources[j], 0.0) + float(value)
    items = tuple(sorted(totals.items(), key=lambda kv: (-kv[1], kv[0])))
    return FeatureRanking(mode, items)


def select_top_k(ranking: FeatureRanking, k: int) -> list[str]:
    if not 1 <= k <= len(ranking):
        raise KOutOfRange(f"k={k} outside 1..{len(ranking)}")
    return ranking.names[:k]


def expand_selection(attributes: Sequence[str], feature_sources: Sequence[str]) -> list[int]:
    """Encoded column indices belonging to the chosen attributes."""
    chosen = set(attributes)
    missing = chosen - set(feature_sources)
    if missing:
        raise ValidationError(f"attributes not in the encoded schema: {', '.join(sorted(missing))}")
    return [j for j, s in enumerate(feature_sources) if s in chosen]


def explanations_to_json(explanations: Sequence[ShapExplanation], feature_names: Sequence[str]) -> str:
    return json.dumps({
        "feature_names": list(feature_names),
        "explanations": [e.to_dict() for e in explanations],
    }, sort_keys=True)

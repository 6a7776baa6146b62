"""Open-set (zero-day) evaluation, accuracy metrics and the feature-selection ablation.

Models are trained on a set of known categories and tested on held-out rows
plus every row of one unseen category.  A row is declared *novel* when the
multi-class model is unsure (``1 - max score > tau``) or when the binary
anomaly model flags it while the multi-class model calls it Normal.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import attribution
from .data_ingest import (
    EncodedMatrix,
    RawTable,
    _stratified_indices,
    apply_encoder,
    canonical_class,
    fit_encoder,
    is_normal,
    stratified_split,
)
from .errors import EmptyMatrix, InvariantViolation, UnknownClass, ValidationError
from .learners import DEFAULTS, train_model
from .learners.base import argmax_first, as_matrix

log = logging.getLogger(__name__)

NOVEL = "novel"
NORMAL = "Normal"
ATTACK = "Attack"


def fingerprint(config: Mapping) -> str:
    """Stable short hash of a JSON-serialisable configuration."""
    text = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# open-set split


@dataclass(frozen=True)
class OpenSetSplit:
    known: frozenset
    unseen: str
    train: RawTable
    test: RawTable
    renamed: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.unseen in self.known:
            raise ValidationError("unseen class must not be among the known classes")
        if self.unseen in set(self.train.labels):
            raise InvariantViolation("unseen-class rows leaked into the training rows")


def build_openset_split(table: RawTable, known: Sequence[str], unseen: str,
                        test_fraction: float = 0.3, seed: int = 0) -> OpenSetSplit:
    """Train on a stratified share of ``known``; test on the rest plus all ``unseen`` rows.

    Class names (both in the table and the arguments) are normalised with
    :func:`canonical_class`; any renaming is logged and kept on the split.
    """
    mapping = {lab: canonical_class(lab) for lab in table.classes}
    renamed = tuple(sorted((a, b) for a, b in mapping.items() if a != b))
    for a, b in renamed:
        log.info("class label %r read as %r", a, b)
    table = table.relabel(mapping)
    known = frozenset(canonical_class(k) for k in known)
    unseen = canonical_class(unseen)
    present = set(table.labels)
    missing = sorted((known | {unseen}) - present)
    if missing:
        raise UnknownClass(f"classes absent from the table: {', '.join(missing)}")
    labels = table.labels
    known_rows = [i for i, lab in enumerate(labels) if lab in known]
    tr, te = _stratified_indices([labels[i] for i in known_rows], test_fraction, seed)
    train_idx = [known_rows[i] for i in tr]
    test_idx = sorted([known_rows[i] for i in te] + [i for i, lab in enumerate(labels) if lab == unseen])
    return OpenSetSplit(known, unseen, table.take(train_idx), table.take(test_idx), renamed)


# --------------------------------------------------------------------------
# confusion matrix and accuracy


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts indexed by (true label, predicted label) over a shared label order."""

    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        L = len(self.labels)
        if self.counts.shape != (L, L):
            raise ValidationError("confusion matrix must be square over its labels")
        if np.any(self.counts < 0):
            raise ValidationError("confusion counts must be non-negative")

    @classmethod
    def from_labels(cls, true: Sequence, pred: Sequence, labels: Sequence[str] | None = None) -> "ConfusionMatrix":
        true = [str(t) for t in true]
        pred = [str(p) for p in pred]
        if len(true) != len(pred):
            raise ValidationError("true and predicted label counts differ")
        if labels is None:
            labels = sorted(set(true) | set(pred))
        index = {lab: i for i, lab in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for t, p in zip(true, pred):
            counts[index[t], index[p]] += 1
        return cls(tuple(labels), counts)

    @classmethod
    def from_binary(cls, tp: int, tn: int, fp: int, fn: int) -> "ConfusionMatrix":
        return cls((NORMAL, ATTACK), np.array([[tn, fp], [fn, tp]], dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def binary_counts(self) -> dict[str, int]:
        """TP/TN/FP/FN with Normal as the negative class and everything else
        (including ``novel``) as anomalous."""
        neg = np.array([is_normal(lab) for lab in self.labels])
        c = self.counts
        return {
            "TP": int(c[np.ix_(~neg, ~neg)].sum()),
            "TN": int(c[np.ix_(neg, neg)].sum()),
            "FP": int(c[np.ix_(neg, ~neg)].sum()),
            "FN": int(c[np.ix_(~neg, neg)].sum()),
        }

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "counts": self.counts.tolist(), **self.binary_counts()}


def accuracy(cm: ConfusionMatrix, binary: bool = False) -> float:
    """(TP + TN) / (TP + TN + FP + FN) for the binary view, trace / total otherwise."""
    if cm.total == 0:
        raise EmptyMatrix("accuracy of an empty confusion matrix")
    if binary:
        b = cm.binary_counts()
        return (b["TP"] + b["TN"]) / (b["TP"] + b["TN"] + b["FP"] + b["FN"])
    return float(np.trace(cm.counts)) / cm.total


# --------------------------------------------------------------------------
# novelty rule


def novelty_scores(model, X) -> np.ndarray:
    return 1.0 - model.predict_proba(as_matrix(X)).max(axis=1)


def novelty_score(model, x) -> float:
    return float(novelty_scores(model, x)[0])


def _normal_index(model) -> int | None:
    return next((i for i, c in enumerate(model.classes) if is_normal(c)), None)


def openset_parts(multiclass_model, binary_model, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(multi-class label, novelty score, binary-model anomaly flag) per row."""
    X = as_matrix(X)
    scores = multiclass_model.predict_proba(X)
    labels = np.array(multiclass_model.classes, dtype=object)[argmax_first(scores)]
    novelty = 1.0 - scores.max(axis=1)
    bscores = binary_model.predict_proba(X)
    blabels = np.array(binary_model.classes, dtype=object)[argmax_first(bscores)]
    anomalous = np.array([not is_normal(b) for b in blabels], dtype=bool)
    return labels, novelty, anomalous


def decide(labels, novelty, anomalous, tau: float) -> np.ndarray:
    normal_pred = np.array([is_normal(lab) for lab in labels], dtype=bool)
    novel = (novelty > tau) | (anomalous & normal_pred)
    return np.where(novel, NOVEL, labels).astype(object)


def classify_openset_batch(multiclass_model, binary_model, X, tau: float) -> np.ndarray:
    if not 0.0 <= tau <= 1.0:
        raise ValidationError("tau must lie in [0, 1]")
    return decide(*openset_parts(multiclass_model, binary_model, X), tau)


def classify_openset(multiclass_model, binary_model, x, tau: float) -> str:
    """Known label of the row, or ``NOVEL``."""
    return str(classify_openset_batch(multiclass_model, binary_model, x, tau)[0])


def flagged(decisions: np.ndarray) -> np.ndarray:
    """Rows raised as attacks: novel or any non-Normal known label."""
    return np.array([d == NOVEL or not is_normal(d) for d in decisions], dtype=bool)


def calibrate_tau(parts, true_labels, max_false_alarm: float = 0.10) -> tuple[float, float, bool]:
    """Smallest tau whose Normal false-alarm rate is <= ``max_false_alarm``.

    Returns (tau, achieved false-alarm rate, whether the target was met).
    Candidates are 0 and the novelty scores of the Normal rows; if none meets
    the target, tau = 1 (novelty path off) is returned.
    """
    labels, novelty, anomalous = parts
    normal = np.array([is_normal(t) for t in true_labels], dtype=bool)
    if not normal.any():
        raise ValidationError("calibration slice holds no Normal rows")
    sub = (labels[normal], novelty[normal], anomalous[normal])
    candidates = np.unique(np.concatenate([[0.0], sub[1], [1.0]]))
    for tau in candidates:
        rate = float(flagged(decide(*sub, tau)).mean())
        if rate <= max_false_alarm:
            return float(tau), rate, True
    return 1.0, float(flagged(decide(*sub, 1.0)).mean()), False


# --------------------------------------------------------------------------
# timing


@dataclass(frozen=True)
class TimingRecord:
    operation: str
    median_ms: float
    repetitions: int
    samples_ms: tuple[float, ...] = ()


def timed(operation: str, fn: Callable[[], object], repetitions: int = 5):
    """Run ``fn`` ``repetitions`` times on a monotonic clock; return (last result, record)."""
    if repetitions < 1:
        raise ValidationError("repetitions must be >= 1")
    samples = []
    result = None
    for _ in range(repetitions):
        start = time.perf_counter_ns()
        result = fn()
        samples.append((time.perf_counter_ns() - start) / 1e6)
    return result, TimingRecord(operation, float(statistics.median(samples)), repetitions, tuple(samples))


# --------------------------------------------------------------------------
# model specs


def normalize_models(models) -> dict[str, dict]:
    """Accept a list of names or a mapping name -> hyperparameters."""
    if isinstance(models, Mapping):
        out = {name: dict(params or {}) for name, params in models.items()}
    else:
        out = {name: {} for name in models}
    for name in out:
        if name not in DEFAULTS:
            raise ValidationError(f"unknown model {name!r}")
    if not out:
        raise ValidationError("no models given")
    return out


def binary_targets(X: EncodedMatrix) -> np.ndarray:
    return np.where(np.asarray(X.binary) == 1, ATTACK, NORMAL).astype(object)


# --------------------------------------------------------------------------
# open-set evaluation


@dataclass(frozen=True)
class DetectionResult:
    model: str
    tau: float
    calibrated: bool
    validation_false_alarm: float | None
    unseen_flag_rate: float
    normal_false_alarm: float
    known_accuracy: float
    binary_accuracy: float
    unseen_rows: int
    normal_rows: int
    confusion: dict = field(default_factory=dict)


@dataclass
class OpenSetReport:
    known: list
    unseen: str
    features: list
    results: list
    fingerprint: str = ""

    def to_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "known": self.known,
            "unseen": self.unseen,
            "features": self.features,
            "results": [asdict(r) for r in self.results],
        }

    def fig6_csv(self) -> str:
        rows = [[r.model, r.tau, r.calibrated, r.unseen_flag_rate, r.normal_false_alarm,
                 r.known_accuracy, r.binary_accuracy] for r in self.results]
        return _csv(["model", "tau", "calibrated", "unseen_flag_rate", "normal_false_alarm",
                     "known_accuracy", "binary_accuracy"], rows, self.fingerprint)


@dataclass
class OpenSetModels:
    """Everything a detector needs at serving time."""

    encoder: object
    columns: list
    attributes: list
    multiclass: object
    binary: object
    tau: float


def fit_openset_models(split: OpenSetSplit, model: str, params: Mapping | None = None,
                       attributes: Sequence[str] | None = None, tau: float | None = None,
                       seed: int = 0, val_fraction: float = 0.2,
                       max_false_alarm: float = 0.10) -> tuple[OpenSetModels, float | None, bool]:
    """Train the multi-class and binary heads on the known classes.

    With ``tau=None`` the heads are fitted on a stratified ``1 - val_fraction``
    share of the training rows and tau is calibrated on the rest.
    """
    params = dict(params or {})
    encoder = fit_encoder(split.train)
    A = apply_encoder(split.train, encoder)
    columns = (list(range(len(A.feature_names))) if attributes is None
               else attribution.expand_selection(attributes, A.feature_sources))
    A = A.select(columns)
    val_rate, met = None, True
    if tau is None:
        fit_idx, val_idx = _stratified_indices(list(A.labels), val_fraction, seed)
        fit, val = A.take(fit_idx), A.take(val_idx)
    else:
        fit, val = A, None
    mc = train_model(model, fit, fit.labels, seed=seed, **params)
    bn = train_model(model, fit, binary_targets(fit), seed=seed, **params)
    if val is not None:
        tau, val_rate, met = calibrate_tau(openset_parts(mc, bn, val), val.labels, max_false_alarm)
    attrs = list(attributes) if attributes is not None else list(dict.fromkeys(A.feature_sources))
    return OpenSetModels(encoder, columns, attrs, mc, bn, float(tau)), val_rate, met


def detection_rates(truth, decisions, unseen: str) -> dict:
    """Unseen-class flag rate, Normal false-alarm rate and known-class accuracy.

    Empty groups give a rate of 0.
    """
    truth = np.asarray(truth, dtype=object)
    decisions = np.asarray(decisions, dtype=object)
    flags = flagged(decisions)
    is_unseen = truth == unseen
    normal = np.array([is_normal(t) for t in truth], dtype=bool)
    known = ~is_unseen

    def rate(mask, values):
        return float(values[mask].mean()) if mask.any() else 0.0

    return {
        "unseen_flag_rate": rate(is_unseen, flags),
        "normal_false_alarm": rate(normal, flags),
        "known_accuracy": rate(known, decisions == truth),
        "unseen_rows": int(is_unseen.sum()),
        "normal_rows": int(normal.sum()),
    }


def evaluate_openset(split: OpenSetSplit, tau: float | None, models, seed: int = 0,
                     attributes: Sequence[str] | None = None, val_fraction: float = 0.2,
                     max_false_alarm: float = 0.10, return_models: bool = False):
    """Per-model unseen-class flag rate, Normal false-alarm rate and accuracies.

    A test row counts as flagged when it is declared novel or given any
    non-Normal label.
    """
    models = normalize_models(models)
    results, fitted = [], {}
    for name, params in models.items():
        om, val_rate, met = fit_openset_models(split, name, params, attributes, tau, seed,
                                               val_fraction, max_false_alarm)
        fitted[name] = om
        T = apply_encoder(split.test, om.encoder).select(om.columns)
        decisions = classify_openset_batch(om.multiclass, om.binary, T, om.tau)
        rates = detection_rates(T.labels, decisions, split.unseen)
        cm = ConfusionMatrix.from_labels(T.labels, decisions)
        results.append(DetectionResult(
            model=name, tau=om.tau, calibrated=met, validation_false_alarm=val_rate,
            binary_accuracy=accuracy(cm, binary=True), confusion=cm.to_dict(), **rates,
        ))
    report = OpenSetReport(sorted(split.known), split.unseen,
                           list(attributes) if attributes is not None else [], results)
    return (report, fitted) if return_models else report


# --------------------------------------------------------------------------
# ablation: all attributes vs the top-k Shapley-ranked attributes


@dataclass(frozen=True)
class AblationRow:
    model: str
    accuracy_all: float
    accuracy_topk: float
    time_all: TimingRecord
    time_topk: TimingRecord


@dataclass
class AblationReport:
    fingerprint: str
    config: dict
    target: str
    k: int
    ranking: attribution.FeatureRanking
    selected_attributes: list
    selected_columns: list
    explain_time_ms: float
    rows: list
    train_rows: int
    test_rows: int

    def to_dict(self, timing: bool = True) -> dict:
        models = []
        for r in self.rows:
            entry = {"model": r.model, "accuracy_all": r.accuracy_all, "accuracy_topk": r.accuracy_topk}
            if timing:
                entry["time_all"] = asdict(r.time_all)
                entry["time_topk"] = asdict(r.time_topk)
            models.append(entry)
        out = {
            "fingerprint": self.fingerprint,
            "config": self.config,
            "target": self.target,
            "k": self.k,
            "train_rows": self.train_rows,
            "test_rows": self.test_rows,
            "ranking": self.ranking.to_dict(),
            "selected_attributes": self.selected_attributes,
            "selected_columns": self.selected_columns,
            "models": models,
        }
        if timing:
            out["explain_time_ms"] = self.explain_time_ms
        return out

    def fig7_csv(self) -> str:
        rows = [[r.model, r.accuracy_all, r.accuracy_topk] for r in self.rows]
        return _csv(["model", "accuracy_all_attributes", "accuracy_topk_attributes"], rows, self.fingerprint)

    def fig8_csv(self) -> str:
        rows = [[r.model, r.accuracy_all, r.accuracy_topk, r.accuracy_topk - r.accuracy_all,
                 r.time_all.median_ms, r.time_topk.median_ms, r.time_all.repetitions]
                for r in self.rows]
        return _csv(["model", "accuracy_all", "accuracy_topk", "accuracy_delta",
                     "train_ms_all", "train_ms_topk", "repetitions"], rows, self.fingerprint)


def _csv(header, rows, fp: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header) + ["fingerprint"])
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row] + [fp])
    return buf.getvalue()


def run_ablation(table: RawTable, models, k: int = 15, seed: int = 0, budget: int = 200,
                 test_fraction: float = 0.3, background: int = 100, n_permutations: int = 10,
                 repetitions: int = 5, selection_model: str = "random_subspace",
                 target: str = "binary", extra_config: Mapping | None = None) -> AblationReport:
    """Train every model on all attributes and on the top-k attributes.

    Attributes are ranked once, by mean |Shapley value| of the all-attribute
    ``selection_model`` (anomaly mode for the binary target, pattern mode for
    the multi-class target), and the same top-k feeds every model.  Training
    time is the median of ``repetitions`` runs.
    """
    models = normalize_models(models)
    if target not in ("binary", "multiclass"):
        raise ValidationError("target must be 'binary' or 'multiclass'")
    config = {
        "models": models, "k": k, "seed": seed, "budget": budget, "test_fraction": test_fraction,
        "background": background, "n_permutations": n_permutations, "repetitions": repetitions,
        "selection_model": selection_model, "target": target, **dict(extra_config or {}),
    }
    train_t, test_t = stratified_split(table, test_fraction, seed)
    encoder = fit_encoder(train_t)
    A, B = apply_encoder(train_t, encoder), apply_encoder(test_t, encoder)
    if target == "binary":
        ya, yb, mode = binary_targets(A), binary_targets(B), attribution.ANOMALY
    else:
        ya, yb, mode = np.asarray(A.labels), np.asarray(B.labels), attribution.PATTERN

    def fit_and_score(name, params, XA, XB):
        model, rec = timed(name, lambda: train_model(name, XA, ya, seed=seed, **params), repetitions)
        pred = np.array(model.classes, dtype=object)[argmax_first(model.predict_proba(XB.values))]
        return model, rec, accuracy(ConfusionMatrix.from_labels(yb, pred))

    full = {}
    for name, params in models.items():
        full[name] = fit_and_score(name, params, A, B)

    if selection_model in full:
        selector = full[selection_model][0]
    else:
        selector = train_model(selection_model, A, ya, seed=seed, **models.get(selection_model, {}))
    bg = attribution.make_background(A, background, seed)
    start = time.perf_counter_ns()
    explanations = attribution.explain_dataset(selector, A, bg, mode, budget, seed, n_permutations)
    explain_ms = (time.perf_counter_ns() - start) / 1e6
    ranking = attribution.rank_features(explanations, A.feature_names, A.feature_sources, mode)
    top = attribution.select_top_k(ranking, k)
    cols = attribution.expand_selection(top, A.feature_sources)
    A_k, B_k = A.select(cols), B.select(cols)

    rows = []
    for name, params in models.items():
        _, rec_k, acc_k = fit_and_score(name, params, A_k, B_k)
        _, rec_all, acc_all = full[name]
        rows.append(AblationRow(name, acc_all, acc_k, rec_all, rec_k))
    return AblationReport(fingerprint(config), config, target, k, ranking, top, cols,
                          explain_ms, rows, len(train_t), len(test_t))

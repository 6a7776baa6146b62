"""Classifier suite: stump, tree, AdaBoost.M1, LogitBoost, DecisionTable, RandomSubspace.

Every trained model exposes ``classes`` (sorted training labels),
``n_features`` and ``predict_proba(X)`` returning rows of non-negative scores
that sum to one.
"""

from .base import (
    dumps,
    from_document,
    loads,
    predict_label,
    predict_labels,
    predict_scores,
    to_document,
)
from .boosting import AdaBoostM1, LogitBoost, m1_vote_weight, train_adaboost_m1, train_logitboost
from .decision_table import DecisionTable, train_decision_table
from .stump import Stump, train_stump
from .tree import RandomSubspace, Tree, train_random_subspace, train_tree
from ..errors import ValidationError

DEFAULTS = {
    "decision_stump": {},
    "decision_tree": {"max_depth": 8},
    "adaboost_m1": {"rounds": 50},
    "logitboost": {"rounds": 50},
    "decision_table": {"max_features": 8, "bins": 10},
    "random_subspace": {"members": 30, "fraction": 0.5, "depth": 8},
}

MODEL_NAMES = tuple(DEFAULTS)


def train_model(name: str, X, y, seed: int = 0, **params):
    """Train the named learner with its defaults overridden by ``params``."""
    if name not in DEFAULTS:
        raise ValidationError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
    unknown = set(params) - set(DEFAULTS[name])
    if unknown:
        raise ValidationError(f"unknown hyperparameters for {name}: {', '.join(sorted(unknown))}")
    kw = {**DEFAULTS[name], **params}
    if name == "decision_stump":
        return train_stump(X, y)
    if name == "decision_tree":
        return train_tree(X, y, seed=seed, **kw)
    if name == "adaboost_m1":
        return train_adaboost_m1(X, y, seed=seed, **kw)
    if name == "logitboost":
        return train_logitboost(X, y, seed=seed, **kw)
    if name == "decision_table":
        return train_decision_table(X, y, seed=seed, **kw)
    return train_random_subspace(X, y, seed=seed, **kw)


__all__ = [
    "AdaBoostM1", "DecisionTable", "LogitBoost", "RandomSubspace", "Stump", "Tree",
    "DEFAULTS", "MODEL_NAMES", "dumps", "from_document", "loads", "m1_vote_weight",
    "predict_label", "predict_labels", "predict_scores", "to_document", "train_adaboost_m1",
    "train_decision_table", "train_logitboost", "train_model", "train_random_subspace",
    "train_stump", "train_tree",
]

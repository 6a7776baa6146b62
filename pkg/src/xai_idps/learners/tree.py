"""Depth-limited Gini classification tree and the random-subspace ensemble."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .base import as_matrix, check_arity, check_training, index_labels, register

LEAF = -1


@register
@dataclass(frozen=True, eq=False)
class Tree:
    """Flat array tree: node ``i`` is a leaf when ``feature[i] == -1``."""

    kind = "decision_tree"

    classes: tuple[str, ...]
    n_features: int
    max_depth: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.arange(X.shape[0])
        while active.size:
            f = self.feature[node[active]]
            inner = f != LEAF
            active, f = active[inner], f[inner]
            if not active.size:
                break
            cur = node[active]
            go_left = X[active, f] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return node

    def predict_proba(self, X) -> np.ndarray:
        X = as_matrix(X)
        check_arity(self, X)
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "n_features": self.n_features,
            "max_depth": self.max_depth,
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(tuple(d["classes"]), int(d["n_features"]), int(d["max_depth"]),
                   np.asarray(d["feature"], dtype=np.int64), np.asarray(d["threshold"], float),
                   np.asarray(d["left"], dtype=np.int64), np.asarray(d["right"], dtype=np.int64),
                   np.asarray(d["value"], float))


def _best_gini_split(X: np.ndarray, Y: np.ndarray, rows: np.ndarray, min_leaf: int):
    """Lowest weighted Gini over (feature, midpoint); ties keep the earlier candidate."""
    n = rows.size
    Yn = Y[rows]
    total = Yn.sum(axis=0)
    best = None
    best_imp = np.inf
    lo, hi = min_leaf - 1, n - min_leaf
    n_left = np.arange(lo + 1, hi + 1, dtype=float)
    n_right = n - n_left
    for j in range(X.shape[1]):
        xs = X[rows, j]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        cand = np.flatnonzero(xs[lo:hi] < xs[lo + 1:hi + 1])
        if cand.size == 0:
            continue
        cum = np.cumsum(Yn[order], axis=0)[lo:hi]
        cl = cum[cand]
        cr = total - cl
        nl, nr = n_left[cand], n_right[cand]
        # n * weighted gini = nl - |cl|^2/nl + nr - |cr|^2/nr
        imp = n - (cl * cl).sum(axis=1) / nl - (cr * cr).sum(axis=1) / nr
        top = imp.min()
        i = int(np.flatnonzero(imp <= top + 1e-12 * n)[0])
        if imp[i] < best_imp - 1e-12 * n:
            best_imp = float(imp[i])
            pos = lo + cand[i]
            a, b = xs[pos], xs[pos + 1]
            mid = 0.5 * (a + b)
            best = (j, a if mid >= b else mid)
    parent = n - float((total * total).sum()) / n
    if best is None or best_imp >= parent - 1e-12 * n:
        return None
    return best


def fit_tree_indexed(X: np.ndarray, yi: np.ndarray, classes, max_depth: int = 8, min_leaf: int = 2) -> Tree:
    n, p = X.shape
    k = len(classes)
    Y = np.zeros((n, k))
    Y[np.arange(n), yi] = 1.0
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        counts = Y[rows].sum(axis=0)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(counts / counts.sum())
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if depth >= max_depth or rows.size < 2 * min_leaf or value[node].max() == 1.0:
            continue
        split = _best_gini_split(X, Y, rows, min_leaf)
        if split is None:
            continue
        j, thr = split
        mask = X[rows, j] <= thr
        lrows, rrows = rows[mask], rows[~mask]
        feature[node], threshold[node] = j, thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))
    return Tree(tuple(classes), p, max_depth, np.array(feature, dtype=np.int64),
                np.array(threshold, dtype=float), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value))


def train_tree(X, y, max_depth: int = 8, min_leaf: int = 2, seed: int = 0) -> Tree:
    """Gini tree with midpoint thresholds; ``seed`` unused (no randomness)."""
    if max_depth < 0:
        raise ValidationError("max_depth must be >= 0")
    X = as_matrix(X)
    check_training(X, y)
    classes, yi = index_labels(y)
    return fit_tree_indexed(X, yi, classes, max_depth, min_leaf)


def subspace_size(fraction: float, p: int) -> int:
    return max(1, math.ceil(fraction * p - 1e-9))


def subspace_indices(p: int, fraction: float, member_seed: int) -> np.ndarray:
    rng = np.random.default_rng(member_seed)
    return np.sort(rng.choice(p, size=subspace_size(fraction, p), replace=False))


@register
@dataclass(frozen=True, eq=False)
class RandomSubspace:
    kind = "random_subspace"

    classes: tuple[str, ...]
    n_features: int
    fraction: float
    seed: int
    members: tuple[tuple[Tree, np.ndarray], ...]

    def __post_init__(self):
        # all members packed into one node table; leaves loop onto themselves
        feats, thrs, lefts, rights, values, roots = [], [], [], [], [], []
        offset = 0
        for tree, cols in self.members:
            leaf = tree.feature == LEAF
            ids = np.arange(len(tree.feature)) + offset
            feats.append(np.where(leaf, 0, cols[np.where(leaf, 0, tree.feature)]))
            thrs.append(np.where(leaf, np.inf, tree.threshold))
            lefts.append(np.where(leaf, ids, tree.left + offset))
            rights.append(np.where(leaf, ids, tree.right + offset))
            values.append(tree.value)
            roots.append(offset)
            offset += len(tree.feature)
        packed = (np.concatenate(feats), np.concatenate(thrs), np.concatenate(lefts),
                  np.concatenate(rights), np.concatenate(values), np.array(roots),
                  max(t.depth for t, _ in self.members))
        object.__setattr__(self, "_packed", packed)

    def predict_proba(self, X) -> np.ndarray:
        X = as_matrix(X)
        check_arity(self, X)
        feat, thr, left, right, value, roots, depth = self._packed
        node = np.broadcast_to(roots, (X.shape[0], roots.size)).copy()
        for _ in range(depth):
            xv = np.take_along_axis(X, feat[node], axis=1)
            node = np.where(xv <= thr[node], left[node], right[node])
        return value[node].mean(axis=1)

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "n_features": self.n_features,
            "fraction": self.fraction,
            "seed": self.seed,
            "members": [[t.to_dict(), c.tolist()] for t, c in self.members],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomSubspace":
        members = tuple((Tree.from_dict(t), np.asarray(c, dtype=np.int64)) for t, c in d["members"])
        return cls(tuple(d["classes"]), int(d["n_features"]), float(d["fraction"]), int(d["seed"]), members)


def train_random_subspace(X, y, members: int = 30, fraction: float = 0.5, depth: int = 8,
                          seed: int = 0, min_leaf: int = 2) -> RandomSubspace:
    """Ho's random subspace method: member ``i`` sees the columns drawn with
    seed ``seed + i`` and is a depth-limited Gini tree on them."""
    if members < 1:
        raise ValidationError("members must be >= 1")
    if not 0.0 < fraction <= 1.0:
        raise ValidationError("fraction must lie in (0, 1]")
    X = as_matrix(X)
    check_training(X, y)
    classes, yi = index_labels(y)
    p = X.shape[1]
    out = []
    for i in range(members):
        cols = subspace_indices(p, fraction, seed + i)
        out.append((fit_tree_indexed(np.ascontiguousarray(X[:, cols]), yi, classes, depth, min_leaf), cols))
    return RandomSubspace(classes, p, fraction, seed, tuple(out))

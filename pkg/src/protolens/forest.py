"""Bagged CART forest with native missing-value routing.

Trees are stored as flat node arrays. A row goes left at an internal node when
``x[feature] <= threshold``; a MISSING cell follows ``missing_left``, which is
the side the majority of the node's non-missing training rows took.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np

from protolens.errors import CorruptPayload, DimensionMismatch, InvalidParams, VersionMismatch

FORMAT_VERSION = 1

_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = 8
    min_leaf: int = 1
    features_per_split: int | None = None  # None -> ceil(sqrt(d))
    bootstrap: bool = True

    def validate(self) -> None:
        if self.n_trees < 1:
            raise InvalidParams("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise InvalidParams("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise InvalidParams("min_leaf must be >= 1")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise InvalidParams("features_per_split must be >= 1")


class Tree:
    """One fitted tree. ``counts`` holds weighted class counts for every node;
    for internal nodes they are the sums over the subtree's leaves."""

    def __init__(self, feature, threshold, missing_left, left, right, leaf_id, counts):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.missing_left = np.asarray(missing_left, dtype=bool)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.leaf_id = np.asarray(leaf_id, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        totals = self.counts.sum(axis=1, keepdims=True)
        self.value = self.counts / np.maximum(totals, 1)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def apply_nodes(self, X: np.ndarray) -> np.ndarray:
        """Node index of the leaf reached by every row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            cur = node[active]
            vals = X[active, self.feature[cur]]
            go_left = np.where(np.isnan(vals), self.missing_left[cur], vals <= self.threshold[cur])
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return node

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            i, dep = stack.pop()
            if self.feature[i] >= 0:
                stack.append((self.left[i], dep + 1))
                stack.append((self.right[i], dep + 1))
            else:
                best = max(best, dep)
        return best

    def to_dict(self) -> dict[str, Any]:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                nodes.append({
                    "feature": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "missing_goes_left": bool(self.missing_left[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                })
            else:
                nodes.append({
                    "leaf_id": int(self.leaf_id[i]),
                    "class_counts": [int(c) for c in self.counts[i]],
                })
        return {"nodes": nodes}


@dataclass(eq=False)
class TrainedForest:
    trees: list[Tree]
    n_classes: int
    feature_names: tuple[str, ...]
    train_params: dict[str, Any]

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check(self, X) -> tuple[np.ndarray, bool]:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected rows with {self.n_features} cells, got shape {X.shape}")
        return X, single

    def predict_proba(self, X) -> np.ndarray:
        """Mean over trees of the reached leaves' class frequencies."""
        X, single = self._check(X)
        proba = np.zeros((X.shape[0], self.n_classes))
        for tree in self.trees:
            proba += tree.value[tree.apply_nodes(X)]
        proba /= self.n_trees
        return proba[0] if single else proba

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return np.argmax(proba, axis=-1)

    def apply(self, X) -> np.ndarray:
        """Leaf ids reached in every tree: shape (n, T), or (T,) for one row."""
        X, single = self._check(X)
        leaves = np.column_stack([t.leaf_id[t.apply_nodes(X)] for t in self.trees])
        return leaves[0] if single else leaves

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "n_classes": int(self.n_classes),
            "feature_names": list(self.feature_names),
            "trees": [t.to_dict() for t in self.trees],
            "train_params": dict(self.train_params),
        }


def leaf_assignment(forest: TrainedForest, x) -> np.ndarray:
    return forest.apply(x)


def predict_proba(forest: TrainedForest, x) -> np.ndarray:
    return forest.predict_proba(x)


# --------------------------------------------------------------------------
# fitting


def _gini_from_counts(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=-1)
    safe = np.maximum(totals, 1e-300)
    return 1.0 - np.sum((counts / safe[..., None]) ** 2, axis=-1)


def _best_split_for_feature(values, onehot_w, weights, min_leaf):
    """Best threshold on one feature over non-missing rows.

    Returns (gain, threshold, left_weight, right_weight) or None.
    """
    order = np.argsort(values, kind="stable")
    v = values[order]
    cum = np.cumsum(onehot_w[order], axis=0)
    wcum = np.cumsum(weights[order])
    # boundaries between distinct consecutive values
    cut = np.flatnonzero(v[1:] > v[:-1])
    if cut.size == 0:
        return None
    total = cum[-1]
    left = cum[cut]
    right = total - left
    n_left = wcum[cut]
    n_tot = wcum[-1]
    n_right = n_tot - n_left
    ok = (n_left >= min_leaf) & (n_right >= min_leaf)
    if not np.any(ok):
        return None
    impurity = (n_left * _gini_from_counts(left) + n_right * _gini_from_counts(right)) / n_tot
    gain = _gini_from_counts(total) - impurity
    gain = np.where(ok, gain, -np.inf)
    k = int(np.argmax(gain))
    threshold = 0.5 * (v[cut[k]] + v[cut[k] + 1])
    # midpoint can round up to the upper value for adjacent floats
    if threshold >= v[cut[k] + 1]:
        threshold = v[cut[k]]
    return float(gain[k]), float(threshold), float(n_left[k]), float(n_right[k])


class _TreeBuilder:
    def __init__(self, X, y, weights, n_classes, params: ForestParams, rng):
        self.X = X
        self.y = y
        self.w = weights
        self.C = n_classes
        self.params = params
        self.rng = rng
        d = X.shape[1]
        mtry = params.features_per_split or math.ceil(math.sqrt(d))
        self.mtry = min(mtry, d)
        self.nodes: list[list] = []  # [feature, threshold, missing_left, left, right, leaf_id, counts]
        self.n_leaves = 0

    def _class_counts(self, rows) -> np.ndarray:
        return np.bincount(self.y[rows], weights=self.w[rows], minlength=self.C).round().astype(np.int64)

    def _new_node(self) -> int:
        self.nodes.append([-1, 0.0, False, -1, -1, -1, None])
        return len(self.nodes) - 1

    def build(self, rows, depth: int) -> int:
        node = self._new_node()
        counts = self._class_counts(rows)
        split = None
        max_depth = self.params.max_depth
        if (
            np.count_nonzero(counts) > 1
            and (max_depth is None or depth < max_depth)
            and counts.sum() >= 2 * self.params.min_leaf
        ):
            split = self._find_split(rows)
        if split is None:
            self.nodes[node][5] = self.n_leaves
            self.nodes[node][6] = counts
            self.n_leaves += 1
            return node
        feature, threshold, missing_left = split
        vals = self.X[rows, feature]
        go_left = np.where(np.isnan(vals), missing_left, vals <= threshold)
        left = self.build(rows[go_left], depth + 1)
        right = self.build(rows[~go_left], depth + 1)
        self.nodes[node][:5] = [feature, threshold, missing_left, left, right]
        self.nodes[node][6] = self.nodes[left][6] + self.nodes[right][6]
        return node

    def _find_split(self, rows):
        d = self.X.shape[1]
        candidates = np.sort(self.rng.choice(d, size=self.mtry, replace=False))
        y = self.y[rows]
        w = self.w[rows]
        onehot_w = np.zeros((rows.size, self.C))
        onehot_w[np.arange(rows.size), y] = w
        best = None
        for f in candidates:
            vals = self.X[rows, f]
            present = ~np.isnan(vals)
            if np.count_nonzero(present) < 2:
                continue
            res = _best_split_for_feature(vals[present], onehot_w[present], w[present], self.params.min_leaf)
            if res is None:
                continue
            gain, threshold, n_left, n_right = res
            if gain <= _MIN_GAIN:
                continue
            if best is None or gain > best[0]:
                best = (gain, int(f), threshold, n_left >= n_right)
        if best is None:
            return None
        return best[1], best[2], best[3]

    def to_tree(self) -> Tree:
        cols = list(zip(*self.nodes))
        return Tree(
            feature=cols[0],
            threshold=cols[1],
            missing_left=cols[2],
            left=cols[3],
            right=cols[4],
            leaf_id=cols[5],
            counts=np.vstack(cols[6]),
        )


def _fit_one_tree(X, y, n_classes, params: ForestParams, seed: int, tree_index: int) -> Tree:
    rng = np.random.default_rng([seed, tree_index])
    n = X.shape[0]
    if params.bootstrap:
        weights = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
    else:
        weights = np.ones(n)
    rows = np.flatnonzero(weights > 0)
    builder = _TreeBuilder(X, y, weights, n_classes, params, rng)
    builder.build(rows, 0)
    return builder.to_tree()


def fit_forest(train, params: ForestParams | None = None, seed: int = 0, threads: int = 1) -> TrainedForest:
    """Fit a bagged Gini forest on a :class:`~protolens.data.Dataset`.

    Each tree draws from its own PRNG stream keyed by ``(seed, tree index)``,
    so the result does not depend on ``threads``.
    """
    params = params or ForestParams()
    params.validate()
    X = np.asarray(train.X, dtype=np.float64)
    y = np.asarray(train.y, dtype=np.int64)
    C = train.n_classes

    def job(t):
        return _fit_one_tree(X, y, C, params, seed, t)

    if threads > 1 and params.n_trees > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(job, range(params.n_trees)))
    else:
        trees = [job(t) for t in range(params.n_trees)]
    train_params = {
        "n_trees": params.n_trees,
        "max_depth": params.max_depth,
        "min_leaf": params.min_leaf,
        "features_per_split": params.features_per_split,
        "bootstrap": params.bootstrap,
        "seed": int(seed),
    }
    return TrainedForest(trees, C, tuple(train.feature_names), train_params)


def fit_tree(train, max_depth: int | None = 15, seed: int = 0) -> TrainedForest:
    """Single CART tree: all features at every split, no bootstrap."""
    params = ForestParams(
        n_trees=1,
        max_depth=max_depth,
        features_per_split=train.d,
        bootstrap=False,
    )
    return fit_forest(train, params, seed=seed)


# --------------------------------------------------------------------------
# serialization


def save_forest(forest: TrainedForest) -> bytes:
    return json.dumps(forest.to_dict(), separators=(",", ":"), sort_keys=True).encode("utf-8")


def _tree_from_dict(payload: dict, n_classes: int, d: int) -> Tree:
    nodes = payload["nodes"]
    if not isinstance(nodes, list) or not nodes:
        raise CorruptPayload("tree without nodes")
    m = len(nodes)
    feature = np.full(m, -1, dtype=np.int64)
    threshold = np.zeros(m)
    missing_left = np.zeros(m, dtype=bool)
    left = np.full(m, -1, dtype=np.int64)
    right = np.full(m, -1, dtype=np.int64)
    leaf_id = np.full(m, -1, dtype=np.int64)
    counts = np.zeros((m, n_classes), dtype=np.int64)
    for i, node in enumerate(nodes):
        if "leaf_id" in node:
            cc = node["class_counts"]
            if len(cc) != n_classes or any(int(c) < 0 for c in cc) or sum(cc) < 1:
                raise CorruptPayload(f"node {i}: bad class_counts {cc}")
            leaf_id[i] = int(node["leaf_id"])
            counts[i] = cc
        else:
            f = int(node["feature"])
            if not 0 <= f < d:
                raise CorruptPayload(f"node {i}: feature {f} out of range")
            feature[i] = f
            threshold[i] = float(node["threshold"])
            missing_left[i] = bool(node["missing_goes_left"])
            left[i] = int(node["left"])
            right[i] = int(node["right"])
    # structure: every node reached exactly once from the root
    seen = np.zeros(m, dtype=bool)
    order = []
    stack = [0]
    while stack:
        i = stack.pop()
        if not 0 <= i < m or seen[i]:
            raise CorruptPayload("node graph is not a tree")
        seen[i] = True
        order.append(i)
        if feature[i] >= 0:
            stack.extend([left[i], right[i]])
    if not seen.all():
        raise CorruptPayload("unreachable nodes")
    leaf_ids = leaf_id[feature < 0]
    if np.unique(leaf_ids).size != leaf_ids.size:
        raise CorruptPayload("duplicate leaf ids")
    for i in reversed(order):
        if feature[i] >= 0:
            counts[i] = counts[left[i]] + counts[right[i]]
    return Tree(feature, threshold, missing_left, left, right, leaf_id, counts)


def load_forest(payload: bytes | str) -> TrainedForest:
    try:
        doc = json.loads(payload)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptPayload(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise CorruptPayload("payload must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"unsupported format_version {version!r}")
    try:
        n_classes = int(doc["n_classes"])
        names = tuple(str(f) for f in doc["feature_names"])
        trees = [_tree_from_dict(t, n_classes, len(names)) for t in doc["trees"]]
        params = dict(doc["train_params"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptPayload(f"malformed forest payload: {exc!r}") from None
    if n_classes < 2 or not trees:
        raise CorruptPayload("forest needs n_classes >= 2 and at least one tree")
    return TrainedForest(trees, n_classes, names, params)

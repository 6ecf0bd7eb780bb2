"""Per-instance feature attributions for a :class:`TrainedForest`.

Two estimators:

``saabas``
    Path attribution. Walking a row's root-to-leaf path, each internal node
    credits its split feature with the change in the node-mean probability of
    the target class. Per tree, ``bias + sum(phi)`` telescopes to the leaf
    probability, so the forest average reproduces ``predict_proba`` exactly.

``shapley_oracle``
    Exact interventional Shapley values by enumerating all ``2**d`` feature
    coalitions against a background sample. Exponential; validation only.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from protolens.errors import DimensionMismatch, EmptyBackground, InvalidParams, TooManyFeatures
from protolens.forest import TrainedForest

Estimator = Literal["saabas", "shapley_oracle"]
ESTIMATORS = ("saabas", "shapley_oracle")

MAX_ORACLE_FEATURES = 12


@dataclass(frozen=True, eq=False)
class AttributionVector:
    phi: np.ndarray
    bias: float
    target_class: int
    estimator_tag: str


def _saabas_rows(forest: TrainedForest, X: np.ndarray, targets: np.ndarray):
    n, d = X.shape
    phi = np.zeros((n, d))
    bias = np.zeros(n)
    rows = np.arange(n)
    for tree in forest.trees:
        node_val = tree.value  # (nodes, C)
        tree_phi = np.zeros((n, d))
        node = np.zeros(n, dtype=np.int64)
        tree_bias = node_val[0, targets]
        active = rows[tree.feature[node] >= 0]
        while active.size:
            cur = node[active]
            f = tree.feature[cur]
            v = X[active, f]
            go_left = np.where(np.isnan(v), tree.missing_left[cur], v <= tree.threshold[cur])
            nxt = np.where(go_left, tree.left[cur], tree.right[cur])
            t = targets[active]
            tree_phi[active, f] += node_val[nxt, t] - node_val[cur, t]
            node[active] = nxt
            active = active[tree.feature[nxt] >= 0]
        phi += tree_phi
        bias += tree_bias
    T = forest.n_trees
    return phi / T, bias / T


def _check_rows(forest: TrainedForest, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != forest.n_features:
        raise DimensionMismatch(f"expected rows with {forest.n_features} cells, got shape {X.shape}")
    return X


def _check_target(forest: TrainedForest, target_class: int) -> int:
    if not 0 <= int(target_class) < forest.n_classes:
        raise InvalidParams(f"target_class {target_class} outside [0, {forest.n_classes})")
    return int(target_class)


def saabas_attribution(forest: TrainedForest, x, target_class: int) -> AttributionVector:
    X = _check_rows(forest, x)
    if X.shape[0] != 1:
        raise DimensionMismatch("saabas_attribution takes a single row")
    target = _check_target(forest, target_class)
    phi, bias = _saabas_rows(forest, X, np.array([target]))
    return AttributionVector(phi[0], float(bias[0]), target, "saabas")


def _coalition_values(forest: TrainedForest, x: np.ndarray, background: np.ndarray, target: int) -> np.ndarray:
    """v(S) for every bitmask S over the d features (bit l set = feature l from x)."""
    d = x.shape[0]
    masks = np.arange(2**d)
    take_x = ((masks[:, None] >> np.arange(d)[None, :]) & 1).astype(bool)  # (2^d, d)
    B = background.shape[0]
    values = np.empty(2**d)
    # chunk so the composed matrix stays modest
    chunk = max(1, 200_000 // max(B, 1))
    for start in range(0, 2**d, chunk):
        sel = take_x[start:start + chunk]
        composed = np.where(sel[:, None, :], x[None, None, :], background[None, :, :])
        proba = forest.predict_proba(composed.reshape(-1, d))[:, target]
        values[start:start + chunk] = proba.reshape(sel.shape[0], B).mean(axis=1)
    return values


def shapley_bruteforce(forest: TrainedForest, x, background, target_class: int) -> AttributionVector:
    """Exact Shapley values of ``v(S) = E_b[p_target(x_S, b_rest)]``."""
    X = _check_rows(forest, x)
    if X.shape[0] != 1:
        raise DimensionMismatch("shapley_bruteforce takes a single row")
    x = X[0]
    d = x.shape[0]
    if d > MAX_ORACLE_FEATURES:
        raise TooManyFeatures(f"d={d} exceeds the oracle limit of {MAX_ORACLE_FEATURES}")
    bg = np.asarray(getattr(background, "X", background), dtype=np.float64)
    if bg.ndim != 2 or bg.shape[0] == 0:
        raise EmptyBackground("background must contain at least one row")
    if bg.shape[1] != d:
        raise DimensionMismatch("background width differs from x")
    target = _check_target(forest, target_class)

    v = _coalition_values(forest, x, bg, target)
    sizes = np.array([bin(s).count("1") for s in range(2**d)])
    weight = np.array([
        math.factorial(k) * math.factorial(d - k - 1) / math.factorial(d) if k < d else 0.0
        for k in range(d + 1)
    ])
    phi = np.zeros(d)
    subsets = np.arange(2**d)
    for l in range(d):
        bit = 1 << l
        without = subsets[(subsets & bit) == 0]
        phi[l] = np.sum(weight[sizes[without]] * (v[without | bit] - v[without]))
    return AttributionVector(phi, float(v[0]), target, "shapley_oracle")


def attribution_matrix(
    forest: TrainedForest,
    ds,
    estimator: str = "saabas",
    background=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Attributions of every row for its own predicted class.

    Returns ``(phi, bias, predicted)`` with shapes (n, d), (n,), (n,).
    The oracle uses ``background`` (defaults to ``ds`` itself).
    """
    if estimator not in ESTIMATORS:
        raise InvalidParams(f"unknown estimator {estimator!r}")
    X = _check_rows(forest, getattr(ds, "X", ds))
    predicted = forest.predict(X)
    if estimator == "saabas":
        phi, bias = _saabas_rows(forest, X, predicted)
        return phi, bias, predicted
    if X.shape[1] > MAX_ORACLE_FEATURES:
        raise TooManyFeatures(f"d={X.shape[1]} exceeds the oracle limit of {MAX_ORACLE_FEATURES}")
    bg = X if background is None else getattr(background, "X", background)
    phi = np.zeros_like(X)
    bias = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        av = shapley_bruteforce(forest, X[i], bg, int(predicted[i]))
        phi[i] = av.phi
        bias[i] = av.bias
    return phi, bias, predicted


def attribution_csv(phi: np.ndarray, bias: np.ndarray, classes: np.ndarray, feature_names) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*feature_names, "bias", "class"])
    for row, b, c in zip(phi, bias, classes):
        writer.writerow([*(repr(float(v)) for v in row), repr(float(b)), int(c)])
    return buf.getvalue()

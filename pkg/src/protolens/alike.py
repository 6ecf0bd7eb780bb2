"""Alike parts: the features that matter for both an instance and its nearest
prototype.

The pipeline is attribution -> score preprocessing -> elementwise similarity
-> binary mask.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Literal

import numpy as np

from protolens.attribution import attribution_matrix
from protolens.errors import InvalidParams, LengthMismatch

Operator = Literal["hadamard", "one_minus_l1", "one_minus_l2"]
MaskStrategy = Literal["mean_threshold", "top_sqrt", "top_log"]

OPERATORS = ("hadamard", "one_minus_l1", "one_minus_l2")
MASK_STRATEGIES = ("mean_threshold", "top_sqrt", "top_log")


@dataclass(frozen=True)
class AlikeConfig:
    ignore_direction: bool = True
    normalize_similarity: bool = True
    operator: Operator = "hadamard"
    mask_strategy: MaskStrategy = "mean_threshold"

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise InvalidParams(f"unknown operator {self.operator!r}")
        if self.mask_strategy not in MASK_STRATEGIES:
            raise InvalidParams(f"unknown mask strategy {self.mask_strategy!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def preprocess_scores(phi, ignore_direction: bool, normalize_similarity: bool) -> np.ndarray:
    """Absolute value (optional), then squared-share normalization (optional).

    Works row-wise on a 2-D matrix as well. An all-zero row normalizes to zeros.
    """
    out = np.array(getattr(phi, "phi", phi), dtype=np.float64)
    if ignore_direction:
        out = np.abs(out)
    if normalize_similarity:
        sq = out**2
        total = sq.sum(axis=-1, keepdims=True)
        out = np.divide(sq, total, out=np.zeros_like(sq), where=total > 0)
    return out


def combine(phi_x_hat, phi_p_hat, operator: str) -> np.ndarray:
    a = np.asarray(phi_x_hat, dtype=np.float64)
    b = np.asarray(phi_p_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"score vectors differ in shape: {a.shape} vs {b.shape}")
    if operator == "hadamard":
        return a * b
    if operator == "one_minus_l1":
        return 1.0 - np.abs(a - b)
    if operator == "one_minus_l2":
        return 1.0 - (a - b) ** 2
    raise InvalidParams(f"unknown operator {operator!r}")


def _top1(w: np.ndarray) -> np.ndarray:
    m = np.zeros(w.shape[0], dtype=np.int8)
    m[int(np.argmax(w))] = 1  # argmax returns the lowest index on ties
    return m


def mask_mean(w) -> np.ndarray:
    """Bits where the weight strictly exceeds the mean weight; an empty result
    falls back to the single heaviest feature."""
    w = np.asarray(w, dtype=np.float64)
    # compare d * w_l > sum(w) in exact rationals; a rounded float mean can dip
    # below a uniform vector's common value and light every bit
    exact = [Fraction(float(v)) for v in w]
    total = sum(exact)
    m = np.array([v * len(exact) > total for v in exact], dtype=np.int8)
    if not m.any():
        return _top1(w)
    return m


def topk_size(d: int, strategy: str) -> int:
    if strategy == "top_sqrt":
        k = math.ceil(math.sqrt(d))
    elif strategy == "top_log":
        k = math.ceil(math.log(d)) if d > 1 else 1
    else:
        raise InvalidParams(f"not a top-k strategy: {strategy!r}")
    return min(max(k, 1), d)


def mask_topk(w, strategy: str = "top_sqrt", k: int | None = None) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    d = w.shape[0]
    k = topk_size(d, strategy) if k is None else min(max(int(k), 1), d)
    # stable sort on -w keeps lower indices first among equal weights
    order = np.argsort(-w, kind="stable")
    m = np.zeros(d, dtype=np.int8)
    m[order[:k]] = 1
    return m


def weights_to_mask(w, strategy: str) -> np.ndarray:
    if strategy == "mean_threshold":
        return mask_mean(w)
    return mask_topk(w, strategy)


def alike_mask(phi_x, phi_p, cfg: AlikeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Mask and weights from two raw attribution vectors."""
    x_hat = preprocess_scores(phi_x, cfg.ignore_direction, cfg.normalize_similarity)
    p_hat = preprocess_scores(phi_p, cfg.ignore_direction, cfg.normalize_similarity)
    w = combine(x_hat, p_hat, cfg.operator)
    return weights_to_mask(w, cfg.mask_strategy), w


def identify_alike_parts(
    forest,
    x,
    p,
    cfg: AlikeConfig | None = None,
    estimator: str = "saabas",
    background=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Alike-part mask for instance ``x`` and prototype ``p``.

    Each row is attributed towards its own predicted class. Returns
    ``(mask, weights)``.
    """
    cfg = cfg or AlikeConfig()
    pair = np.vstack([np.asarray(x, dtype=np.float64), np.asarray(p, dtype=np.float64)])
    if estimator == "shapley_oracle" and background is None:
        raise InvalidParams("the Shapley oracle needs a background sample")
    phi, _, _ = attribution_matrix(forest, pair, estimator, background=background)
    return alike_mask(phi[0], phi[1], cfg)

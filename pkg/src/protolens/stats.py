"""Wilcoxon signed-rank test and alike-part mask summaries."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from protolens.errors import AllZeroDifferences, EmptyInput, LengthMismatch

EXACT_MAX_N = 20


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    pvalue: float
    w_plus: float
    w_minus: float
    n: int
    method: str


def midranks(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1, ties sharing the average of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_lower_tail(ranks: np.ndarray, w: float) -> Fraction:
    """P(W+ <= w) under the null, counting all 2**n sign assignments.

    Mid-ranks are multiples of 1/2, so doubled ranks index an integer table of
    subset-sum counts.
    """
    doubled = [int(round(2 * r)) for r in ranks]
    counts = [0] * (sum(doubled) + 1)
    counts[0] = 1
    top = 0
    for r in doubled:
        for s in range(top, -1, -1):
            if counts[s]:
                counts[s + r] += counts[s]
        top += r
    limit = int(math.floor(2 * w + 1e-9))
    return Fraction(sum(counts[: limit + 1]), 2 ** len(doubled))


def wilcoxon_signed_rank(pairs, method: str = "auto") -> WilcoxonResult:
    """Two-sided signed-rank test on paired samples ``(a, b)``.

    Zero differences are dropped. ``method="auto"`` enumerates the exact null
    distribution for up to 20 non-zero differences and otherwise uses the
    tie-corrected normal approximation with a continuity correction.
    """
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise LengthMismatch("pairs must have shape (n, 2)")
    diffs = arr[:, 0] - arr[:, 1]
    diffs = diffs[diffs != 0]
    n = diffs.size
    if n == 0:
        raise AllZeroDifferences("every pair has a zero difference")
    ranks = midranks(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    w = min(w_plus, w_minus)

    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "approx"
    if method == "exact":
        p = float(min(Fraction(1), 2 * _exact_lower_tail(ranks, w)))
    elif method == "approx":
        mean = n * (n + 1) / 4.0
        _, tie_sizes = np.unique(np.abs(diffs), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_sizes**3 - tie_sizes) / 48.0
        if var <= 0:
            p = 1.0
        else:
            # 0.5 continuity correction, floored so it never overshoots the mean
            z = max(abs(w - mean) - 0.5, 0.0) / math.sqrt(var)
            p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return WilcoxonResult(w, p, w_plus, w_minus, n, method)


@dataclass
class MaskStatistics:
    activation_counts: list[int]
    n_masks: int
    length_min: float
    length_q1: float
    length_median: float
    length_mean: float
    length_q3: float
    length_max: float

    @property
    def activation_frequencies(self) -> np.ndarray:
        return np.asarray(self.activation_counts, dtype=float) / self.n_masks

    def to_dict(self) -> dict:
        return asdict(self)


def mask_statistics(masks) -> MaskStatistics:
    """Per-feature activation counts and a five-number-plus-mean summary of
    mask lengths (quartiles by linear interpolation between order statistics)."""
    if len(masks) == 0:
        raise EmptyInput("no masks given")
    try:
        M = np.asarray(masks, dtype=np.int64)
    except ValueError:
        raise LengthMismatch("masks differ in length") from None
    if M.ndim != 2:
        raise LengthMismatch("masks differ in length")
    lengths = M.sum(axis=1).astype(float)
    q1, med, q3 = np.percentile(lengths, [25, 50, 75], method="linear")
    return MaskStatistics(
        activation_counts=[int(c) for c in M.sum(axis=0)],
        n_masks=int(M.shape[0]),
        length_min=float(lengths.min()),
        length_q1=float(q1),
        length_median=float(med),
        length_mean=float(lengths.mean()),
        length_q3=float(q3),
        length_max=float(lengths.max()),
    )

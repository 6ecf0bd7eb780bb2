"""Tree-space distance: the fraction of trees in which two rows land in
different leaves."""

from __future__ import annotations

import csv
import io

import numpy as np

from protolens.errors import LengthMismatch


def tree_distance(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"leaf vectors differ in shape: {a.shape} vs {b.shape}")
    T = a.shape[0]
    return (T - int(np.count_nonzero(a == b))) / T


def cross_distance(leaves_a: np.ndarray, leaves_b: np.ndarray) -> np.ndarray:
    """Pairwise distances between two leaf matrices of shapes (n, T) and (m, T)."""
    leaves_a = np.atleast_2d(leaves_a)
    leaves_b = np.atleast_2d(leaves_b)
    if leaves_a.shape[1] != leaves_b.shape[1]:
        raise LengthMismatch("leaf matrices come from forests of different size")
    T = leaves_a.shape[1]
    agree = np.zeros((leaves_a.shape[0], leaves_b.shape[0]), dtype=np.int64)
    for t in range(T):
        agree += leaves_a[:, t][:, None] == leaves_b[:, t][None, :]
    # integer agreement counts keep the result exactly symmetric and 1/T-granular
    return (T - agree) / T


def distance_matrix(forest, ds) -> np.ndarray:
    """Dense n x n tree-distance matrix; leaf vectors are computed once per row."""
    leaves = forest.apply(getattr(ds, "X", ds))
    return cross_distance(leaves, leaves)


def matrix_csv(dist: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in dist:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()

"""Greedy prototype selection in tree space with an attribution-alignment term.

Every algorithm minimizes

    f(P) = sum_i min_{j in P} [ dist(i, j) + beta * fi(i, j) ]

where ``fi(i, j)`` sums the similarity-operator weights between the
preprocessed attributions of rows ``i`` and ``j``. With ``beta == 0`` this is
the plain k-medoid cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

from protolens.alike import AlikeConfig, combine, preprocess_scores
from protolens.attribution import attribution_matrix
from protolens.errors import ClassTooSmall, EmptyPrototypeSet, InvalidParams, LengthMismatch, MTooLarge
from protolens.proximity import distance_matrix

Algorithm = Literal["gkm", "sma", "apete"]
ALGORITHMS = ("gkm", "sma", "apete")

# relative slack under which two candidate objectives count as tied
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SelectionConfig:
    algorithm: Algorithm = "gkm"
    beta: float = 0.0
    alike: AlikeConfig = field(default_factory=AlikeConfig)
    k_per_class: int = 3
    m_total: int = 10
    apete_threshold: float = 0.05

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidParams(f"unknown algorithm {self.algorithm!r}")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise InvalidParams("beta must be a finite non-negative number")
        if self.algorithm == "gkm" and self.k_per_class < 1:
            raise InvalidParams("k_per_class must be >= 1")
        if self.algorithm == "sma" and self.m_total < 1:
            raise InvalidParams("m_total must be >= 1")
        if self.algorithm == "apete" and not 0.0 < self.apete_threshold < 1.0:
            raise InvalidParams("apete_threshold must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "beta": float(self.beta),
            "alike": self.alike.to_dict(),
            "k_per_class": self.k_per_class,
            "m_total": self.m_total,
            "apete_threshold": self.apete_threshold,
        }


@dataclass(frozen=True)
class PrototypeSet:
    indices: tuple[int, ...]
    labels: tuple[int, ...]
    objective_trace: tuple[float, ...] = ()
    algorithm: str = ""
    beta: float = 0.0
    config: dict = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.indices)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "beta": float(self.beta),
            "config": self.config,
            "prototypes": [{"index": int(i), "label": int(c)} for i, c in zip(self.indices, self.labels)],
            "objective_trace": [float(f) for f in self.objective_trace],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PrototypeSet":
        protos = doc["prototypes"]
        return cls(
            indices=tuple(int(p["index"]) for p in protos),
            labels=tuple(int(p["label"]) for p in protos),
            objective_trace=tuple(float(f) for f in doc.get("objective_trace", ())),
            algorithm=doc.get("algorithm", ""),
            beta=float(doc.get("beta", 0.0)),
            config=doc.get("config", {}),
        )


# --------------------------------------------------------------------------
# objective pieces


def fi_term(phi_x_hat, phi_p_hat, operator: str) -> float:
    return float(np.sum(combine(phi_x_hat, phi_p_hat, operator)))


def fi_matrix(phi_hat: np.ndarray, operator: str, chunk: int = 256) -> np.ndarray:
    """All pairwise ``fi`` values, evaluated with the same elementwise
    arithmetic as :func:`fi_term`."""
    phi_hat = np.asarray(phi_hat, dtype=np.float64)
    n = phi_hat.shape[0]
    out = np.empty((n, n))
    for s in range(0, n, chunk):
        block = combine(
            np.broadcast_to(phi_hat[s:s + chunk, None, :], (min(chunk, n - s), n, phi_hat.shape[1])),
            np.broadcast_to(phi_hat[None, :, :], (min(chunk, n - s), n, phi_hat.shape[1])),
            operator,
        )
        out[s:s + chunk] = block.sum(axis=-1)
    return out


def assignment_cost(i: int, j: int, dist: np.ndarray, fi: np.ndarray, beta: float) -> float:
    n = dist.shape[0]
    if not (0 <= i < n and 0 <= j < dist.shape[1]):
        raise IndexError(f"pair ({i}, {j}) outside a {dist.shape} matrix")
    return float(dist[i, j] + beta * fi[i, j])


def cost_matrix(dist: np.ndarray, fi: np.ndarray | None, beta: float) -> np.ndarray:
    if beta == 0 or fi is None:
        if beta != 0:
            raise InvalidParams("beta > 0 needs an fi matrix")
        return np.asarray(dist, dtype=np.float64)
    if fi.shape != dist.shape:
        raise LengthMismatch("fi and distance matrices differ in shape")
    return dist + beta * fi


def objective(indices, dist: np.ndarray, fi: np.ndarray | None = None, beta: float = 0.0) -> float:
    idx = list(indices)
    if not idx:
        raise EmptyPrototypeSet("objective of an empty prototype set")
    cost = cost_matrix(dist, fi, beta)
    return math.fsum(cost[:, idx].min(axis=1))


# --------------------------------------------------------------------------
# context


@dataclass
class SelectionContext:
    """Everything the greedy loops need about the training split."""

    dist: np.ndarray
    phi_hat: np.ndarray
    predicted: np.ndarray
    operator: str = "hadamard"
    fi_precomputed: np.ndarray | None = None

    @cached_property
    def fi(self) -> np.ndarray:
        if self.fi_precomputed is not None:
            return self.fi_precomputed
        return fi_matrix(self.phi_hat, self.operator)

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def costs(self, beta: float) -> np.ndarray:
        if beta == 0:
            return cost_matrix(self.dist, None, 0.0)
        return cost_matrix(self.dist, self.fi, beta)


def build_context(
    forest,
    train,
    estimator: str = "saabas",
    alike: AlikeConfig | None = None,
    background=None,
    phi: np.ndarray | None = None,
    dist: np.ndarray | None = None,
) -> SelectionContext:
    alike = alike or AlikeConfig()
    X = getattr(train, "X", train)
    if phi is None:
        phi, _, predicted = attribution_matrix(forest, X, estimator, background=background)
    else:
        predicted = forest.predict(X)
    if dist is None:
        dist = distance_matrix(forest, X)
    phi_hat = preprocess_scores(phi, alike.ignore_direction, alike.normalize_similarity)
    return SelectionContext(dist=dist, phi_hat=phi_hat, predicted=np.asarray(predicted), operator=alike.operator)


# --------------------------------------------------------------------------
# greedy core


def _pick(objectives: np.ndarray, eligible: np.ndarray) -> int:
    """Lowest-index eligible candidate whose objective ties the minimum."""
    vals = np.where(eligible, objectives, np.inf)
    best = vals.min()
    tol = _TIE_RTOL * max(1.0, abs(best))
    return int(np.flatnonzero(vals <= best + tol)[0])


def _candidate_objectives(cost: np.ndarray, best: np.ndarray) -> np.ndarray:
    return np.minimum(best[:, None], cost).sum(axis=0)


class _Greedy:
    """Incremental state of a greedy medoid search over a square cost matrix."""

    def __init__(self, cost: np.ndarray):
        self.cost = cost
        self.best = np.full(cost.shape[0], np.inf)
        self.selected = np.zeros(cost.shape[1], dtype=bool)
        self.order: list[int] = []

    def propose(self, eligible: np.ndarray | None = None) -> int | None:
        mask = ~self.selected if eligible is None else (~self.selected & eligible)
        if not mask.any():
            return None
        return _pick(_candidate_objectives(self.cost, self.best), mask)

    def value_with(self, j: int) -> float:
        return math.fsum(np.minimum(self.best, self.cost[:, j]))

    def add(self, j: int) -> float:
        self.best = np.minimum(self.best, self.cost[:, j])
        self.selected[j] = True
        self.order.append(j)
        return math.fsum(self.best)


def _make_set(indices, ctx: SelectionContext, trace, cfg: SelectionConfig) -> PrototypeSet:
    return PrototypeSet(
        indices=tuple(int(i) for i in indices),
        labels=tuple(int(ctx.predicted[i]) for i in indices),
        objective_trace=tuple(trace),
        algorithm=cfg.algorithm,
        beta=float(cfg.beta),
        config=cfg.to_dict(),
    )


def select_gkm(ctx: SelectionContext, cfg: SelectionConfig) -> PrototypeSet:
    """``k_per_class`` greedy medoids inside each predicted class."""
    cost = ctx.costs(cfg.beta)
    classes = np.unique(ctx.predicted)
    for c in classes:
        size = int(np.count_nonzero(ctx.predicted == c))
        if size < cfg.k_per_class:
            raise ClassTooSmall(f"predicted class {int(c)} has {size} rows < k_per_class={cfg.k_per_class}")
    chosen: list[int] = []
    trace: list[float] = []
    overall = np.full(ctx.n, np.inf)
    for c in classes:
        members = np.flatnonzero(ctx.predicted == c)
        greedy = _Greedy(cost[np.ix_(members, members)])
        for _ in range(cfg.k_per_class):
            j = greedy.propose()
            greedy.add(j)
            g = int(members[j])
            chosen.append(g)
            overall = np.minimum(overall, cost[:, g])
            trace.append(math.fsum(overall))
    return _make_set(chosen, ctx, trace, cfg)


def select_sma(ctx: SelectionContext, cfg: SelectionConfig) -> PrototypeSet:
    """``m_total`` picks, each with the largest objective decrease over all rows."""
    if cfg.m_total > ctx.n:
        raise MTooLarge(f"m_total={cfg.m_total} exceeds n={ctx.n}")
    greedy = _Greedy(ctx.costs(cfg.beta))
    trace = [greedy.add(greedy.propose()) for _ in range(cfg.m_total)]
    return _make_set(greedy.order, ctx, trace, cfg)


def select_apete(ctx: SelectionContext, cfg: SelectionConfig) -> PrototypeSet:
    """Greedy picks until the relative objective improvement drops below
    ``apete_threshold``; every predicted class receives a prototype first."""
    greedy = _Greedy(ctx.costs(cfg.beta))
    classes = set(int(c) for c in np.unique(ctx.predicted))
    covered: set[int] = set()
    trace: list[float] = []

    def commit(j: int) -> None:
        trace.append(greedy.add(j))
        covered.add(int(ctx.predicted[j]))

    commit(greedy.propose())
    while True:
        j = greedy.propose()
        if j is None:
            break
        f_prev = trace[-1]
        f_new = greedy.value_with(j)
        rel = (f_prev - f_new) / f_prev if f_prev > 0 else 0.0
        weak = f_new >= f_prev or rel < cfg.apete_threshold
        if not weak:
            commit(j)
            continue
        if covered >= classes:
            break
        # floor: one prototype per predicted class before stopping is allowed
        uncovered = np.isin(ctx.predicted, sorted(classes - covered))
        commit(greedy.propose(uncovered))
    return _make_set(greedy.order, ctx, trace, cfg)


_SELECTORS = {"gkm": select_gkm, "sma": select_sma, "apete": select_apete}


def select_prototypes(ctx: SelectionContext, cfg: SelectionConfig) -> PrototypeSet:
    return _SELECTORS[cfg.algorithm](ctx, cfg)

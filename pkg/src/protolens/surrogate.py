"""1-NN prototype surrogate and its fidelity to the black box."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from protolens.errors import EmptyPrototypeSet, EmptyTestSet
from protolens.proximity import cross_distance


@dataclass
class FidelityReport:
    method: str
    fidelity: float
    size: int
    n_test: int
    agreements: int
    per_class_agreement: dict[str, list[int]] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _prototype_leaves(prototypes, forest, train) -> np.ndarray:
    if len(prototypes.indices) == 0:
        raise EmptyPrototypeSet("surrogate needs at least one prototype")
    X = getattr(train, "X", train)
    return forest.apply(X[list(prototypes.indices)])


def nearest_prototypes(prototypes, forest, train, X) -> tuple[np.ndarray, np.ndarray]:
    """Position in ``prototypes`` of the nearest prototype for each row, and
    its distance. Ties go to the earlier-selected prototype."""
    proto_leaves = _prototype_leaves(prototypes, forest, train)
    X = np.asarray(getattr(X, "X", X), dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    dist = cross_distance(forest.apply(X), proto_leaves)
    pos = np.argmin(dist, axis=1)
    return pos, dist[np.arange(dist.shape[0]), pos]


def surrogate_predict(prototypes, forest, train, x) -> tuple[int, int]:
    """Label of the nearest prototype and that prototype's training index."""
    pos, _ = nearest_prototypes(prototypes, forest, train, x)
    k = int(pos[0])
    return int(prototypes.labels[k]), int(prototypes.indices[k])


def surrogate_predict_many(prototypes, forest, train, X) -> np.ndarray:
    pos, _ = nearest_prototypes(prototypes, forest, train, X)
    return np.asarray(prototypes.labels)[pos]


def agreement_report(method: str, predicted: np.ndarray, reference: np.ndarray, n_classes: int,
                     size: int, label_names=None, config=None) -> FidelityReport:
    predicted = np.asarray(predicted)
    reference = np.asarray(reference)
    if reference.size == 0:
        raise EmptyTestSet("fidelity over an empty test set")
    agree = predicted == reference
    names = label_names or [str(c) for c in range(n_classes)]
    per_class = {
        names[c]: [int(np.count_nonzero(agree & (reference == c))), int(np.count_nonzero(reference == c))]
        for c in range(n_classes)
    }
    hits = int(np.count_nonzero(agree))
    return FidelityReport(
        method=method,
        fidelity=hits / reference.size,
        size=int(size),
        n_test=int(reference.size),
        agreements=hits,
        per_class_agreement=per_class,
        config=dict(config or {}),
    )


def fidelity(prototypes, forest, train, test, method: str = "prototypes") -> FidelityReport:
    """Share of test rows where the 1-NN surrogate matches the black box."""
    X = np.asarray(getattr(test, "X", test), dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyTestSet("fidelity over an empty test set")
    black_box = forest.predict(X)
    surrogate = surrogate_predict_many(prototypes, forest, train, X)
    return agreement_report(
        method,
        surrogate,
        black_box,
        forest.n_classes,
        size=len(prototypes),
        label_names=getattr(test, "label_names", None),
        config=getattr(prototypes, "config", {}),
    )

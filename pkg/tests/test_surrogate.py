import numpy as np
import pytest

from conftest import random_dataset
from protolens.baselines import (
    BASELINES,
    DecisionTree,
    LogisticRegression,
    baseline_fit_predict,
    evaluate_baselines,
)
from protolens.errors import DegenerateClass, EmptyPrototypeSet, EmptyTestSet, InvalidParams
from protolens.forest import ForestParams, fit_forest
from protolens.proximity import tree_distance
from protolens.selection import PrototypeSet
from protolens.surrogate import fidelity, nearest_prototypes, surrogate_predict, surrogate_predict_many


def _protos(forest, train, indices):
    indices = tuple(int(i) for i in indices)
    labels = tuple(int(c) for c in forest.predict(train.X[list(indices)]))
    return PrototypeSet(indices, labels)


def test_prototype_row_gets_its_own_label(blobs2_forest, blobs2_split):
    train = blobs2_split.train
    P = _protos(blobs2_forest, train, [3, 50, 200, 7])
    for k, idx in enumerate(P.indices):
        label, proto = surrogate_predict(P, blobs2_forest, train, train.X[idx])
        assert (label, proto) == (P.labels[k], idx)
    _, d = nearest_prototypes(P, blobs2_forest, train, train.X[50])
    assert d[0] == 0.0


def test_single_prototype_predicts_its_label_everywhere(blobs2_forest, blobs2_split):
    P = PrototypeSet((11,), (1,))
    preds = surrogate_predict_many(P, blobs2_forest, blobs2_split.train, blobs2_split.test)
    assert set(preds.tolist()) == {1}


def test_nearest_matches_brute_force(blobs2_forest, blobs2_split):
    train = blobs2_split.train
    P = _protos(blobs2_forest, train, [5, 9, 100, 101, 300, 42])
    rng = np.random.default_rng(1)
    X = rng.normal(scale=2.0, size=(20, 8))
    pos, dist = nearest_prototypes(P, blobs2_forest, train, X)
    proto_leaves = [blobs2_forest.apply(train.X[i]) for i in P.indices]
    for r in range(20):
        lx = blobs2_forest.apply(X[r])
        ds = [tree_distance(lx, lp) for lp in proto_leaves]
        best = min(ds)
        assert pos[r] == ds.index(best)  # first occurrence = earlier-selected prototype
        assert dist[r] == best


def test_tie_goes_to_earlier_prototype(blobs2_forest, blobs2_split):
    train = blobs2_split.train
    # the same row selected twice with different stored labels
    P = PrototypeSet((8, 8), (0, 1))
    assert surrogate_predict(P, blobs2_forest, train, train.X[0])[0] == 0
    Q = PrototypeSet((8, 8), (1, 0))
    assert surrogate_predict(Q, blobs2_forest, train, train.X[0])[0] == 1


def test_fidelity_full_training_set(blobs2_forest, blobs2_split):
    train = blobs2_split.train
    P = _protos(blobs2_forest, train, range(train.n))
    report = fidelity(P, blobs2_forest, train, train.subset(range(0, train.n, 5)))
    assert report.fidelity == 1.0
    assert report.agreements == report.n_test


def test_flipped_labels_give_complement(blobs2_forest, blobs2_split):
    train, test = blobs2_split.train, blobs2_split.test
    P = _protos(blobs2_forest, train, [0, 1, 2, 3, 4, 5])
    flipped = PrototypeSet(P.indices, tuple(1 - c for c in P.labels))
    a = fidelity(P, blobs2_forest, train, test).fidelity
    b = fidelity(flipped, blobs2_forest, train, test).fidelity
    assert a + b == pytest.approx(1.0, abs=1e-15)


def test_fidelity_report_fields(blobs2_forest, blobs2_split):
    P = _protos(blobs2_forest, blobs2_split.train, [0, 1])
    r = fidelity(P, blobs2_forest, blobs2_split.train, blobs2_split.test)
    assert r.fidelity == r.agreements / r.n_test
    assert sum(v[1] for v in r.per_class_agreement.values()) == r.n_test
    assert sum(v[0] for v in r.per_class_agreement.values()) == r.agreements
    assert r.size == 2


def test_surrogate_errors(blobs2_forest, blobs2_split):
    with pytest.raises(EmptyPrototypeSet):
        surrogate_predict(PrototypeSet((), ()), blobs2_forest, blobs2_split.train, blobs2_split.test.X[0])
    with pytest.raises(EmptyTestSet):
        fidelity(PrototypeSet((0,), (0,)), blobs2_forest, blobs2_split.train, np.zeros((0, 8)))


def test_surrogate_order_independent(blobs2_forest, blobs2_split):
    P = _protos(blobs2_forest, blobs2_split.train, [1, 2, 3, 40])
    X = blobs2_split.test.X
    perm = np.random.default_rng(0).permutation(X.shape[0])
    a = surrogate_predict_many(P, blobs2_forest, blobs2_split.train, X)
    b = surrogate_predict_many(P, blobs2_forest, blobs2_split.train, X[perm])
    assert np.array_equal(a[perm], b)


# ---------------------------------------------------------------- baselines


def test_logistic_regression_on_blobs2(blobs2_forest, blobs2_split):
    reports = {r.method: r for r in evaluate_baselines(blobs2_forest, blobs2_split.train, blobs2_split.test)}
    assert set(reports) == set(BASELINES)
    assert reports["logistic_regression"].fidelity >= 0.95
    for r in reports.values():
        assert 0.0 <= r.fidelity <= 1.0


def test_decision_tree_depth_cap():
    ds = random_dataset(np.random.default_rng(0), 600, 6, n_classes=3)
    noisy = ds.y.copy()
    noisy[::3] = np.random.default_rng(1).integers(0, 3, noisy[::3].size)
    model = DecisionTree().fit(ds.X, noisy, 3)
    assert model.tree.trees[0].depth() <= 15


def test_baselines_use_black_box_labels_and_impute(blobs2_forest, blobs2_split):
    train, test = blobs2_split.train, blobs2_split.test
    X = train.X.copy()
    X[::4, 0] = np.nan
    proxy = blobs2_forest.predict(train.X)
    for kind in BASELINES:
        r = baseline_fit_predict(kind, X, proxy, test.X, blobs2_forest.predict(test.X), 2)
        assert r.method == kind and r.n_test == test.n


def test_degenerate_class():
    X = np.zeros((4, 2))
    with pytest.raises(DegenerateClass):
        baseline_fit_predict("naive_bayes", X, [0, 0, 0, 0], X, [0, 0, 0, 0], 2)
    with pytest.raises(InvalidParams):
        baseline_fit_predict("svm", X, [0, 1, 0, 1], X, [0, 1, 0, 1], 2)


def test_logistic_regression_converges_on_separable_pair():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    model = LogisticRegression().fit(X, np.array([0, 0, 1, 1]), 2)
    assert model.predict(X).tolist() == [0, 0, 1, 1]


def test_naive_bayes_constant_feature_does_not_blow_up():
    X = np.array([[0.0, 1.0], [0.1, 1.0], [5.0, 1.0], [5.1, 1.0]])
    r = baseline_fit_predict("naive_bayes", X, [0, 0, 1, 1], X, [0, 0, 1, 1], 2)
    assert r.fidelity == 1.0

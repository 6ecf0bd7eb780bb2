"""Interpretable proxy models trained on the black box's labels.

Inputs are mean-imputed with the training means. Hyperparameters are fixed:
Gaussian NB with a 1e-9 variance floor, multinomial logistic regression with
L2 1e-4 fitted by full-batch gradient descent on standardized features, and a
single depth-15 CART tree.
"""

from __future__ import annotations

import numpy as np

from protolens.data import Dataset, column_means
from protolens.errors import DegenerateClass, InvalidParams
from protolens.forest import fit_tree
from protolens.surrogate import FidelityReport, agreement_report

BASELINES = ("naive_bayes", "logistic_regression", "decision_tree")

VAR_FLOOR = 1e-9
LR_L2 = 1e-4
LR_TOL = 1e-6
LR_MAX_ITER = 10_000
DT_MAX_DEPTH = 15


class GaussianNB:
    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int) -> "GaussianNB":
        self.means = np.zeros((n_classes, X.shape[1]))
        self.vars = np.zeros((n_classes, X.shape[1]))
        self.log_prior = np.zeros(n_classes)
        for c in range(n_classes):
            rows = X[y == c]
            self.means[c] = rows.mean(axis=0)
            self.vars[c] = np.maximum(rows.var(axis=0), VAR_FLOOR)
            self.log_prior[c] = np.log(rows.shape[0] / X.shape[0])
        return self

    def joint_log_likelihood(self, X: np.ndarray) -> np.ndarray:
        diff = X[:, None, :] - self.means[None, :, :]
        ll = -0.5 * np.sum(np.log(2 * np.pi * self.vars)[None] + diff**2 / self.vars[None], axis=2)
        return ll + self.log_prior[None, :]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.joint_log_likelihood(X), axis=1)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class LogisticRegression:
    """Multinomial logistic regression; the intercept is not penalized."""

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int) -> "LogisticRegression":
        self.mu = X.mean(axis=0)
        sd = X.std(axis=0)
        self.sd = np.where(sd > 0, sd, 1.0)
        Z = np.hstack([(X - self.mu) / self.sd, np.ones((X.shape[0], 1))])
        n, p = Z.shape
        Y = np.eye(n_classes)[y]
        # step 1/L with L bounding the Hessian of the mean cross-entropy
        lipschitz = 0.5 * np.linalg.eigvalsh(Z.T @ Z / n).max() + LR_L2
        lr = 1.0 / lipschitz
        penalty = np.ones((p, 1))
        penalty[-1] = 0.0
        W = np.zeros((p, n_classes))
        self.n_iter = LR_MAX_ITER
        for it in range(LR_MAX_ITER):
            grad = Z.T @ (_softmax(Z @ W) - Y) / n + LR_L2 * penalty * W
            if np.linalg.norm(grad) < LR_TOL:
                self.n_iter = it
                break
            W -= lr * grad
        self.W = W
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        Z = np.hstack([(X - self.mu) / self.sd, np.ones((X.shape[0], 1))])
        return np.argmax(Z @ self.W, axis=1)


class DecisionTree:
    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, feature_names=None) -> "DecisionTree":
        names = feature_names or tuple(f"f{i}" for i in range(X.shape[1]))
        labels = tuple(str(c) for c in range(n_classes))
        self.tree = fit_tree(Dataset(names, X, y, labels), max_depth=DT_MAX_DEPTH)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.tree.predict(X)


def baseline_fit_predict(kind: str, train_X, proxy_labels, test_X, black_box_test, n_classes: int,
                         label_names=None, feature_names=None) -> FidelityReport:
    """Train ``kind`` on (train_X, proxy_labels) and report agreement with the
    black box on the test rows."""
    train_X = np.asarray(train_X, dtype=np.float64)
    test_X = np.asarray(test_X, dtype=np.float64)
    proxy_labels = np.asarray(proxy_labels, dtype=np.int64)
    missing = [c for c in range(n_classes) if not np.any(proxy_labels == c)]
    if missing:
        raise DegenerateClass(f"classes {missing} absent from the proxy labels")
    means = column_means(train_X)
    train_X = np.where(np.isnan(train_X), means, train_X)
    test_X = np.where(np.isnan(test_X), means, test_X)
    if kind == "naive_bayes":
        model = GaussianNB().fit(train_X, proxy_labels, n_classes)
        size = 2 * n_classes * train_X.shape[1]
    elif kind == "logistic_regression":
        model = LogisticRegression().fit(train_X, proxy_labels, n_classes)
        size = model.W.size
    elif kind == "decision_tree":
        model = DecisionTree().fit(train_X, proxy_labels, n_classes, feature_names)
        size = int(model.tree.trees[0].is_leaf.sum())
    else:
        raise InvalidParams(f"unknown baseline {kind!r}")
    return agreement_report(kind, model.predict(test_X), black_box_test, n_classes, size, label_names)


def evaluate_baselines(forest, train, test) -> list[FidelityReport]:
    """All three baselines, each trained on the forest's predictions for ``train``."""
    proxy = forest.predict(train.X)
    black_box = forest.predict(test.X)
    return [
        baseline_fit_predict(kind, train.X, proxy, test.X, black_box, forest.n_classes,
                             label_names=list(test.label_names), feature_names=train.feature_names)
        for kind in BASELINES
    ]

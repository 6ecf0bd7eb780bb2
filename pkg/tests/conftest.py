import numpy as np
import pytest

from protolens.data import Dataset, load_blobs2, stratified_split
from protolens.forest import ForestParams, Tree, TrainedForest, fit_forest


@pytest.fixture(scope="session")
def blobs2():
    return load_blobs2()


@pytest.fixture(scope="session")
def blobs2_split(blobs2):
    return stratified_split(blobs2, 0.2, 42)


@pytest.fixture(scope="session")
def blobs2_forest(blobs2_split):
    return fit_forest(blobs2_split.train, ForestParams(n_trees=100, max_depth=8), seed=42)


@pytest.fixture(scope="session")
def blobs2_forest_full(blobs2):
    """T=100 forest trained on all 600 rows."""
    return fit_forest(blobs2, ForestParams(n_trees=100, max_depth=8), seed=42)


def make_stump(feature, threshold, left_counts, right_counts, d, missing_left=True, names=None):
    """Hand-built one-split forest."""
    tree = Tree(
        feature=[feature, -1, -1],
        threshold=[threshold, 0.0, 0.0],
        missing_left=[missing_left, False, False],
        left=[1, -1, -1],
        right=[2, -1, -1],
        leaf_id=[-1, 0, 1],
        counts=[np.add(left_counts, right_counts), left_counts, right_counts],
    )
    names = names or tuple(f"f{i}" for i in range(d))
    return TrainedForest([tree], len(left_counts), names, {"n_trees": 1})


def make_leaf_forest(counts, d, n_trees=1):
    """Forest of single-node trees (ignores every feature)."""
    trees = [Tree([-1], [0.0], [False], [-1], [-1], [0], [counts]) for _ in range(n_trees)]
    return TrainedForest(trees, len(counts), tuple(f"f{i}" for i in range(d)), {"n_trees": n_trees})


def random_dataset(rng, n, d, n_classes=2, missing_rate=0.0):
    X = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    score = X @ w
    y = np.digitize(score, np.quantile(score, np.linspace(0, 1, n_classes + 1)[1:-1]))
    if missing_rate:
        X[rng.random(size=X.shape) < missing_rate] = np.nan
    return Dataset(tuple(f"f{i}" for i in range(d)), X, y, tuple(f"c{c}" for c in range(n_classes)))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from stereogate.seeding import make_rng
from stereogate.tree import (
    CLASSIFICATION,
    LEAF,
    TIE_RTOL,
    TreeParams,
    fit_tree,
    fit_tree_arrays,
    predict_tree,
)


def brute_force_split(X, y, msl=1):
    """Minimum weighted-variance split by enumeration (lowest feature, then threshold)."""
    n, p = X.shape
    parent = np.sum((y - y.mean()) ** 2)
    best = None
    for j in range(p):
        vals = np.unique(X[:, j])
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = lo + (hi - lo) / 2  # documented midpoint rule
            if not thr < hi:
                thr = lo
            left = X[:, j] <= thr
            if left.sum() < msl or (~left).sum() < msl:
                continue
            cost = sum(np.sum((y[m] - y[m].mean()) ** 2) for m in (left, ~left))
            if best is None or cost < best[0] - TIE_RTOL * max(parent, 1e-300):
                best = (cost, j, thr)
    if best is None or not best[0] < parent - TIE_RTOL * parent or parent == 0:
        return None
    return best[1], best[2]


def test_constant_target_single_leaf():
    t = fit_tree_arrays(np.arange(6.0)[:, None], np.full(6, 2.5))
    assert t.n_nodes == 1
    assert predict_tree(t, [100.0]) == 2.5


def test_step_example():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    t = fit_tree_arrays(X, [0, 0, 10, 10], TreeParams(mtry=1), make_rng(0))
    assert t.feature[0] == 0
    assert t.threshold[0] == 1.5
    assert predict_tree(t, [1.0]) == 0.0
    assert predict_tree(t, [2.0]) == 10.0
    # exactly at the threshold goes left
    assert predict_tree(t, [1.5]) == 0.0


def test_depth_zero_is_mean():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(20, 3)), rng.normal(size=20)
    t = fit_tree_arrays(X, y, TreeParams(max_depth=0))
    assert t.n_nodes == 1
    np.testing.assert_allclose(predict_tree(t, X), y.mean())


def test_distinct_rows_fit_exactly():
    rng = np.random.default_rng(1)
    X, y = rng.normal(size=(50, 4)), rng.normal(size=50)
    t = fit_tree_arrays(X, y)
    assert np.array_equal(predict_tree(t, X), y)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 8), p=st.integers(1, 3),
       ints=st.booleans())
def test_root_split_matches_brute_force(seed, n, p, ints):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, size=(n, p)).astype(float) if ints else rng.normal(size=(n, p))
    y = rng.integers(0, 3, size=n).astype(float) if ints else rng.normal(size=n)
    t = fit_tree_arrays(X, y, TreeParams(max_depth=1))
    expect = brute_force_split(X, y)
    if expect is None:
        assert t.feature[0] == LEAF
    else:
        assert (t.feature[0], t.threshold[0]) == expect


def test_min_samples_leaf_and_depth():
    rng = np.random.default_rng(2)
    X, y = rng.normal(size=(40, 2)), rng.normal(size=40)
    t = fit_tree_arrays(X, y, TreeParams(min_samples_leaf=5, max_depth=3))
    leaves = t.feature == LEAF
    assert t.n_samples[leaves].min() >= 5
    assert t.depth <= 3


def test_leaf_values_within_node_range():
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(30, 2)), rng.normal(size=30)
    t = fit_tree_arrays(X, y, TreeParams(min_samples_leaf=4))
    pred = predict_tree(t, rng.normal(size=(100, 2)))
    assert pred.min() >= y.min() and pred.max() <= y.max()


def test_classification_gini():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    ds = make_dataset(X, np.zeros(4), ts=["E", "E", "Z", "Z"])
    t = fit_tree(ds, task=CLASSIFICATION)
    assert t.threshold[0] == 1.5
    assert predict_tree(t, [[0.5], [2.5]]) == ["E", "Z"]


def test_invalid_inputs():
    with pytest.raises(ValueError):
        fit_tree_arrays(np.zeros((0, 1)), [])
    with pytest.raises(ValueError):
        fit_tree_arrays(np.zeros((3, 1)), [1, 2, np.nan])
    t = fit_tree_arrays(np.arange(3.0)[:, None], [1, 2, 3])
    with pytest.raises(ValueError):
        predict_tree(t, [1.0, 2.0])
    with pytest.raises(ValueError):
        fit_tree_arrays(np.zeros((3, 1)), [1, 2, 3], TreeParams(mtry=2))


def test_deterministic_given_seed():
    rng = np.random.default_rng(4)
    X, y = rng.normal(size=(40, 6)), rng.normal(size=40)
    ds = make_dataset(X, y)
    a = fit_tree(ds, TreeParams(mtry=2), rng_seed=7)
    b = fit_tree(ds, TreeParams(mtry=2), rng_seed=7)
    assert np.array_equal(a.feature, b.feature) and np.array_equal(a.threshold, b.threshold)


def test_impurity_decrease_sums_to_root_reduction():
    rng = np.random.default_rng(5)
    X, y = rng.normal(size=(25, 3)), rng.normal(size=25)
    t = fit_tree_arrays(X, y)
    # fully grown: leaves are pure, so total decrease equals root SSE
    total = np.sum((y - y.mean()) ** 2)
    assert t.impurity_decrease().sum() == pytest.approx(total, rel=1e-9)

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from stereogate.composite import Choice, CompositeConfig, CompositeError, predict_with, train_composite
from stereogate.dataset import DatasetError
from stereogate.ensemble import ForestParams
from stereogate.evaluation import (
    ModelSpec,
    metrics,
    run_ez_experiment,
    run_leave_one_type_out,
    run_out_of_sample,
    run_repeated_kfold,
)

FAST = CompositeConfig(forest=ForestParams(n_trees=10), k_range=(1, 2, 3))


def test_perfect_prediction():
    m = metrics([1.0, 2.0, 4.0], [1.0, 2.0, 4.0])
    assert (m.mse, m.mae, m.r2) == (0.0, 0.0, 1.0)


def test_hand_computed_case():
    m = metrics([0, 1, 2], [0, 1, 1])
    assert abs(m.mse - 1 / 3) <= 1e-12
    assert abs(m.mae - 1 / 3) <= 1e-12
    assert abs(m.r2 - 0.5) <= 1e-12
    # Pearson r between (0,1,2) and (0,1,1) is sqrt(3)/2
    assert m.r2_pearson == pytest.approx(0.75, abs=1e-12)


def test_constant_target_r2_undefined():
    m = metrics([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
    assert m.r2 is None and not m.r2_defined
    assert m.mse == pytest.approx(2 / 3)


# millesimal grid: squared errors never underflow, so the bound is exact math
_value = st.integers(-10**6, 10**6).map(lambda i: i / 1000)


@given(st.lists(st.tuples(_value, _value), min_size=1, max_size=30))
def test_mae_at_most_rmse(pairs):
    t, p = zip(*pairs)
    m = metrics(list(t), list(p))
    assert m.mae <= math.sqrt(m.mse) * (1 + 1e-12)
    if m.r2 is not None:
        assert m.r2 <= 1.0


def test_metrics_validation():
    with pytest.raises(ValueError):
        metrics([], [])
    with pytest.raises(ValueError):
        metrics([1.0], [1.0, 2.0])


def test_kfold_lasso_on_linear_data():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 4))
    ds = make_dataset(X, X @ [1.0, -2.0, 0.5, 3.0] + 1.0)
    summary = run_repeated_kfold(ds, ModelSpec(kind="lasso"), k=2, repeats=3, seed=1)
    assert len(summary.folds) == 6
    assert summary.stat("test", "r2")[0] > 0.999


def test_kfold_leave_one_out_structure():
    rng = np.random.default_rng(1)
    ds = make_dataset(rng.normal(size=(12, 2)), rng.normal(size=12))
    summary = run_repeated_kfold(ds, ModelSpec(kind="tree"), k=12, repeats=1, seed=0)
    assert all(f.test.n == 1 for f in summary.folds)
    assert summary.stat("test", "r2") == (None, None)
    assert sorted(i for f in summary.folds for i in f.test_indices) == list(range(12))


@pytest.mark.parametrize("kind", ["lasso", "tree", "rf", "boost"])
def test_kfold_deterministic(kind):
    rng = np.random.default_rng(2)
    ds = make_dataset(rng.normal(size=(30, 3)), rng.normal(size=30))
    spec = ModelSpec(kind=kind, forest=ForestParams(n_trees=5), lasso_lambda=0.01)
    a = run_repeated_kfold(ds, spec, 2, 2, seed=4)
    b = run_repeated_kfold(ds, spec, 2, 2, seed=4)
    assert a.summary() == b.summary()
    assert [f.test_predictions for f in a.folds] == [f.test_predictions for f in b.folds]


def test_kfold_summary_std_is_population():
    rng = np.random.default_rng(3)
    ds = make_dataset(rng.normal(size=(20, 2)), rng.normal(size=20))
    s = run_repeated_kfold(ds, ModelSpec(kind="tree"), 2, 3, seed=0)
    vals = np.array([f.test.mse for f in s.folds])
    assert s.summary()["test_mse"] == {"mean": vals.mean(), "std": vals.std(ddof=0)}


def test_unknown_model_kind():
    ds = make_dataset(np.zeros((4, 1)), np.arange(4.0))
    with pytest.raises(ValueError):
        run_repeated_kfold(ds, ModelSpec(kind="svm"), 2, 1)


def test_loto_identical_types_delegate(demo_data):
    a = demo_data.of_type("A1")
    # two copies of the same records under different type names
    both = make_dataset(np.vstack([a.X, a.X]), np.concatenate([a.y, a.y]),
                        names=list(a.schema.names), roles=list(a.schema.roles),
                        types=["P"] * len(a) + ["Q"] * len(a))
    rep = run_leave_one_type_out(both, FAST)
    assert len(rep.rows) == 2
    for r in rep.rows:
        assert r.mae["COMPOSITE"] == r.mae[r.choice.value]


def test_loto_single_type_error(demo_data):
    with pytest.raises(DatasetError):
        run_leave_one_type_out(demo_data.of_type("A1"), FAST)


def test_out_of_sample_subset_of_training(demo_data):
    model = train_composite(demo_data, FAST)
    test = demo_data.subset(range(0, len(demo_data), 3))
    rep = run_out_of_sample(demo_data, test, model=model)
    routed = []
    for r in rep.rows:
        group = test.of_type(r.reaction_type)
        routed.append(np.abs(group.y - predict_with(model, r.choice, group.X)))
    assert rep.pooled.mae <= np.mean(np.concatenate(routed)) + 1e-12
    assert rep.pooled.n == len(test)


def test_out_of_sample_errors(demo_data):
    empty = demo_data.subset([])
    with pytest.raises(DatasetError):
        run_out_of_sample(demo_data, empty, FAST)


def _ez_data(seed, separable):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(500, 3))
    if separable:
        # a margin around the threshold, so held-out points cannot fall
        # between the nearest training points of the two classes
        X[:, 1] += np.where(X[:, 1] > 0.2, 0.5, -0.5)
        labels = ["Z" if v > 0.2 else "E" for v in X[:, 1]]
    else:
        labels = list(rng.choice(["E", "Z"], size=500))
    return make_dataset(X, np.zeros(500), names=["n", "c", "s"],
                        roles=["nucleophile", "catalyst", "solvent"], ts=labels)


def test_ez_separable():
    rep = run_ez_experiment(_ez_data(0, True), k=2, seed=0, forest=ForestParams(n_trees=20))
    assert rep.test_accuracy == 1.0
    assert rep.train_accuracy == 1.0


def test_ez_null():
    rep = run_ez_experiment(_ez_data(1, False), k=2, seed=0, forest=ForestParams(n_trees=20))
    assert abs(rep.test_accuracy - 0.5) <= 0.1


def test_ez_needs_labels():
    ds = make_dataset(np.zeros((4, 1)), np.zeros(4))
    with pytest.raises(DatasetError):
        run_ez_experiment(ds)


def test_ez_excludes_imine(demo_data):
    rep = run_ez_experiment(demo_data, k=2, seed=0, forest=ForestParams(n_trees=10))
    # labels follow H-X-CNu, a nucleophile feature
    assert rep.test_accuracy > 0.95
    assert len(rep.folds) == 2

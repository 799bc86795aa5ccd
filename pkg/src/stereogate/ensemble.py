"""Random forests and AdaBoost.R2 boosted regression trees."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from stereogate.seeding import make_rng
from stereogate.tree import (
    CLASSIFICATION,
    REGRESSION,
    TreeParams,
    _check_features,
    fit_tree_arrays,
)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    mtry: int | None = None  # None -> ceil(p/3) regression, ceil(sqrt(p)) classification
    bootstrap: bool = True
    max_depth: int | None = None
    min_samples_leaf: int = 1
    seed: int = 0

    def resolved_mtry(self, n_features, task):
        if self.mtry is not None:
            return self.mtry
        if task == CLASSIFICATION:
            return max(1, math.ceil(math.sqrt(n_features)))
        return max(1, math.ceil(n_features / 3))


@dataclass(frozen=True, eq=False)
class RandomForest:
    trees: tuple
    params: ForestParams
    importances: np.ndarray
    task: str = REGRESSION
    classes: tuple = ()

    @property
    def n_features(self):
        return self.trees[0].n_features

    def predict(self, X):
        return predict_rf(self, X)


def _targets(ds, task):
    if task == CLASSIFICATION:
        if any(ts is None for ts in ds.transition_states):
            raise ValueError("classification needs a transition_state label on every record")
        return list(ds.transition_states)
    if task != REGRESSION:
        raise ValueError(f"unknown task {task!r}")
    return ds.y


def normalized_importances(raw):
    """Scale a non-negative vector to sum to 100 (all zeros stays all zeros)."""
    raw = np.asarray(raw, dtype=float)
    total = raw.sum()
    return raw * (100.0 / total) if total > 0 else np.zeros_like(raw)


def fit_rf_arrays(X, y, params=ForestParams(), task=REGRESSION):
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n == 0:
        raise ValueError("cannot fit a forest on an empty dataset")
    if params.n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    tree_params = TreeParams(
        max_depth=params.max_depth,
        min_samples_leaf=params.min_samples_leaf,
        mtry=params.resolved_mtry(p, task),
    )
    tree_params.validate(p)
    classes = tuple(sorted(set(y))) if task == CLASSIFICATION else ()
    y_arr = np.asarray(y, dtype=object if task == CLASSIFICATION else float)
    trees, raw = [], np.zeros(p)
    for t in range(params.n_trees):
        # per-tree stream: results do not depend on the order trees are grown in
        rng = make_rng(params.seed, "forest-tree", t)
        idx = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        tree = fit_tree_arrays(X[idx], y_arr[idx], tree_params, rng, task, classes or None)
        trees.append(tree)
        raw += tree.impurity_decrease()
    return RandomForest(tuple(trees), params, normalized_importances(raw), task, classes)


def fit_rf(ds, params=ForestParams(), task=REGRESSION):
    """Fit a random forest on all feature columns of ``ds``."""
    return fit_rf_arrays(ds.X, _targets(ds, task), params, task)


def predict_rf(f, features):
    """Mean of tree outputs (regression) or majority vote, lowest label on ties."""
    single = np.asarray(features).ndim == 1
    X = _check_features(features, f.n_features)
    leaf_vals = np.stack([t.value[t.apply(X)] for t in f.trees])
    if f.task == CLASSIFICATION:
        votes = np.zeros((len(X), len(f.classes)), dtype=int)
        for row in leaf_vals.astype(int):
            votes[np.arange(len(X)), row] += 1
        labels = [f.classes[i] for i in votes.argmax(axis=1)]
        return labels[0] if single else labels
    # accumulate tree by tree so each row's sum does not depend on batch shape
    acc = np.zeros(len(X))
    for row in leaf_vals:
        acc += row
    out = np.clip(acc / len(f.trees), leaf_vals.min(axis=0), leaf_vals.max(axis=0))
    return float(out[0]) if single else out


def importance_table(forest, names):
    """(feature, importance) rows sorted by importance descending, then name."""
    rows = list(zip(names, (float(v) for v in forest.importances)))
    return sorted(rows, key=lambda r: (-r[1], r[0]))


# boosting ------------------------------------------------------------------


@dataclass(frozen=True)
class BoostParams:
    n_stages: int = 50
    tree: TreeParams = field(default_factory=TreeParams)
    seed: int = 0


@dataclass(frozen=True, eq=False)
class BoostedTrees:
    trees: tuple
    stage_weights: np.ndarray
    stage_losses: np.ndarray
    params: BoostParams

    @property
    def n_features(self):
        return self.trees[0].n_features

    def predict(self, X):
        return predict_boost(self, X)


def fit_boost_arrays(X, y, params=BoostParams()):
    """AdaBoost.R2 with the linear loss.

    Stage t fits a tree on a bootstrap drawn with the current sample weights,
    computes per-sample loss ``|err| / max|err|`` on the full training set and
    its weighted mean ``L``.  Stops before keeping a stage with ``L >= 0.5``,
    and after keeping a perfect stage (``L < 1e-12``, weight 1).  Otherwise
    ``beta = L / (1 - L)``, stage weight ``ln(1/beta)`` and sample weights are
    multiplied by ``beta ** (1 - loss)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n == 0:
        raise ValueError("cannot fit boosted trees on an empty dataset")
    if params.n_stages < 1:
        raise ValueError("n_stages must be at least 1")
    params.tree.validate(p)
    w = np.full(n, 1.0 / n)
    trees, weights, losses = [], [], []
    for t in range(params.n_stages):
        rng = make_rng(params.seed, "boost-stage", t)
        idx = rng.choice(n, size=n, replace=True, p=w)
        tree = fit_tree_arrays(X[idx], y[idx], params.tree, rng)
        err = np.abs(tree.value[tree.apply(X)] - y)
        emax = err.max()
        loss = err / emax if emax > 0 else np.zeros(n)
        avg = float(w @ loss)
        if avg < 1e-12:
            trees.append(tree)
            weights.append(1.0)
            losses.append(avg)
            break
        if avg >= 0.5:
            if not trees:
                # a first stage is always kept so the model is usable
                trees.append(tree)
                weights.append(1.0)
                losses.append(avg)
            break
        beta = avg / (1.0 - avg)
        trees.append(tree)
        weights.append(math.log(1.0 / beta))
        losses.append(avg)
        w = w * beta ** (1.0 - loss)
        w /= w.sum()
    return BoostedTrees(tuple(trees), np.array(weights), np.array(losses), params)


def fit_boost(ds, params=BoostParams()):
    return fit_boost_arrays(ds.X, ds.y, params)


def predict_boost(b, features):
    """Weighted average of stage predictions, sum(w_t * pred_t) / sum(w_t)."""
    single = np.asarray(features).ndim == 1
    X = _check_features(features, b.n_features)
    preds = np.stack([t.value[t.apply(X)] for t in b.trees])
    if len(b.trees) == 1:
        out = preds[0]
    else:
        acc = np.zeros(len(X))
        for w, row in zip(b.stage_weights, preds):
            acc += w * row
        out = acc / b.stage_weights.sum()
    return float(out[0]) if single else out


def with_seed(params, seed):
    return replace(params, seed=seed)

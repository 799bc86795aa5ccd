"""CART trees: regression by variance reduction, classification by Gini.

Trees are stored as flat node arrays.  Internal nodes route a sample left
when ``x[feature] <= threshold``.  Candidate thresholds are midpoints between
consecutive distinct values, ``lo + (hi - lo) / 2`` (or ``lo`` when rounding
would reach ``hi``); among splits with equal impurity decrease the
lowest feature index wins, then the lowest threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stereogate.seeding import make_rng

REGRESSION = "regression"
CLASSIFICATION = "classification"
LEAF = -1
# relative slack under which two impurity decreases count as tied
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_leaf: int = 1
    mtry: int | None = None

    def validate(self, n_features):
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative or None")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be at least 1")
        if self.mtry is not None and not 1 <= self.mtry <= n_features:
            raise ValueError(f"mtry must lie in [1, {n_features}], got {self.mtry}")


@dataclass(frozen=True, eq=False)
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity: np.ndarray
    n_features: int
    task: str = REGRESSION
    classes: tuple = ()

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def n_leaves(self):
        return int(np.sum(self.feature == LEAF))

    @property
    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def impurity_decrease(self):
        """Sample-weighted impurity decrease per feature, summed over splits."""
        out = np.zeros(self.n_features)
        for i in np.flatnonzero(self.feature != LEAF):
            l, r = self.left[i], self.right[i]
            dec = (
                self.n_samples[i] * self.impurity[i]
                - self.n_samples[l] * self.impurity[l]
                - self.n_samples[r] * self.impurity[r]
            )
            out[self.feature[i]] += max(dec, 0.0)
        return out

    def apply(self, X):
        X = _check_features(X, self.n_features)
        node = np.zeros(len(X), dtype=int)
        while True:
            f = self.feature[node]
            internal = f != LEAF
            if not internal.any():
                return node
            rows = np.flatnonzero(internal)
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def predict(self, X):
        return predict_tree(self, X)


def _check_features(X, n_features):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != n_features:
        raise ValueError(
            f"feature length {X.shape[1]} does not match training schema ({n_features})"
        )
    return X


def predict_tree(t, features):
    """Leaf value for each row; class labels for classification trees."""
    single = np.asarray(features).ndim == 1
    vals = t.value[t.apply(features)]
    if t.task == CLASSIFICATION:
        labels = [t.classes[int(v)] for v in vals]
        return labels[0] if single else labels
    return float(vals[0]) if single else vals


def _best_split(Xn, yn, feats, msl, task, n_classes):
    """Best (feature, threshold, decrease) over ``feats`` at one node.

    ``yn`` is the centered target (regression) or class index (classification).
    Weighted impurity is expressed in count units: n * impurity.
    Returns None if no admissible split has positive decrease.
    """
    n = len(yn)
    xs = Xn[:, feats]
    order = np.argsort(xs, axis=0, kind="stable")
    xs = np.take_along_axis(xs, order, axis=0)
    nl = np.arange(1, n)[:, None].astype(float)
    nr = n - nl
    if task == REGRESSION:
        ys = yn[order]
        s = np.cumsum(ys, axis=0)
        total = float(yn.sum())
        sq = float(yn @ yn)
        sl = s[:-1]
        sr = total - sl
        # parent SSE minus children SSE; the sum-of-squares terms cancel
        parent = sq - total**2 / n
        children = sq - sl**2 / nl - sr**2 / nr
        dec = parent - children
    else:
        onehot = np.eye(n_classes)[yn]
        counts = np.cumsum(onehot[order], axis=0)[:-1]
        tot = onehot.sum(axis=0)
        right = tot - counts
        parent = n - (tot @ tot) / n
        children = (nl - (counts**2).sum(axis=2) / nl) + (nr - (right**2).sum(axis=2) / nr)
        dec = parent - children
    valid = xs[1:] > xs[:-1]
    if msl > 1:
        pos = np.arange(1, n)
        valid &= ((pos >= msl) & (n - pos >= msl))[:, None]
    dec = np.where(valid, dec, -np.inf)
    best = dec.max()
    if not np.isfinite(best) or best <= TIE_RTOL * max(parent, 0.0):
        return None
    tied = dec >= best - TIE_RTOL * max(parent, abs(best))
    # lowest feature index first (feats sorted), then lowest split position
    col = int(np.flatnonzero(tied.any(axis=0))[0])
    pos = int(np.flatnonzero(tied[:, col])[0])
    lo, hi = xs[pos, col], xs[pos + 1, col]
    thr = lo + (hi - lo) / 2.0
    if thr >= hi:
        thr = lo
    return int(feats[col]), float(thr), float(dec[pos, col])


def fit_tree_arrays(X, y, params=TreeParams(), rng=None, task=REGRESSION, classes=None):
    """Grow a CART tree on arrays.

    ``rng`` drives node-level feature subsampling and is consumed in
    depth-first (left before right) order; it is unused when mtry covers all
    features.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    if not np.all(np.isfinite(X)):
        raise ValueError("tree features must be finite")
    params.validate(p)
    mtry = p if params.mtry is None else params.mtry
    if rng is None:
        rng = np.random.default_rng(0)
    if task == REGRESSION:
        y = np.asarray(y, dtype=float)
        if y.shape != (n,) or not np.all(np.isfinite(y)):
            raise ValueError("regression targets must be finite, one per row")
        classes = ()
    elif task == CLASSIFICATION:
        if classes is None:
            classes = tuple(sorted(set(y)))
        lookup = {c: i for i, c in enumerate(classes)}
        y = np.array([lookup[v] for v in y], dtype=int)
    else:
        raise ValueError(f"unknown task {task!r}")
    n_classes = len(classes)

    feature, threshold, left, right, value, n_samples, impurity = ([] for _ in range(7))

    def new_node(idx):
        yi = y[idx]
        if task == REGRESSION:
            lo, hi = yi.min(), yi.max()
            val = min(max(float(yi.mean()), lo), hi)
            imp = float(yi.var()) if hi > lo else 0.0
        else:
            counts = np.bincount(yi, minlength=n_classes)
            val = float(np.argmax(counts))
            frac = counts / len(yi)
            imp = float(1.0 - frac @ frac) if counts.max() < len(yi) else 0.0
        for lst, v in zip(
            (feature, threshold, left, right, value, n_samples, impurity),
            (LEAF, 0.0, LEAF, LEAF, val, len(idx), imp),
        ):
            lst.append(v)
        return len(feature) - 1

    all_feats = np.arange(p)
    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if impurity[node] == 0.0 or len(idx) < 2 * params.min_samples_leaf:
            continue
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        if mtry < p:
            feats = np.sort(rng.choice(p, size=mtry, replace=False))
        else:
            feats = all_feats
        yn = y[idx]
        if task == REGRESSION:
            yn = yn - yn.mean()
        split = _best_split(X[idx], yn, feats, params.min_samples_leaf, task, n_classes)
        if split is None:
            continue
        f, thr, _ = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is grown (and draws rng) first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return DecisionTree(
        feature=np.array(feature, dtype=int),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=int),
        right=np.array(right, dtype=int),
        value=np.array(value, dtype=float),
        n_samples=np.array(n_samples, dtype=int),
        impurity=np.array(impurity, dtype=float),
        n_features=p,
        task=task,
        classes=tuple(classes),
    )


def fit_tree(ds, params=TreeParams(), rng_seed=0, task=REGRESSION):
    """Fit a tree on a Dataset (targets from ``ddg``, or E/Z labels for classification)."""
    if len(ds) == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    if task == CLASSIFICATION:
        if any(ts is None for ts in ds.transition_states):
            raise ValueError("classification needs a transition_state label on every record")
        y = list(ds.transition_states)
    else:
        y = ds.y
    return fit_tree_arrays(ds.X, y, params, make_rng(rng_seed, "tree"), task)

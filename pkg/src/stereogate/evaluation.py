"""Metrics and evaluation protocols.

Protocols: repeated k-fold CV of a single learner, leave-one-reaction-type-out
validation of the composite model, out-of-sample evaluation on held-out
reaction types, and E/Z transition-state classification.  STDs are population
STDs over fold-level values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from stereogate.composite import (
    Choice,
    CompositeConfig,
    CompositeError,
    LassoSettings,
    predict_group,
    predict_with,
    train_composite,
    train_lasso,
)
from stereogate.dataset import (
    ROLES,
    DatasetError,
    kfold_plan,
    leave_one_type_out_plan,
    select_features,
)
from stereogate.ensemble import (
    BoostParams,
    ForestParams,
    fit_boost,
    fit_rf,
    predict_boost,
    predict_rf,
)
from stereogate.seeding import derive_seed
from stereogate.tree import CLASSIFICATION, TreeParams, fit_tree, predict_tree

METRIC_NAMES = ("mse", "mae", "r2", "r2_pearson")


@dataclass(frozen=True)
class MetricReport:
    mse: float
    mae: float
    r2: float | None  # None when the targets are constant
    r2_pearson: float | None
    n: int

    @property
    def r2_defined(self):
        return self.r2 is not None

    def as_dict(self):
        return {"mse": self.mse, "mae": self.mae, "r2": self.r2,
                "r2_pearson": self.r2_pearson, "n": self.n}


def metrics(y_true, y_pred):
    t = np.asarray(y_true, dtype=float)
    p = np.asarray(y_pred, dtype=float)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError("y_true and y_pred must be 1-D and of equal length")
    if len(t) == 0:
        raise ValueError("metrics need at least one value")
    err = t - p
    mse = float(np.mean(err**2))
    mae = float(np.mean(np.abs(err)))
    tc = t - t.mean()
    ss_tot = float(tc @ tc)
    ss_res = float(err @ err)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else None
    pc = p - p.mean()
    ss_p = float(pc @ pc)
    if ss_tot > 0 and ss_p > 0:
        r = float(tc @ pc) / math.sqrt(ss_tot * ss_p)
        r2p = min(1.0, r * r)
    else:
        r2p = None
    return MetricReport(mse, mae, r2, r2p, len(t))


def _summary(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    arr = np.array(vals)
    return float(arr.mean()), float(arr.std())


# repeated k-fold -----------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Which learner to cross-validate and on which feature roles.

    ``kind`` is one of lasso, tree, rf, boost.
    """

    kind: str = "rf"
    roles: tuple = ROLES
    forest: ForestParams = field(default_factory=ForestParams)
    tree: TreeParams = field(default_factory=TreeParams)
    boost: BoostParams = field(default_factory=BoostParams)
    lasso_lambda: float | None = None
    lasso_cv_folds: int = 5

    def fit_predict(self, train, seed):
        if self.kind == "lasso":
            m = train_lasso(train, LassoSettings(lam=self.lasso_lambda,
                                                 cv_folds=self.lasso_cv_folds), seed)
            return m.predict
        if self.kind == "tree":
            t = fit_tree(train, self.tree, seed)
            return lambda X: predict_tree(t, X)
        if self.kind == "rf":
            f = fit_rf(train, replace(self.forest, seed=seed))
            return lambda X: predict_rf(f, X)
        if self.kind == "boost":
            b = fit_boost(train, replace(self.boost, seed=seed))
            return lambda X: predict_boost(b, X)
        raise ValueError(f"unknown model kind {self.kind!r}")


@dataclass(frozen=True)
class FoldResult:
    repeat: int
    fold: int
    train: MetricReport
    test: MetricReport
    test_indices: tuple
    test_predictions: tuple


@dataclass(frozen=True)
class CvSummary:
    folds: tuple
    protocol: dict
    seed: int

    def stat(self, split, metric):
        """(mean, population std) of ``metric`` over all folds of ``split``."""
        return _summary(getattr(getattr(f, split), metric) for f in self.folds)

    def summary(self):
        return {
            f"{split}_{m}": dict(zip(("mean", "std"), self.stat(split, m)))
            for split in ("train", "test")
            for m in METRIC_NAMES
        }


def run_repeated_kfold(ds, spec=ModelSpec(), k=2, repeats=100, seed=0):
    """Train on each plan pair, score on both sides, aggregate mean/STD."""
    data = select_features(ds, spec.roles)
    plan = kfold_plan(len(data), k, repeats, seed)
    folds = []
    for (train_idx, test_idx), (rep, f) in zip(plan.pairs, plan.labels):
        train, test = data.subset(train_idx), data.subset(test_idx)
        predict = spec.fit_predict(train, derive_seed(seed, "fold-model", rep, f))
        test_pred = np.asarray(predict(test.X))
        folds.append(FoldResult(
            rep, f,
            metrics(train.y, predict(train.X)),
            metrics(test.y, test_pred),
            tuple(int(i) for i in test_idx),
            tuple(float(v) for v in test_pred),
        ))
    protocol = {"name": "repeated_kfold", "k": k, "repeats": repeats,
                "model": spec.kind, "roles": list(spec.roles),
                "std": "population std over fold-level metrics"}
    return CvSummary(tuple(folds), protocol, seed)


# leave-one-type-out --------------------------------------------------------

PREDICTORS = (Choice.LASSO, Choice.NUCLEOPHILE_RF, Choice.OVERALL_RF)


@dataclass(frozen=True)
class TypeResult:
    reaction_type: str
    n: int
    choice: Choice
    imine_log_density: float
    nucleophile_log_density: float
    mae: dict  # "COMPOSITE" and each Choice value -> MAE
    y_true: tuple
    y_pred: tuple  # composite predictions


@dataclass(frozen=True)
class LotoReport:
    rows: tuple

    def average_mae(self, name):
        return float(np.mean([r.mae[name] for r in self.rows]))

    def gaps(self):
        """Average individual-predictor MAE minus composite MAE."""
        comp = self.average_mae("COMPOSITE")
        return {c.value: self.average_mae(c.value) - comp for c in PREDICTORS}


def _evaluate_type(model, group):
    preds, decision = predict_group(model, group.X)
    mae = {"COMPOSITE": float(np.mean(np.abs(group.y - preds)))}
    for c in PREDICTORS:
        if c == decision.choice:
            mae[c.value] = mae["COMPOSITE"]
        else:
            other = np.asarray(predict_with(model, c, group.X))
            mae[c.value] = float(np.mean(np.abs(group.y - other)))
    return TypeResult(
        group.reaction_types[0], len(group), decision.choice,
        decision.imine_log_density, decision.nucleophile_log_density, mae,
        tuple(float(v) for v in group.y), tuple(float(v) for v in preds),
    )


def run_leave_one_type_out(ds, cfg=CompositeConfig()):
    """Hold out each reaction type, train on the rest, gate the type as a group.

    The individual predictors compared against are the composite's own
    sub-models, so they see exactly the same training data and seeds.
    """
    plan = leave_one_type_out_plan(ds)
    rows = []
    for (train_idx, test_idx), name in zip(plan.pairs, plan.labels):
        model = train_composite(ds.subset(train_idx), cfg)
        rows.append(_evaluate_type(model, ds.subset(test_idx)))
    return LotoReport(tuple(rows))


# out-of-sample ------------------------------------------------------------


@dataclass(frozen=True)
class OutOfSampleReport:
    rows: tuple
    pooled: MetricReport


def run_out_of_sample(train, test, cfg=CompositeConfig(), model=None):
    """Train on ``train`` (unless ``model`` is given) and gate each test type."""
    if train.schema != test.schema:
        raise DatasetError("train and test schemas differ")
    if len(test) == 0:
        raise DatasetError("test set is empty")
    if model is None:
        model = train_composite(train, cfg)
    rows = []
    for name in test.type_names:
        group = test.of_type(name)
        if len(group) == 0:
            raise CompositeError(f"reaction type {name!r} has no records")
        rows.append(_evaluate_type(model, group))
    y = np.concatenate([r.y_true for r in rows])
    p = np.concatenate([r.y_pred for r in rows])
    return OutOfSampleReport(tuple(rows), metrics(y, p))


# E/Z classification ----------------------------------------------------------

EZ_ROLES = ("catalyst", "nucleophile", "solvent", "reaction_variable")


@dataclass(frozen=True)
class EzReport:
    train_accuracy: float
    test_accuracy: float
    train_std: float
    test_std: float
    folds: tuple  # (repeat, fold, train_acc, test_acc)


def run_ez_experiment(ds, k=2, seed=0, repeats=1, include_reaction_variables=True,
                      forest=ForestParams()):
    """RF classification of E/Z transition states without imine features."""
    if any(ts is None for ts in ds.transition_states):
        raise DatasetError("every record needs a transition_state label (E or Z)")
    roles = [r for r in EZ_ROLES if include_reaction_variables or r != "reaction_variable"]
    roles = [r for r in roles if ds.schema.columns_with_roles([r])]
    data = select_features(ds, roles)
    plan = kfold_plan(len(data), k, repeats, seed)
    labels = np.array(data.transition_states, dtype=object)
    rows = []
    for (train_idx, test_idx), (rep, f) in zip(plan.pairs, plan.labels):
        train = data.subset(train_idx)
        rf = fit_rf(train, replace(forest, seed=derive_seed(seed, "ez", rep, f)),
                    task=CLASSIFICATION)
        tr = np.mean(np.array(predict_rf(rf, train.X), dtype=object) == labels[train_idx])
        te = np.mean(np.array(predict_rf(rf, data.X[test_idx]), dtype=object)
                     == labels[test_idx])
        rows.append((rep, f, float(tr), float(te)))
    tr_mean, tr_std = _summary(r[2] for r in rows)
    te_mean, te_std = _summary(r[3] for r in rows)
    return EzReport(tr_mean, te_mean, tr_std, te_std, tuple(rows))

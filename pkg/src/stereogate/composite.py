"""Density-gated composite predictor.

Three predictors are trained on the same data: LASSO on all features, an
overall random forest on all features, and a nucleophile-focused forest that
never sees imine features.  Two Gaussian mixtures model the training
distribution of a few imine and nucleophile descriptors.  A reaction whose
nucleophile log density is not positive goes to LASSO; otherwise the overall
forest is used when the imine log density is positive too, and the
nucleophile-focused forest when it is not.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from stereogate.dataset import FeatureSchema, select_features
from stereogate.ensemble import ForestParams, RandomForest, fit_rf, predict_rf
from stereogate.gmm import GmmConfig, GmmModel, fit_gmm, log_density, select_components
from stereogate.linear import LassoModel, fit_lasso, lambda_grid, predict_lasso, select_lambda
from stereogate.seeding import derive_seed
from stereogate.tree import DecisionTree

FORMAT_NAME = "stereogate-composite"
FORMAT_VERSION = 1

DEFAULT_IMINE_GATE = ("C", "SL", "PG")
DEFAULT_NUCLEOPHILE_GATE = ("H-X-Nu", "H-X-CNu", "Nu", "Polarizability")


class Choice(str, enum.Enum):
    LASSO = "LASSO"
    NUCLEOPHILE_RF = "NUCLEOPHILE_RF"
    OVERALL_RF = "OVERALL_RF"

    def __str__(self):
        return self.value


class CompositeError(ValueError):
    pass


class ModelFileError(ValueError):
    """Model file is unreadable, truncated or structurally invalid."""


class ModelVersionError(ModelFileError):
    pass


@dataclass(frozen=True)
class LassoSettings:
    lam: float | None = None  # None -> chosen by inner k-fold CV
    n_lambdas: int = 50
    lambda_ratio: float = 1e-4
    cv_folds: int = 5
    tol: float = 1e-7
    max_iter: int = 10_000


@dataclass(frozen=True)
class CompositeConfig:
    lasso: LassoSettings = field(default_factory=LassoSettings)
    forest: ForestParams = field(default_factory=ForestParams)
    gmm: GmmConfig = field(default_factory=GmmConfig)
    k_range: tuple = tuple(range(1, 21))
    imine_components: int | None = None
    nucleophile_components: int | None = None
    imine_gate_features: tuple = DEFAULT_IMINE_GATE
    nucleophile_gate_features: tuple = DEFAULT_NUCLEOPHILE_GATE
    seed: int = 0


@dataclass(frozen=True)
class GateDecision:
    imine_log_density: float
    nucleophile_log_density: float
    imine_high: bool
    nucleophile_high: bool
    choice: Choice


@dataclass(frozen=True, eq=False)
class CompositeModel:
    lasso: LassoModel
    rf_overall: RandomForest
    rf_nucleophile: RandomForest
    gmm_imine: GmmModel
    gmm_nucleophile: GmmModel
    schema: FeatureSchema
    imine_gate_features: tuple
    nucleophile_gate_features: tuple
    # diagnostics kept for reports; empty when component counts were fixed
    imine_bic: tuple = ()
    nucleophile_bic: tuple = ()

    @property
    def nucleophile_columns(self):
        return tuple(i for i, r in enumerate(self.schema.roles) if r != "imine")

    def gate_columns(self, names):
        return [self.schema.index(n) for n in names]


def route(imine_log_density, nucleophile_log_density):
    """Pick a predictor from the two gate log densities ("high" means > 0)."""
    if not (math.isfinite(imine_log_density) and math.isfinite(nucleophile_log_density)):
        raise ValueError("gate log densities must be finite")
    if nucleophile_log_density <= 0.0:
        return Choice.LASSO
    if imine_log_density > 0.0:
        return Choice.OVERALL_RF
    return Choice.NUCLEOPHILE_RF


def gate_decision(imine_ld, nucleophile_ld):
    return GateDecision(
        float(imine_ld),
        float(nucleophile_ld),
        bool(imine_ld > 0.0),
        bool(nucleophile_ld > 0.0),
        route(imine_ld, nucleophile_ld),
    )


def _check_gate_features(schema, names, role):
    for name in names:
        if name not in schema.names:
            raise CompositeError(f"missing gating feature {name!r}")
        if schema.role_of(name) != role:
            raise CompositeError(
                f"gating feature {name!r} has role {schema.role_of(name)!r}, expected {role!r}"
            )
    if not names:
        raise CompositeError(f"no {role} gating features configured")


def _fit_gate(X, fixed_k, cfg, names, stream):
    gcfg = replace(cfg.gmm, seed=derive_seed(cfg.seed, stream))
    if fixed_k is not None:
        return fit_gmm(X, fixed_k, gcfg, names), ()
    k_range = [k for k in cfg.k_range if k <= len(X)]
    model, table = select_components(X, k_range, gcfg, names)
    return model, tuple(table)


def train_lasso(ds, settings, seed):
    lam = settings.lam
    if lam is None:
        grid = lambda_grid(ds.X, ds.y, settings.n_lambdas, settings.lambda_ratio)
        folds = min(settings.cv_folds, len(ds))
        lam, _ = select_lambda(ds, grid, folds, seed, settings.tol, settings.max_iter)
    return fit_lasso(ds, lam, settings.tol, settings.max_iter)


def train_composite(ds, cfg=CompositeConfig()):
    """Fit the three predictors and both gating mixtures on ``ds``."""
    schema = ds.schema
    imine_names = tuple(cfg.imine_gate_features)
    nuc_names = tuple(cfg.nucleophile_gate_features)
    _check_gate_features(schema, imine_names, "imine")
    _check_gate_features(schema, nuc_names, "nucleophile")
    if len(ds) < 2:
        raise CompositeError("training needs at least 2 records")

    lasso = train_lasso(ds, cfg.lasso, derive_seed(cfg.seed, "lasso-cv"))
    rf_overall = fit_rf(ds, replace(cfg.forest, seed=derive_seed(cfg.seed, "rf-overall")))
    nuc_ds = select_features(
        ds, {"nucleophile", "catalyst", "solvent", "reaction_variable"}
    )
    rf_nucleophile = fit_rf(
        nuc_ds, replace(cfg.forest, seed=derive_seed(cfg.seed, "rf-nucleophile"))
    )
    gmm_imine, imine_bic = _fit_gate(
        ds.columns(imine_names), cfg.imine_components, cfg, imine_names, "gmm-imine"
    )
    gmm_nuc, nuc_bic = _fit_gate(
        ds.columns(nuc_names), cfg.nucleophile_components, cfg, nuc_names, "gmm-nucleophile"
    )
    return CompositeModel(
        lasso=lasso,
        rf_overall=rf_overall,
        rf_nucleophile=rf_nucleophile,
        gmm_imine=gmm_imine,
        gmm_nucleophile=gmm_nuc,
        schema=schema,
        imine_gate_features=imine_names,
        nucleophile_gate_features=nuc_names,
        imine_bic=imine_bic,
        nucleophile_bic=nuc_bic,
    )


def _rows(m, features):
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if X.shape[1] != len(m.schema):
        raise CompositeError(
            f"record has {X.shape[1]} features, model schema has {len(m.schema)}"
        )
    return X


def gate_log_densities(m, features):
    """(imine, nucleophile) log densities for each row of ``features``."""
    X = _rows(m, features)
    imine = log_density(m.gmm_imine, X[:, m.gate_columns(m.imine_gate_features)])
    nuc = log_density(m.gmm_nucleophile, X[:, m.gate_columns(m.nucleophile_gate_features)])
    return imine, nuc


def predict_with(m, choice, features):
    """Evaluate one named sub-model on full-schema rows."""
    X = _rows(m, features)
    if choice == Choice.LASSO:
        return predict_lasso(m.lasso, X)
    if choice == Choice.OVERALL_RF:
        return predict_rf(m.rf_overall, X)
    return predict_rf(m.rf_nucleophile, X[:, list(m.nucleophile_columns)])


def predict_composite(m, features):
    """Gate one record and return ``(prediction, GateDecision)``."""
    x = np.asarray(features, dtype=float)
    if x.ndim != 1:
        raise CompositeError("predict_composite takes one record; use predict_records")
    imine, nuc = gate_log_densities(m, x)
    decision = gate_decision(imine[0], nuc[0])
    return float(predict_with(m, decision.choice, x[None, :])[0]), decision


def predict_records(m, features):
    """Per-record gating for a batch: ``(predictions, [GateDecision, ...])``."""
    X = _rows(m, features)
    if len(X) == 0:
        return np.empty(0), []
    imine, nuc = gate_log_densities(m, X)
    decisions = [gate_decision(i, n) for i, n in zip(imine, nuc)]
    preds = np.empty(len(X))
    for choice in Choice:
        rows = [i for i, d in enumerate(decisions) if d.choice == choice]
        if rows:
            preds[rows] = predict_with(m, choice, X[rows])
    return preds, decisions


def predict_group(m, features):
    """Gate a whole reaction type once, on its mean log densities.

    Every record is then predicted by the single chosen sub-model.
    """
    X = _rows(m, features)
    if len(X) == 0:
        raise CompositeError("cannot gate an empty group")
    imine, nuc = gate_log_densities(m, X)
    decision = gate_decision(float(np.mean(imine)), float(np.mean(nuc)))
    return np.asarray(predict_with(m, decision.choice, X), dtype=float), decision


# persistence ---------------------------------------------------------------


def _tree_doc(t):
    return {
        "feature": t.feature.tolist(),
        "threshold": t.threshold.tolist(),
        "left": t.left.tolist(),
        "right": t.right.tolist(),
        "value": t.value.tolist(),
        "n_samples": t.n_samples.tolist(),
        "impurity": t.impurity.tolist(),
        "n_features": t.n_features,
        "task": t.task,
        "classes": list(t.classes),
    }


def _tree_from(d):
    return DecisionTree(
        feature=np.array(d["feature"], dtype=int),
        threshold=np.array(d["threshold"], dtype=float),
        left=np.array(d["left"], dtype=int),
        right=np.array(d["right"], dtype=int),
        value=np.array(d["value"], dtype=float),
        n_samples=np.array(d["n_samples"], dtype=int),
        impurity=np.array(d["impurity"], dtype=float),
        n_features=int(d["n_features"]),
        task=d["task"],
        classes=tuple(d["classes"]),
    )


def _forest_doc(f):
    p = f.params
    return {
        "params": {fl.name: getattr(p, fl.name) for fl in fields(p)},
        "importances": f.importances.tolist(),
        "task": f.task,
        "classes": list(f.classes),
        "trees": [_tree_doc(t) for t in f.trees],
    }


def _forest_from(d):
    return RandomForest(
        trees=tuple(_tree_from(t) for t in d["trees"]),
        params=ForestParams(**d["params"]),
        importances=np.array(d["importances"], dtype=float),
        task=d["task"],
        classes=tuple(d["classes"]),
    )


def _gmm_doc(g):
    return {
        "weights": g.weights.tolist(),
        "means": g.means.tolist(),
        "covariances": g.covariances.tolist(),
        "feature_names": list(g.feature_names),
        "log_likelihood": g.log_likelihood,
        "n_iter": g.n_iter,
        "converged": g.converged,
        "degenerate": g.degenerate,
    }


def _gmm_from(d):
    k = len(d["weights"])
    dim = len(d["feature_names"]) or len(d["means"][0])
    return GmmModel(
        weights=np.array(d["weights"], dtype=float),
        means=np.array(d["means"], dtype=float).reshape(k, dim),
        covariances=np.array(d["covariances"], dtype=float).reshape(k, dim, dim),
        feature_names=tuple(d["feature_names"]),
        log_likelihood=float(d["log_likelihood"]),
        n_iter=int(d["n_iter"]),
        converged=bool(d["converged"]),
        degenerate=bool(d["degenerate"]),
    )


def _lasso_doc(m):
    return {
        "coefficients": m.coefficients.tolist(),
        "intercept": m.intercept,
        "lambda": m.lam,
        "means": m.means.tolist(),
        "scales": m.scales.tolist(),
        "std_coefficients": m.std_coefficients.tolist(),
        "n_iter": m.n_iter,
        "converged": m.converged,
    }


def _lasso_from(d):
    return LassoModel(
        coefficients=np.array(d["coefficients"], dtype=float),
        intercept=float(d["intercept"]),
        lam=float(d["lambda"]),
        means=np.array(d["means"], dtype=float),
        scales=np.array(d["scales"], dtype=float),
        std_coefficients=np.array(d["std_coefficients"], dtype=float),
        n_iter=int(d["n_iter"]),
        converged=bool(d["converged"]),
    )


def model_document(m):
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "schema": {"names": list(m.schema.names), "roles": list(m.schema.roles)},
        "gating": {
            "imine_features": list(m.imine_gate_features),
            "nucleophile_features": list(m.nucleophile_gate_features),
            "log_density_threshold": 0.0,
            "imine_bic": [list(r) for r in m.imine_bic],
            "nucleophile_bic": [list(r) for r in m.nucleophile_bic],
        },
        "lasso": _lasso_doc(m.lasso),
        "rf_overall": _forest_doc(m.rf_overall),
        "rf_nucleophile": _forest_doc(m.rf_nucleophile),
        "gmm_imine": _gmm_doc(m.gmm_imine),
        "gmm_nucleophile": _gmm_doc(m.gmm_nucleophile),
    }


def save_model(m, path):
    """Write a versioned JSON model file (floats keep their exact repr)."""
    text = json.dumps(model_document(m), allow_nan=False, separators=(",", ":"))
    Path(path).write_text(text + "\n")


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFileError(f"corrupt model file {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ModelFileError(f"{path} is not a {FORMAT_NAME} model file")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelVersionError(
            f"model file version {doc.get('version')!r} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    try:
        gating = doc["gating"]
        return CompositeModel(
            lasso=_lasso_from(doc["lasso"]),
            rf_overall=_forest_from(doc["rf_overall"]),
            rf_nucleophile=_forest_from(doc["rf_nucleophile"]),
            gmm_imine=_gmm_from(doc["gmm_imine"]),
            gmm_nucleophile=_gmm_from(doc["gmm_nucleophile"]),
            schema=FeatureSchema(doc["schema"]["names"], doc["schema"]["roles"]),
            imine_gate_features=tuple(gating["imine_features"]),
            nucleophile_gate_features=tuple(gating["nucleophile_features"]),
            imine_bic=tuple(tuple(r) for r in gating["imine_bic"]),
            nucleophile_bic=tuple(tuple(r) for r in gating["nucleophile_bic"]),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ModelFileError(f"corrupt model file {path}: {exc!r}") from None

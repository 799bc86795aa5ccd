"""Run configuration (JSON).

Every key is optional and unknown keys are rejected.  Defaults::

    {
      "seed": 0,
      "output_dir": null,
      "data": {"table": null, "schema": null, "test_table": null},
      "lasso": {"lam": null, "n_lambdas": 50, "lambda_ratio": 1e-4,
                "cv_folds": 5, "tol": 1e-7, "max_iter": 10000},
      "forest": {"n_trees": 100, "mtry": null, "bootstrap": true,
                 "max_depth": null, "min_samples_leaf": 1},
      "tree": {"max_depth": null, "min_samples_leaf": 1, "mtry": null},
      "boost": {"n_stages": 50, "max_depth": null, "min_samples_leaf": 1},
      "gmm": {"max_iter": 500, "tol": 1e-6, "restarts": 5, "reg": 1e-6},
      "gating": {"imine_features": ["C", "SL", "PG"],
                 "nucleophile_features": ["H-X-Nu", "H-X-CNu", "Nu", "Polarizability"],
                 "k_min": 1, "k_max": 20,
                 "imine_components": null, "nucleophile_components": null},
      "evaluate": {"model": "rf", "roles": [all five roles], "k": 2, "repeats": 100,
                   "include_reaction_variables": true}
    }

Relative data paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from stereogate.composite import (
    DEFAULT_IMINE_GATE,
    DEFAULT_NUCLEOPHILE_GATE,
    CompositeConfig,
    LassoSettings,
)
from stereogate.dataset import ROLES
from stereogate.ensemble import BoostParams, ForestParams
from stereogate.gmm import GmmConfig
from stereogate.tree import TreeParams

MODEL_KINDS = ("lasso", "tree", "rf", "boost")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSection:
    table: str | None = None
    schema: str | None = None
    test_table: str | None = None


@dataclass(frozen=True)
class ForestSection:
    n_trees: int = 100
    mtry: int | None = None
    bootstrap: bool = True
    max_depth: int | None = None
    min_samples_leaf: int = 1


@dataclass(frozen=True)
class BoostSection:
    n_stages: int = 50
    max_depth: int | None = None
    min_samples_leaf: int = 1


@dataclass(frozen=True)
class GmmSection:
    max_iter: int = 500
    tol: float = 1e-6
    restarts: int = 5
    reg: float = 1e-6


@dataclass(frozen=True)
class GatingSection:
    imine_features: tuple = DEFAULT_IMINE_GATE
    nucleophile_features: tuple = DEFAULT_NUCLEOPHILE_GATE
    k_min: int = 1
    k_max: int = 20
    imine_components: int | None = None
    nucleophile_components: int | None = None


@dataclass(frozen=True)
class EvaluateSection:
    model: str = "rf"
    roles: tuple = ROLES
    k: int = 2
    repeats: int = 100
    include_reaction_variables: bool = True


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str | None = None
    data: DataSection = field(default_factory=DataSection)
    lasso: LassoSettings = field(default_factory=LassoSettings)
    forest: ForestSection = field(default_factory=ForestSection)
    tree: TreeParams = field(default_factory=TreeParams)
    boost: BoostSection = field(default_factory=BoostSection)
    gmm: GmmSection = field(default_factory=GmmSection)
    gating: GatingSection = field(default_factory=GatingSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)

    def forest_params(self, seed=None):
        return ForestParams(**_asdict(self.forest), seed=self.seed if seed is None else seed)

    def boost_params(self):
        b = self.boost
        return BoostParams(
            n_stages=b.n_stages,
            tree=TreeParams(max_depth=b.max_depth, min_samples_leaf=b.min_samples_leaf),
            seed=self.seed,
        )

    def composite_config(self):
        g = self.gating
        return CompositeConfig(
            lasso=self.lasso,
            forest=self.forest_params(),
            gmm=GmmConfig(**_asdict(self.gmm), seed=self.seed),
            k_range=tuple(range(g.k_min, g.k_max + 1)),
            imine_components=g.imine_components,
            nucleophile_components=g.nucleophile_components,
            imine_gate_features=tuple(g.imine_features),
            nucleophile_gate_features=tuple(g.nucleophile_features),
            seed=self.seed,
        )

    def to_dict(self):
        return {f.name: _plain(getattr(self, f.name)) for f in fields(self)}


def _asdict(obj):
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def _plain(v):
    if hasattr(v, "__dataclass_fields__"):
        return {k: _plain(x) for k, x in _asdict(v).items()}
    if isinstance(v, tuple):
        return list(v)
    return v


def _build(cls, raw, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    defaults = cls()
    for name, value in raw.items():
        default = getattr(defaults, name)
        if hasattr(default, "__dataclass_fields__"):
            value = _build(type(default), value, f"{where}.{name}")
        elif isinstance(default, tuple):
            if not isinstance(value, list):
                raise ConfigError(f"{where}.{name}: expected a list")
            value = tuple(value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}.{name}: expected true/false")
        elif isinstance(default, (int, float)) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{where}.{name}: expected a number")
            if isinstance(default, int) and not isinstance(value, int):
                raise ConfigError(f"{where}.{name}: expected an integer")
        kwargs[name] = value
    return cls(**kwargs)


def _validate(cfg):
    g, e = cfg.gating, cfg.evaluate
    if not 1 <= g.k_min <= g.k_max:
        raise ConfigError("gating: need 1 <= k_min <= k_max")
    for name in ("imine_components", "nucleophile_components"):
        v = getattr(g, name)
        if v is not None and (not isinstance(v, int) or v < 1):
            raise ConfigError(f"gating.{name}: expected a positive integer or null")
    if e.model not in MODEL_KINDS:
        raise ConfigError(f"evaluate.model must be one of {', '.join(MODEL_KINDS)}")
    bad = set(e.roles) - set(ROLES)
    if bad or not e.roles:
        raise ConfigError(f"evaluate.roles: invalid role list {list(e.roles)}")
    if cfg.forest.n_trees < 1 or cfg.boost.n_stages < 1:
        raise ConfigError("forest.n_trees and boost.n_stages must be positive")
    if cfg.gmm.restarts < 1 or cfg.gmm.reg <= 0:
        raise ConfigError("gmm.restarts must be >= 1 and gmm.reg > 0")


def parse_config(raw, base_dir=None):
    cfg = _build(RunConfig, raw, "config")
    if base_dir is not None:
        d = cfg.data
        resolved = {
            k: (str(Path(base_dir) / v) if v is not None and not Path(v).is_absolute() else v)
            for k, v in _asdict(d).items()
        }
        cfg = replace(cfg, data=DataSection(**resolved))
    _validate(cfg)
    return cfg


def load_config(path):
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"config {path}: {exc.strerror}") from None
    return parse_config(raw, Path(path).parent)

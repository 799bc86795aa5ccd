"""Deterministic synthetic reaction datasets.

A generator spec (JSON) declares feature names per role, Gaussian clusters per
role, the reaction types (each picks one cluster per role) and a target::

    {
      "features": {"imine": ["C", "SL"], "nucleophile": ["Nu"], ...},
      "clusters": {"imine": {"I1": {"center": [0.1, 3.0], "spread": 0.02}}, ...},
      "reaction_types": [
        {"name": "T1", "records": 40, "clusters": {"imine": "I1", ...}}
      ],
      "target": {
        "intercept": 1.0,
        "linear": {"Nu": 0.8},
        "steps": [{"feature": "C", "threshold": 0.1, "low": 0.0, "high": 1.5}],
        "noise": 0.05
      },
      "transition_state": {"feature": "Nu", "threshold": 0.5}
    }

``spread`` is a scalar or one standard deviation per feature.  Records are
emitted type by type; ids are ``<type>-<index>``.  ``transition_state`` is
optional and labels a record Z when the named feature exceeds the threshold.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from stereogate.dataset import ROLES, Dataset, DatasetError, FeatureSchema
from stereogate.seeding import make_rng

BUILTIN_SPECS = ("gate_demo",)


class SynthSpecError(DatasetError):
    pass


def load_spec(path_or_name):
    """Read a generator spec from a JSON file or a shipped spec name."""
    if str(path_or_name) in BUILTIN_SPECS and not Path(path_or_name).exists():
        text = resources.files("stereogate.data").joinpath(f"{path_or_name}.json").read_text()
    else:
        text = Path(path_or_name).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SynthSpecError(f"generator spec is not valid JSON: {exc}") from None


def _finite(values, where):
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise SynthSpecError(f"{where}: non-finite value")
    return arr


def _schema_from(spec):
    features = spec.get("features")
    if not isinstance(features, dict) or not features:
        raise SynthSpecError("spec.features must map roles to feature-name lists")
    names, roles = [], []
    for role in ROLES:
        for name in features.get(role, []):
            names.append(name)
            roles.append(role)
    extra = set(features) - set(ROLES)
    if extra:
        raise SynthSpecError(f"unknown role(s) in spec.features: {sorted(extra)}")
    if not names:
        raise SynthSpecError("spec declares no features")
    return FeatureSchema(names, roles)


def synth_generate(spec, seed=0):
    """Build a :class:`Dataset` from a generator spec; pure in (spec, seed)."""
    schema = _schema_from(spec)
    features = spec["features"]
    clusters = spec.get("clusters", {})
    types = spec.get("reaction_types")
    if not types:
        raise SynthSpecError("spec.reaction_types must be a non-empty list")
    target = spec.get("target", {})
    noise = float(target.get("noise", 0.0))
    if not math.isfinite(noise) or noise < 0:
        raise SynthSpecError("target.noise must be a finite non-negative number")

    used_roles = [r for r in ROLES if features.get(r)]
    cluster_params = {}
    for role in used_roles:
        width = len(features[role])
        for cname, c in clusters.get(role, {}).items():
            center = _finite(c["center"], f"cluster {role}/{cname} center")
            spread = _finite(c.get("spread", 0.0), f"cluster {role}/{cname} spread")
            if center.shape != (width,):
                raise SynthSpecError(
                    f"cluster {role}/{cname}: center needs {width} values"
                )
            spread = np.broadcast_to(spread, (width,))
            if np.any(spread < 0):
                raise SynthSpecError(f"cluster {role}/{cname}: negative spread")
            cluster_params[role, cname] = (center, spread)

    rng = make_rng(seed, "synth")
    blocks, ids, tnames = [], [], []
    for t in types:
        name = str(t.get("name", ""))
        count = t.get("records")
        if not name:
            raise SynthSpecError("every reaction type needs a name")
        if not isinstance(count, int) or count <= 0:
            raise SynthSpecError(f"reaction type {name!r}: records must be a positive integer")
        block = np.empty((count, len(schema)))
        for role in used_roles:
            cname = t.get("clusters", {}).get(role)
            if (role, cname) not in cluster_params:
                raise SynthSpecError(f"reaction type {name!r}: no {role} cluster {cname!r}")
            center, spread = cluster_params[role, cname]
            cols = schema.columns_with_roles([role])
            block[:, cols] = center + spread * rng.standard_normal((count, len(cols)))
        blocks.append(block)
        ids.extend(f"{name}-{i:03d}" for i in range(count))
        tnames.extend([name] * count)
    X = np.vstack(blocks)

    y = np.full(len(X), float(target.get("intercept", 0.0)))
    for fname, coef in target.get("linear", {}).items():
        y += float(_finite(coef, f"linear coefficient {fname}")) * X[:, _col(schema, fname)]
    for step in target.get("steps", []):
        col = X[:, _col(schema, step["feature"])]
        thr, low, high = _finite([step["threshold"], step["low"], step["high"]], "step")
        y += np.where(col > thr, high, low)
    if noise > 0:
        y += noise * rng.standard_normal(len(X))

    states = None
    ts = spec.get("transition_state")
    if ts:
        col = X[:, _col(schema, ts["feature"])]
        states = ["Z" if v > float(ts["threshold"]) else "E" for v in col]
    return Dataset(schema, X, y, ids, tnames, states)


def _col(schema, name):
    try:
        return schema.index(name)
    except KeyError:
        raise SynthSpecError(f"target references unknown feature {name!r}") from None

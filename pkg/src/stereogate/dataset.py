"""Reaction tables, role-tagged feature schemas and split plans.

A dataset is a comma-delimited table with a header row plus a JSON sidecar
mapping every feature column to a molecule role::

    reaction_id,reaction_type,ddg,transition_state,C,SL,H-X-Nu,...
    r001,thiol-addition,1.93,E,0.117,3.42,0.552,...

    {"C": "imine", "SL": "imine", "H-X-Nu": "nucleophile", ...}

``transition_state`` is optional (column may be absent or cells empty).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from stereogate.seeding import make_rng

ROLES = ("imine", "nucleophile", "catalyst", "solvent", "reaction_variable")
RESERVED = ("reaction_id", "reaction_type", "ddg", "transition_state")
TS_LABELS = ("E", "Z")


class DatasetError(ValueError):
    """Malformed table, schema, or an impossible split request."""


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple
    roles: tuple

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "roles", tuple(self.roles))
        if len(self.names) != len(self.roles):
            raise DatasetError("schema names and roles differ in length")
        if len(set(self.names)) != len(self.names):
            seen = set()
            dup = next(n for n in self.names if n in seen or seen.add(n))
            raise DatasetError(f"duplicate feature name {dup!r}")
        for name, role in zip(self.names, self.roles):
            if role not in ROLES:
                raise DatasetError(f"feature {name!r} has unknown role {role!r}")
            if name in RESERVED:
                raise DatasetError(f"feature name {name!r} is reserved")

    def __len__(self):
        return len(self.names)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def role_of(self, name):
        return self.roles[self.index(name)]

    def columns_with_roles(self, roles):
        roles = set(roles)
        return [i for i, r in enumerate(self.roles) if r in roles]

    def role_counts(self):
        return {role: sum(r == role for r in self.roles) for role in ROLES}

    def to_mapping(self):
        return dict(zip(self.names, self.roles))


@dataclass(frozen=True)
class ReactionRecord:
    reaction_id: str
    reaction_type: str
    features: tuple
    ddg: float
    transition_state: str | None = None


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


class Dataset:
    """Immutable column-oriented view of a list of reaction records.

    ``X`` is the (n_records, n_features) float matrix aligned to ``schema``;
    ``y`` holds ΔΔG‡ in kcal/mol (NaN only for prediction-only tables).
    """

    def __init__(self, schema, X, y, reaction_ids, reaction_types, transition_states=None):
        X = np.asarray(X, dtype=float)
        n = len(reaction_ids)
        if X.ndim != 2:
            X = X.reshape(n, len(schema))
        if X.shape != (n, len(schema)):
            raise DatasetError(
                f"feature matrix shape {X.shape} does not match "
                f"{n} records x {len(schema)} features"
            )
        if transition_states is None:
            transition_states = [None] * n
        if not (len(y) == len(reaction_types) == len(transition_states) == n):
            raise DatasetError("record field lengths disagree")
        self.schema = schema
        self.X = _frozen(X, float)
        self.y = _frozen(y, float)
        self.reaction_ids = tuple(str(r) for r in reaction_ids)
        self.reaction_types = tuple(str(t) for t in reaction_types)
        self.transition_states = tuple(transition_states)

    @classmethod
    def from_records(cls, schema, records):
        records = list(records)
        p = len(schema)
        X = np.array([r.features for r in records], dtype=float).reshape(len(records), p)
        return cls(
            schema,
            X,
            [r.ddg for r in records],
            [r.reaction_id for r in records],
            [r.reaction_type for r in records],
            [r.transition_state for r in records],
        )

    def __len__(self):
        return len(self.reaction_ids)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.reaction_ids == other.reaction_ids
            and self.reaction_types == other.reaction_types
            and self.transition_states == other.transition_states
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y, equal_nan=True)
        )

    __hash__ = None

    def __repr__(self):
        return f"Dataset({len(self)} records, {len(self.schema)} features)"

    @property
    def records(self):
        return [
            ReactionRecord(rid, rtype, tuple(row.tolist()), float(ddg), ts)
            for rid, rtype, row, ddg, ts in zip(
                self.reaction_ids, self.reaction_types, self.X, self.y,
                self.transition_states,
            )
        ]

    @property
    def type_names(self):
        """Distinct reaction types in order of first appearance."""
        return tuple(dict.fromkeys(self.reaction_types))

    def subset(self, indices):
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            self.schema,
            self.X[idx],
            self.y[idx],
            [self.reaction_ids[i] for i in idx],
            [self.reaction_types[i] for i in idx],
            [self.transition_states[i] for i in idx],
        )

    def of_type(self, reaction_type):
        idx = [i for i, t in enumerate(self.reaction_types) if t == reaction_type]
        return self.subset(idx)

    def columns(self, names):
        """Feature matrix restricted to the named columns, in the given order."""
        missing = [n for n in names if n not in self.schema.names]
        if missing:
            raise DatasetError(f"unknown feature(s): {', '.join(missing)}")
        return self.X[:, [self.schema.index(n) for n in names]]


def _parse_float(cell, row, column):
    try:
        value = float(cell)
    except ValueError:
        raise DatasetError(
            f"row {row}, column {column!r}: non-numeric value {cell!r}"
        ) from None
    if not math.isfinite(value):
        raise DatasetError(f"row {row}, column {column!r}: non-finite value {cell!r}")
    return value


def read_schema(schema_path):
    try:
        mapping = json.loads(Path(schema_path).read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"schema file {schema_path}: invalid JSON ({exc})") from None
    if not isinstance(mapping, dict):
        raise DatasetError("schema file must be a JSON object mapping column -> role")
    for name, role in mapping.items():
        if role not in ROLES:
            raise DatasetError(f"schema: column {name!r} has unknown role {role!r}")
    return mapping


def load_dataset(table_path, schema_path=None, *, schema=None, require_target=True):
    """Read a reaction table and its role sidecar into a :class:`Dataset`.

    Either ``schema_path`` or an explicit ``schema`` mapping/FeatureSchema is
    required.  Rows keep file order.  With ``require_target=False`` the ``ddg``
    column may be missing (prediction inputs); targets are then NaN.
    """
    if schema is None:
        if schema_path is None:
            raise DatasetError("a schema is required")
        mapping = read_schema(schema_path)
    elif isinstance(schema, FeatureSchema):
        mapping = schema.to_mapping()
    else:
        mapping = dict(schema)

    with open(table_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError("no records: table is empty (no header row)") from None
        rows = [r for r in reader if any(cell.strip() for cell in r)]

    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise DatasetError("duplicate column names in header")
    required = ["reaction_id", "reaction_type"] + (["ddg"] if require_target else [])
    for col in required:
        if col not in header:
            raise DatasetError(f"missing reserved column {col!r}")
    feature_cols = [h for h in header if h not in RESERVED]
    for col in feature_cols:
        if col not in mapping:
            raise DatasetError(f"unmapped column {col!r} (not in schema)")
    if isinstance(schema, FeatureSchema):
        missing = [n for n in schema.names if n not in feature_cols]
        if missing:
            raise DatasetError(f"table lacks schema column(s): {', '.join(missing)}")
        feature_cols = list(schema.names)
    fs = FeatureSchema(feature_cols, [mapping[c] for c in feature_cols])

    pos = {h: i for i, h in enumerate(header)}
    fpos = [pos[c] for c in feature_cols]
    n = len(rows)
    X = np.empty((n, len(fs)))
    y = np.full(n, np.nan)
    ids, types, states = [], [], []
    seen = set()
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DatasetError(f"row {r}: expected {len(header)} cells, found {len(row)}")
        rid = row[pos["reaction_id"]].strip()
        if not rid:
            raise DatasetError(f"row {r}: empty reaction_id")
        if rid in seen:
            raise DatasetError(f"duplicate reaction_id {rid!r}")
        seen.add(rid)
        ids.append(rid)
        types.append(row[pos["reaction_type"]].strip())
        if "ddg" in pos:
            y[r - 1] = _parse_float(row[pos["ddg"]].strip(), r, "ddg")
        ts = row[pos["transition_state"]].strip() if "transition_state" in pos else ""
        if ts and ts not in TS_LABELS:
            raise DatasetError(f"row {r}: transition_state must be E or Z, got {ts!r}")
        states.append(ts or None)
        for j, p in enumerate(fpos):
            X[r - 1, j] = _parse_float(row[p].strip(), r, feature_cols[j])
    return Dataset(fs, X, y, ids, types, states)


def write_dataset(ds, table_path, schema_path=None):
    """Write ``ds`` in the ingestion format; floats use shortest round-trip repr."""
    has_ts = any(ts is not None for ts in ds.transition_states)
    header = ["reaction_id", "reaction_type", "ddg"]
    if has_ts:
        header.append("transition_state")
    header.extend(ds.schema.names)
    with open(table_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(ds)):
            row = [ds.reaction_ids[i], ds.reaction_types[i], repr(float(ds.y[i]))]
            if has_ts:
                row.append(ds.transition_states[i] or "")
            row.extend(repr(float(v)) for v in ds.X[i])
            w.writerow(row)
    if schema_path is not None:
        Path(schema_path).write_text(json.dumps(ds.schema.to_mapping(), indent=2) + "\n")


def select_features(ds, roles):
    """Keep only the columns whose role is in ``roles`` (schema order kept)."""
    roles = set(roles)
    if not roles:
        raise DatasetError("roles must be non-empty")
    unknown = roles - set(ROLES)
    if unknown:
        raise DatasetError(f"unknown role(s): {', '.join(sorted(unknown))}")
    cols = ds.schema.columns_with_roles(roles)
    if not cols:
        raise DatasetError(f"no feature columns with role(s) {sorted(roles)}")
    schema = FeatureSchema(
        [ds.schema.names[i] for i in cols], [ds.schema.roles[i] for i in cols]
    )
    return Dataset(
        schema, ds.X[:, cols], ds.y, ds.reaction_ids, ds.reaction_types,
        ds.transition_states,
    )


@dataclass(frozen=True)
class SplitPlan:
    """Ordered (train_indices, test_indices) pairs plus the seed that built them."""

    pairs: tuple
    seed: int | None = None
    labels: tuple = ()

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def kfold_plan(n, k, repeats=1, seed=0):
    """Repeated k-fold plan.

    Each repeat shuffles ``range(n)`` with a PCG64 generator derived from
    ``(seed, "kfold", repeat)`` and cuts the shuffled order into ``k``
    contiguous slices whose sizes differ by at most one.
    """
    if k < 2:
        raise DatasetError(f"k must be at least 2, got {k}")
    if k > n:
        raise DatasetError(f"k={k} exceeds the number of records ({n})")
    if repeats < 1:
        raise DatasetError("repeats must be positive")
    pairs, labels = [], []
    for rep in range(repeats):
        order = make_rng(seed, "kfold", rep).permutation(n)
        folds = np.array_split(order, k)
        for f, test in enumerate(folds):
            train = np.concatenate([folds[j] for j in range(k) if j != f])
            pairs.append((_frozen(np.sort(train)), _frozen(np.sort(test))))
            labels.append((rep, f))
    return SplitPlan(tuple(pairs), seed, tuple(labels))


def leave_one_type_out_plan(ds):
    """One pair per reaction type: that type is the test set, the rest train."""
    types = ds.type_names
    if len(types) < 2:
        raise DatasetError("leave-one-type-out needs at least 2 reaction types")
    rt = np.array(ds.reaction_types, dtype=object)
    pairs = []
    for t in types:
        mask = rt == t
        pairs.append((_frozen(np.flatnonzero(~mask)), _frozen(np.flatnonzero(mask))))
    return SplitPlan(tuple(pairs), None, types)

"""``stereogate`` command-line entry point.

Subcommands: validate, train, predict, evaluate, synth.  Exit codes are 0 on
success, 1 for input/validation errors and 2 for numerical failures.  All
randomness derives from ``--seed`` (or the config's ``seed``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from stereogate import __version__
from stereogate.composite import (
    CompositeError,
    ModelFileError,
    load_model,
    predict_group,
    predict_records,
    save_model,
    train_composite,
)
from stereogate.config import ConfigError, load_config
from stereogate.dataset import ROLES, DatasetError, load_dataset, write_dataset
from stereogate.ensemble import importance_table
from stereogate.evaluation import (
    ModelSpec,
    run_ez_experiment,
    run_leave_one_type_out,
    run_out_of_sample,
    run_repeated_kfold,
)
from stereogate.reports import (
    gate_rows,
    kfold_documents,
    scatter_rows,
    table_text,
    write_json,
    write_table,
)
from stereogate.synth import load_spec, synth_generate

OUTPUT_ENV = "STEREOGATE_OUTPUT_DIR"
log = logging.getLogger("stereogate")


class InputError(Exception):
    pass


def _output_dir(args, cfg=None):
    out = args.out or (cfg.output_dir if cfg else None) or os.environ.get(OUTPUT_ENV)
    out = Path(out or "stereogate-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_run(args):
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    table = getattr(args, "data", None) or cfg.data.table
    schema = getattr(args, "schema", None) or cfg.data.schema
    if not table or not schema:
        raise InputError("a dataset table and schema are required (--data/--schema or config)")
    return cfg, table, schema


# validate ------------------------------------------------------------------


def cmd_validate(args):
    ds = load_dataset(args.data, args.schema)
    if len(ds) == 0:
        raise DatasetError("no records")
    counts = ds.schema.role_counts()
    parts = ", ".join(f"{r} {counts[r]}" for r in ROLES if counts[r])
    print(f"{len(ds)} records; {parts}")
    print(f"{len(ds.type_names)} reaction types")
    labelled = sum(ts is not None for ts in ds.transition_states)
    if labelled:
        print(f"{labelled} records with E/Z labels")
    for j in np.flatnonzero(np.ptp(ds.X, axis=0) == 0):
        print(f"warning: constant column {ds.schema.names[j]!r}")
    return 0


# train ---------------------------------------------------------------------


def cmd_train(args):
    cfg, table, schema = _load_run(args)
    ds = load_dataset(table, schema)
    out = _output_dir(args, cfg)
    log.info("training composite model on %d records", len(ds))
    model = train_composite(ds, cfg.composite_config())
    save_model(model, out / "model.json")

    nuc_names = [ds.schema.names[i] for i in model.nucleophile_columns]
    imp_overall = importance_table(model.rf_overall, ds.schema.names)
    imp_nuc = importance_table(model.rf_nucleophile, nuc_names)
    role = ds.schema.to_mapping()
    write_table(out / "importance_overall.csv", ["feature", "role", "importance"],
                [[n, role[n], v] for n, v in imp_overall])
    write_table(out / "importance_nucleophile.csv", ["feature", "role", "importance"],
                [[n, role[n], v] for n, v in imp_nuc])
    write_table(out / "bic_imine.csv", ["k", "bic"], model.imine_bic)
    write_table(out / "bic_nucleophile.csv", ["k", "bic"], model.nucleophile_bic)
    write_json(out / "train_report.json", {
        "records": len(ds),
        "seed": cfg.seed,
        "lasso": {"lambda": model.lasso.lam, "nonzero": model.lasso.n_nonzero,
                  "converged": model.lasso.converged},
        "gmm_imine": {"features": list(model.imine_gate_features),
                      "components": model.gmm_imine.n_components,
                      "log_likelihood": model.gmm_imine.log_likelihood},
        "gmm_nucleophile": {"features": list(model.nucleophile_gate_features),
                            "components": model.gmm_nucleophile.n_components,
                            "log_likelihood": model.gmm_nucleophile.log_likelihood},
        "top_importance_overall": imp_overall[:5],
        "top_importance_nucleophile": imp_nuc[:5],
        "data": {"table": Path(table).name, "schema": Path(schema).name},
        "config": _portable_config(cfg),
    })
    print(f"imine GMM components: {model.gmm_imine.n_components}")
    print(f"nucleophile GMM components: {model.gmm_nucleophile.n_components}")
    print(f"model written to {out / 'model.json'}")
    return 0


def _portable_config(cfg):
    """Config for reports, without file-system locations (reruns elsewhere match)."""
    doc = cfg.to_dict()
    doc.pop("data")
    doc.pop("output_dir")
    return doc


# predict -------------------------------------------------------------------

PREDICT_HEADER = [
    "reaction_id", "reaction_type", "prediction", "imine_log_density",
    "nucleophile_log_density", "imine_high", "nucleophile_high", "choice", "gate_scope",
]


def _is_blank_table(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    return len(lines) <= 1


def prediction_rows(model, ds, group_by_type):
    rows = []
    if group_by_type:
        for name in ds.type_names:
            idx = [i for i, t in enumerate(ds.reaction_types) if t == name]
            preds, d = predict_group(model, ds.X[idx])
            for i, p in zip(idx, preds):
                rows.append([ds.reaction_ids[i], name, p, d.imine_log_density,
                             d.nucleophile_log_density, d.imine_high, d.nucleophile_high,
                             d.choice, "group"])
        order = {rid: i for i, rid in enumerate(ds.reaction_ids)}
        rows.sort(key=lambda r: order[r[0]])
    else:
        preds, decisions = predict_records(model, ds.X)
        for i, (p, d) in enumerate(zip(preds, decisions)):
            rows.append([ds.reaction_ids[i], ds.reaction_types[i], p, d.imine_log_density,
                         d.nucleophile_log_density, d.imine_high, d.nucleophile_high,
                         d.choice, "record"])
    return rows


def cmd_predict(args):
    model = load_model(args.model)
    if _is_blank_table(args.data):
        rows = []
    else:
        schema = model.schema
        if args.schema:
            ds = load_dataset(args.data, args.schema, require_target=False)
            if ds.schema != model.schema:
                raise DatasetError("input schema does not match the model schema")
        else:
            ds = load_dataset(args.data, schema=schema, require_target=False)
        rows = prediction_rows(model, ds, args.group_by_type)
    text = table_text(PREDICT_HEADER, rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# evaluate ------------------------------------------------------------------


def cmd_evaluate(args):
    cfg, table, schema = _load_run(args)
    ds = load_dataset(table, schema)
    out = _output_dir(args, cfg)
    ev = cfg.evaluate
    k = args.k if args.k is not None else ev.k
    repeats = args.repeats if args.repeats is not None else ev.repeats
    proto = args.protocol
    log.info("running %s protocol on %d records", proto, len(ds))

    if proto == "kfold":
        spec = ModelSpec(
            kind=ev.model, roles=tuple(ev.roles), forest=cfg.forest_params(),
            tree=cfg.tree, boost=cfg.boost_params(), lasso_lambda=cfg.lasso.lam,
            lasso_cv_folds=cfg.lasso.cv_folds,
        )
        summary = run_repeated_kfold(ds, spec, k, repeats, cfg.seed)
        doc, (fh, frows) = kfold_documents(summary)
        write_json(out / "kfold_report.json", doc)
        write_table(out / "kfold_folds.csv", fh, frows)
        write_table(
            out / "kfold_scatter.csv",
            ["repeat", "fold", "reaction_id", "measured", "predicted"],
            [[f.repeat, f.fold, ds.reaction_ids[i], float(ds.y[i]), p]
             for f in summary.folds for i, p in zip(f.test_indices, f.test_predictions)],
        )
        s = doc["summary"]
        print(f"{ev.model} {k}-fold x{repeats}: test MSE {_fmt(s['test_mse'])}, "
              f"test r2 {_fmt(s['test_r2'])}, train r2 {_fmt(s['train_r2'])}")

    elif proto == "loto":
        rep = run_leave_one_type_out(ds, cfg.composite_config())
        header, rows = gate_rows(rep.rows)
        write_table(out / "loto_types.csv", header, rows)
        write_table(out / "loto_scatter.csv", *scatter_rows(rep.rows))
        avg = {n: rep.average_mae(n) for n in
               ("COMPOSITE", "LASSO", "NUCLEOPHILE_RF", "OVERALL_RF")}
        write_json(out / "loto_report.json", {
            "protocol": "leave_one_reaction_type_out",
            "seed": cfg.seed,
            "types": len(rep.rows),
            "average_mae": avg,
            "average_gap_vs_composite": rep.gaps(),
        })
        for name, v in avg.items():
            print(f"average per-type MAE {name}: {v:.4f}")

    elif proto == "oos":
        test_table = args.test_data or cfg.data.test_table
        if not test_table:
            raise InputError("oos needs a test table (--test-data or data.test_table)")
        test = load_dataset(test_table, schema)
        rep = run_out_of_sample(ds, test, cfg.composite_config())
        header, rows = gate_rows(rep.rows)
        write_table(out / "oos_types.csv", header, rows)
        write_table(out / "oos_scatter.csv", *scatter_rows(rep.rows))
        write_json(out / "oos_report.json", {
            "protocol": "out_of_sample",
            "seed": cfg.seed,
            "pooled": rep.pooled.as_dict(),
            "types": [dict(zip(header, r)) for r in rows],
        })
        for r in rep.rows:
            print(f"{r.reaction_type}: {r.choice.value}, MAE {r.mae['COMPOSITE']:.3f}")
        print(f"pooled MAE {rep.pooled.mae:.3f}, r2 {_fmt_num(rep.pooled.r2)}")

    elif proto == "ez":
        rep = run_ez_experiment(ds, k=k, seed=cfg.seed, repeats=repeats,
                                include_reaction_variables=ev.include_reaction_variables,
                                forest=cfg.forest_params())
        write_table(out / "ez_folds.csv", ["repeat", "fold", "train_accuracy", "test_accuracy"],
                    rep.folds)
        write_json(out / "ez_report.json", {
            "protocol": "ez_classification",
            "seed": cfg.seed,
            "k": k,
            "repeats": repeats,
            "train_accuracy": {"mean": rep.train_accuracy, "std": rep.train_std},
            "test_accuracy": {"mean": rep.test_accuracy, "std": rep.test_std},
        })
        print(f"E/Z accuracy: train {rep.train_accuracy:.3f}, test {rep.test_accuracy:.3f}")
    return 0


def _fmt_num(v):
    return "undefined" if v is None else f"{v:.3f}"


def _fmt(stat):
    if stat["mean"] is None:
        return "undefined"
    return f"{stat['mean']:.3f} ({stat['std']:.3f})"


# synth ---------------------------------------------------------------------


def cmd_synth(args):
    spec = load_spec(args.spec)
    seed = args.seed if args.seed is not None else 0
    ds = synth_generate(spec, seed)
    out = _output_dir(args)
    write_dataset(ds, out / "dataset.csv", out / "schema.json")
    print(f"wrote {len(ds)} records to {out / 'dataset.csv'}")
    return 0


# entry point ---------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="stereogate", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a dataset table against its schema")
    v.add_argument("--data", required=True)
    v.add_argument("--schema", required=True)
    v.set_defaults(func=cmd_validate)

    t = sub.add_parser("train", help="train the composite model")
    t.add_argument("--config")
    t.add_argument("--data")
    t.add_argument("--schema")
    t.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV})")
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="predict ΔΔG‡ with a trained model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--schema")
    pr.add_argument("--group-by-type", action="store_true",
                    help="gate each reaction type once on its mean log densities")
    pr.add_argument("--out", help="output file (default stdout)")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="run an evaluation protocol")
    e.add_argument("--config")
    e.add_argument("--protocol", required=True, choices=("kfold", "loto", "oos", "ez"))
    e.add_argument("--data")
    e.add_argument("--schema")
    e.add_argument("--test-data")
    e.add_argument("--k", type=int)
    e.add_argument("--repeats", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--spec", required=True, help="generator spec file or shipped name (gate_demo)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, ConfigError, CompositeError, ModelFileError, InputError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

import json
import subprocess
import sys

import numpy as np
import pytest

from stereogate.cli import main
from stereogate.composite import load_model, predict_records
from stereogate.dataset import load_dataset

FAST = {"seed": 0, "forest": {"n_trees": 10}, "gating": {"k_max": 3}}


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--spec", "gate_demo", "--seed", "0", "--out", str(root / "data")]) == 0
    cfg = dict(FAST, data={"table": "data/dataset.csv", "schema": "data/schema.json"})
    (root / "run.json").write_text(json.dumps(cfg))
    assert main(["train", "--config", str(root / "run.json"), "--out", str(root / "train")]) == 0
    return root


def test_synth_byte_identical(work, tmp_path):
    assert main(["synth", "--spec", "gate_demo", "--seed", "0", "--out", str(tmp_path)]) == 0
    for name in ("dataset.csv", "schema.json"):
        assert (tmp_path / name).read_bytes() == (work / "data" / name).read_bytes()


def test_synth_bad_spec(tmp_path):
    (tmp_path / "s.json").write_text("{}")
    assert main(["synth", "--spec", str(tmp_path / "s.json"), "--out", str(tmp_path)]) == 1


def test_validate_clean(work, capsys):
    code = main(["validate", "--data", str(work / "data/dataset.csv"),
                 "--schema", str(work / "data/schema.json")])
    out = capsys.readouterr().out
    assert code == 0
    assert out.startswith("180 records; imine 4, nucleophile 5, catalyst 3, solvent 2, "
                          "reaction_variable 1\n")
    assert "warning" not in out


def test_validate_constant_column(tmp_path, capsys):
    (tmp_path / "s.json").write_text(json.dumps({"a": "imine", "b": "solvent"}))
    (tmp_path / "d.csv").write_text("reaction_id,reaction_type,ddg,a,b\nr1,T,1,0.5,2\nr2,T,2,0.7,2\n")
    assert main(["validate", "--data", str(tmp_path / "d.csv"),
                 "--schema", str(tmp_path / "s.json")]) == 0
    assert "warning: constant column 'b'" in capsys.readouterr().out


def test_validate_empty_and_nan(work, tmp_path, capsys):
    schema = str(work / "data/schema.json")
    (tmp_path / "e.csv").write_text("")
    assert main(["validate", "--data", str(tmp_path / "e.csv"), "--schema", schema]) == 1
    assert "no records" in capsys.readouterr().err
    lines = (work / "data/dataset.csv").read_text().splitlines()
    header = lines[0].split(",")
    row = lines[1].split(",")
    row[header.index("Nu")] = "NaN"
    (tmp_path / "n.csv").write_text("\n".join([lines[0], ",".join(row)]) + "\n")
    assert main(["validate", "--data", str(tmp_path / "n.csv"), "--schema", schema]) == 1
    err = capsys.readouterr().err
    assert "row 1" in err and "'Nu'" in err


def test_train_outputs(work):
    out = work / "train"
    for name in ("model.json", "train_report.json", "bic_imine.csv", "bic_nucleophile.csv",
                 "importance_overall.csv", "importance_nucleophile.csv"):
        assert (out / name).exists()
    rows = (out / "importance_overall.csv").read_text().splitlines()
    assert rows[0] == "feature,role,importance"
    assert sum(float(r.split(",")[2]) for r in rows[1:]) == pytest.approx(100)
    assert len((out / "bic_imine.csv").read_text().splitlines()) == 4


def test_train_fixed_components(work, tmp_path):
    cfg = dict(FAST, gating={"imine_components": 15, "nucleophile_components": 14})
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert main(["train", "--config", str(tmp_path / "c.json"),
                 "--data", str(work / "data/dataset.csv"),
                 "--schema", str(work / "data/schema.json"), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "train_report.json").read_text())
    assert report["gmm_imine"]["components"] == 15
    assert report["gmm_nucleophile"]["components"] == 14


def test_train_unknown_key(work, tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"forest": {"trees": 3}}))
    assert main(["train", "--config", str(tmp_path / "c.json"),
                 "--data", str(work / "data/dataset.csv"),
                 "--schema", str(work / "data/schema.json"), "--out", str(tmp_path)]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_train_is_reproducible(work, tmp_path):
    assert main(["train", "--config", str(work / "run.json"), "--out", str(tmp_path)]) == 0
    for name in ("model.json", "train_report.json", "importance_overall.csv", "bic_imine.csv"):
        assert (tmp_path / name).read_bytes() == (work / "train" / name).read_bytes()


def _predict(work, tmp_path, table, *extra):
    out = tmp_path / "pred.csv"
    code = main(["predict", "--model", str(work / "train/model.json"),
                 "--data", str(table), "--out", str(out), *extra])
    return code, out


def test_predict_matches_in_memory(work, tmp_path):
    code, out = _predict(work, tmp_path, work / "data/dataset.csv")
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].split(",")[:3] == ["reaction_id", "reaction_type", "prediction"]
    ds = load_dataset(work / "data/dataset.csv", work / "data/schema.json")
    preds, decisions = predict_records(load_model(work / "train/model.json"), ds.X)
    got = [float(r.split(",")[2]) for r in lines[1:]]
    assert got == preds.tolist()
    assert [r.split(",")[7] for r in lines[1:]] == [d.choice.value for d in decisions]


def test_predict_choices(work, tmp_path):
    lines = (work / "data/dataset.csv").read_text().splitlines()
    header = lines[0].split(",")
    inside = lines[1].split(",")
    outlier = list(inside)
    outlier[header.index("reaction_id")] = "far"
    outlier[header.index("Nu")] = "60.0"
    # prediction tables need no target column
    drop = header.index("ddg")
    rows = [[v for i, v in enumerate(r) if i != drop] for r in (header, inside, outlier)]
    table = tmp_path / "in.csv"
    table.write_text("\n".join(",".join(r) for r in rows) + "\n")
    code, out = _predict(work, tmp_path, table)
    assert code == 0
    body = [r.split(",") for r in out.read_text().splitlines()[1:]]
    assert body[0][7] == "OVERALL_RF"
    assert body[1][7] == "LASSO"


def test_predict_group_by_type(work, tmp_path):
    code, out = _predict(work, tmp_path, work / "data/dataset.csv", "--group-by-type")
    assert code == 0
    body = [r.split(",") for r in out.read_text().splitlines()[1:]]
    by_type = {}
    for r in body:
        by_type.setdefault(r[1], set()).add((r[3], r[4], r[7]))
        assert r[8] == "group"
    assert all(len(v) == 1 for v in by_type.values())


def test_predict_empty_input(work, tmp_path):
    header = (work / "data/dataset.csv").read_text().splitlines()[0]
    (tmp_path / "h.csv").write_text(header + "\n")
    code, out = _predict(work, tmp_path, tmp_path / "h.csv")
    assert code == 0
    assert len(out.read_text().splitlines()) == 1


def test_predict_schema_mismatch(work, tmp_path):
    (tmp_path / "m.csv").write_text("reaction_id,reaction_type,Nu\nr1,T,0.5\n")
    code, _ = _predict(work, tmp_path, tmp_path / "m.csv")
    assert code == 1


def test_predict_corrupt_model(work, tmp_path):
    bad = tmp_path / "model.json"
    bad.write_text((work / "train/model.json").read_text()[:100])
    assert main(["predict", "--model", str(bad), "--data", str(work / "data/dataset.csv")]) == 1


def test_evaluate_kfold_reproducible(work, tmp_path):
    args = ["evaluate", "--config", str(work / "run.json"), "--protocol", "kfold",
            "--k", "2", "--repeats", "2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("kfold_report.json", "kfold_folds.csv", "kfold_scatter.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    doc = json.loads((tmp_path / "a/kfold_report.json").read_text())
    assert doc["n_folds"] == 4
    assert set(doc["summary"]["test_r2"]) == {"mean", "std"}


def test_evaluate_ez_and_oos(work, tmp_path):
    assert main(["evaluate", "--config", str(work / "run.json"), "--protocol", "ez",
                 "--repeats", "1", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "ez_report.json").read_text())
    assert doc["test_accuracy"]["mean"] > 0.9
    assert main(["evaluate", "--config", str(work / "run.json"), "--protocol", "oos",
                 "--test-data", str(work / "data/dataset.csv"), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "oos_report.json").read_text())
    assert len(doc["types"]) == 6
    assert main(["evaluate", "--config", str(work / "run.json"), "--protocol", "oos",
                 "--out", str(tmp_path)]) == 1


def test_evaluate_loto_single_type(work, tmp_path):
    lines = (work / "data/dataset.csv").read_text().splitlines()
    (tmp_path / "one.csv").write_text("\n".join(lines[:31]) + "\n")
    assert main(["evaluate", "--protocol", "loto", "--data", str(tmp_path / "one.csv"),
                 "--schema", str(work / "data/schema.json"), "--out", str(tmp_path)]) == 1


def test_output_dir_from_env(work, tmp_path, monkeypatch):
    monkeypatch.setenv("STEREOGATE_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["synth", "--spec", "gate_demo", "--seed", "1"]) == 0
    assert (tmp_path / "env/dataset.csv").exists()


def test_console_script_runs(work):
    proc = subprocess.run(
        [sys.executable, "-m", "stereogate.cli", "validate",
         "--data", str(work / "data/dataset.csv"), "--schema", str(work / "data/schema.json")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("180 records")


def test_numerical_failure_exit_code(work, monkeypatch, capsys):
    import stereogate.cli as cli

    def boom(*_, **__):
        raise np.linalg.LinAlgError("matrix is not positive definite")

    monkeypatch.setattr(cli, "train_composite", boom)
    assert main(["train", "--config", str(work / "run.json"), "--out", str(work / "x")]) == 2
    assert "numerical failure" in capsys.readouterr().err

import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from protolens import pipeline
from protolens.alike import AlikeConfig, identify_alike_parts
from protolens.cli import main
from protolens.config import load_config
from protolens.data import load_blobs2
from protolens.forest import load_forest
from protolens.selection import PrototypeSet
from protolens.surrogate import fidelity

BASE = {
    "dataset": "builtin:blobs2",
    "label_column": "label",
    "forest": {"n_trees": 40, "max_depth": 6, "seed": 42},
    "selection": {"algorithm": "gkm", "k_per_class": 2},
    "explain": {"instances": ["test:0", "test:1", "test:2"]},
}


def write_config(tmp_path, name="run.json", **updates):
    doc = json.loads(json.dumps(BASE))
    for key, value in updates.items():
        doc[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = write_config(tmp)
    out = tmp / "out"
    for cmd in ("train", "select", "explain", "evaluate"):
        assert run(cmd, "--config", cfg, "--out", out) == 0
    return cfg, out


def read_json(path):
    return json.loads(path.read_text())


def test_train_writes_loadable_forest(trained):
    cfg, out = trained
    forest = load_forest((out / "forest.json").read_bytes())
    assert forest.n_trees == 40
    meta = read_json(out / "run_meta.json")
    assert meta["split_seed"] == 42 and meta["forest_seed"] == 42
    manifest = read_json(out / "split.json")
    assert len(manifest["test_indices"]) == 120


def test_train_is_byte_identical(tmp_path, trained):
    cfg, out = trained
    assert run("train", "--config", cfg, "--out", tmp_path / "again", "--threads", 3) == 0
    assert (tmp_path / "again" / "forest.json").read_bytes() == (out / "forest.json").read_bytes()
    assert (tmp_path / "again" / "split.json").read_bytes() == (out / "split.json").read_bytes()


def test_missing_dataset_error(tmp_path, capsys):
    cfg = write_config(tmp_path, dataset="nowhere.csv")
    assert run("train", "--config", cfg) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["code"] == "DATASET_NOT_FOUND"


@pytest.mark.parametrize(
    "updates, code",
    [
        ({"selection": {"algorithm": "pam"}}, "CONFIG_INVALID"),
        ({"colour": "blue"}, "CONFIG_INVALID"),
    ],
)
def test_config_errors(tmp_path, capsys, updates, code):
    cfg = write_config(tmp_path, **updates)
    assert run("train", "--config", cfg) == 1
    assert json.loads(capsys.readouterr().err)["error"]["code"] == code


def test_missing_config_and_artifacts(tmp_path, capsys):
    assert run("train", "--config", tmp_path / "none.json") == 1
    assert json.loads(capsys.readouterr().err)["error"]["code"] == "CONFIG_NOT_FOUND"
    cfg = write_config(tmp_path)
    assert run("select", "--config", cfg, "--out", tmp_path / "empty") == 1
    assert json.loads(capsys.readouterr().err)["error"]["code"] == "ARTIFACT_NOT_FOUND"


def test_select_gkm_two_per_class(trained):
    _, out = trained
    doc = read_json(out / "prototypes.json")
    labels = [p["label"] for p in doc["prototypes"]]
    assert len(labels) == 4 and sorted(labels) == [0, 0, 1, 1]
    trace = doc["objective_trace"]
    assert all(b <= a for a, b in zip(trace, trace[1:]))


def test_beta_omitted_equals_zero(tmp_path, trained):
    _, out = trained
    cfg = write_config(tmp_path, selection={"algorithm": "gkm", "k_per_class": 2, "beta": 0.0})
    other = tmp_path / "o"
    other.mkdir()
    for name in ("forest.json", "split.json"):
        (other / name).write_bytes((out / name).read_bytes())
    assert run("select", "--config", cfg, "--out", other) == 0
    assert (other / "prototypes.json").read_bytes() == (out / "prototypes.json").read_bytes()


def test_explain_records_match_library(trained):
    cfg_path, out = trained
    lines = (out / "explanations.jsonl").read_text().splitlines()
    assert len(lines) == 3
    cfg = load_config(cfg_path, out=str(out))
    forest = load_forest((out / "forest.json").read_bytes())
    split = pipeline.restore_split(load_blobs2(), read_json(out / "split.json"))
    for line in lines:
        rec = json.loads(line)
        assert set(rec) >= {"instance_id", "prototype_id", "predicted_class", "weights", "mask",
                            "operator", "strategy", "estimator"}
        i = int(rec["instance_id"].split(":")[1])
        mask, w = identify_alike_parts(forest, split.test.X[i], split.train.X[rec["prototype_id"]], cfg.alike)
        assert rec["mask"] == mask.tolist()
        np.testing.assert_allclose(rec["weights"], w, atol=1e-12)


def test_explain_prototype_row_is_its_own_neighbour(tmp_path, trained, capsys):
    cfg, out = trained
    proto = read_json(out / "prototypes.json")["prototypes"][1]["index"]
    work = tmp_path / "w"
    work.mkdir()
    for name in ("forest.json", "split.json", "prototypes.json"):
        (work / name).write_bytes((out / name).read_bytes())
    assert run("explain", "--config", cfg, "--out", work, "--instances", f"train:{proto}") == 0
    rec = json.loads((work / "explanations.jsonl").read_text())
    assert rec["prototype_id"] == proto and rec["distance"] == 0.0
    capsys.readouterr()
    assert run("explain", "--config", cfg, "--out", work, "--instances", "test:9999") == 1
    assert json.loads(capsys.readouterr().err)["error"]["code"] == "UNKNOWN_INSTANCE_ID"


def test_evaluate_report(trained):
    cfg_path, out = trained
    doc = read_json(out / "evaluation.json")
    methods = [r["method"] for r in doc["fidelity"]]
    assert methods == ["prototypes", "naive_bayes", "logistic_regression", "decision_tree"]
    text = (out / "evaluation.csv").read_text()
    assert text.splitlines()[0] == "method,fidelity,size,n_test,agreements"
    assert len(text.splitlines()) == 5
    # replay the surrogate fidelity from the prototype file
    forest = load_forest((out / "forest.json").read_bytes())
    split = pipeline.restore_split(load_blobs2(), read_json(out / "split.json"))
    protos = PrototypeSet.from_dict(read_json(out / "prototypes.json"))
    assert fidelity(protos, forest, split.train, split.test).fidelity == doc["fidelity"][0]["fidelity"]
    stats = doc["mask_statistics"]
    assert stats["n_masks"] == split.test.n


def sweep_config(tmp_path, name="sweep.json", **sweep):
    grid = {"algorithms": ["gkm"], "estimators": ["saabas"], "operators": ["hadamard", "one_minus_l1"],
            "ignore_direction": [True], "normalize": [True], "mask_strategies": ["mean_threshold"],
            "betas": [0.0, 0.5]}
    grid.update(sweep)
    return write_config(tmp_path, name, sweep=grid)


def test_sweep_rows_and_resume(tmp_path):
    cfg = sweep_config(tmp_path, operators=["hadamard"])
    assert run("sweep", "--config", cfg, "--out", tmp_path / "full") == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "full" / "sweep.csv").read_text())))
    assert len(rows) == 2
    header = (tmp_path / "full" / "sweep.csv").read_text().splitlines()[0]
    assert header == ",".join(pipeline.SWEEP_COLUMNS)

    part = tmp_path / "part"
    rc = load_config(cfg, out=str(part))
    first, _ = pipeline.run_sweep(rc, max_cells=1)
    assert len(first) == 1
    assert run("sweep", "--config", cfg, "--out", part) == 0
    assert (part / "sweep.csv").read_bytes() == (tmp_path / "full" / "sweep.csv").read_bytes()
    summary = read_json(part / "sweep_summary.json")
    assert summary["complete"] is True


def test_sweep_grid_2x2(tmp_path):
    cfg = sweep_config(tmp_path)
    assert run("sweep", "--config", cfg, "--out", tmp_path / "s") == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "s" / "sweep.csv").read_text())))
    assert [(r["operator"], r["beta"]) for r in rows] == [
        ("hadamard", "0.0"), ("hadamard", "0.5"), ("one_minus_l1", "0.0"), ("one_minus_l1", "0.5")]


def test_sweep_beta_zero_matches_evaluate(tmp_path, trained):
    _, out = trained
    cfg = sweep_config(tmp_path, operators=["hadamard"], betas=[0.0])
    assert run("sweep", "--config", cfg, "--out", tmp_path / "s") == 0
    row = next(csv.DictReader(io.StringIO((tmp_path / "s" / "sweep.csv").read_text())))
    evaluation = read_json(out / "evaluation.json")
    assert float(row["fidelity"]) == evaluation["fidelity"][0]["fidelity"]
    assert int(row["n_prototypes"]) == evaluation["fidelity"][0]["size"]


def test_seed_flag_changes_split(tmp_path):
    cfg = write_config(tmp_path)
    assert run("train", "--config", cfg, "--out", tmp_path / "a", "--seed", 7) == 0
    assert read_json(tmp_path / "a" / "split.json")["seed"] == 7


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "protolens.cli", "train", "--config", str(tmp_path / "x.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert json.loads(proc.stderr)["error"]["code"] == "CONFIG_NOT_FOUND"

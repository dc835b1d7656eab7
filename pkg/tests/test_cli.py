"""End-to-end command-line workflows in temporary directories.

Each test drives ``pmtl.cli.main`` in process with an argv list; stdout
is the JSON summary the real CLI would print.
"""

import json

import numpy as np
import pytest

from pmtl.cli import main, score_files
from pmtl.data import (
    LabelTable,
    SynthSpec,
    load_labels_csv,
    load_predictions_csv,
    save_features_csv,
    save_labels_csv,
    save_predictions_csv,
    synth_tables,
)

TRAIN_CONFIG = {
    "model": {"shared_dims": [12, 6], "age_head_dims": [6, 3],
              "emotion_hidden": 6, "country_hidden": 6},
    "seed": 5,
    "batch_size": 8,
    "max_epochs": 2,
    "patience": 2,
    "standardize": "zscore",
}

SYNTH_CONFIG = {"n_train": 120, "n_val": 48, "dim": 16, "rank": 4, "seed": 17}


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def last_json(out):
    return json.loads(out.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic data + one finished training run, shared by the module."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    (root / "train_config.json").write_text(json.dumps(TRAIN_CONFIG))
    (root / "synth_config.json").write_text(json.dumps(SYNTH_CONFIG))
    code = main(["synth", "--config", str(root / "synth_config.json"),
                 "--out", str(data), "--format", "both"])
    assert code == 0

    # a labels file restricted to the val split, for score round-trips
    labels = load_labels_csv(data / "labels.csv")
    keep = [i for i, sid in enumerate(labels.ids) if sid.startswith("val_")]
    val_labels = LabelTable(
        ids=tuple(labels.ids[i] for i in keep),
        emotion=labels.emotion[keep],
        age=labels.age[keep],
        country=labels.country[keep],
    )
    save_labels_csv(val_labels, data / "val_labels.csv")

    out = root / "run"
    code = main(["train",
                 "--train-features", str(data / "train_features.csv"),
                 "--val-features", str(data / "val_features.csv"),
                 "--labels", str(data / "labels.csv"),
                 "--config", str(root / "train_config.json"),
                 "--out", str(out)])
    assert code == 0
    return root


def data_args(workspace):
    data = workspace / "data"
    return ["--train-features", str(data / "train_features.csv"),
            "--val-features", str(data / "val_features.csv"),
            "--labels", str(data / "labels.csv")]


# -- synth ------------------------------------------------------------------


def test_synth_outputs(workspace, capsys):
    data = workspace / "data"
    for name in ("train_features.csv", "train_features.bin",
                 "val_features.csv", "val_features.bin",
                 "labels.csv", "synth.json"):
        assert (data / name).exists(), name
    echoed = json.loads((data / "synth.json").read_text())
    assert SynthSpec.from_dict(echoed) == SynthSpec(**SYNTH_CONFIG)


def test_synth_seed_override(tmp_path, capsys):
    base = dict(SYNTH_CONFIG, n_train=30, n_val=12)
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps(base))
    code, out, _ = run(capsys, ["synth", "--config", str(cfg), "--seed", "99",
                                "--out", str(tmp_path / "d")])
    assert code == 0
    echoed = json.loads((tmp_path / "d" / "synth.json").read_text())
    assert echoed["seed"] == 99


# -- train ------------------------------------------------------------------


def test_train_artifacts(workspace):
    out = workspace / "run"
    assert (out / "checkpoint.pmck").exists()
    history = json.loads((out / "history.json").read_text())
    assert {"run", "wall_seconds"} <= set(history)
    assert history["run"]["best_epoch"] >= 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["standardize"] == "zscore"
    assert manifest["epochs_run"] == len(history["run"]["epochs"])
    for entry in manifest["inputs"].values():
        assert len(entry["sha256"]) == 64


def test_train_deterministic_artifacts(workspace, capsys):
    args = ["train", *data_args(workspace),
            "--config", str(workspace / "train_config.json")]
    code_a, out_a, _ = run(capsys, args + ["--out", str(workspace / "rerun_a")])
    code_b, out_b, _ = run(capsys, args + ["--out", str(workspace / "rerun_b")])
    assert code_a == code_b == 0
    assert last_json(out_a) == last_json(out_b) | {"out": str(workspace / "rerun_a")}
    ck_a = (workspace / "rerun_a" / "checkpoint.pmck").read_bytes()
    ck_b = (workspace / "rerun_b" / "checkpoint.pmck").read_bytes()
    assert ck_a == ck_b
    hist_a = json.loads((workspace / "rerun_a" / "history.json").read_text())
    hist_b = json.loads((workspace / "rerun_b" / "history.json").read_text())
    assert hist_a["run"] == hist_b["run"]


def test_train_binary_features_match_csv(workspace, capsys):
    data = workspace / "data"
    args = ["train",
            "--train-features", str(data / "train_features.bin"),
            "--val-features", str(data / "val_features.bin"),
            "--labels", str(data / "labels.csv"),
            "--config", str(workspace / "train_config.json"),
            "--out", str(workspace / "run_bin")]
    code, out, _ = run(capsys, args)
    assert code == 0
    ck_bin = (workspace / "run_bin" / "checkpoint.pmck").read_bytes()
    ck_csv = (workspace / "run" / "checkpoint.pmck").read_bytes()
    assert ck_bin == ck_csv


def test_train_flag_overrides_beat_config(workspace, capsys):
    code, out, _ = run(capsys, [
        "train", *data_args(workspace),
        "--config", str(workspace / "train_config.json"),
        "--max-epochs", "1", "--patience", "1",
        "--out", str(workspace / "run_short")])
    assert code == 0
    assert last_json(out)["epochs_run"] == 1


def test_train_infers_input_dim(workspace, capsys):
    # config omits model.input_dim entirely; the feature width fills it in
    manifest = json.loads((workspace / "run" / "manifest.json").read_text())
    assert manifest["train_config"]["model"]["input_dim"] == SYNTH_CONFIG["dim"]


# -- eval and score ---------------------------------------------------------


def test_eval_reproduces_training_best_score(workspace, capsys):
    data = workspace / "data"
    code, out, _ = run(capsys, [
        "eval", "--checkpoint", str(workspace / "run" / "checkpoint.pmck"),
        "--features", str(data / "val_features.csv"),
        "--labels", str(data / "val_labels.csv")])
    assert code == 0
    bundle = last_json(out)
    manifest = json.loads((workspace / "run" / "manifest.json").read_text())
    assert bundle["score"] == manifest["best_val"]["score"]


def test_eval_predictions_then_score(workspace, capsys, tmp_path):
    data = workspace / "data"
    preds = tmp_path / "preds.csv"
    metrics = tmp_path / "metrics.json"
    code, out, _ = run(capsys, [
        "eval", "--checkpoint", str(workspace / "run" / "checkpoint.pmck"),
        "--features", str(data / "val_features.csv"),
        "--out-predictions", str(preds)])
    assert code == 0
    assert last_json(out)["n"] == SYNTH_CONFIG["n_val"]

    code, out, _ = run(capsys, [
        "score", "--predictions", str(preds),
        "--labels", str(data / "val_labels.csv"),
        "--out-metrics", str(metrics)])
    assert code == 0
    scored = last_json(out)
    manifest = json.loads((workspace / "run" / "manifest.json").read_text())
    assert scored["score"] == pytest.approx(manifest["best_val"]["score"], abs=1e-12)
    assert json.loads(metrics.read_text()) == scored


def test_score_joins_by_id_not_row_order(workspace, tmp_path):
    data = workspace / "data"
    preds = tmp_path / "p.csv"
    main(["eval", "--checkpoint", str(workspace / "run" / "checkpoint.pmck"),
          "--features", str(data / "val_features.csv"),
          "--out-predictions", str(preds)])
    straight = score_files(preds, data / "val_labels.csv")

    ids, emotion, age, country = load_predictions_csv(preds)
    order = np.random.default_rng(3).permutation(len(ids))
    shuffled = tmp_path / "p_shuffled.csv"
    save_predictions_csv(tuple(ids[i] for i in order), emotion[order],
                         age[order], country[order], shuffled)
    assert score_files(shuffled, data / "val_labels.csv").to_dict() == straight.to_dict()


def test_score_id_mismatch_exits_2(workspace, capsys):
    data = workspace / "data"
    preds = workspace / "mismatch_preds.csv"
    main(["eval", "--checkpoint", str(workspace / "run" / "checkpoint.pmck"),
          "--features", str(data / "val_features.csv"),
          "--out-predictions", str(preds)])
    capsys.readouterr()
    # full labels file includes train ids the predictions lack
    code, _, err = run(capsys, ["score", "--predictions", str(preds),
                                "--labels", str(data / "labels.csv")])
    assert code == 2
    assert "id mismatch" in err


def test_score_components_direct(capsys):
    code, out, _ = run(capsys, ["score", "--components", "0.3", "0.5", "0.4"])
    assert code == 0
    result = last_json(out)
    expected = 3.0 / (1 / 0.3 + 1 / 0.5 + 1 / 0.4)
    assert result["s_mtl"] == pytest.approx(expected, abs=1e-12)
    assert result["nonpositive_component"] is False


def test_eval_without_outputs_exits_1(workspace, capsys):
    data = workspace / "data"
    code, _, err = run(capsys, [
        "eval", "--checkpoint", str(workspace / "run" / "checkpoint.pmck"),
        "--features", str(data / "val_features.csv")])
    assert code == 1
    assert "eval needs" in err


# -- sweep and report -------------------------------------------------------


@pytest.fixture(scope="module")
def sweep_out(workspace, tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    spec = {
        "axis": "seed",
        "values": [1, 2],
        "runs_per_cell": 1,
        "base": TRAIN_CONFIG,
    }
    spec_path = out / "spec.json"
    spec_path.write_text(json.dumps(spec))
    code = main(["sweep", *data_args(workspace), "--spec", str(spec_path),
                 "--out", str(out)])
    assert code == 0
    return out


def test_sweep_outputs(sweep_out):
    assert (sweep_out / "results.json").exists()
    report = (sweep_out / "report.md").read_text()
    assert report.startswith("| cell | ccc | uar | inv_mae | s_mtl | best |")
    assert "seed=1" in report and "seed=2" in report
    assert "*" in report
    sidecar = (sweep_out / "full.csv").read_text()
    assert sidecar.count("\n") == 3  # header + one run per cell


def test_report_rerenders_stored_results(sweep_out, capsys):
    code, out, _ = run(capsys, ["report", "--results",
                                str(sweep_out / "results.json")])
    assert code == 0
    assert out == (sweep_out / "report.md").read_text()
    code, out, _ = run(capsys, ["report", "--results",
                                str(sweep_out / "results.json"),
                                "--format", "csv"])
    assert code == 0
    assert out.startswith("cell,")


def test_sweep_workers_env_byte_identical(workspace, tmp_path, capsys, monkeypatch):
    spec = {"axis": "batch_size", "values": [4, 8], "runs_per_cell": 1,
            "base": dict(TRAIN_CONFIG, max_epochs=1, patience=1)}
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    outputs = {}
    for workers in ("1", "2"):
        monkeypatch.setenv("PMTL_WORKERS", workers)
        out = tmp_path / f"w{workers}"
        code, _, _ = run(capsys, ["sweep", *data_args(workspace),
                                  "--spec", str(spec_path), "--out", str(out)])
        assert code == 0
        outputs[workers] = (out / "report.md").read_bytes()
    assert outputs["1"] == outputs["2"]


def test_sweep_invalid_workers_env(workspace, tmp_path, capsys, monkeypatch):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({"axis": "seed", "values": [1],
                                     "runs_per_cell": 1, "base": TRAIN_CONFIG}))
    monkeypatch.setenv("PMTL_WORKERS", "zero")
    code, _, err = run(capsys, ["sweep", *data_args(workspace),
                                "--spec", str(spec_path),
                                "--out", str(tmp_path / "o")])
    assert code == 1
    assert "PMTL_WORKERS" in err


def test_sweep_cell_failure_sets_exit_code(tmp_path, capsys):
    # a val split missing one country class: every run in the cell fails
    # with MissingClassError, the sweep records it and exits nonzero
    features, labels = synth_tables(
        SynthSpec(n_train=60, n_val=20, dim=5, rank=2, seed=2))
    val_countries = labels.country[[i for i, sid in enumerate(labels.ids)
                                    if sid.startswith("val_")]]
    assert len(set(val_countries.tolist())) < 4  # fixture precondition
    data = tmp_path / "data"
    data.mkdir()
    save_features_csv(features["train"], data / "train.csv")
    save_features_csv(features["val"], data / "val.csv")
    save_labels_csv(labels, data / "labels.csv")
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "axis": "seed", "values": [1], "runs_per_cell": 1,
        "base": dict(TRAIN_CONFIG, max_epochs=1, patience=1)}))
    out = tmp_path / "out"
    code, stdout, _ = run(capsys, [
        "sweep", "--train-features", str(data / "train.csv"),
        "--val-features", str(data / "val.csv"),
        "--labels", str(data / "labels.csv"),
        "--spec", str(spec_path), "--out", str(out)])
    assert code == 3
    summary = last_json(stdout)
    assert summary["failed"] == ["seed=1"]
    assert "MissingClassError" in (out / "report.md").read_text()


# -- exit codes and bad input -----------------------------------------------


def test_unknown_flag_exits_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["train", "--bogus"])
    assert info.value.code == 1


def test_missing_subcommand_exits_1(capsys):
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 1


def test_invalid_config_json_exits_1(workspace, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    code, _, err = run(capsys, ["train", *data_args(workspace),
                                "--config", str(bad),
                                "--out", str(tmp_path / "o")])
    assert code == 1
    assert "not valid JSON" in err


def test_unknown_config_key_exits_1(workspace, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(dict(TRAIN_CONFIG, momentum=0.9)))
    code, _, err = run(capsys, ["train", *data_args(workspace),
                                "--config", str(bad),
                                "--out", str(tmp_path / "o")])
    assert code == 1
    assert "momentum" in err


def test_missing_feature_file_exits_2(workspace, tmp_path, capsys):
    data = workspace / "data"
    code, _, err = run(capsys, [
        "train", "--train-features", str(tmp_path / "nope.csv"),
        "--val-features", str(data / "val_features.csv"),
        "--labels", str(data / "labels.csv"),
        "--out", str(tmp_path / "o")])
    assert code == 2


def test_corrupt_labels_exit_2(workspace, tmp_path, capsys):
    data = workspace / "data"
    bad = tmp_path / "labels.csv"
    bad.write_text("id,wrong_header\nx,1\n")
    code, _, err = run(capsys, ["train",
                                "--train-features", str(data / "train_features.csv"),
                                "--val-features", str(data / "val_features.csv"),
                                "--labels", str(bad),
                                "--out", str(tmp_path / "o")])
    assert code == 2
    assert "labels.csv" in err

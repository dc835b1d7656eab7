"""Command-line interface.

Subcommands: ``train`` (one run), ``eval`` (checkpoint + split -> metrics),
``score`` (prediction-file scoring), ``sweep`` (grid over one axis),
``synth`` (generate a synthetic dataset), ``report`` (re-render stored
sweep results). Exit codes: 0 success, 1 usage or config error, 2 data
error, 3 numerical failure. The worker count for sweeps comes from the
``PMTL_WORKERS`` environment variable (default 1); everything else lives
in config files and flags.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    STANDARDIZE_MODES,
    SynthSpec,
    build_part,
    join_splits,
    load_features,
    load_labels_csv,
    load_predictions_csv,
    save_features_binary,
    save_features_csv,
    save_labels_csv,
    save_predictions_csv,
    standardize,
    synth_tables,
)
from .errors import ConfigError, IdMismatchError, PmtlError
from .losses import LossConfig
from .metrics import compute_bundle, multitask_score_detail
from .model import ModelConfig, predict
from .sweep import (
    SweepSpec,
    report_csv,
    report_markdown,
    load_results,
    run_sweep,
    save_results,
    sidecar_csv,
)
from .train import TrainConfig, evaluate, train_run

PROG = "pmtl"

TRAIN_SCALAR_KEYS = (
    "seed", "batch_size", "learning_rate", "adam_beta1", "adam_beta2",
    "adam_eps", "max_epochs", "patience", "clip_norm",
)


class _Parser(argparse.ArgumentParser):
    """argparse reports usage errors with status 2; the contract is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_json(path, kind: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {kind} file {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{kind} file {path} is not valid JSON: {exc}")


def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def parse_train_config(raw: dict, input_dim: int | None = None):
    """Build (TrainConfig, standardize_mode) from a config dict.

    ``model.input_dim`` may be omitted and is then inferred from the
    loaded feature files. Unknown keys are rejected rather than ignored.
    """
    d = dict(raw)
    mode = d.pop("standardize", "zscore")
    if mode not in STANDARDIZE_MODES:
        raise ConfigError(f"standardize must be one of {STANDARDIZE_MODES}, got {mode!r}")
    model_d = dict(d.pop("model", {}))
    loss_d = dict(d.pop("loss", {}))
    unknown = sorted(set(d) - set(TRAIN_SCALAR_KEYS))
    if unknown:
        raise ConfigError(f"unknown train config keys: {unknown}")
    if model_d.get("input_dim") is None:
        if input_dim is None:
            raise ConfigError("model.input_dim missing and no features to infer it from")
        model_d["input_dim"] = input_dim
    try:
        model = ModelConfig.from_dict(model_d)
        loss = LossConfig(**loss_d)
        config = TrainConfig(model=model, loss=loss, **d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}")
    return config, mode


def _apply_overrides(raw: dict, args) -> dict:
    d = dict(raw)
    for key in ("seed", "batch_size", "learning_rate", "max_epochs", "patience"):
        value = getattr(args, key, None)
        if value is not None:
            d[key] = value
    if getattr(args, "standardize", None) is not None:
        d["standardize"] = args.standardize
    return d


def _load_dataset(args):
    features = {
        "train": load_features(args.train_features),
        "val": load_features(args.val_features),
    }
    labels = load_labels_csv(args.labels)
    return join_splits(features, labels)


def _workers() -> int:
    raw = os.environ.get("PMTL_WORKERS", "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"PMTL_WORKERS must be an integer, got {raw!r}")
    if workers < 1:
        raise ConfigError(f"PMTL_WORKERS must be >= 1, got {workers}")
    return workers


# -- subcommands ------------------------------------------------------------


def cmd_train(args) -> int:
    raw = _read_json(args.config, "config") if args.config else {}
    raw = _apply_overrides(raw, args)
    ds = _load_dataset(args)
    config, mode = parse_train_config(raw, input_dim=ds.dim)
    ds = standardize(ds, mode)

    params, history = train_run(config, ds)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.pmck", params, config.model,
                    ds.age_scaler, ds.standardizer)
    _write_json({"run": history.canonical_dict(),
                 "wall_seconds": history.wall_seconds}, out / "history.json")
    manifest = {
        "train_config": config.to_dict(),
        "standardize": mode,
        "inputs": {
            "train_features": {"path": str(args.train_features),
                               "sha256": _sha256(args.train_features)},
            "val_features": {"path": str(args.val_features),
                             "sha256": _sha256(args.val_features)},
            "labels": {"path": str(args.labels), "sha256": _sha256(args.labels)},
        },
        "best_epoch": history.best_epoch,
        "best_val": history.best_val.to_dict(),
        "initial_val": history.initial_val.to_dict(),
        "stopped_early": history.stopped_early,
        "epochs_run": len(history.epochs),
    }
    _write_json(manifest, out / "manifest.json")
    print(json.dumps({
        "best_epoch": history.best_epoch,
        "best_val_score": history.best_val.score,
        "initial_val_score": history.initial_val.score,
        "epochs_run": len(history.epochs),
        "out": str(out),
    }, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    if args.labels is None and args.out_predictions is None:
        raise ConfigError("eval needs --labels, --out-predictions, or both")
    ck = load_checkpoint(args.checkpoint)
    features = load_features(args.features)
    if ck.standardizer is not None:
        features = type(features)(
            ids=features.ids, features=ck.standardizer.apply(features.features)
        )
    labels = load_labels_csv(args.labels) if args.labels else None
    part = build_part(features, labels, "eval", require_labels=labels is not None)

    preds = predict(ck.params, ck.config, part.x, ck.age_scaler)
    if args.out_predictions:
        save_predictions_csv(part.ids, preds.emotion, preds.age_years,
                             preds.country, args.out_predictions)
    if labels is not None:
        bundle = evaluate(ck.params, ck.config, part, ck.age_scaler)
        if args.out_metrics:
            _write_json(bundle.to_dict(), args.out_metrics)
        print(json.dumps(bundle.to_dict(), sort_keys=True))
    else:
        print(json.dumps({"predictions": args.out_predictions, "n": len(part)},
                         sort_keys=True))
    return 0


def score_files(predictions_path, labels_path):
    """Score a predictions CSV against a labels CSV, joined by id."""
    ids_p, emotion_p, age_p, country_p = load_predictions_csv(predictions_path)
    labels = load_labels_csv(labels_path)
    set_p, set_l = set(ids_p), set(labels.ids)
    if set_p != set_l:
        only_p = sorted(set_p - set_l)
        only_l = sorted(set_l - set_p)
        raise IdMismatchError(
            f"id mismatch: {len(only_p)} only in predictions {only_p[:5]}, "
            f"{len(only_l)} only in labels {only_l[:5]}",
            missing_left=only_l, missing_right=only_p,
        )
    order_p = sorted(range(len(ids_p)), key=lambda i: ids_p[i])
    label_index = labels.index()
    order_l = [label_index[ids_p[i]] for i in order_p]
    rows_p = np.array(order_p)
    rows_l = np.array(order_l)
    return compute_bundle(
        pred_emotion=emotion_p[rows_p],
        true_emotion=labels.emotion[rows_l],
        pred_country=country_p[rows_p],
        true_country=labels.country[rows_l],
        pred_age_years=age_p[rows_p],
        true_age_years=labels.age[rows_l].astype(float),
    )


def cmd_score(args) -> int:
    if args.components is not None:
        c, u, m = args.components
        score, flagged = multitask_score_detail(c, u, m)
        print(json.dumps({"s_mtl": score, "nonpositive_component": flagged},
                         sort_keys=True))
        return 0
    if not args.predictions or not args.labels:
        raise ConfigError("score needs --predictions and --labels (or --components)")
    bundle = score_files(args.predictions, args.labels)
    if args.out_metrics:
        _write_json(bundle.to_dict(), args.out_metrics)
    print(json.dumps(bundle.to_dict(), sort_keys=True))
    return 0


def _sweep_datasets(spec_raw: dict, spec: SweepSpec, mode: str, args):
    """Resolve the dataset(s) each cell trains on, per axis semantics."""
    if spec.axis == "feature_set":
        sets = spec_raw.get("feature_sets")
        if not isinstance(sets, dict):
            raise ConfigError("feature_set sweep needs a 'feature_sets' mapping "
                              "{name: {train: path, val: path}}")
        labels = load_labels_csv(args.labels)
        datasets = {}
        for value in spec.values:
            if value not in sets:
                raise ConfigError(f"feature_sets has no entry for {value!r}")
            entry = sets[value]
            features = {
                "train": load_features(entry["train"]),
                "val": load_features(entry["val"]),
            }
            datasets[value] = standardize(join_splits(features, labels), mode)
        return datasets
    base = _load_dataset(args)
    if spec.axis == "standardization":
        for value in spec.values:
            if value not in STANDARDIZE_MODES:
                raise ConfigError(
                    f"standardization sweep value {value!r} not in {STANDARDIZE_MODES}"
                )
        return {value: standardize(base, value) for value in spec.values}
    return standardize(base, mode)


def cmd_sweep(args) -> int:
    raw = _read_json(args.spec, "sweep spec")
    spec_d = dict(raw)
    feature_sets = spec_d.pop("feature_sets", None)
    base_raw = spec_d.pop("base", None)
    if base_raw is None:
        raise ConfigError("sweep spec needs a 'base' train config")
    if spec_d.get("axis") == "feature_set":
        if args.labels is None:
            raise ConfigError("feature_set sweep needs --labels")
        input_dim = None
        if feature_sets and spec_d.get("values"):
            first = feature_sets.get(spec_d["values"][0])
            if first:
                input_dim = load_features(first["train"]).dim
    else:
        if None in (args.train_features, args.val_features, args.labels):
            raise ConfigError(
                "sweep needs --train-features, --val-features, and --labels"
            )
        input_dim = load_features(args.train_features).dim
    base, mode = parse_train_config(base_raw, input_dim=input_dim)
    try:
        spec = SweepSpec(base=base, **spec_d)
    except TypeError as exc:
        raise ConfigError(f"bad sweep spec: {exc}")

    datasets = _sweep_datasets(raw, spec, mode, args)
    table = run_sweep(spec, datasets, workers=_workers())

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_results(table, out / "results.json")
    if args.format == "csv":
        report_path = out / "report.csv"
        report_path.write_text(report_csv(table), encoding="utf-8")
    else:
        report_path = out / "report.md"
        report_path.write_text(report_markdown(table), encoding="utf-8")
    (out / "full.csv").write_text(sidecar_csv(table), encoding="utf-8")

    print(json.dumps({
        "cells": len(table.cells),
        "failed": [c.label for c in table.cells if c.failed],
        "best": table.cells[table.best_index()].label
        if table.best_index() is not None else None,
        "report": str(report_path),
    }, sort_keys=True))
    if table.has_failures:
        codes = [c.error_code for c in table.cells if c.failed]
        return max(code if code is not None else 3 for code in codes)
    return 0


def cmd_synth(args) -> int:
    raw = _read_json(args.config, "synth config") if args.config else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        spec = SynthSpec(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad synth config: {exc}")
    features, labels = synth_tables(spec)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for split, table in features.items():
        if args.format in ("csv", "both"):
            path = out / f"{split}_features.csv"
            save_features_csv(table, path)
            written[f"{split}_features_csv"] = str(path)
        if args.format in ("binary", "both"):
            path = out / f"{split}_features.bin"
            save_features_binary(table, path)
            written[f"{split}_features_bin"] = str(path)
    labels_path = out / "labels.csv"
    save_labels_csv(labels, labels_path)
    written["labels"] = str(labels_path)
    _write_json(spec.to_dict(), out / "synth.json")
    print(json.dumps({"written": written, "n": {s: len(t) for s, t in features.items()}},
                     sort_keys=True))
    return 0


def cmd_report(args) -> int:
    table = load_results(args.results)
    text = report_csv(table) if args.format == "csv" else report_markdown(table)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(json.dumps({"report": str(args.out)}, sort_keys=True))
    else:
        sys.stdout.write(text)
    return 0


# -- argument wiring --------------------------------------------------------


def _add_data_args(p, required=True):
    p.add_argument("--train-features", required=required)
    p.add_argument("--val-features", required=required)
    p.add_argument("--labels", required=required)


def build_parser() -> _Parser:
    parser = _Parser(prog=PROG, description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training job")
    _add_data_args(p)
    p.add_argument("--config", help="JSON train config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--standardize", choices=STANDARDIZE_MODES)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels")
    p.add_argument("--out-metrics", dest="out_metrics")
    p.add_argument("--out-predictions", dest="out_predictions")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="score a predictions file against labels")
    p.add_argument("--predictions")
    p.add_argument("--labels")
    p.add_argument("--out-metrics", dest="out_metrics")
    p.add_argument("--components", nargs=3, type=float,
                   metavar=("CCC", "UAR", "INV_MAE"),
                   help="combine three component scores directly")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="grid sweep over one config axis")
    _add_data_args(p, required=False)  # feature_set sweeps carry paths in the spec file
    p.add_argument("--spec", required=True, help="JSON sweep spec")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", help="JSON synth spec")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=("csv", "binary", "both"), default="csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="re-render stored sweep results")
    p.add_argument("--results", required=True, help="results.json from a sweep")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PmtlError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

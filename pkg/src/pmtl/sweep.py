"""Grid sweeps over one config axis, with aggregation and report rendering.

A sweep varies exactly one axis (seed, batch_size, feature_set, or
standardization) over a list of values. Each cell executes
``runs_per_cell`` training runs whose seeds are derived as
``derive_subseed(cell_seed, run_index)``, so repeated runs differ but the
whole sweep is a pure function of (spec, data). Cells run independently
and may be fanned out to worker threads; results are assembled in cell
order, so any worker count produces the same report.

Aggregation is either ``mean_std`` (per-metric mean and population std
over runs; the combined-score column is the mean of per-run scores, not
the harmonic mean of the other columns) or ``best`` (the single run with
the highest combined score; ties go to the earliest run). A cell in which
any run raises is recorded as failed and excluded from aggregation and
best-cell selection; the sweep itself continues.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import SplitDataset
from .errors import ConfigError
from .metrics import MetricsBundle
from .rng import derive_subseed
from .train import TrainConfig, train_run

AXES = ("seed", "batch_size", "feature_set", "standardization")
AGGREGATIONS = ("mean_std", "best")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    base: TrainConfig
    runs_per_cell: int = 5
    aggregation: str = "mean_std"

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if self.runs_per_cell < 1:
            raise ConfigError(f"runs_per_cell must be >= 1, got {self.runs_per_cell}")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(
                f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}"
            )
        object.__setattr__(self, "values", tuple(self.values))

    def cell_config(self, value) -> TrainConfig:
        """Base config specialized to one cell value. Data-side axes
        (feature_set, standardization) leave the config untouched."""
        if self.axis == "seed":
            return replace(self.base, seed=int(value))
        if self.axis == "batch_size":
            return replace(self.base, batch_size=int(value))
        return self.base

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "values": list(self.values),
            "base": self.base.to_dict(),
            "runs_per_cell": self.runs_per_cell,
            "aggregation": self.aggregation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        d["base"] = TrainConfig.from_dict(d["base"])
        d["values"] = tuple(d["values"])
        return cls(**d)


@dataclass(frozen=True)
class RunOutcome:
    seed: int
    best_epoch: int
    bundle: MetricsBundle

    def to_dict(self) -> dict:
        return {"seed": self.seed, "best_epoch": self.best_epoch,
                "bundle": self.bundle.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "RunOutcome":
        return cls(seed=d["seed"], best_epoch=d["best_epoch"],
                   bundle=MetricsBundle.from_dict(d["bundle"]))


@dataclass(frozen=True)
class CellResult:
    label: str
    value: object
    runs: tuple[RunOutcome, ...]
    error: str | None = None
    error_code: int | None = None  # exit code class of the failure

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "value": self.value,
            "runs": [r.to_dict() for r in self.runs],
            "error": self.error,
            "error_code": self.error_code,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CellResult":
        return cls(
            label=d["label"],
            value=d["value"],
            runs=tuple(RunOutcome.from_dict(r) for r in d["runs"]),
            error=d["error"],
            error_code=d.get("error_code"),
        )


@dataclass(frozen=True)
class ReportRow:
    label: str
    ccc: float
    uar: float
    inv_mae: float
    s_mtl: float
    ccc_std: float | None = None
    uar_std: float | None = None
    inv_mae_std: float | None = None
    s_mtl_std: float | None = None


@dataclass(frozen=True)
class ReportTable:
    axis: str
    aggregation: str
    cells: tuple[CellResult, ...]

    @property
    def has_failures(self) -> bool:
        return any(c.failed for c in self.cells)

    def rows(self) -> list[ReportRow | None]:
        """One rendered row per cell, None for failed cells."""
        out: list[ReportRow | None] = []
        for cell in self.cells:
            if cell.failed:
                out.append(None)
                continue
            out.append(_aggregate(cell, self.aggregation))
        return out

    def best_index(self) -> int | None:
        """Index of the highest combined-score row; ties go to the first."""
        best, best_score = None, -np.inf
        for i, row in enumerate(self.rows()):
            if row is not None and row.s_mtl > best_score:
                best, best_score = i, row.s_mtl
        return best

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "aggregation": self.aggregation,
            "cells": [c.to_dict() for c in self.cells],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReportTable":
        return cls(
            axis=d["axis"],
            aggregation=d["aggregation"],
            cells=tuple(CellResult.from_dict(c) for c in d["cells"]),
        )


def _aggregate(cell: CellResult, aggregation: str) -> ReportRow:
    if aggregation == "best":
        scores = [r.bundle.score for r in cell.runs]
        best = cell.runs[int(np.argmax(scores))]  # argmax ties -> earliest run
        return ReportRow(
            label=cell.label,
            ccc=best.bundle.mean_ccc,
            uar=best.bundle.uar,
            inv_mae=best.bundle.inv_mae,
            s_mtl=best.bundle.score,
        )
    cols = {
        name: np.array([getattr(r.bundle, attr) for r in cell.runs])
        for name, attr in (
            ("ccc", "mean_ccc"), ("uar", "uar"),
            ("inv_mae", "inv_mae"), ("s_mtl", "score"),
        )
    }
    return ReportRow(
        label=cell.label,
        ccc=float(cols["ccc"].mean()), ccc_std=float(cols["ccc"].std()),
        uar=float(cols["uar"].mean()), uar_std=float(cols["uar"].std()),
        inv_mae=float(cols["inv_mae"].mean()), inv_mae_std=float(cols["inv_mae"].std()),
        s_mtl=float(cols["s_mtl"].mean()), s_mtl_std=float(cols["s_mtl"].std()),
    )


# -- execution --------------------------------------------------------------


def _run_cell(spec: SweepSpec, value, dataset: SplitDataset) -> CellResult:
    label = f"{spec.axis}={value}"
    config = spec.cell_config(value)
    if spec.axis == "feature_set" and dataset.dim != config.model.input_dim:
        # feature sets legitimately differ in width; size each cell's model
        # to its own data
        config = replace(config, model=replace(config.model, input_dim=dataset.dim))
    runs = []
    try:
        for r in range(spec.runs_per_cell):
            run_config = replace(config, seed=derive_subseed(config.seed, r))
            _, history = train_run(run_config, dataset)
            runs.append(RunOutcome(
                seed=run_config.seed,
                best_epoch=history.best_epoch,
                bundle=history.best_val,
            ))
    except Exception as exc:
        return CellResult(
            label=label, value=value, runs=tuple(runs),
            error=f"{type(exc).__name__}: {exc}",
            error_code=getattr(exc, "exit_code", 3),
        )
    return CellResult(label=label, value=value, runs=tuple(runs))


def run_sweep(spec: SweepSpec, datasets, workers: int = 1) -> ReportTable:
    """Execute every cell and assemble the report.

    ``datasets`` maps each cell value to its (already standardized)
    SplitDataset: either one SplitDataset shared by all cells, a dict
    keyed by value, or a callable value -> SplitDataset. Cells may run on
    ``workers`` threads; assembly order is the SweepSpec's value order
    either way.
    """
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")

    def dataset_for(value) -> SplitDataset:
        if isinstance(datasets, SplitDataset):
            return datasets
        if isinstance(datasets, dict):
            if value not in datasets:
                raise ConfigError(f"no dataset provided for cell value {value!r}")
            return datasets[value]
        return datasets(value)

    resolved = [(value, dataset_for(value)) for value in spec.values]
    if workers == 1:
        cells = [_run_cell(spec, value, ds) for value, ds in resolved]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, spec, value, ds) for value, ds in resolved]
            cells = [f.result() for f in futures]
    return ReportTable(axis=spec.axis, aggregation=spec.aggregation, cells=tuple(cells))


# -- rendering --------------------------------------------------------------


def _f3(v: float) -> str:
    return f"{v:.3f}"


METRIC_NAMES = ("ccc", "uar", "inv_mae", "s_mtl")


def report_markdown(table: ReportTable) -> str:
    """Markdown table, one row per cell, 3-decimal values, best row
    marked with ``*``; ± std shown only under mean_std aggregation."""
    with_std = table.aggregation == "mean_std"
    header = ["cell"] + list(METRIC_NAMES) + ["best"]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "---|" * len(header)]
    best = table.best_index()
    for i, (cell, row) in enumerate(zip(table.cells, table.rows())):
        if row is None:
            lines.append("| " + " | ".join(
                [cell.label] + ["error"] * len(METRIC_NAMES) + [""]) + " |")
            continue
        values = []
        for name in METRIC_NAMES:
            text = _f3(getattr(row, name))
            if with_std:
                text += f" ± {_f3(getattr(row, name + '_std'))}"
            values.append(text)
        mark = "*" if i == best else ""
        lines.append("| " + " | ".join([cell.label] + values + [mark]) + " |")
    body = "\n".join(lines) + "\n"
    failed = [c.label for c in table.cells if c.failed]
    if failed:
        notes = "".join(
            f"- {c.label}: {c.error}\n" for c in table.cells if c.failed
        )
        body += "\nFailed cells:\n" + notes
    return body


def report_csv(table: ReportTable) -> str:
    """CSV report at 3-decimal precision; std columns only under mean_std."""
    with_std = table.aggregation == "mean_std"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["cell"]
    for name in METRIC_NAMES:
        header.append(name)
        if with_std:
            header.append(name + "_std")
    header += ["best", "error"]
    writer.writerow(header)
    best = table.best_index()
    for i, (cell, row) in enumerate(zip(table.cells, table.rows())):
        record = [cell.label]
        if row is None:
            record += [""] * (len(METRIC_NAMES) * (2 if with_std else 1))
            record += ["", cell.error]
        else:
            for name in METRIC_NAMES:
                record.append(_f3(getattr(row, name)))
                if with_std:
                    record.append(_f3(getattr(row, name + "_std")))
            record += ["*" if i == best else "", ""]
        writer.writerow(record)
    return buf.getvalue()


def sidecar_csv(table: ReportTable) -> str:
    """Full-precision per-run values backing the rounded report."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["cell", "run", "seed", "best_epoch",
                     "ccc", "uar", "mae_years", "inv_mae", "s_mtl"])
    for cell in table.cells:
        for r, run in enumerate(cell.runs):
            b = run.bundle
            writer.writerow([
                cell.label, r, run.seed, run.best_epoch,
                repr(b.mean_ccc), repr(b.uar), repr(b.mae_years),
                repr(b.inv_mae), repr(b.score),
            ])
    return buf.getvalue()


def save_results(table: ReportTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_results(path) -> ReportTable:
    with open(path, "r", encoding="utf-8") as fh:
        return ReportTable.from_dict(json.load(fh))

"""Per-epoch metric rows and their CSV/JSON serialization.

The CSV body is fully deterministic for a fixed seed: floats are written
with shortest round-trip repr and wall-clock timings stay out of the CSV
(they live in the JSON sidecar next to it). Missing metrics serialize as
empty cells, never as zeros.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, fields

CSV_COLUMNS = (
    "run_id",
    "epoch",
    "step",
    "loss_total",
    "loss_rec",
    "loss_con",
    "momentum_m",
    "swd_to_prior",
    "swd_samples_vs_test",
    "entropy_est",
    "svd_dispersion",
)


@dataclass
class MetricRecord:
    run_id: str
    epoch: int
    step: int
    wall_seconds: float | None = None  # sidecar-only; excluded from the CSV body
    loss_total: float | None = None
    loss_rec: float | None = None
    loss_con: float | None = None
    momentum_m: float | None = None
    swd_to_prior: float | None = None
    swd_samples_vs_test: float | None = None
    entropy_est: float | None = None
    svd_dispersion: float | None = None

    def csv_row(self) -> list[str]:
        return [_format(getattr(self, c)) for c in CSV_COLUMNS]


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _parse(column: str, cell: str):
    if cell == "":
        return None
    if column == "run_id":
        return cell
    if column in ("epoch", "step"):
        return int(cell)
    return float(cell)


def write_metrics_csv(path, records) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(rec.csv_row())


def read_metrics_csv(path) -> list[MetricRecord]:
    out = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        for row in reader:
            kwargs = {c: _parse(c, cell) for c, cell in zip(CSV_COLUMNS, row)}
            out.append(MetricRecord(**kwargs))
    return out


def record_wall_seconds(records) -> list[float | None]:
    return [r.wall_seconds for r in records]


def write_sidecar(path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def read_sidecar(path) -> dict:
    with open(path) as f:
        return json.load(f)


def record_field_names() -> tuple[str, ...]:
    return tuple(f.name for f in fields(MetricRecord))

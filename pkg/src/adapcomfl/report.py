"""Metrics CSV and JSON summaries for simulation results.

``metrics.csv`` has one row per (round, client) with the columns in
``METRICS_HEADER``. Floats are written with ``repr`` so a file can be
compared byte for byte between runs; booleans are ``true``/``false``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import astuple, dataclass, fields
from pathlib import Path

from .netsim import ExperimentResult


@dataclass(frozen=True)
class MetricsRow:
    round: int
    client_id: int
    algorithm: str
    b_pred_mbps: float
    b_true_mbps: float
    rows_a: int
    d_prime_slots: int
    uplink_time_s: float
    deadline_met: bool
    cr: float
    global_accuracy_pct: float
    predictor_mae_mbps: float


METRICS_HEADER = tuple(f.name for f in fields(MetricsRow))


def metrics_rows(result: ExperimentResult) -> list[MetricsRow]:
    algorithm = result.config.algorithm
    out = []
    for rec in result.records:
        for c, client_mae in zip(rec.clients, rec.client_mae):
            out.append(MetricsRow(
                round=rec.round,
                client_id=c.client_id,
                algorithm=algorithm,
                b_pred_mbps=c.b_pred,
                b_true_mbps=c.b_true,
                rows_a=c.rows,
                d_prime_slots=c.d_prime,
                uplink_time_s=c.uplink_time,
                deadline_met=c.deadline_met,
                cr=c.cr,
                global_accuracy_pct=rec.accuracy,
                predictor_mae_mbps=client_mae,
            ))
    return out


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(result: ExperimentResult, path: str | Path) -> int:
    rows = metrics_rows(result)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow([_cell(v) for v in astuple(row)])
    return len(rows)


def read_metrics_csv(path: str | Path) -> list[dict]:
    """Parse ``metrics.csv`` back into typed dicts."""
    casts = {f.name: f.type for f in fields(MetricsRow)}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for key, value in raw.items():
                kind = casts[key]
                if kind == "bool":
                    row[key] = value == "true"
                elif kind == "int":
                    row[key] = int(value)
                elif kind == "float":
                    row[key] = float(value)
                else:
                    row[key] = value
            out.append(row)
    return out


def summary_payload(result: ExperimentResult) -> dict:
    payload = dict(result.summary)
    payload["n_params"] = result.n_params
    payload["seed"] = result.config.seed
    payload["shard_digests"] = list(result.shard_digests)
    return payload


def write_json(payload: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def comparison_payload(results: dict[str, ExperimentResult]) -> dict:
    """Headline numbers per algorithm, as written to ``comparison.json``."""
    out = {}
    for name, res in results.items():
        s = res.summary
        out[name] = {
            "final_accuracy_pct": s["final_accuracy_pct"],
            "mean_d_prime_slots": s["mean_d_prime_slots"],
            "mean_uplink_time_s": s["mean_uplink_time_s"],
            "mean_cr": s["mean_cr"],
            "deadline_violations": s["deadline_violations"],
            "shard_digests": list(res.shard_digests),
        }
    return {"algorithms": out}

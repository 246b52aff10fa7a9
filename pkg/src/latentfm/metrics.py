"""RMSE, per-epoch metric records, and experiment summaries."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

SUMMARY_EPOCHS = (100, 200, 300)


def rmse(predictions, truths) -> float:
    """Root mean squared error between two equal-length sequences."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape:
        raise ValidationError(
            f"length mismatch: {p.shape} predictions vs {t.shape} truths")
    if p.size == 0:
        raise ValidationError("rmse of empty sequences is undefined")
    return float(np.sqrt(np.mean((p - t) ** 2)))


@dataclass(frozen=True)
class MetricsRecord:
    variant: str            # baseline | topic | vector
    latent_dim: int         # 0 for baseline
    epoch: int              # 1-based
    train_rmse: float
    test_rmse: float
    wall_seconds: float     # cumulative training time, excluded from ndjson

    def key(self) -> tuple[str, int]:
        return (self.variant, self.latent_dim)

    def label(self) -> str:
        return self.variant if self.variant == "baseline" \
            else f"{self.variant}_{self.latent_dim}"


def metrics_json_line(rec: MetricsRecord) -> str:
    # wall_seconds is deliberately left out so metrics files are
    # byte-identical across reruns of the same seeded config
    return json.dumps({
        "variant": rec.variant,
        "latent_dim": rec.latent_dim,
        "epoch": rec.epoch,
        "train_rmse": rec.train_rmse,
        "test_rmse": rec.test_rmse,
    }, sort_keys=True)


def write_metrics(records: Iterable[MetricsRecord], path) -> None:
    """Newline-delimited JSON, one deterministic object per epoch record."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(metrics_json_line(rec) + "\n")


def write_timings(records: Iterable[MetricsRecord], path) -> None:
    """Sidecar ndjson with the wall-clock seconds per record."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "variant": rec.variant,
                "latent_dim": rec.latent_dim,
                "epoch": rec.epoch,
                "wall_seconds": rec.wall_seconds,
            }, sort_keys=True) + "\n")


def read_metrics(path) -> list[MetricsRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(MetricsRecord(obj["variant"], obj["latent_dim"],
                                     obj["epoch"], obj["train_rmse"],
                                     obj["test_rmse"],
                                     obj.get("wall_seconds", 0.0)))
    return out


def summarize(records: Sequence[MetricsRecord],
              epochs: Sequence[int] = SUMMARY_EPOCHS) -> list[dict]:
    """One row per (variant, latent_dim) with test RMSE at the requested epochs.

    Raises if any requested epoch is missing for a variant, listing the gaps.
    """
    by_key: dict[tuple[str, int], dict[int, MetricsRecord]] = {}
    order: list[tuple[str, int]] = []
    for rec in records:
        if rec.key() not in by_key:
            by_key[rec.key()] = {}
            order.append(rec.key())
        by_key[rec.key()][rec.epoch] = rec
    gaps = []
    rows = []
    for key in order:
        have = by_key[key]
        missing = [e for e in epochs if e not in have]
        if missing:
            label = key[0] if key[0] == "baseline" else f"{key[0]}_{key[1]}"
            gaps.append(f"{label}: epochs {missing}")
            continue
        rows.append({
            "variant": key[0],
            "latent_dim": key[1],
            "test_rmse": {e: have[e].test_rmse for e in epochs},
        })
    if gaps:
        raise ValidationError("missing summary epochs - " + "; ".join(gaps))
    return rows


def _row_label(row: dict) -> str:
    return row["variant"] if row["variant"] == "baseline" \
        else f"{row['variant']}_{row['latent_dim']}"


def format_summary(rows: Sequence[dict],
                   epochs: Sequence[int] = SUMMARY_EPOCHS) -> str:
    """Aligned plain-text table of test RMSE by variant and epoch."""
    headers = ["method"] + [f"iter={e}" for e in epochs]
    body = [[_row_label(row)] + [f"{row['test_rmse'][e]:.6f}" for e in epochs]
            for row in rows]
    widths = [max(len(line[c]) for line in [headers] + body)
              for c in range(len(headers))]
    lines = []
    for line in [headers] + body:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())
    return "\n".join(lines) + "\n"


def write_summary_csv(rows: Sequence[dict], path,
                      epochs: Sequence[int] = SUMMARY_EPOCHS) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method," + ",".join(f"iter_{e}" for e in epochs) + "\n")
        for row in rows:
            cells = [repr(row["test_rmse"][e]) for e in epochs]
            fh.write(_row_label(row) + "," + ",".join(cells) + "\n")


def write_convergence_csv(records: Sequence[MetricsRecord], path) -> None:
    """Long-format per-epoch series for plotting RMSE against iterations."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method,epoch,train_rmse,test_rmse\n")
        for rec in records:
            fh.write(f"{rec.label()},{rec.epoch},"
                     f"{rec.train_rmse!r},{rec.test_rmse!r}\n")


def write_text(text: str, path) -> None:
    Path(path).write_text(text, encoding="utf-8")

"""Decoy ranking and per-target evaluation metrics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .dbn import DbnModel
from .pipeline import QaDataset, predict_records

MEAN_ROW = "__MEAN__"
TIE_POLICY = "descending score; ties broken by lexicographic model_id"
REPORT_COLUMNS = ("target_id", "n_models", "pearson", "loss", "top1_gdt", "top1_tm", "top1_rmsd",
                  "best5_tm", "best5_rmsd_of_best_tm", "best5_min_rmsd")
DEGENERATE = "degenerate variance"
TOO_FEW = "fewer than 2 models"


class EvaluationError(ValueError):
    pass


class DegenerateVarianceError(EvaluationError):
    pass


class MissingLabelsError(EvaluationError):
    pass


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation; raises on zero variance."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise EvaluationError("pearson needs two equal-length lists of at least 2 values")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVarianceError(DEGENERATE)
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class TargetRanking:
    target_id: str
    ranked: tuple[tuple[str, float], ...]
    tie_policy: str = TIE_POLICY

    @property
    def model_ids(self) -> list[str]:
        return [m for m, _ in self.ranked]

    @property
    def top(self) -> str:
        return self.ranked[0][0]


def rank_pool(target_id: str, scores: Mapping[str, float]) -> TargetRanking:
    if not scores:
        raise EvaluationError(f"{target_id}: empty pool")
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return TargetRanking(target_id, tuple((m, float(s)) for m, s in ranked))


def _require(ranking: TargetRanking, labels: Mapping[str, Optional[float]], what: str):
    missing = [m for m in ranking.model_ids if labels.get(m) is None]
    if missing:
        raise MissingLabelsError(f"{ranking.target_id}: missing {what} for {', '.join(missing)}")


def per_target_loss(ranking: TargetRanking, true_gdt: Mapping[str, float]) -> float:
    """Best GDT-TS in the pool minus the GDT-TS of the top-ranked model."""
    _require(ranking, true_gdt, "gdt_ts")
    best = max(true_gdt[m] for m in ranking.model_ids)
    return float(best - true_gdt[ranking.top])


@dataclass(frozen=True)
class Labels:
    gdt: Mapping[str, Optional[float]]
    tm: Mapping[str, Optional[float]]
    rmsd: Mapping[str, Optional[float]]


def selection_metrics(ranking: TargetRanking, labels: Labels) -> dict[str, Optional[float]]:
    """True quality of the top-1 pick and the best (by TM-score) of the top five."""
    _require(ranking, labels.gdt, "gdt_ts")
    ids = ranking.model_ids
    top = ids[0]
    out: dict[str, Optional[float]] = {
        "top1_gdt": labels.gdt[top], "top1_tm": labels.tm.get(top), "top1_rmsd": labels.rmsd.get(top),
        "best5_tm": None, "best5_rmsd_of_best_tm": None, "best5_min_rmsd": None,
    }
    head = ids[:5]
    with_tm = [m for m in head if labels.tm.get(m) is not None]
    if with_tm:
        best = max(with_tm, key=lambda m: labels.tm[m])  # first in rank order on ties
        out["best5_tm"] = labels.tm[best]
        out["best5_rmsd_of_best_tm"] = labels.rmsd.get(best)
    rmsds = [labels.rmsd[m] for m in head if labels.rmsd.get(m) is not None]
    if rmsds:
        out["best5_min_rmsd"] = min(rmsds)
    return out


@dataclass
class EvaluationReport:
    rows: list[dict]
    aggregate: dict
    skipped: dict[str, list[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"targets": self.rows, "aggregate": self.aggregate,
                "skipped": {k: list(v) for k, v in sorted(self.skipped.items())}}


def _mean(values) -> Optional[float]:
    vals = [float(v) for v in values if v is not None]
    if not vals:
        return None
    total = 0.0
    for v in vals:  # fixed left-to-right order
        total += v
    return total / len(vals)


def evaluate_scores(scores: Mapping[tuple[str, str], float], dataset: QaDataset) -> EvaluationReport:
    """Per-target metrics for predicted ``scores`` keyed by (target_id, model_id)."""
    rows = []
    skipped: dict[str, list[str]] = {}
    for target_id in dataset.target_ids:
        records = [r for r in dataset.targets[target_id] if (target_id, r.model_id) in scores]
        if not records:
            continue
        pool = {r.model_id: scores[(target_id, r.model_id)] for r in records}
        labels = Labels({r.model_id: r.true_gdt_ts for r in records},
                        {r.model_id: r.true_tm_score for r in records},
                        {r.model_id: r.true_rmsd for r in records})
        ranking = rank_pool(target_id, pool)
        row: dict = {"target_id": target_id, "n_models": len(records), "pearson": None}
        if len(records) < 2:
            skipped.setdefault(TOO_FEW, []).append(target_id)
        else:
            ids = ranking.model_ids
            try:
                row["pearson"] = pearson([pool[m] for m in ids], [labels.gdt[m] for m in ids])
            except DegenerateVarianceError:
                skipped.setdefault(DEGENERATE, []).append(target_id)
            except TypeError:
                raise MissingLabelsError(f"{target_id}: missing gdt_ts labels") from None
        row["loss"] = per_target_loss(ranking, labels.gdt)
        row.update(selection_metrics(ranking, labels))
        rows.append(row)
    if not rows:
        raise EvaluationError("nothing to report")
    aggregate = {"target_id": MEAN_ROW}
    for col in REPORT_COLUMNS[1:]:
        aggregate[col] = _mean(r[col] for r in rows)
    return EvaluationReport(rows, aggregate, skipped)


def evaluate(model: DbnModel, dataset: QaDataset) -> EvaluationReport:
    return evaluate_scores(predict_records(model, dataset.records()), dataset)


def rank_dataset(scores: Mapping[tuple[str, str], float]) -> list[TargetRanking]:
    pools: dict[str, dict[str, float]] = {}
    for (t, m), s in scores.items():
        pools.setdefault(t, {})[m] = s
    return [rank_pool(t, pools[t]) for t in sorted(pools)]


# ---------------------------------------------------------------------------
# serialization


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    return format(float(value), ".17g")


def report_csv(report: EvaluationReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in [*report.rows, report.aggregate]:
        writer.writerow([row["target_id"], *(_cell(row[c]) for c in REPORT_COLUMNS[1:])])
    return buf.getvalue()


def report_json(report: EvaluationReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def parse_report_csv(text: str) -> EvaluationReport:
    reader = csv.DictReader(io.StringIO(text))
    rows, aggregate = [], None
    for raw in reader:
        row: dict = {"target_id": raw["target_id"]}
        for col in REPORT_COLUMNS[1:]:
            cell = raw[col]
            if cell == "":
                row[col] = None
            elif col == "n_models" and raw["target_id"] != MEAN_ROW:
                row[col] = int(cell)
            else:
                row[col] = float(cell)
        if row["target_id"] == MEAN_ROW:
            aggregate = row
        else:
            rows.append(row)
    if aggregate is None:
        raise EvaluationError("report CSV lacks the aggregate row")
    return EvaluationReport(rows, aggregate)


def parse_report_json(text: str) -> EvaluationReport:
    data = json.loads(text)
    return EvaluationReport(data["targets"], data["aggregate"], data.get("skipped", {}))


def emit_report(report: EvaluationReport, path, fmt: str = "csv") -> Path:
    """Write the report as ``csv`` or ``json``; returns the path written."""
    if not report.rows:
        raise EvaluationError("nothing to report")
    text = {"csv": report_csv, "json": report_json}.get(fmt)
    if text is None:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    try:
        path.write_text(text(report))
    except OSError as exc:
        raise EvaluationError(f"cannot write report to {path}: {exc.strerror}") from exc
    return path


__all__ = [
    "DegenerateVarianceError", "EvaluationError", "EvaluationReport", "Labels", "MissingLabelsError",
    "TargetRanking", "emit_report", "evaluate", "evaluate_scores", "parse_report_csv",
    "parse_report_json", "pearson", "per_target_loss", "rank_dataset", "rank_pool",
    "report_csv", "report_json", "selection_metrics",
]

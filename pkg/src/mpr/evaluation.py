"""Ground-truth scoring of match decisions: TP/FP/FN, precision/recall/F1, index error."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset import GroundTruth
from .errors import MissingGroundTruth
from .matching import MatchDecision

DEFAULT_TOLERANCE = 5


class Outcome(enum.Enum):
    TP = "TP"
    FP = "FP"
    FN = "FN"


@dataclass(frozen=True)
class EvalCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "EvalCounts") -> "EvalCounts":
        return EvalCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    mean_error: float = 0.0


def _gt(gt: GroundTruth, query_index: int) -> int:
    try:
        return gt[query_index]
    except KeyError:
        raise MissingGroundTruth(f"no ground truth for query {query_index}") from None


def classify(decision: MatchDecision, gt: GroundTruth, tol: int = DEFAULT_TOLERANCE) -> Outcome:
    truth = _gt(gt, decision.query_index)
    if not decision.accepted:
        return Outcome.FN
    return Outcome.TP if abs(decision.best_db_index - truth) <= tol else Outcome.FP


def count_outcomes(decisions: Iterable[MatchDecision], gt: GroundTruth, tol: int = DEFAULT_TOLERANCE) -> EvalCounts:
    tally = {o: 0 for o in Outcome}
    for d in decisions:
        tally[classify(d, gt, tol)] += 1
    return EvalCounts(tally[Outcome.TP], tally[Outcome.FP], tally[Outcome.FN])


def compute_metrics(counts: EvalCounts, mean_error: float = 0.0) -> Metrics:
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    # harmonic mean of precision and recall, written over the counts so it is correctly rounded
    f1 = 2 * counts.tp / (2 * counts.tp + counts.fp + counts.fn) if counts.tp else 0.0
    return Metrics(precision, recall, f1, mean_error)


def mean_localization_error(decisions: Sequence[MatchDecision], gt: GroundTruth,
                            accepted_only: bool = False) -> float:
    """Mean |best_db_index - truth| over all queries (argmax used even when rejected).

    With ``accepted_only`` the mean runs over accepted decisions only; 0 if none.
    """
    gaps = [abs(d.best_db_index - _gt(gt, d.query_index))
            for d in decisions if d.accepted or not accepted_only]
    return float(np.mean(gaps)) if gaps else 0.0


def evaluate(decisions: Sequence[MatchDecision], gt: GroundTruth, tol: int = DEFAULT_TOLERANCE,
             accepted_only_error: bool = False) -> tuple[EvalCounts, Metrics]:
    counts = count_outcomes(decisions, gt, tol)
    return counts, compute_metrics(counts, mean_localization_error(decisions, gt, accepted_only_error))


def export_visualization_matrix(decisions: Sequence[MatchDecision], gt: GroundTruth, tol: int, path,
                                db_len: int | None = None) -> Path:
    """CSV of ``query_index,db_index,label`` for a result/ground-truth-band plot.

    The band covers ``truth +- tol`` clipped to ``[0, db_len)``.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query_index", "db_index", "label"])
        for d in decisions:
            truth = _gt(gt, d.query_index)
            hi = truth + tol if db_len is None else min(truth + tol, db_len - 1)
            for j in range(max(0, truth - tol), hi + 1):
                w.writerow([d.query_index, j, "ground_truth_band"])
            w.writerow([d.query_index, d.best_db_index, "result"])
    return path


def write_metrics_report(counts: EvalCounts, metrics: Metrics, path, extra: dict | None = None) -> Path:
    path = Path(path)
    lines = [
        f"precision\t{metrics.precision:.6f}",
        f"recall\t{metrics.recall:.6f}",
        f"f1\t{metrics.f1:.6f}",
        f"mean_error\t{metrics.mean_error:.6f}",
        f"tp\t{counts.tp}",
        f"fp\t{counts.fp}",
        f"fn\t{counts.fn}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key}\t{value}")
    path.write_text("\n".join(lines) + "\n")
    return path

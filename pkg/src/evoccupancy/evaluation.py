"""Threshold-based classification metrics over resolved forecasts.

A probability is classified as occupied only when it is strictly greater than
the threshold. Precision, recall and F1 are ``None`` whenever their
denominator is zero; they are never silently reported as 0.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domain import ValidationError

DEFAULT_GRID = (0.30, 0.35, 0.40, 0.45, 0.50)
NA = "NA"

Pairs = Sequence[tuple[float, int]]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ThresholdReport:
    threshold: float
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    counts: ConfusionCounts


def classify(probability: float, threshold: float) -> int:
    return 1 if probability > threshold else 0


def _arrays(pairs: Pairs) -> tuple[np.ndarray, np.ndarray]:
    if len(pairs) == 0:
        return np.empty(0), np.empty(0, dtype=bool)
    arr = np.asarray(pairs, dtype=np.float64)
    probs, actual = arr[:, 0], arr[:, 1]
    if not np.isin(actual, (0.0, 1.0)).all():
        raise ValidationError("actual labels must be 0 or 1")
    return probs, actual == 1.0


def _count(probs: np.ndarray, positive: np.ndarray, threshold: float) -> ConfusionCounts:
    predicted = probs > threshold
    tp = int(np.count_nonzero(predicted & positive))
    fp = int(np.count_nonzero(predicted & ~positive))
    fn = int(np.count_nonzero(~predicted & positive))
    return ConfusionCounts(tp, fp, positive.size - tp - fp - fn, fn)


def count(pairs: Pairs, threshold: float) -> ConfusionCounts:
    probs, positive = _arrays(pairs)
    return _count(probs, positive, threshold)


def metrics(c: ConfusionCounts) -> tuple[Optional[float], Optional[float], Optional[float]]:
    """(precision, recall, F1), each ``None`` when undefined."""
    p = c.tp / (c.tp + c.fp) if c.tp + c.fp else None
    r = c.tp / (c.tp + c.fn) if c.tp + c.fn else None
    if p is None or r is None or p + r == 0:
        return p, r, None
    # Same value as 2pr/(p+r), but a single correctly rounded division.
    return p, r, 2 * c.tp / (2 * c.tp + c.fp + c.fn)


def default_grid(lo: float = 0.30, hi: float = 0.50, step: float = 0.05) -> tuple[float, ...]:
    n = int(round((hi - lo) / step))
    return tuple(round(lo + i * step, 10) for i in range(n + 1))


def _check_grid(grid: Sequence[float]) -> None:
    if len(grid) == 0:
        raise ValidationError("threshold grid is empty")
    for t in grid:
        if not 0.0 <= t <= 1.0:
            raise ValidationError(f"threshold {t} outside [0, 1]")


def sweep(pairs: Pairs, grid: Sequence[float] = DEFAULT_GRID) -> list[ThresholdReport]:
    _check_grid(grid)
    probs, positive = _arrays(pairs)
    out = []
    for t in grid:
        c = _count(probs, positive, t)
        out.append(ThresholdReport(float(t), *metrics(c), c))
    return out


def best_threshold(reports: Sequence[ThresholdReport]) -> Optional[ThresholdReport]:
    """Report with the highest defined F1 (lowest threshold wins ties)."""
    defined = [r for r in reports if r.f1 is not None]
    if not defined:
        return None
    return max(defined, key=lambda r: (r.f1, -r.threshold))


def f1_exceeds(a: Optional[float], b: Optional[float]) -> bool:
    """Strict F1 ordering where an undefined score ranks below every defined one.

    F1 is undefined only when TP = 0, i.e. the model detected nothing. A
    defined F1 implies TP > 0 and is therefore positive, so it ranks higher.
    """
    if a is None:
        return False
    return b is None or a > b


@dataclass(frozen=True)
class ComparisonRow:
    threshold: float
    streaming: ThresholdReport
    batch: ThresholdReport

    @property
    def f1_diff(self) -> Optional[float]:
        if self.streaming.f1 is None or self.batch.f1 is None:
            return None
        return self.streaming.f1 - self.batch.f1

    @property
    def streaming_wins(self) -> bool:
        return f1_exceeds(self.streaming.f1, self.batch.f1)

    @property
    def streaming_at_least(self) -> bool:
        s, b = self.streaming.f1, self.batch.f1
        if s is None:
            return b is None
        return b is None or s >= b


@dataclass(frozen=True)
class Comparison:
    rows: tuple[ComparisonRow, ...]

    @property
    def wins(self) -> int:
        return sum(r.streaming_wins for r in self.rows)

    @property
    def at_least(self) -> int:
        return sum(r.streaming_at_least for r in self.rows)

    def summary(self) -> str:
        lines = [
            f"streaming F1 >= batch F1 at {self.at_least} of {len(self.rows)} thresholds "
            f"(strictly greater at {self.wins})"
        ]
        for name in ("streaming", "batch"):
            best = best_threshold([getattr(r, name) for r in self.rows])
            if best is None:
                lines.append(f"best {name}: F1 undefined at every threshold")
            else:
                lines.append(
                    f"best {name}: threshold={best.threshold:g} F1={best.f1:.4f} "
                    f"precision={_fmt(best.precision, 4)} recall={_fmt(best.recall, 4)}"
                )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        return report_csv([("streaming", [r.streaming for r in self.rows]),
                           ("batch", [r.batch for r in self.rows])])


def compare(streaming_pairs: Pairs, batch_pairs: Pairs, grid: Sequence[float] = DEFAULT_GRID) -> Comparison:
    if len(streaming_pairs) != len(batch_pairs):
        raise ValidationError(f"misaligned inputs: {len(streaming_pairs)} streaming vs {len(batch_pairs)} batch pairs")
    if any(s[1] != b[1] for s, b in zip(streaming_pairs, batch_pairs)):
        raise ValidationError("misaligned inputs: actual labels differ between models")
    s_reports = sweep(streaming_pairs, grid)
    b_reports = sweep(batch_pairs, grid)
    return Comparison(tuple(ComparisonRow(s.threshold, s, b) for s, b in zip(s_reports, b_reports)))


def _fmt(x: Optional[float], digits: Optional[int] = None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return NA
    return repr(float(x)) if digits is None else f"{x:.{digits}f}"


def report_csv(models: Sequence[tuple[str, Sequence[ThresholdReport]]]) -> str:
    """``threshold,model,tp,fp,tn,fn,precision,recall,f1``, rows grouped by threshold."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "model", "tp", "fp", "tn", "fn", "precision", "recall", "f1"])
    n = len(models[0][1]) if models else 0
    for i in range(n):
        for name, reports in models:
            r = reports[i]
            c = r.counts
            w.writerow([repr(r.threshold), name, c.tp, c.fp, c.tn, c.fn,
                        _fmt(r.precision), _fmt(r.recall), _fmt(r.f1)])
    return buf.getvalue()


def pr_curve_csv(reports: Sequence[ThresholdReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "precision", "recall"])
    for r in reports:
        w.writerow([repr(r.threshold), _fmt(r.precision), _fmt(r.recall)])
    return buf.getvalue()

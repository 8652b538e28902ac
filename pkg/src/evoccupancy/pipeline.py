"""The live forecasting loop.

For every minute event at ``t`` the loop

1. buffers ``(encode(t), label)`` and, once ``window`` samples are buffered,
   applies one streaming update and clears the buffer;
2. resolves the pending forecast whose target is ``t``;
3. issues a forecast for ``t + horizon`` from the just-updated model, and from
   the frozen batch model when comparison is on.

Updates fire on sample counts, not wall-clock windows, so replay speed never
changes the output.
"""
from __future__ import annotations

import calendar
import collections
import csv
import datetime as dt
import io
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Protocol, Sequence, TextIO

import numpy as np

from .domain import CalendarContext, OccupancySample, ValidationError, format_ts, parse_ts
from .featurize import encode
from .model import ModelState, predict_proba, update_stream
from .stream import Consumer, decode_sample

DEFAULT_HORIZON = 15
DEFAULT_WINDOW = 15
FORECAST_HEADER = ["issued_at", "target", "prob_streaming", "prob_batch", "actual"]


@dataclass(frozen=True)
class PipelineConfig:
    initial_model: ModelState
    horizon: int = DEFAULT_HORIZON
    # None disables streaming updates entirely.
    window: Optional[int] = DEFAULT_WINDOW
    calendar: CalendarContext = field(default_factory=CalendarContext)
    compare: bool = True
    # Frozen comparison model; defaults to the initial model.
    batch_model: Optional[ModelState] = None

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValidationError(f"horizon must be at least 1 minute, got {self.horizon}")
        if self.window is not None and self.window < 1:
            raise ValidationError(f"update window must be at least 1 sample, got {self.window}")

    @property
    def frozen_model(self) -> ModelState:
        return self.batch_model if self.batch_model is not None else self.initial_model


@dataclass
class ForecastRecord:
    issued_at: dt.datetime
    target: dt.datetime
    prob_streaming: float
    prob_batch: Optional[float] = None
    actual: Optional[int] = None


@dataclass
class RunReport:
    events: int = 0
    issued: int = 0
    resolved: int = 0
    pending: int = 0         # targets beyond the end of the stream
    missing_target: int = 0  # targets skipped by a gap in the stream
    updates: int = 0
    first_ts: Optional[dt.datetime] = None
    last_ts: Optional[dt.datetime] = None
    wall_seconds: float = 0.0

    @property
    def unresolved(self) -> int:
        return self.pending + self.missing_target


class Sink(Protocol):
    def write(self, record: ForecastRecord) -> None: ...


def _fmt_prob(p: Optional[float]) -> str:
    return "" if p is None else repr(float(p))


class ForecastCsvSink:
    """``issued_at,target,prob_streaming,prob_batch,actual``; empty fields for missing values."""

    def __init__(self, fh: TextIO):
        self._writer = csv.writer(fh, lineterminator="\n")
        self._writer.writerow(FORECAST_HEADER)

    def write(self, r: ForecastRecord) -> None:
        self._writer.writerow([
            format_ts(r.issued_at), format_ts(r.target), _fmt_prob(r.prob_streaming),
            _fmt_prob(r.prob_batch), "" if r.actual is None else r.actual,
        ])


class LineProtocolSink:
    """``occupancy,model=<streaming|batch> prob=<float> <epoch-ns>`` keyed on the target minute."""

    def __init__(self, fh: TextIO, measurement: str = "occupancy"):
        self._fh = fh
        self._measurement = measurement

    def write(self, r: ForecastRecord) -> None:
        ns = calendar.timegm(r.target.timetuple()) * 1_000_000_000
        self._fh.write(f"{self._measurement},model=streaming prob={r.prob_streaming!r} {ns}\n")
        if r.prob_batch is not None:
            self._fh.write(f"{self._measurement},model=batch prob={r.prob_batch!r} {ns}\n")


class ListSink:
    def __init__(self) -> None:
        self.records: list[ForecastRecord] = []

    def write(self, r: ForecastRecord) -> None:
        self.records.append(r)


def run(
    cfg: PipelineConfig,
    consumer: Consumer,
    sinks: Sink | Sequence[Sink] = (),
    poll_size: int = 4096,
    idle_sleep: float = 0.001,
) -> tuple[RunReport, ModelState]:
    """Consume until the topic is closed and drained; returns the report and final streaming model.

    Records reach the sinks in issue order: each is written once its target
    minute arrives, or at stream end if it never does.
    """
    if hasattr(sinks, "write"):
        sinks = [sinks]  # type: ignore[list-item]
    state = cfg.initial_model
    frozen = cfg.frozen_model if cfg.compare else None
    horizon = dt.timedelta(minutes=cfg.horizon)
    window = cfg.window
    buf_x: list[np.ndarray] = []
    buf_y: list[int] = []
    pending: collections.deque[ForecastRecord] = collections.deque()
    features: dict[dt.datetime, np.ndarray] = {}
    report = RunReport()
    prev_ts = None
    t0 = time.perf_counter()

    def emit(rec: ForecastRecord) -> None:
        for s in sinks:
            s.write(rec)

    while True:
        batch = consumer.poll(poll_size)
        if not batch:
            if consumer.exhausted:
                break
            time.sleep(idle_sleep)
            continue
        for _, payload in batch:
            ts, label = decode_sample(payload)
            if prev_ts is not None and ts <= prev_ts:
                kind = "duplicate" if ts == prev_ts else "out-of-order"
                raise ValidationError(f"{kind} event {format_ts(ts)} after {format_ts(prev_ts)}")
            if prev_ts is None:
                report.first_ts = ts
            prev_ts = ts
            report.events += 1

            x = features.pop(ts, None)
            if x is None:
                x = encode(ts, cfg.calendar)
            if window is not None:
                buf_x.append(x)
                buf_y.append(label)
                if len(buf_x) >= window:
                    state = update_stream(state, np.array(buf_x), np.array(buf_y, dtype=np.float64))
                    report.updates += 1
                    buf_x.clear()
                    buf_y.clear()

            while pending and pending[0].target <= ts:
                rec = pending.popleft()
                if rec.target == ts:
                    rec.actual = label
                    report.resolved += 1
                else:
                    features.pop(rec.target, None)
                    report.missing_target += 1
                emit(rec)

            target = ts + horizon
            xf = encode(target, cfg.calendar)
            features[target] = xf
            rec = ForecastRecord(
                ts, target, predict_proba(state, xf),
                predict_proba(frozen, xf) if frozen is not None else None,
            )
            pending.append(rec)
            report.issued += 1

    report.pending = len(pending)
    for rec in pending:
        emit(rec)
    report.last_ts = prev_ts
    report.wall_seconds = time.perf_counter() - t0
    return report, state


@dataclass
class ResolvedPairs:
    streaming: list[tuple[float, int]]
    batch: Optional[list[tuple[float, int]]]
    excluded: int


def resolve_ledger(
    records: Iterable[ForecastRecord],
    actuals: Mapping[dt.datetime, int] | Iterable[OccupancySample] | None = None,
) -> ResolvedPairs:
    """Join forecasts to ground truth on the target minute, ordered by target.

    Without ``actuals`` the labels already stored on the records are used.
    Forecasts with no ground truth are dropped and counted in ``excluded``.
    """
    records = list(records)
    if actuals is not None and not isinstance(actuals, Mapping):
        actuals = {s.ts: int(s.occupied) for s in actuals}
    seen: set[dt.datetime] = set()
    for r in records:
        if r.target in seen:
            raise ValidationError(f"duplicate forecast target {format_ts(r.target)}")
        seen.add(r.target)

    has_batch = any(r.prob_batch is not None for r in records)
    streaming: list[tuple[float, int]] = []
    batch: list[tuple[float, int]] = []
    excluded = 0
    for r in sorted(records, key=lambda r: r.target):
        y = r.actual if actuals is None else actuals.get(r.target)
        if y is None:
            excluded += 1
            continue
        streaming.append((r.prob_streaming, int(y)))
        if has_batch:
            if r.prob_batch is None:
                raise ValidationError(f"forecast for {format_ts(r.target)} lacks a batch probability")
            batch.append((r.prob_batch, int(y)))
    return ResolvedPairs(streaming, batch if has_batch else None, excluded)


def _opt_float(text: str) -> Optional[float]:
    return float(text) if text != "" else None


def read_forecasts(path_or_text: str | Path) -> list[ForecastRecord]:
    text = Path(path_or_text).read_text() if isinstance(path_or_text, Path) else path_or_text
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != FORECAST_HEADER:
        raise ValidationError(f"unexpected forecast header {header}")
    out = []
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        try:
            issued, target, ps, pb, actual = row
            rec = ForecastRecord(parse_ts(issued), parse_ts(target), float(ps), _opt_float(pb),
                                 int(actual) if actual != "" else None)
        except ValueError as exc:
            raise ValidationError(f"forecast line {lineno}: {exc}") from exc
        out.append(rec)
    return out

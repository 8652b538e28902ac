"""End-to-end helpers: pick the training year, fit, replay a test year, score."""
from __future__ import annotations

import collections
import datetime as dt
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import evaluation, pipeline
from .domain import CalendarContext, ChargeSession, ValidationError, occupancy_array, year_span
from .featurize import encode_range
from .model import ModelState, TrainConfig, fit_batch
from .stream import Broker, ReplayConfig, replay, replay_in_background, samples_from_labels

TOPIC = "occupancy"


def select_training_year(sessions: Sequence[ChargeSession]) -> int:
    """Year with the most sessions; the earliest year wins ties."""
    counts = collections.Counter(s.start.year for s in sessions)
    if not counts:
        raise ValidationError("dataset has no sessions")
    return max(sorted(counts), key=lambda y: counts[y])


def training_data(
    sessions: Sequence[ChargeSession], year: int, cal: CalendarContext | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Features and labels for every minute of ``year`` (525,600 rows in a non-leap year)."""
    if not any(s.start.year == year for s in sessions):
        raise ValidationError(f"no sessions in training year {year}")
    start, end = year_span(year, inclusive=False)
    return encode_range(start, end, cal), occupancy_array(sessions, start, end).astype(np.float64)


def train(
    sessions: Sequence[ChargeSession], year: int, cfg: TrainConfig = TrainConfig(),
    cal: CalendarContext | None = None,
) -> ModelState:
    X, y = training_data(sessions, year, cal)
    return fit_batch(X, y, cfg)


def test_samples(
    sessions: Sequence[ChargeSession], start: dt.datetime, end: dt.datetime
):
    return samples_from_labels(start, occupancy_array(sessions, start, end))


@dataclass
class ExperimentResult:
    report: pipeline.RunReport
    final_model: ModelState
    records: list[pipeline.ForecastRecord]
    pairs: pipeline.ResolvedPairs

    def compare(self, grid: Sequence[float] = evaluation.DEFAULT_GRID) -> evaluation.Comparison:
        if self.pairs.batch is None:
            raise ValidationError("run was not in comparison mode")
        return evaluation.compare(self.pairs.streaming, self.pairs.batch, grid)


def replay_and_forecast(
    sessions: Sequence[ChargeSession],
    model: ModelState,
    start: dt.datetime,
    end: dt.datetime,
    horizon: int = pipeline.DEFAULT_HORIZON,
    window: Optional[int] = pipeline.DEFAULT_WINDOW,
    cal: CalendarContext | None = None,
    speedup: Optional[float] = None,
    sinks: Sequence[pipeline.Sink] = (),
) -> ExperimentResult:
    """Replay ``[start, end)`` through a broker topic and run the pipeline in comparison mode."""
    samples = test_samples(sessions, start, end)
    broker = Broker()
    broker.create_topic(TOPIC)
    consumer = broker.subscribe(TOPIC)
    cfg = pipeline.PipelineConfig(model, horizon, window, cal or CalendarContext(), compare=True)
    collected = pipeline.ListSink()
    replay_cfg = ReplayConfig(samples, speedup)
    if speedup is None:
        replay(replay_cfg, broker, TOPIC)
        thread = None
    else:
        thread, outcome = replay_in_background(replay_cfg, broker, TOPIC)
    report, final = pipeline.run(cfg, consumer, [collected, *sinks])
    if thread is not None:
        thread.join()
        if isinstance(outcome[0], BaseException):
            raise outcome[0]
    pairs = pipeline.resolve_ledger(collected.records)
    return ExperimentResult(report, final, collected.records, pairs)

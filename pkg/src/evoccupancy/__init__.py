"""Streaming 15-minute-ahead occupancy forecasts for an EV charging station."""

__version__ = "0.1.0"

from .domain import (
    CalendarContext,
    ChargeSession,
    OccupancySample,
    ValidationError,
    minutes_between,
    sessions_to_labels,
)
from .featurize import encode, encode_range
from .model import ModelState, TrainConfig, fit_batch, predict_proba, update_stream
from .pipeline import ForecastRecord, PipelineConfig, RunReport
from .stream import Broker, ReplayConfig

__all__ = [
    "Broker",
    "CalendarContext",
    "ChargeSession",
    "ForecastRecord",
    "ModelState",
    "OccupancySample",
    "PipelineConfig",
    "ReplayConfig",
    "RunReport",
    "TrainConfig",
    "ValidationError",
    "encode",
    "encode_range",
    "fit_batch",
    "minutes_between",
    "predict_proba",
    "sessions_to_labels",
    "update_stream",
]

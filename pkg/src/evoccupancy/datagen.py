"""Seeded synthetic charge sessions for a single one-vehicle station.

Arrivals are a per-minute Bernoulli thinning of a calendar-shaped intensity::

    P(arrival at minute m) = c_year * hourly_weight[hour(m)] * day_multiplier[type(m)] * shift(m)

``c_year`` is fixed from the *unshifted* intensity so that the expected yearly
count of accepted sessions is close to ``sessions_per_year``; shifts then act
as genuine regime changes on top of that baseline. Every minute also gets a
pre-drawn log-normal duration, so a shift only perturbs the minutes it covers.
Candidates that start while the station is busy are dropped.
"""
from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import ChargeSession, ValidationError, check_no_overlap, format_ts, parse_ts

DAY_TYPES = ("workday", "saturday", "sunday", "festivity")

# Quiet nights, a morning ramp, and a broad 9-18 plateau.
DEFAULT_HOURLY_WEIGHTS = (
    0.10, 0.05, 0.05, 0.05, 0.05, 0.10, 0.25, 0.55,
    0.95, 1.40, 1.50, 1.50, 1.30, 1.30, 1.40, 1.45,
    1.35, 1.20, 1.00, 0.70, 0.50, 0.35, 0.25, 0.15,
)
DEFAULT_DAY_MULTIPLIERS = {"workday": 1.0, "saturday": 0.55, "sunday": 0.25, "festivity": 0.25}
DEFAULT_SIGMA = 0.6
DEFAULT_MEAN_DURATION = 37.0


@dataclass(frozen=True)
class Shift:
    """Arrival multiplier applied to every minute of ``first``..``last`` (inclusive dates)."""

    first: dt.date
    last: dt.date
    multiplier: float

    def __post_init__(self) -> None:
        if self.last < self.first:
            raise ValidationError(f"shift range {self.first}..{self.last} is reversed")
        if not (self.multiplier >= 0 and math.isfinite(self.multiplier)):
            raise ValidationError("shift multiplier must be a finite non-negative number")

    def to_text(self) -> str:
        return f"{self.first.isoformat()}..{self.last.isoformat()}*{self.multiplier!r}"

    @classmethod
    def from_text(cls, text: str) -> "Shift":
        try:
            span, mult = text.split("*")
            first, last = span.split("..")
            return cls(dt.date.fromisoformat(first.strip()), dt.date.fromisoformat(last.strip()), float(mult))
        except ValueError as exc:
            raise ValidationError(f"bad shift {text!r}, expected FIRST..LAST*MULTIPLIER") from exc


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 42
    years: tuple[int, ...] = (2017, 2018, 2019)
    hourly_weights: tuple[float, ...] = DEFAULT_HOURLY_WEIGHTS
    day_multipliers: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_DAY_MULTIPLIERS))
    duration_mu: float = math.log(DEFAULT_MEAN_DURATION) - DEFAULT_SIGMA**2 / 2
    duration_sigma: float = DEFAULT_SIGMA
    min_duration: int = 5
    sessions_per_year: int = 575
    festivities: frozenset[dt.date] = frozenset()
    shifts: tuple[Shift, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        object.__setattr__(self, "hourly_weights", tuple(float(w) for w in self.hourly_weights))
        object.__setattr__(self, "festivities", frozenset(self.festivities))
        object.__setattr__(self, "shifts", tuple(self.shifts))
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in 64 bits")
        if not self.years or len(set(self.years)) != len(self.years):
            raise ValidationError("years must be a non-empty list of distinct years")
        if len(self.hourly_weights) != 24 or min(self.hourly_weights) < 0:
            raise ValidationError("need 24 non-negative hourly weights")
        if max(self.hourly_weights) <= 0:
            raise ValidationError("at least one hourly weight must be positive")
        if set(self.day_multipliers) != set(DAY_TYPES) or min(self.day_multipliers.values()) < 0:
            raise ValidationError(f"day multipliers must be non-negative and cover {DAY_TYPES}")
        if not self.duration_sigma > 0:
            raise ValidationError("duration sigma must be positive")
        if self.min_duration < 1:
            raise ValidationError("minimum duration must be at least one minute")
        if self.sessions_per_year < 1:
            raise ValidationError("sessions_per_year must be at least 1")
        for s in self.shifts:
            if s.first.year not in self.years or s.last.year not in self.years:
                raise ValidationError(f"shift {s.to_text()} lies outside the configured years {self.years}")

    @property
    def expected_duration(self) -> float:
        return math.exp(self.duration_mu + self.duration_sigma**2 / 2)

    def day_type(self, day: dt.date) -> str:
        if day in self.festivities:
            return "festivity"
        return {6: "saturday", 7: "sunday"}.get(day.isoweekday(), "workday")

    def to_text(self) -> str:
        lines = [
            f"seed = {self.seed}",
            f"years = {','.join(map(str, self.years))}",
            f"hourly_weights = {','.join(repr(w) for w in self.hourly_weights)}",
            *(f"mult_{k} = {self.day_multipliers[k]!r}" for k in DAY_TYPES),
            f"duration_mu = {self.duration_mu!r}",
            f"duration_sigma = {self.duration_sigma!r}",
            f"min_duration = {self.min_duration}",
            f"sessions_per_year = {self.sessions_per_year}",
            f"festivities = {','.join(d.isoformat() for d in sorted(self.festivities))}",
            f"shifts = {';'.join(s.to_text() for s in self.shifts)}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "GeneratorConfig":
        """Build from flat ``key -> text`` pairs; missing keys keep their defaults."""
        kw: dict = {}
        mults = dict(DEFAULT_DAY_MULTIPLIERS)
        try:
            for key, raw in values.items():
                val = raw.strip()
                if key == "seed":
                    kw["seed"] = int(val)
                elif key == "years":
                    kw["years"] = tuple(int(v) for v in val.split(","))
                elif key == "hourly_weights":
                    kw["hourly_weights"] = tuple(float(v) for v in val.split(","))
                elif key.startswith("mult_") and key[5:] in DAY_TYPES:
                    mults[key[5:]] = float(val)
                elif key in ("duration_mu", "duration_sigma"):
                    kw[key] = float(val)
                elif key in ("min_duration", "sessions_per_year"):
                    kw[key] = int(val)
                elif key == "festivities":
                    kw["festivities"] = frozenset(dt.date.fromisoformat(v.strip()) for v in val.split(",") if v.strip())
                elif key == "shifts":
                    kw["shifts"] = tuple(Shift.from_text(v) for v in val.split(";") if v.strip())
                else:
                    raise ValidationError(f"unknown generator key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"bad generator config value: {exc}") from exc
        kw["day_multipliers"] = mults
        return cls(**kw)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


@dataclass(frozen=True)
class SyntheticDataset:
    sessions: tuple[ChargeSession, ...]
    config_fingerprint: str

    def sessions_in_year(self, year: int) -> list[ChargeSession]:
        return [s for s in self.sessions if s.start.year == year]

    def to_csv(self) -> str:
        return sessions_to_csv(self.sessions)


def default_config() -> GeneratorConfig:
    return GeneratorConfig()


def with_shift(config: GeneratorConfig, first: dt.date, last: dt.date, multiplier: float) -> GeneratorConfig:
    """Copy of ``config`` with arrivals scaled by ``multiplier`` on ``first``..``last``."""
    return dataclasses.replace(config, shifts=config.shifts + (Shift(first, last, float(multiplier)),))


def _minute_multipliers(config: GeneratorConfig, year: int) -> tuple[np.ndarray, np.ndarray]:
    """Base intensity and shift factor for every minute of ``year``."""
    n_days = (dt.date(year + 1, 1, 1) - dt.date(year, 1, 1)).days
    days = [dt.date(year, 1, 1) + dt.timedelta(days=i) for i in range(n_days)]
    day_mult = np.array([config.day_multipliers[config.day_type(d)] for d in days])
    shift = np.ones(n_days)
    for s in config.shifts:
        for i, d in enumerate(days):
            if s.first <= d <= s.last:
                shift[i] *= s.multiplier
    hourly = np.repeat(np.asarray(config.hourly_weights), 60)
    base = (day_mult[:, None] * hourly[None, :]).ravel()
    return base, np.repeat(shift, 1440)


def generate(config: GeneratorConfig) -> SyntheticDataset:
    rng = np.random.default_rng(config.seed)
    sessions: list[ChargeSession] = []
    busy_until = None
    for year in sorted(config.years):
        base, shift = _minute_multipliers(config, year)
        total = base.sum()
        if total <= 0:
            raise ValidationError(f"arrival intensity is zero for every minute of {year}")
        # Inflate candidates to offset busy-station rejections. Arrivals bunch into busy
        # hours, so the rejection rate runs at roughly twice the mean occupancy.
        occupancy = min(config.sessions_per_year * config.expected_duration / base.size, 0.25)
        scale = config.sessions_per_year / (1.0 - 2.0 * occupancy) / total
        p = np.minimum(scale * base * shift, 1.0)

        u = rng.random(base.size)
        durations = rng.lognormal(config.duration_mu, config.duration_sigma, base.size)
        start = dt.datetime(year, 1, 1)
        for idx in np.flatnonzero(u < p):
            ts = start + dt.timedelta(minutes=int(idx))
            if busy_until is not None and ts < busy_until:
                continue
            dur = max(config.min_duration, int(round(durations[idx])))
            session = ChargeSession(ts, dur)
            sessions.append(session)
            busy_until = session.end
    return SyntheticDataset(tuple(sessions), config.fingerprint())


def sessions_to_csv(sessions: Iterable[ChargeSession]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["start", "duration_minutes"])
    for s in sessions:
        writer.writerow([format_ts(s.start), s.duration_minutes])
    return buf.getvalue()


def sessions_from_csv(text: str) -> list[ChargeSession]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["start", "duration_minutes"]:
        raise ValidationError(f"unexpected dataset header {header}")
    sessions = []
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        try:
            sessions.append(ChargeSession(parse_ts(row[0]), int(row[1])))
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"dataset line {lineno}: {exc}") from exc
    check_no_overlap(sessions)
    return sorted(sessions)


def write_dataset(path: str | Path, sessions: Sequence[ChargeSession]) -> None:
    Path(path).write_text(sessions_to_csv(sessions))


def read_dataset(path: str | Path) -> list[ChargeSession]:
    return sessions_from_csv(Path(path).read_text())

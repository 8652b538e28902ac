"""Minute-grid time handling and the core value types.

Instants are naive ``datetime`` objects truncated to the minute. There is no
time zone and no DST: every civil minute exists exactly once.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

ONE_MINUTE = dt.timedelta(minutes=1)
TS_FORMAT = "%Y-%m-%dT%H:%M"


class ValidationError(ValueError):
    """Input data violates a structural invariant (ordering, overlap, range)."""


def minute_instant(year: int, month: int, day: int, hour: int = 0, minute: int = 0) -> dt.datetime:
    return dt.datetime(year, month, day, hour, minute)


def check_instant(ts: dt.datetime) -> dt.datetime:
    if ts.tzinfo is not None:
        raise ValidationError(f"{ts!r}: instants must be naive local time")
    if ts.second or ts.microsecond:
        raise ValidationError(f"{ts!r}: instants must lie on the minute grid")
    return ts


def minutes_between(a: dt.datetime, b: dt.datetime) -> int:
    """Signed whole minutes from ``a`` to ``b``."""
    delta = b - a
    return delta.days * 1440 + delta.seconds // 60


def minute_of_day(ts: dt.datetime) -> int:
    return ts.hour * 60 + ts.minute


def day_of_week(ts: dt.datetime | dt.date) -> int:
    """ISO day of week, Monday=1 .. Sunday=7."""
    return ts.isoweekday()


def minute_index(ts: dt.datetime, epoch: dt.datetime) -> int:
    return minutes_between(epoch, ts)


def from_minute_index(index: int, epoch: dt.datetime) -> dt.datetime:
    return epoch + dt.timedelta(minutes=index)


def format_ts(ts: dt.datetime) -> str:
    return ts.strftime(TS_FORMAT)


def parse_ts(text: str) -> dt.datetime:
    try:
        return dt.datetime.strptime(text.strip(), TS_FORMAT)
    except ValueError as exc:
        raise ValidationError(f"bad timestamp {text!r}, expected YYYY-MM-DDTHH:MM") from exc


def year_span(year: int, inclusive: bool = True) -> tuple[dt.datetime, dt.datetime]:
    """Half-open ``[start, end)`` covering a calendar year.

    With ``inclusive`` the span also holds the first minute of the next year,
    giving 525,601 minutes for a non-leap year.
    """
    start = dt.datetime(year, 1, 1)
    end = dt.datetime(year + 1, 1, 1)
    if inclusive:
        end += ONE_MINUTE
    return start, end


@dataclass(frozen=True, order=True)
class ChargeSession:
    start: dt.datetime
    duration_minutes: int

    def __post_init__(self) -> None:
        check_instant(self.start)
        if int(self.duration_minutes) != self.duration_minutes or self.duration_minutes < 1:
            raise ValidationError(f"session at {format_ts(self.start)}: duration must be a positive integer")

    @property
    def end(self) -> dt.datetime:
        """First minute after the session (exclusive)."""
        return self.start + dt.timedelta(minutes=self.duration_minutes)

    def covers(self, ts: dt.datetime) -> bool:
        return self.start <= ts < self.end


class OccupancySample(NamedTuple):
    ts: dt.datetime
    occupied: int


@dataclass(frozen=True)
class CalendarContext:
    """Festivity dates; Saturday and Sunday are always weekend days."""

    festivities: frozenset[dt.date] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "festivities", frozenset(self.festivities))

    def is_festivity(self, day: dt.date) -> bool:
        return day in self.festivities

    @classmethod
    def from_file(cls, path: str | Path) -> "CalendarContext":
        """One ISO date per line; ``#`` starts a comment."""
        days = set()
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                day = dt.date.fromisoformat(line)
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: bad date {line!r}") from exc
            if day in days:
                raise ValidationError(f"{path}:{lineno}: duplicate date {line}")
            days.add(day)
        return cls(frozenset(days))

    def to_text(self) -> str:
        return "".join(f"{d.isoformat()}\n" for d in sorted(self.festivities))


def check_no_overlap(sessions: Sequence[ChargeSession]) -> None:
    """Raise if any two sessions share a minute. ``sessions`` may be unsorted."""
    ordered = sorted(sessions)
    for prev, nxt in zip(ordered, ordered[1:]):
        if nxt.start < prev.end:
            raise ValidationError(
                f"overlapping sessions: {format_ts(prev.start)}+{prev.duration_minutes}min "
                f"and {format_ts(nxt.start)}+{nxt.duration_minutes}min"
            )


def occupancy_array(sessions: Iterable[ChargeSession], start: dt.datetime, end: dt.datetime) -> np.ndarray:
    """0/1 int8 array, one entry per minute in ``[start, end)``."""
    sessions = list(sessions)
    check_no_overlap(sessions)
    n = minutes_between(start, end)
    if n <= 0:
        raise ValidationError("empty label range")
    out = np.zeros(n, dtype=np.int8)
    for s in sessions:
        lo = max(minutes_between(start, s.start), 0)
        hi = min(minutes_between(start, s.end), n)
        if lo < hi:
            out[lo:hi] = 1
    return out


def sessions_to_labels(
    sessions: Iterable[ChargeSession], start: dt.datetime, end: dt.datetime
) -> list[OccupancySample]:
    labels = occupancy_array(sessions, start, end)
    return [OccupancySample(start + dt.timedelta(minutes=i), int(v)) for i, v in enumerate(labels)]

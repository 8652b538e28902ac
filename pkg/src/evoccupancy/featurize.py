"""Calendar encoding of a minute into the 13-dimensional model input.

Layout::

    [hour_sin, hour_cos, month_sin, month_cos, is_business_day, is_working_day,
     dow_mon, dow_tue, dow_wed, dow_thu, dow_fri, dow_sat, dow_sun]

Hour phase comes from the minute of day (period 1440), so the encoding is
smooth inside an hour and continuous across midnight. January sits at angle 0.
"""
from __future__ import annotations

import datetime as dt
import math

import numpy as np

from .domain import CalendarContext, minutes_between

FEATURE_NAMES = (
    "hour_sin", "hour_cos", "month_sin", "month_cos",
    "is_business_day", "is_working_day",
    "dow_mon", "dow_tue", "dow_wed", "dow_thu", "dow_fri", "dow_sat", "dow_sun",
)
N_FEATURES = len(FEATURE_NAMES)

# Both encoders read these tables so scalar and vectorised paths agree bit for bit.
_HOUR_TABLE = np.array(
    [(math.sin(2 * math.pi * m / 1440), math.cos(2 * math.pi * m / 1440)) for m in range(1440)]
)
_MONTH_TABLE = np.array(
    [(math.sin(2 * math.pi * k / 12), math.cos(2 * math.pi * k / 12)) for k in range(12)]
)
_HOUR_TABLE.setflags(write=False)
_MONTH_TABLE.setflags(write=False)


def encode_hour(minute_of_day: int) -> tuple[float, float]:
    if not 0 <= minute_of_day <= 1439:
        raise ValueError(f"minute of day out of range: {minute_of_day}")
    s, c = _HOUR_TABLE[minute_of_day]
    return float(s), float(c)


def encode_month(month: int) -> tuple[float, float]:
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range: {month}")
    s, c = _MONTH_TABLE[month - 1]
    return float(s), float(c)


def encode(ts: dt.datetime, cal: CalendarContext | None = None) -> np.ndarray:
    """Feature vector for one minute."""
    x = np.zeros(N_FEATURES)
    x[0:2] = encode_hour(ts.hour * 60 + ts.minute)
    x[2:4] = encode_month(ts.month)
    dow = ts.isoweekday()
    business = dow <= 5
    x[4] = business
    x[5] = business and not (cal is not None and ts.date() in cal.festivities)
    x[5 + dow] = 1.0
    return x


def encode_range(start: dt.datetime, end: dt.datetime, cal: CalendarContext | None = None) -> np.ndarray:
    """Feature matrix (n_minutes x 13) for every minute in ``[start, end)``."""
    n = minutes_between(start, end)
    if n <= 0:
        raise ValueError("empty range")
    # Per-day calendar columns, then broadcast over minutes.
    first_day = start.date()
    n_days = (end - dt.datetime.combine(first_day, dt.time())).days + 1
    days = [first_day + dt.timedelta(days=i) for i in range(n_days)]
    day_cols = np.zeros((n_days, N_FEATURES - 2))
    for i, day in enumerate(days):
        dow = day.isoweekday()
        business = dow <= 5
        day_cols[i, 0:2] = _MONTH_TABLE[day.month - 1]
        day_cols[i, 2] = business
        day_cols[i, 3] = business and not (cal is not None and day in cal.festivities)
        day_cols[i, 3 + dow] = 1.0

    offset = start.hour * 60 + start.minute
    abs_minute = np.arange(offset, offset + n)
    X = np.empty((n, N_FEATURES))
    X[:, 0:2] = _HOUR_TABLE[abs_minute % 1440]
    X[:, 2:] = day_cols[abs_minute // 1440]
    return X

import collections
import dataclasses
import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoccupancy import datagen
from evoccupancy.datagen import GeneratorConfig, Shift, default_config, generate, with_shift
from evoccupancy.domain import ValidationError, check_no_overlap

TARGET_SESSIONS = 1724


def one_year(seed=0, **kw):
    return dataclasses.replace(default_config(), seed=seed, years=(2019,), **kw)


def test_deterministic_bytes():
    a = generate(default_config()).to_csv()
    b = generate(default_config()).to_csv()
    assert a == b


def test_corpus_scale(default_dataset):
    n = len(default_dataset.sessions)
    assert abs(n - TARGET_SESSIONS) <= 0.10 * TARGET_SESSIONS


def test_duration_shape(default_dataset):
    d = np.array([s.duration_minutes for s in default_dataset.sessions])
    assert 35 <= d.mean() <= 40
    assert (d < 60).mean() > 0.5
    assert d.min() >= 5


def test_default_config_shape():
    cfg = default_config()
    m = cfg.day_multipliers
    assert m["workday"] > m["saturday"] > m["sunday"]
    assert cfg.expected_duration == pytest.approx(37, abs=0.5)
    assert cfg.duration_sigma == 0.6
    assert cfg.duration_mu == pytest.approx(math.log(37) - 0.18)
    w = cfg.hourly_weights
    assert sum(w[9:19]) > sum(w[:9]) + sum(w[19:])


def test_sorted_and_non_overlapping(default_dataset):
    s = default_dataset.sessions
    assert list(s) == sorted(s)
    check_no_overlap(s)
    assert all(a.end <= b.start for a, b in zip(s, s[1:]))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(50, 5000))
def test_no_overlap_any_seed(seed, per_year):
    ds = generate(one_year(seed, sessions_per_year=per_year))
    check_no_overlap(ds.sessions)


def test_zero_shift_empties_june():
    cfg = with_shift(one_year(3), dt.date(2019, 6, 1), dt.date(2019, 6, 30), 0.0)
    ds = generate(cfg)
    assert not [s for s in ds.sessions if s.start.month == 6]
    assert [s for s in generate(one_year(3)).sessions if s.start.month == 6]


def test_unit_shift_is_identity():
    base = one_year(4)
    shifted = with_shift(base, dt.date(2019, 3, 1), dt.date(2019, 5, 1), 1.0)
    assert generate(shifted).sessions == generate(base).sessions
    assert shifted.fingerprint() != base.fingerprint()


@pytest.mark.parametrize("seed", range(5))
def test_surge_raises_week_count(seed):
    first, last = dt.date(2019, 4, 8), dt.date(2019, 4, 14)

    def week_count(cfg):
        return sum(first <= s.start.date() <= last for s in generate(cfg).sessions)

    assert week_count(with_shift(one_year(seed), first, last, 5.0)) > week_count(one_year(seed))


def test_shift_outside_years_rejected():
    with pytest.raises(ValidationError):
        with_shift(one_year(), dt.date(2018, 12, 1), dt.date(2019, 1, 5), 2.0)
    with pytest.raises(ValidationError):
        Shift(dt.date(2019, 2, 1), dt.date(2019, 1, 1), 1.0)
    with pytest.raises(ValidationError):
        Shift(dt.date(2019, 1, 1), dt.date(2019, 1, 2), -1.0)


def test_zero_intensity_rejected():
    with pytest.raises(ValidationError):
        GeneratorConfig(hourly_weights=(0.0,) * 24)
    zero_days = dict.fromkeys(datagen.DAY_TYPES, 0.0)
    with pytest.raises(ValidationError, match="zero"):
        generate(one_year(day_multipliers=zero_days))


@pytest.mark.parametrize("kw", [
    {"duration_sigma": 0.0}, {"sessions_per_year": 0}, {"hourly_weights": (1.0,) * 23},
    {"years": ()}, {"seed": -1},
])
def test_invalid_configs(kw):
    with pytest.raises(ValidationError):
        dataclasses.replace(default_config(), **kw)


def test_raising_saturday_multiplier_is_monotone():
    """Sign test over 20 seeds: more Saturday intensity, more Saturday sessions."""
    ups = downs = 0
    for seed in range(20):
        lo = one_year(seed)
        hi = one_year(seed, day_multipliers={**lo.day_multipliers, "saturday": 1.2})
        n_lo = sum(s.start.isoweekday() == 6 for s in generate(lo).sessions)
        n_hi = sum(s.start.isoweekday() == 6 for s in generate(hi).sessions)
        ups += n_hi > n_lo
        downs += n_hi < n_lo
    # P(>= 15 of 20 | fair coin) < 0.021
    assert ups >= 15 and downs <= 5


def test_weekly_profile(default_dataset):
    counts = collections.Counter(s.start.isoweekday() for s in default_dataset.sessions)
    workday = sum(counts[d] for d in range(1, 6)) / 5
    assert workday > counts[6] > counts[7]


def test_festivity_multiplier_applies():
    fest = frozenset(dt.date(2019, 1, 1) + dt.timedelta(days=i) for i in range(0, 365, 2))
    quiet = one_year(5, festivities=fest, day_multipliers={**default_config().day_multipliers, "festivity": 0.0})
    assert not [s for s in generate(quiet).sessions if s.start.date() in fest]


def test_config_text_round_trip():
    cfg = with_shift(
        dataclasses.replace(default_config(), festivities=frozenset({dt.date(2019, 1, 1)})),
        dt.date(2019, 6, 3), dt.date(2019, 7, 28), 4.0,
    )
    pairs = dict(line.split(" = ", 1) for line in cfg.to_text().splitlines())
    back = GeneratorConfig.from_mapping(pairs)
    assert back == cfg and back.fingerprint() == cfg.fingerprint()
    with pytest.raises(ValidationError):
        GeneratorConfig.from_mapping({"colour": "blue"})
    with pytest.raises(ValidationError):
        GeneratorConfig.from_mapping({"seed": "many"})


def test_csv_round_trip(default_dataset, tmp_path):
    path = tmp_path / "ds.csv"
    datagen.write_dataset(path, default_dataset.sessions)
    assert path.read_text().splitlines()[0] == "start,duration_minutes"
    assert tuple(datagen.read_dataset(path)) == default_dataset.sessions


def test_csv_rejects_overlap_and_bad_header():
    with pytest.raises(ValidationError, match="overlapping"):
        datagen.sessions_from_csv("start,duration_minutes\n2019-01-01T10:00,30\n2019-01-01T10:10,5\n")
    with pytest.raises(ValidationError, match="header"):
        datagen.sessions_from_csv("begin,len\n")

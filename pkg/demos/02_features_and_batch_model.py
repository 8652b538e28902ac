"""
Calendar features and the batch model
=====================================

Each minute becomes 13 numbers: hour and month on the unit circle, three
calendar flags and a one-hot day of week. A logistic regression fitted on a
whole year of minutes is the frozen baseline.
"""
import datetime as dt
import time

import numpy as np

from evoccupancy import datagen, featurize
from evoccupancy.domain import CalendarContext
from evoccupancy.experiment import select_training_year, training_data
from evoccupancy.model import TrainConfig, fit_batch, load, predict_many, predict_proba, save

# One minute, with New Year's Day marked as a festivity.
cal = CalendarContext(frozenset({dt.date(2019, 1, 1)}))
x = featurize.encode(dt.datetime(2019, 1, 1, 12, 30), cal)
for name, value in zip(featurize.FEATURE_NAMES, x):
    print(f"{name:>14} {value: .4f}")

# A whole year at once; the rows match encode() exactly.
ds = datagen.generate(datagen.default_config())
year = select_training_year(ds.sessions)
X, y = training_data(ds.sessions, year)
print(f"\ntraining year {year}: {X.shape[0]} minutes, {y.mean():.2%} occupied")

history = []
t0 = time.perf_counter()
model = fit_batch(X, y, TrainConfig(), loss_history=history)
print(f"200 epochs in {time.perf_counter() - t0:.1f}s, loss {history[0]:.4f} -> {history[-1]:.4f}")

# What the model learned: busy at midday on workdays, quiet at night and on Sundays.
monday = featurize.encode_range(dt.datetime(2019, 3, 4), dt.datetime(2019, 3, 5))
sunday = featurize.encode_range(dt.datetime(2019, 3, 10), dt.datetime(2019, 3, 11))
for label, day in (("Monday", monday), ("Sunday", sunday)):
    hourly = predict_many(model, day).reshape(24, 60).mean(axis=1)
    print(f"{label:>7}", " ".join(f"{p:.2f}" for p in hourly[::2]))

# Model files are small and round-trip bit for bit.
raw = save(model)
back = load(raw)
print(f"\nmodel file {len(raw)} bytes; reloaded prediction {predict_proba(back, x):.6f}"
      f" vs {predict_proba(model, x):.6f}")
assert np.array_equal(back.weights, model.weights)

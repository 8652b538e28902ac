"""
Streaming updates against a frozen model
========================================

Train on 2018, then replay 2019 minute by minute. Every 15 minutes the
streaming model takes one gradient step on the labels it has just seen. Its
forecast for 15 minutes ahead sits next to the frozen model's forecast in the
ledger. In this scenario 2019 has a four-fold surge in June and July.

Pass a seed as the first argument to try another dataset.
"""
import dataclasses
import datetime as dt
import sys

import numpy as np

from evoccupancy import datagen
from evoccupancy.domain import year_span
from evoccupancy.experiment import replay_and_forecast, train

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = dataclasses.replace(datagen.default_config(), seed=seed, years=(2018, 2019))
cfg = datagen.with_shift(cfg, dt.date(2019, 6, 3), dt.date(2019, 7, 28), 4.0)
sessions = datagen.generate(cfg).sessions

model = train(sessions, 2018)
result = replay_and_forecast(sessions, model, *year_span(2019, inclusive=True))
r = result.report
print(f"{r.events} events, {r.issued} forecasts, {r.resolved} resolved, "
      f"{r.updates} updates in {r.wall_seconds:.1f}s")

# Monthly mean forecast against the realised occupancy rate.
print("\nmonth   actual  streaming  batch")
for month in range(1, 13):
    rows = [x for x in result.records if x.target.month == month and x.actual is not None]
    actual = np.mean([x.actual for x in rows])
    ps = np.mean([x.prob_streaming for x in rows])
    pb = np.mean([x.prob_batch for x in rows])
    print(f"{month:>5} {actual:8.3f} {ps:10.3f} {pb:6.3f}")

comparison = result.compare()
print()
print(comparison.summary())
print(comparison.to_csv())

"""
Synthetic charging sessions
===========================

Generate three years of sessions for a single station, look at their shape,
then add a temporary surge and see where the extra sessions land.
"""
import collections
import dataclasses
import datetime as dt

import numpy as np

from evoccupancy import datagen

cfg = datagen.default_config()
ds = datagen.generate(cfg)
print(f"{len(ds.sessions)} sessions, config fingerprint {ds.config_fingerprint[:12]}")
for year in cfg.years:
    print(f"  {year}: {len(ds.sessions_in_year(year))}")

# Durations are log-normal with a floor of five minutes.
d = np.array([s.duration_minutes for s in ds.sessions])
print(f"duration mean {d.mean():.1f} min, median {np.median(d):.0f}, share under an hour {(d < 60).mean():.0%}")

# Arrivals follow office hours and thin out at the weekend.
by_hour = collections.Counter(s.start.hour for s in ds.sessions)
print("starts per hour:", " ".join(f"{h}:{by_hour[h]}" for h in range(24)))
by_day = collections.Counter(s.start.strftime("%a") for s in ds.sessions)
print("starts per weekday:", dict(by_day))

# A surge: four times the arrival rate for eight weeks of 2019.
surge = datagen.with_shift(dataclasses.replace(cfg, years=(2018, 2019)),
                           dt.date(2019, 6, 3), dt.date(2019, 7, 28), 4.0)
shifted = datagen.generate(surge)
months = collections.Counter(s.start.strftime("%Y-%m") for s in shifted.sessions)
print("sessions per month with the surge:")
for month in sorted(months):
    print(f"  {month} {'#' * (months[month] // 4)} {months[month]}")

# The CSV form is what the command line works with.
print(ds.to_csv().splitlines()[:3])

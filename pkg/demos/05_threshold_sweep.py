"""
Threshold sweep
===============

Probabilities become occupied/free calls with a strict "greater than"
threshold. Precision, recall and F1 are reported across a grid. A metric with
a zero denominator is reported as undefined rather than zero.
"""
import datetime as dt

from evoccupancy import datagen, evaluation
from evoccupancy.experiment import replay_and_forecast, select_training_year, train

print(evaluation.classify(0.5, 0.5), evaluation.classify(0.51, 0.5))
print(evaluation.metrics(evaluation.ConfusionCounts(tp=2, fp=1, fn=2)))
print(evaluation.metrics(evaluation.ConfusionCounts(tn=10, fn=3)))

ds = datagen.generate(datagen.default_config())
year = select_training_year(ds.sessions)
model = train(ds.sessions, year)
start = dt.datetime(2018, 3, 5)
result = replay_and_forecast(ds.sessions, model, start, start + dt.timedelta(weeks=8))

# The default grid, then a finer one over the whole range.
comparison = result.compare()
print(comparison.summary())
for row in comparison.rows:
    s, b = row.streaming, row.batch
    fmt = lambda v: "  NA " if v is None else f"{v:.3f}"
    print(f"tau={row.threshold:.2f}  streaming p={fmt(s.precision)} r={fmt(s.recall)} F1={fmt(s.f1)}"
          f"   batch p={fmt(b.precision)} r={fmt(b.recall)} F1={fmt(b.f1)}")

fine = evaluation.sweep(result.pairs.streaming, [i / 20 for i in range(1, 20)])
best = evaluation.best_threshold(fine)
print(f"\nbest streaming threshold on a 0.05 grid: {best.threshold:.2f} (F1 {best.f1:.3f})")
print(evaluation.pr_curve_csv(fine))

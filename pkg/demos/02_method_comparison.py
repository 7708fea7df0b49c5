"""
Coverage across scenarios and methods
=====================================

Runs the four methods on the bundled scenarios over a handful of seeds and
prints mean coverage, then the per-window invalid rate of the full engine with
and without feedback.
"""

import numpy as np

from trajhyp import bundled, run_method

SEEDS = range(1, 4)
METHODS = ("cot", "giot", "tot", "trace")

scenarios = bundled()
table = np.zeros((len(scenarios), len(METHODS)))
for i, sc in enumerate(scenarios):
    for j, method in enumerate(METHODS):
        table[i, j] = np.mean([run_method(sc, method, sc.config(seed=s)).coverage for s in SEEDS])

print("scenario " + "".join(f"{m:>8}" for m in METHODS))
for sc, row in zip(scenarios, table):
    print(f"{sc.id:<9}" + "".join(f"{100 * v:7.1f}%" for v in row))

# feedback: rejection notes make the generator stop proposing impossible moves
sc = scenarios[0]
for feedback in (True, False):
    rates = np.mean([run_method(sc, "trace", sc.config(seed=s, feedback_enabled=feedback))
                     .per_window_invalid_rate for s in SEEDS], axis=0)
    label = "feedback on " if feedback else "feedback off"
    print(f"{sc.id} {label}: " + " ".join(f"{r:.3f}" for r in rates))

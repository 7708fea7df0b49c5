"""
A right-turn decision point
===========================

The target sits just before a junction (scenario T5). Both going straight and
turning right are legal. A greedy rollout commits to the generator's favourite
and loses the other mode; the tree search with the critic keeps both.
"""

import numpy as np

from trajhyp import enumerate_gamma_star, resolve, run_method
from trajhyp.core import Observation

sc = resolve("t5")
print(sc.env.to_text())

# the ground truth for the first window: every feasible 4-step path from the anchor
a = sc.target_anchor
star = enumerate_gamma_star(a, sc.env, [Observation(0, a.x, a.y, 0)], depth=4)
modes = np.array([[sc.ends_in("straight", t), sc.ends_in("turn", t)] for t in star])
print(f"{len(star)} feasible paths, {modes[:, 0].sum()} straight-through, {modes[:, 1].sum()} turning")

for method in ("cot", "tot", "trace"):
    report = run_method(sc, method, sc.config(seed=1))
    first = report.windows[0].hypotheses
    straight = sum(sc.ends_in("straight", t) for t in first)
    turn = sum(sc.ends_in("turn", t) for t in first)
    print(f"{method:>5}: {len(first):4d} paths in window 1 "
          f"(straight {straight}, turn {turn}), pooled coverage {report.coverage:.3f}")

# the single CoT path, step by step
cot = run_method(sc, "cot", sc.config(seed=1)).windows[0].hypotheses
for s in cot[0].states:
    print("  ", s)

"""
Counterfactual critic on a small map
====================================

The critic perturbs an accepted path with small offsets per step, keeps the
variants that stay feasible and consistent, and ranks them by how far they
diverge from the original.
"""

from trajhyp import parse_map
from trajhyp.core import AgentState, RunConfig, Trajectory
from trajhyp.critic import ProposalWeights, explore, offsets_between

env, _ = parse_map("""7 7
.......
..#....
..#..x.
.......
.#.....
.....#.
.......
""")

# straight east at speed 1 for two steps
base = Trajectory(0, (AgentState(0, 3, 0, 1), AgentState(1, 3, 0, 1), AgentState(2, 3, 0, 1)))
# no measurement constrains this stretch
obs = None

cfg = RunConfig(critic_samples=64, critic_keep=5, seed=7)
for cf in explore(base, env, obs, cfg, ProposalWeights.uniform(2)):
    print(offsets_between(base, cf).deltas, "->", cf.states[-1])

# exhaustive mode tries every offset sequence instead of sampling
everything = explore(base, env, obs, cfg.replace(critic_samples=10**6, critic_keep=10**6), ProposalWeights.uniform(2),
                     exhaustive=True)
print(len(everything), "counterfactuals survive in total")

"""The iterative hypothesis loop.

One measurement window runs ``cfg.iterations`` cycles of

1. ``expand_tree``: breadth-first generator expansion to ``cfg.depth``;
   feasible candidates become ``proposed`` nodes, the rest are kept as
   ``implausible`` leaves and turned into rejection notes;
2. ``enrich_with_counterfactuals``: the critic perturbs every generator path
   it has not seen yet this window and grafts the survivors as ``edge_case``
   nodes, recording their offsets as motifs;
3. ``integrate_feedback``: notes and motifs stay in the generator context
   (or are dropped in ablation mode) and the critic's proposal is refit.

``on_new_observation`` then prunes inconsistent branches and moves the
anchor to the new measurement. The tree itself persists across the cycles of
a window, so the hypothesis set only grows until the next observation.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (AgentState, Observation, RunConfig, Trajectory, TrajectoryTree, chebyshev,
                   consistent_with, heading_diff)
from .critic import ProposalWeights, adapt_proposal, explore, offsets_between
from .generators import GeneratorContext, OffsetMotif, RejectionNote
from .world_model import EnvMap, is_feasible, successors, violation

log = logging.getLogger(__name__)


@dataclass
class WindowMetrics:
    window: int
    anchor: AgentState
    start_time: int
    valid_count: int
    invalid_count: int
    distinct_vlm_valid_count: int
    hypotheses: frozenset = field(repr=False, default=frozenset())

    @property
    def invalid_rate(self) -> float:
        total = self.valid_count + self.invalid_count
        return self.invalid_count / total if total else 0.0


@dataclass
class EngineState:
    tree: TrajectoryTree
    ctx: GeneratorContext
    proposal: ProposalWeights
    hypotheses: set
    anchor: AgentState
    observations: list  # observations received in the current window
    iteration: int = 0
    window: int = 0
    # per-window bookkeeping
    valid_count: int = 0
    invalid_count: int = 0
    vlm_paths: set = field(default_factory=set)
    explored: set = field(default_factory=set)
    accepted: list = field(default_factory=list)

    @property
    def start_time(self) -> int:
        return self.tree.start_time


def initial_state(env: EnvMap, anchor: AgentState, obs: Observation, cfg: RunConfig) -> EngineState:
    ctx = GeneratorContext(env=env, anchor=anchor, last_obs=obs)
    return EngineState(tree=TrajectoryTree(anchor, obs.time), ctx=ctx,
                       proposal=ProposalWeights.uniform(cfg.depth), hypotheses=set(),
                       anchor=anchor, observations=[obs])


def observation_violation(state: EngineState, candidate: AgentState, time: int) -> bool:
    for obs in state.observations:
        if obs.time == time and chebyshev(candidate.x, candidate.y, obs.measured_x,
                                          obs.measured_y) > obs.noise_radius:
            return True
    return False


def check_sound(state: EngineState, env: EnvMap, depth: int) -> None:
    """Every hypothesis is feasible and consistent with the window's observations."""
    for traj in state.hypotheses:
        assert len(traj) == depth + 1, "hypothesis has the wrong length"
        for a, b in traj.transitions():
            assert is_feasible(a, b, env), f"infeasible transition {a} -> {b}"
        for obs in state.observations:
            assert consistent_with(traj, obs), f"hypothesis contradicts {obs}"
    state.tree.check_well_formed(depth)


def _generator_paths(tree: TrajectoryTree, edges: dict, depth: int) -> set:
    out = set()
    stack = [0]
    while stack:
        nid = stack.pop()
        if tree.nodes[nid].depth == depth:
            out.add(tree.path(nid))
            continue
        stack.extend(edges.get(nid, ()))
    return out


def expand_tree(state: EngineState, generator, env: EnvMap, obs: Optional[Observation],
                cfg: RunConfig) -> EngineState:
    tree = state.tree
    if tree.root != state.anchor:
        raise ValueError("tree root must be the current anchor")
    ctx = state.ctx
    edges: dict = {}
    notes = []
    frontier = [0]
    for depth in range(cfg.depth):
        time = tree.start_time + depth + 1
        nxt = []
        for nid in frontier:
            parent = tree.nodes[nid].state
            for cand in generator.propose(ctx, parent, cfg.branching):
                kind = violation(parent, cand, env)
                if kind is None and observation_violation(state, cand, time):
                    kind = "observation"
                if kind is None:
                    cid, _ = tree.add_child(nid, cand, "proposed")
                    state.valid_count += 1
                    edges.setdefault(nid, []).append(cid)
                    if cid not in nxt:
                        nxt.append(cid)
                else:
                    tree.add_child(nid, cand, "implausible")
                    state.invalid_count += 1
                    notes.append(RejectionNote(kind, depth + 1,
                                               heading_diff(cand.heading, parent.heading),
                                               cand.speed - parent.speed))
        frontier = nxt
    state.vlm_paths |= _generator_paths(tree, edges, cfg.depth)
    state.ctx = dataclasses.replace(ctx, rejection_notes=ctx.rejection_notes + tuple(notes))
    state.hypotheses = tree.leaf_paths(cfg.depth)
    check_sound(state, env, cfg.depth)
    return state


def _path_seed(cfg: RunConfig, iteration: int, traj: Trajectory) -> list:
    flat = [v for s in traj.states for v in s]
    return [cfg.seed % 2**63, iteration, traj.start_time] + flat


def enrich_with_counterfactuals(state: EngineState, env: EnvMap, obs: Optional[Observation],
                                cfg: RunConfig) -> EngineState:
    if cfg.critic_samples == 0:
        return state
    tree = state.tree
    motifs = []
    todo = sorted((p for p in state.vlm_paths if p not in state.explored), key=Trajectory.sort_key)
    for baseline in todo:
        state.explored.add(baseline)
        rng = np.random.default_rng(_path_seed(cfg, state.iteration, baseline))
        for cf in explore(baseline, env, obs, cfg, state.proposal, rng=rng):
            if cf in state.hypotheses:
                continue
            tree.graft(cf.states, "edge_case")
            state.hypotheses.add(cf)
            offsets = offsets_between(baseline, cf)
            state.accepted.append(offsets)
            motifs.append(OffsetMotif(offsets.deltas, "critic"))
    if motifs:
        state.ctx = dataclasses.replace(state.ctx,
                                        accepted_motifs=state.ctx.accepted_motifs + tuple(motifs))
    check_sound(state, env, cfg.depth)
    return state


def integrate_feedback(state: EngineState, cfg: RunConfig) -> EngineState:
    for node in state.tree.nodes.values():
        if node.tag == "proposed":
            node.tag = "feasible"
    if cfg.feedback_enabled:
        state.proposal = adapt_proposal(state.proposal, state.accepted)
        ctx = state.ctx
    else:
        ctx = dataclasses.replace(state.ctx, accepted_motifs=(), rejection_notes=())
    state.accepted = []
    state.iteration += 1
    state.ctx = dataclasses.replace(ctx, iteration=ctx.iteration + 1)
    return state


def snap_to_navigable(env: EnvMap, x: int, y: int) -> tuple:
    if env.navigable(x, y):
        return x, y
    best = None
    for cy in range(env.height):
        for cx in range(env.width):
            if env.navigable(cx, cy):
                key = (chebyshev(cx, cy, x, y), cy, cx)
                if best is None or key < best:
                    best = key
    if best is None:
        raise ValueError("map has no navigable cell")
    return best[2], best[1]


def _settled(anchor: AgentState, env: EnvMap) -> bool:
    lane = env.lane_direction(anchor.x, anchor.y)
    if lane is not None and abs(heading_diff(anchor.heading, lane)) > env.rules.lane_tolerance:
        return False
    return bool(successors(anchor, env))


def reanchor(survivors, obs: Observation, previous: AgentState, env: EnvMap) -> AgentState:
    """Anchor for the next window.

    The position is the measured cell (snapped to the nearest navigable
    cell). Heading and speed are voted on by the surviving branches: states
    at the observation time are grouped by distance to the measurement, and
    within the nearest group the most common ``(heading, speed)`` wins. The
    first pair that obeys the lane rule at the cell and leaves a feasible
    successor is used. With no usable survivor the previous heading is kept
    at rest, turned onto the lane direction if the cell forbids it.
    """
    mx, my = snap_to_navigable(env, obs.measured_x, obs.measured_y)
    votes: dict = {}
    for traj in survivors:
        s = traj.state_at(obs.time)
        if s is None:
            s = traj.states[-1]
        key = (s.heading, s.speed)
        dist = chebyshev(s.x, s.y, mx, my)
        best = votes.get(key)
        if best is None or dist < best[0]:
            votes[key] = [dist, 1]
        elif dist == best[0]:
            best[1] += 1
    ranked = sorted(votes.items(), key=lambda kv: (kv[1][0], -kv[1][1], kv[0]))
    for (heading, speed), _ in ranked:
        anchor = AgentState(mx, my, heading, speed)
        if _settled(anchor, env):
            return anchor
        anchor = anchor._replace(speed=0)
        if _settled(anchor, env):
            return anchor
    anchor = AgentState(mx, my, previous.heading, 0)
    lane = env.lane_direction(mx, my)
    if lane is not None and not _settled(anchor, env):
        anchor = anchor._replace(heading=lane)
    return anchor


def on_new_observation(state: EngineState, obs: Observation, env: EnvMap, cfg: RunConfig) -> EngineState:
    tree = state.tree
    d = obs.time - tree.start_time
    if 0 <= d <= cfg.depth:
        at_depth = [n for n in tree.nodes.values() if n.depth == d and tree.live(n.id)]
        for node in at_depth:
            s = node.state
            if chebyshev(s.x, s.y, obs.measured_x, obs.measured_y) > obs.noise_radius:
                for nid in tree.subtree(node.id):
                    tree.nodes[nid].tag = "pruned"
        # ancestors left without a consistent descendant
        for depth in range(d - 1, 0, -1):
            for node in tree.nodes.values():
                if node.depth == depth and tree.live(node.id):
                    kids = [c for c in tree.children(node.id) if tree.live(c)]
                    if not kids:
                        node.tag = "pruned"
    before = len(state.hypotheses)
    state.hypotheses = {t for t in state.hypotheses if consistent_with(t, obs)}
    assert len(state.hypotheses) <= before
    state.anchor = reanchor(state.hypotheses, obs, state.anchor, env)
    state.window += 1
    state.observations = [obs]
    return state


def start_window(state: EngineState, env: EnvMap) -> EngineState:
    obs = state.observations[-1]
    state.tree = TrajectoryTree(state.anchor, obs.time)
    state.hypotheses = set()
    state.ctx = dataclasses.replace(state.ctx, anchor=state.anchor, last_obs=obs)
    state.valid_count = state.invalid_count = 0
    state.vlm_paths = set()
    state.explored = set()
    state.accepted = []
    return state


def run_window(state: EngineState, generator, env: EnvMap, cfg: RunConfig):
    """Run one measurement window; returns ``(state, WindowMetrics)``."""
    state = start_window(state, env)
    obs = state.observations[-1]
    for _ in range(cfg.iterations):
        expand_tree(state, generator, env, obs, cfg)
        enrich_with_counterfactuals(state, env, obs, cfg)
        integrate_feedback(state, cfg)
    metrics = WindowMetrics(window=state.window, anchor=state.anchor, start_time=state.start_time,
                            valid_count=state.valid_count, invalid_count=state.invalid_count,
                            distinct_vlm_valid_count=len(state.vlm_paths),
                            hypotheses=frozenset(state.hypotheses))
    log.debug("window %d: %d hypotheses, invalid rate %.3f", state.window,
              len(state.hypotheses), metrics.invalid_rate)
    return state, metrics

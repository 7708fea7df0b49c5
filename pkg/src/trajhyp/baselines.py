"""Comparison strategies over the same generator and world model.

* CoT: one greedy rollout, the generator's best feasible candidate per step.
* GIoT: several full expansion rounds; every (state, candidate) pair proposed
  in earlier rounds is excluded from later ones, and the union is returned.
* ToT: the engine's tree expansion with the critic and feedback switched off.

Each strategy has a single-window function (``run_cot``, ``run_giot``,
``run_tot``) and a window step with the same signature as
:func:`trajhyp.engine.run_window`, used by the multi-window runner.
"""

from __future__ import annotations

import dataclasses

from .core import AgentState, Observation, RunConfig, Trajectory
from .engine import (EngineState, WindowMetrics, expand_tree, initial_state, integrate_feedback,
                     observation_violation, run_window, start_window)
from .world_model import EnvMap, violation

METHODS = ("cot", "giot", "tot", "trace")


def _metrics(state: EngineState) -> WindowMetrics:
    return WindowMetrics(window=state.window, anchor=state.anchor, start_time=state.start_time,
                         valid_count=state.valid_count, invalid_count=state.invalid_count,
                         distinct_vlm_valid_count=len(state.vlm_paths),
                         hypotheses=frozenset(state.hypotheses))


def tot_config(cfg: RunConfig) -> RunConfig:
    return cfg.replace(critic_samples=0, feedback_enabled=False)


# -- CoT -------------------------------------------------------------------------

def cot_window(state: EngineState, generator, env: EnvMap, cfg: RunConfig):
    state = start_window(state, env)
    obs = state.observations[-1]
    current = state.anchor
    path = [current]
    nid = 0
    for step in range(cfg.depth):
        time = obs.time + step + 1
        chosen = None
        for cand in generator.propose(state.ctx, current, cfg.branching):
            if violation(current, cand, env) is None and not observation_violation(state, cand, time):
                state.valid_count += 1
                if chosen is None:
                    chosen = cand
            else:
                state.invalid_count += 1
        if chosen is None:
            break
        nid, _ = state.tree.add_child(nid, chosen, "feasible")
        path.append(chosen)
        current = chosen
    if len(path) == cfg.depth + 1:
        traj = Trajectory(obs.time, tuple(path))
        state.hypotheses = {traj}
        state.vlm_paths = {traj}
    return state, _metrics(state)


def run_cot(env: EnvMap, anchor: AgentState, obs: Observation, cfg: RunConfig, generator) -> set:
    """Greedy single-path rollout; empty when it reaches a dead end."""
    state = initial_state(env, anchor, obs, cfg)
    state, _ = cot_window(state, generator, env, cfg)
    return set(state.hypotheses)


# -- GIoT ------------------------------------------------------------------------

def giot_window(state: EngineState, generator, env: EnvMap, cfg: RunConfig):
    state = start_window(state, env)
    obs = state.observations[-1]
    plain = cfg.replace(feedback_enabled=False)
    state.ctx = dataclasses.replace(state.ctx, exclusions=frozenset())
    for _ in range(cfg.giot_rounds):
        expand_tree(state, generator, env, obs, plain)
        integrate_feedback(state, plain)
        tree = state.tree
        tried = frozenset((tree.nodes[n.parent_id].state, n.state)
                          for n in tree.nodes.values() if n.parent_id is not None)
        state.ctx = dataclasses.replace(state.ctx, exclusions=tried)
    state.ctx = dataclasses.replace(state.ctx, exclusions=frozenset())
    return state, _metrics(state)


def run_giot(env: EnvMap, anchor: AgentState, obs: Observation, cfg: RunConfig, generator,
             rounds: int | None = None) -> set:
    if rounds is not None:
        if rounds < 1:
            raise ValueError("rounds must be >= 1")
        cfg = cfg.replace(giot_rounds=rounds)
    state = initial_state(env, anchor, obs, cfg)
    state, _ = giot_window(state, generator, env, cfg)
    return set(state.hypotheses)


# -- ToT -------------------------------------------------------------------------

def tot_window(state: EngineState, generator, env: EnvMap, cfg: RunConfig):
    return run_window(state, generator, env, tot_config(cfg))


def run_tot(env: EnvMap, anchor: AgentState, obs: Observation, cfg: RunConfig, generator) -> set:
    cfg = tot_config(cfg)
    state = initial_state(env, anchor, obs, cfg)
    state, _ = run_window(state, generator, env, cfg)
    return set(state.hypotheses)


WINDOW_STEPS = {"cot": cot_window, "giot": giot_window, "tot": tot_window, "trace": run_window}

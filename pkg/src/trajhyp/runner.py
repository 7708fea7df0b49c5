"""Multi-window driver: runs one method over a scenario's observation schedule."""

from __future__ import annotations

import logging
from typing import Optional, Sequence

from .baselines import METHODS, WINDOW_STEPS
from .core import Observation, RunConfig
from .engine import initial_state, on_new_observation
from .generators import ScriptedGenerator
from .oracle_eval import CoverageReport, build_report
from .scenarios import Scenario, simulate_observations

log = logging.getLogger(__name__)


def run_windows(scenario: Scenario, method: str, cfg: RunConfig, generator=None,
                observations: Optional[Sequence[Observation]] = None) -> list:
    """Per-window metrics for ``method``; one window per observation."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    env = scenario.env
    if observations is None:
        observations = simulate_observations(scenario, cfg.seed)
    if generator is None:
        generator = ScriptedGenerator(cfg.seed)
    step = WINDOW_STEPS[method]
    first = observations[0]
    state = initial_state(env, scenario.target_anchor, first, cfg)
    windows = []
    for i, obs in enumerate(observations):
        if i:
            on_new_observation(state, obs, env, cfg)
        state, metrics = step(state, generator, env, cfg)
        windows.append(metrics)
        log.info("%s %s seed=%d window %d: |hyp|=%d invalid=%.3f", scenario.id, method, cfg.seed,
                 metrics.window, len(metrics.hypotheses), metrics.invalid_rate)
    return windows


def run_method(scenario: Scenario, method: str, cfg: RunConfig, generator=None,
               observations: Optional[Sequence[Observation]] = None) -> CoverageReport:
    windows = run_windows(scenario, method, cfg, generator, observations)
    return build_report(scenario.id, method, cfg, windows, scenario.env)

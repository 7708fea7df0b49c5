"""Scenario files and the five bundled tasks.

A scenario file is a map (see :func:`trajhyp.world_model.parse_map`) followed
by ``key = value`` parameters::

    id = T5
    name = Right-turn decision point
    anchor = 6 5 SE 1
    observer = 1 5 E
    obs_times = 0 3 6 9 12
    noise_radius = 1
    depth = 4
    region.straight = 9 3 17 5

``anchor`` is ``x y heading speed`` and ``observer`` is ``x y heading``
(annotation only). Any :class:`~trajhyp.core.RunConfig` field may be set,
and ``region.<name>`` declares an inclusive rectangle ``x0 y0 x1 y1``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .core import AgentState, Observation, RunConfig, Trajectory, chebyshev, heading_from_name
from .errors import ParseError, ValidationError
from .world_model import EnvMap, parse_map, successors

BUNDLED_IDS = ("T1", "T2", "T3", "T4", "T5")
_CFG_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


@dataclass(frozen=True)
class Scenario:
    id: str
    env: EnvMap
    target_anchor: AgentState
    obs_times: tuple
    noise_radius: int = 1
    observer_pose: Optional[tuple] = None
    name: str = ""
    cfg_overrides: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)

    def config(self, **changes) -> RunConfig:
        values = {**self.cfg_overrides, **changes}
        return RunConfig(**values)

    def in_region(self, name: str, x: int, y: int) -> bool:
        x0, y0, x1, y1 = self.regions[name]
        return x0 <= x <= x1 and y0 <= y <= y1

    def ends_in(self, name: str, traj: Trajectory) -> bool:
        last = traj.states[-1]
        return self.in_region(name, last.x, last.y)


def _ints(value: str, n: Optional[int], key: str, lineno: int, path) -> list:
    parts = value.replace(",", " ").split()
    try:
        out = [int(p) for p in parts]
    except ValueError:
        raise ParseError(f"{key} expects integers", line=lineno, path=path) from None
    if n is not None and len(out) != n:
        raise ParseError(f"{key} expects {n} values", line=lineno, path=path)
    return out


def _state(value: str, n: int, key: str, lineno: int, path) -> tuple:
    parts = value.replace(",", " ").split()
    if len(parts) != n:
        raise ParseError(f"{key} expects {n} fields", line=lineno, path=path)
    try:
        x, y = int(parts[0]), int(parts[1])
        heading = heading_from_name(parts[2])
        rest = [int(p) for p in parts[3:]]
    except ValueError as exc:
        raise ParseError(f"{key}: {exc}", line=lineno, path=path) from None
    return (x, y, heading, *rest)


def _cfg_value(key: str, value: str, lineno: int, path):
    kind = str(_CFG_FIELDS[key])
    try:
        if "bool" in kind:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if "float" in kind:
            return float(value)
        if value.lower() == "none":
            return None
        return int(value)
    except ValueError:
        raise ParseError(f"bad value for {key}: {value!r}", line=lineno, path=path) from None


def parse_scenario(text: str, path=None) -> Scenario:
    env, params = parse_map(text, path=path, allow_extra=True)
    values = {}
    overrides = {}
    regions = {}
    for key, (value, lineno) in params.items():
        if key == "id":
            values["id"] = value
        elif key == "name":
            values["name"] = value
        elif key == "anchor":
            values["target_anchor"] = AgentState(*_state(value, 4, key, lineno, path))
        elif key == "observer":
            values["observer_pose"] = _state(value, 3, key, lineno, path)
        elif key == "obs_times":
            values["obs_times"] = tuple(_ints(value, None, key, lineno, path))
        elif key == "noise_radius":
            values["noise_radius"] = _ints(value, 1, key, lineno, path)[0]
        elif key.startswith("region."):
            regions[key.split(".", 1)[1]] = tuple(_ints(value, 4, key, lineno, path))
        elif key in _CFG_FIELDS:
            overrides[key] = _cfg_value(key, value, lineno, path)
        else:
            raise ParseError(f"unknown parameter {key!r}", line=lineno, column=1, path=path)
    for required in ("id", "target_anchor", "obs_times"):
        if required not in values:
            raise ValidationError(f"{path or 'scenario'}: missing parameter "
                                  f"{'anchor' if required == 'target_anchor' else required!r}")
    scenario = Scenario(env=env, cfg_overrides=overrides, regions=regions, **values)
    validate(scenario)
    return scenario


def validate(scenario: Scenario) -> None:
    env = scenario.env
    a = scenario.target_anchor
    if not (0 <= a.heading < 8 and 0 <= a.speed <= env.rules.max_speed):
        raise ValidationError(f"{scenario.id}: anchor heading/speed out of range")
    if not env.in_bounds(a.x, a.y):
        raise ValidationError(f"{scenario.id}: anchor lies outside the map")
    if not env.navigable(a.x, a.y):
        raise ValidationError(f"{scenario.id}: anchor lies inside an obstacle or restricted zone")
    if not successors(a, env):
        raise ValidationError(f"{scenario.id}: anchor has no feasible successor")
    times = scenario.obs_times
    if not times:
        raise ValidationError(f"{scenario.id}: observation schedule is empty")
    if any(b <= a_ for a_, b in zip(times, times[1:])):
        raise ValidationError(f"{scenario.id}: observation times must be strictly increasing")
    if scenario.noise_radius < 0:
        raise ValidationError(f"{scenario.id}: noise_radius must be >= 0")
    if scenario.observer_pose is not None:
        ox, oy = scenario.observer_pose[:2]
        if not env.in_bounds(ox, oy):
            raise ValidationError(f"{scenario.id}: observer lies outside the map")
    try:
        cfg = scenario.config()
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{scenario.id}: bad config override: {exc}") from None
    gaps = [b - a_ for a_, b in zip(times, times[1:])]
    if gaps and max(gaps) > cfg.depth:
        raise ValidationError(f"{scenario.id}: observation gap {max(gaps)} exceeds depth {cfg.depth}")
    for name, (x0, y0, x1, y1) in scenario.regions.items():
        if x0 > x1 or y0 > y1:
            raise ValidationError(f"{scenario.id}: region {name} is empty")


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ParseError("scenario file not found", path=path) from None
    return parse_scenario(text, path=path)


def bundled_path(scenario_id: str) -> Path:
    ref = resources.files("trajhyp") / "data" / f"{scenario_id.lower()}.scn"
    return Path(str(ref))


def bundled() -> list:
    return [load_scenario(bundled_path(i)) for i in BUNDLED_IDS]


def resolve(name_or_path) -> Scenario:
    """Load a bundled scenario by id (``t5``) or a scenario file by path."""
    if str(name_or_path).upper() in BUNDLED_IDS:
        return load_scenario(bundled_path(str(name_or_path).upper()))
    return load_scenario(name_or_path)


# -- observation simulation ----------------------------------------------------------

def _clear(env: EnvMap, x: int, y: int) -> bool:
    return all(env.navigable(x + dx, y + dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1))


def simulate_truth(scenario: Scenario, seed: int) -> Trajectory:
    """Roll out a plausible true target path over the observation schedule.

    Successors are drawn with a preference for cruising speed, for keeping
    the heading and for keeping clear of obstacles.
    """
    rng = np.random.default_rng([seed % 2**63, 0x7A11])
    env = scenario.env
    state = scenario.target_anchor
    states = [state]
    for _ in range(scenario.obs_times[-1] - scenario.obs_times[0]):
        options = sorted(successors(state, env))
        if not options:
            options = [state._replace(speed=0)]
        weights = np.array([1.0 + 4.0 * (s.speed == 1)
                            + 2.0 * (s.heading == state.heading)
                            + 2.0 * _clear(env, s.x, s.y) for s in options])
        state = options[rng.choice(len(options), p=weights / weights.sum())]
        states.append(state)
    return Trajectory(scenario.obs_times[0], tuple(states))


def simulate_observations(scenario: Scenario, seed: int) -> list:
    """Noisy measurements of :func:`simulate_truth` at the scheduled times.

    The first measurement is exact (the anchor is known); later ones are
    drawn uniformly among navigable cells within ``noise_radius`` of the
    true position.
    """
    truth = simulate_truth(scenario, seed)
    rng = np.random.default_rng([seed % 2**63, 0x0B5])
    env = scenario.env
    r = scenario.noise_radius
    out = []
    for i, t in enumerate(scenario.obs_times):
        true = truth.state_at(t)
        if i == 0:
            out.append(Observation(t, true.x, true.y, r))
            continue
        cells = [(true.x + dx, true.y + dy) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
                 if env.navigable(true.x + dx, true.y + dy)]
        mx, my = cells[rng.integers(len(cells))]
        assert chebyshev(mx, my, true.x, true.y) <= r
        out.append(Observation(t, mx, my, r))
    return out

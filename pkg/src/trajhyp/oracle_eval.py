"""Exhaustive ground-truth enumeration and the coverage report."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .core import (AgentState, Observation, RunConfig, Trajectory, chebyshev, state_from_record,
                   state_to_record, trajectory_from_record, trajectory_set_digest,
                   trajectory_to_record)
from .errors import CapacityExceeded, EmptyGroundTruth
from .world_model import EnvMap, successors

DEFAULT_NODE_BUDGET = 10**7


def enumerate_gamma_star(anchor: AgentState, env: EnvMap, obs_schedule: Sequence[Observation],
                         depth: int, start_time: int = 0,
                         node_budget: int = DEFAULT_NODE_BUDGET) -> set:
    """All depth-``depth`` feasible paths from ``anchor`` consistent with every observation."""
    by_time = {}
    for obs in obs_schedule:
        by_time.setdefault(obs.time, []).append(obs)

    def ok(state, time):
        return all(chebyshev(state.x, state.y, o.measured_x, o.measured_y) <= o.noise_radius
                   for o in by_time.get(time, ()))

    if not ok(anchor, start_time):
        return set()
    out = set()
    visited = 0
    path = [anchor]

    def dfs(state, level):
        nonlocal visited
        visited += 1
        if visited > node_budget:
            raise CapacityExceeded(f"enumeration exceeded the node budget of {node_budget}")
        if level == depth:
            out.add(Trajectory(start_time, tuple(path)))
            return
        for nxt in sorted(successors(state, env)):
            if ok(nxt, start_time + level + 1):
                path.append(nxt)
                dfs(nxt, level + 1)
                path.pop()

    dfs(anchor, 0)
    return out


def cached_gamma_star(anchor: AgentState, env: EnvMap, obs_schedule: Sequence[Observation],
                      depth: int, start_time: int = 0,
                      node_budget: int = DEFAULT_NODE_BUDGET) -> frozenset:
    key = (anchor, tuple(obs_schedule), depth, start_time)
    hit = env._gamma_cache.get(key)
    if hit is None:
        hit = frozenset(enumerate_gamma_star(anchor, env, obs_schedule, depth, start_time, node_budget))
        env._gamma_cache[key] = hit
    return hit


def coverage_detail(gamma_dagger: Iterable[Trajectory], gamma_star: Iterable[Trajectory]):
    """Return ``(coverage, hits, unsound_count)``."""
    gamma_star = set(gamma_star)
    if not gamma_star:
        raise EmptyGroundTruth("ground-truth set is empty")
    gamma_dagger = set(gamma_dagger)
    hits = len(gamma_dagger & gamma_star)
    return hits / len(gamma_star), hits, len(gamma_dagger) - hits


def coverage(gamma_dagger: Iterable[Trajectory], gamma_star: Iterable[Trajectory]) -> float:
    return coverage_detail(gamma_dagger, gamma_star)[0]


# -- reports ---------------------------------------------------------------------

@dataclass
class WindowRecord:
    window: int
    start_time: int
    anchor: AgentState
    valid_count: int
    invalid_count: int
    invalid_rate: float
    distinct_vlm_valid_count: int
    gamma_star_size: int
    gamma_dagger_size: int
    hits: int
    unsound_count: int
    coverage: float
    hypotheses: list = field(default_factory=list, repr=False)


@dataclass
class CoverageReport:
    scenario_id: str
    method: str
    seed: int
    config: dict
    config_digest: str
    coverage: float
    gamma_star_size: int
    gamma_dagger_size: int
    unsound_count: int
    per_window_invalid_rate: list
    per_window_distinct_valid: list
    windows: list = field(repr=False)

    @property
    def per_window_coverage(self) -> list:
        return [w.coverage for w in self.windows]

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "method": self.method,
            "seed": self.seed,
            "config": self.config,
            "config_digest": self.config_digest,
            "coverage": self.coverage,
            "gamma_star_size": self.gamma_star_size,
            "gamma_dagger_size": self.gamma_dagger_size,
            "unsound_count": self.unsound_count,
            "per_window_invalid_rate": self.per_window_invalid_rate,
            "per_window_distinct_valid": self.per_window_distinct_valid,
            "windows": [
                {
                    "window": w.window,
                    "start_time": w.start_time,
                    "anchor": state_to_record(w.anchor),
                    "valid_count": w.valid_count,
                    "invalid_count": w.invalid_count,
                    "invalid_rate": w.invalid_rate,
                    "distinct_vlm_valid_count": w.distinct_vlm_valid_count,
                    "gamma_star_size": w.gamma_star_size,
                    "gamma_dagger_size": w.gamma_dagger_size,
                    "hits": w.hits,
                    "unsound_count": w.unsound_count,
                    "coverage": w.coverage,
                    "hypotheses": [trajectory_to_record(t) for t in w.hypotheses],
                }
                for w in self.windows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "CoverageReport":
        windows = [
            WindowRecord(
                window=w["window"], start_time=w["start_time"], anchor=state_from_record(w["anchor"]),
                valid_count=w["valid_count"], invalid_count=w["invalid_count"],
                invalid_rate=w["invalid_rate"],
                distinct_vlm_valid_count=w["distinct_vlm_valid_count"],
                gamma_star_size=w["gamma_star_size"], gamma_dagger_size=w["gamma_dagger_size"],
                hits=w["hits"], unsound_count=w["unsound_count"], coverage=w["coverage"],
                hypotheses=[trajectory_from_record(t) for t in w["hypotheses"]],
            )
            for w in d["windows"]
        ]
        return cls(scenario_id=d["scenario_id"], method=d["method"], seed=d["seed"],
                   config=d["config"], config_digest=d["config_digest"], coverage=d["coverage"],
                   gamma_star_size=d["gamma_star_size"], gamma_dagger_size=d["gamma_dagger_size"],
                   unsound_count=d["unsound_count"],
                   per_window_invalid_rate=list(d["per_window_invalid_rate"]),
                   per_window_distinct_valid=list(d["per_window_distinct_valid"]),
                   windows=windows)

    @classmethod
    def from_json(cls, text: str) -> "CoverageReport":
        return cls.from_dict(json.loads(text))

    def hypothesis_union(self) -> set:
        return {t for w in self.windows for t in w.hypotheses}


def build_report(scenario_id: str, method: str, cfg: RunConfig, windows, env: EnvMap,
                 gamma_stars: Optional[Sequence[Iterable[Trajectory]]] = None) -> CoverageReport:
    """Assemble a report from per-window metrics.

    Each window is scored against the ground truth enumerated from the
    anchor that window actually used. Trajectories carry their start time,
    so the per-window sets are disjoint and the run-level coverage is the
    plain ratio over their unions.
    """
    records = []
    for i, w in enumerate(windows):
        obs = Observation(w.start_time, w.anchor.x, w.anchor.y, 0)
        if gamma_stars is not None:
            star = set(gamma_stars[i])
        else:
            star = cached_gamma_star(w.anchor, env, (obs,), cfg.depth, w.start_time, cfg.node_budget)
        dagger = set(w.hypotheses)
        cov, hits, unsound = coverage_detail(dagger, star) if star else (0.0, 0, len(dagger))
        records.append(WindowRecord(
            window=w.window, start_time=w.start_time, anchor=w.anchor,
            valid_count=w.valid_count, invalid_count=w.invalid_count, invalid_rate=w.invalid_rate,
            distinct_vlm_valid_count=w.distinct_vlm_valid_count, gamma_star_size=len(star),
            gamma_dagger_size=len(dagger), hits=hits, unsound_count=unsound, coverage=cov,
            hypotheses=sorted(dagger, key=Trajectory.sort_key)))
    star_total = sum(r.gamma_star_size for r in records)
    hits_total = sum(r.hits for r in records)
    return CoverageReport(
        scenario_id=scenario_id, method=method, seed=cfg.seed, config=cfg.to_dict(),
        config_digest=cfg.digest(), coverage=hits_total / star_total if star_total else 0.0,
        gamma_star_size=star_total, gamma_dagger_size=sum(r.gamma_dagger_size for r in records),
        unsound_count=sum(r.unsound_count for r in records),
        per_window_invalid_rate=[r.invalid_rate for r in records],
        per_window_distinct_valid=[r.distinct_vlm_valid_count for r in records],
        windows=records)


def recompute_coverage(report: CoverageReport, env: EnvMap) -> float:
    """Coverage recomputed from the stored hypothesis sets and fresh ground truth."""
    depth = report.config["depth"]
    hits = total = 0
    for w in report.windows:
        obs = Observation(w.start_time, w.anchor.x, w.anchor.y, 0)
        star = cached_gamma_star(w.anchor, env, (obs,), depth, w.start_time,
                                 report.config.get("node_budget", DEFAULT_NODE_BUDGET))
        hits += len(set(w.hypotheses) & star)
        total += len(star)
    return hits / total if total else 0.0


CSV_COLUMNS = ("scenario", "method", "seed", "window", "start_time", "anchor_x", "anchor_y",
               "anchor_heading", "anchor_speed", "gamma_star_size", "gamma_dagger_size", "hits",
               "unsound_count", "coverage", "valid_count", "invalid_count", "invalid_rate",
               "distinct_vlm_valid_count", "config_digest")


def csv_rows(report: CoverageReport):
    for w in report.windows:
        yield {
            "scenario": report.scenario_id, "method": report.method, "seed": report.seed,
            "window": w.window, "start_time": w.start_time, "anchor_x": w.anchor.x,
            "anchor_y": w.anchor.y, "anchor_heading": w.anchor.heading,
            "anchor_speed": w.anchor.speed, "gamma_star_size": w.gamma_star_size,
            "gamma_dagger_size": w.gamma_dagger_size, "hits": w.hits,
            "unsound_count": w.unsound_count, "coverage": f"{w.coverage:.6f}",
            "valid_count": w.valid_count, "invalid_count": w.invalid_count,
            "invalid_rate": f"{w.invalid_rate:.6f}",
            "distinct_vlm_valid_count": w.distinct_vlm_valid_count,
            "config_digest": report.config_digest,
        }


def reports_to_csv(reports: Iterable[CoverageReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for report in reports:
        writer.writerows(csv_rows(report))
    return buf.getvalue()


def gamma_star_digest(trajs) -> str:
    return trajectory_set_digest(trajs)

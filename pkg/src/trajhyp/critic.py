"""Counterfactual exploration around a baseline trajectory.

The critic perturbs every state after the anchor by a small offset
``(dx, dy, dheading, dspeed)`` with each component in {-1, 0, +1}, scores the
result with ``alpha * loss_feas + beta * loss_div`` and keeps the best
feasible, observation-consistent variants that differ from the baseline.

Offsets are drawn from a per-step, per-component categorical distribution.
Before sampling, each categorical is masked to the values that keep the
perturbed state kinematically reachable from the previous perturbed state
(heading and speed within the turn and acceleration limits, position equal to
the displacement implied by the new heading and speed). Components whose mask
is empty fall back to the unmasked weights; those samples come out infeasible
and are discarded by the hard filter. Collisions, lanes, yield cells and the
observation are never masked, so the world model still does the filtering.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import HEADING_VECTORS, AgentState, Observation, RunConfig, Trajectory, chebyshev, consistent_with, heading_diff
from .errors import LengthMismatch
from .world_model import EnvMap, is_feasible

OFFSET_VALUES = (-1, 0, 1)
COMPONENTS = ("dx", "dy", "dheading", "dspeed")
_HV = np.array(HEADING_VECTORS)


@dataclass(frozen=True)
class OffsetSequence:
    deltas: tuple  # ((dx, dy, dheading, dspeed), ...)

    def __post_init__(self):
        deltas = tuple(tuple(int(v) for v in d) for d in self.deltas)
        for d in deltas:
            if len(d) != 4 or any(v not in OFFSET_VALUES for v in d):
                raise ValueError(f"offset components must be in {{-1, 0, 1}}: {d}")
        object.__setattr__(self, "deltas", deltas)

    def __len__(self):
        return len(self.deltas)

    @classmethod
    def zeros(cls, n: int) -> "OffsetSequence":
        return cls(((0, 0, 0, 0),) * n)


@dataclass(frozen=True)
class CriticScore:
    l_feas: float
    l_div: float
    total: float


@dataclass(frozen=True)
class ProposalWeights:
    """Add-one smoothed categorical counts, shape ``(steps, 4 components, 3 values)``."""

    counts: np.ndarray = field(repr=False)

    @classmethod
    def uniform(cls, steps: int) -> "ProposalWeights":
        return cls(np.ones((steps, 4, 3)))

    @property
    def steps(self) -> int:
        return self.counts.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self.counts / self.counts.sum(axis=-1, keepdims=True)

    def step_weights(self, i: int) -> np.ndarray:
        if i < self.steps:
            return self.weights[i]
        return np.full((4, 3), 1.0 / 3.0)


def adapt_proposal(proposal: ProposalWeights, accepted: Sequence[OffsetSequence]) -> ProposalWeights:
    steps = max([proposal.steps] + [len(o) for o in accepted])
    counts = np.ones((steps, 4, 3))
    counts[:proposal.steps] = proposal.counts
    for offsets in accepted:
        for i, delta in enumerate(offsets.deltas):
            for c, v in enumerate(delta):
                counts[i, c, v + 1] += 1
    return ProposalWeights(counts)


def apply_offsets(baseline: Trajectory, offsets: OffsetSequence) -> Trajectory:
    if len(offsets) != len(baseline) - 1:
        raise LengthMismatch(f"{len(offsets)} offsets for a {len(baseline) - 1}-step suffix")
    states = [baseline.states[0]]
    for s, (dx, dy, dh, ds) in zip(baseline.states[1:], offsets.deltas):
        states.append(AgentState(s.x + dx, s.y + dy, (s.heading + dh) % 8,
                                 min(2, max(0, s.speed + ds))))
    return Trajectory(baseline.start_time, tuple(states))


def offsets_between(baseline: Trajectory, counterfactual: Trajectory) -> OffsetSequence:
    """Effective offsets that map ``baseline`` onto ``counterfactual``."""
    deltas = []
    for a, b in zip(baseline.states[1:], counterfactual.states[1:]):
        deltas.append((b.x - a.x, b.y - a.y, heading_diff(b.heading, a.heading), b.speed - a.speed))
    return OffsetSequence(tuple(deltas))


def loss_feas(traj: Trajectory, env: EnvMap, obs: Optional[Observation]) -> float:
    bad = sum(1 for a, b in traj.transitions() if not is_feasible(a, b, env))
    if obs is not None and not consistent_with(traj, obs):
        bad += 1
    return bad / len(traj)


def loss_div(baseline: Trajectory, counterfactual: Trajectory) -> float:
    if len(baseline) != len(counterfactual):
        raise LengthMismatch("trajectories differ in length")
    dist = sum(chebyshev(a.x, a.y, b.x, b.y) for a, b in zip(baseline, counterfactual))
    return 1.0 / (1.0 + dist / len(baseline))


def score(baseline: Trajectory, counterfactual: Trajectory, env: EnvMap, obs: Optional[Observation],
          alpha: float, beta: float) -> CriticScore:
    lf = loss_feas(counterfactual, env, obs)
    ld = loss_div(baseline, counterfactual)
    return CriticScore(lf, ld, alpha * lf + beta * ld)


def _first_divergence(baseline: Trajectory, cf: Trajectory) -> int:
    for i, (a, b) in enumerate(zip(baseline.states, cf.states)):
        if a != b:
            return i
    return len(baseline)


def rank_survivors(baseline: Trajectory, candidates, env: EnvMap, obs: Optional[Observation],
                   alpha: float, beta: float, keep: int) -> list:
    """Hard-filter, deduplicate and order counterfactual candidates.

    Order: total score, then the earliest step at which the candidate leaves
    the baseline, then the state sequence itself.
    """
    seen = set()
    ranked = []
    for cf in candidates:
        if cf in seen or cf.states == baseline.states:
            continue
        seen.add(cf)
        sc = score(baseline, cf, env, obs, alpha, beta)
        if sc.l_feas > 0:
            continue
        ranked.append((sc.total, _first_divergence(baseline, cf), cf.states, cf))
    ranked.sort(key=lambda t: t[:3])
    return [t[3] for t in ranked[:keep]]


def _masked_choice(weights: np.ndarray, mask: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row from ``weights`` restricted to ``mask``."""
    w = weights[None, :] * mask
    empty = w.sum(axis=1) == 0
    w[empty] = weights
    cdf = np.cumsum(w / w.sum(axis=1, keepdims=True), axis=1)
    return np.minimum((u[:, None] > cdf).sum(axis=1), 2)


def sample_offsets(baseline: Trajectory, env: EnvMap, proposal: ProposalWeights, m: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw ``m`` offset sequences, shape ``(m, steps, 4)``."""
    n = len(baseline) - 1
    rules = env.rules
    out = np.zeros((m, n, 4), dtype=np.int64)
    start = baseline.states[0]
    px = np.full(m, start.x)
    py = np.full(m, start.y)
    ph = np.full(m, start.heading)
    ps = np.full(m, start.speed)
    vals = np.array(OFFSET_VALUES)
    u = rng.random((m, n, 4))
    for i in range(n):
        base = baseline.states[i + 1]
        w = proposal.step_weights(i)

        cand_h = (base.heading + vals) % 8
        turn = (cand_h[None, :] - ph[:, None] + 4) % 8 - 4
        hmask = (ps[:, None] == 0) | (np.abs(turn) <= rules.max_heading_delta)
        dh = vals[_masked_choice(w[2], hmask.astype(float), u[:, i, 2])]

        cand_s = np.clip(base.speed + vals, 0, 2)
        smask = np.abs(cand_s[None, :] - ps[:, None]) <= rules.max_speed_delta
        ds = vals[_masked_choice(w[3], smask.astype(float), u[:, i, 3])]

        nh = (base.heading + dh) % 8
        ns = np.clip(base.speed + ds, 0, 2)
        need_x = px + ns * _HV[nh, 0] - base.x
        need_y = py + ns * _HV[nh, 1] - base.y
        dx = vals[_masked_choice(w[0], (vals[None, :] == need_x[:, None]).astype(float), u[:, i, 0])]
        dy = vals[_masked_choice(w[1], (vals[None, :] == need_y[:, None]).astype(float), u[:, i, 1])]

        out[:, i] = np.stack([dx, dy, dh, ds], axis=1)
        px, py, ph, ps = base.x + dx, base.y + dy, nh, ns
    return out


def all_offset_sequences(steps: int):
    per_step = list(itertools.product(OFFSET_VALUES, repeat=4))
    for combo in itertools.product(per_step, repeat=steps):
        yield OffsetSequence(combo)


def explore(baseline: Trajectory, env: EnvMap, obs: Optional[Observation], cfg: RunConfig,
            proposal: ProposalWeights, rng: Optional[np.random.Generator] = None,
            exhaustive: bool = False) -> list:
    """Return up to ``cfg.critic_keep`` feasible counterfactuals of ``baseline``.

    With ``exhaustive`` every one of the 81**steps offset sequences is tried
    instead of ``cfg.critic_samples`` draws; only sensible for short
    baselines.
    """
    steps = len(baseline) - 1
    if steps == 0:
        return []
    if exhaustive:
        candidates = (apply_offsets(baseline, o) for o in all_offset_sequences(steps))
    else:
        if cfg.critic_samples == 0:
            return []
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        draws = sample_offsets(baseline, env, proposal, cfg.critic_samples, rng)
        unique = {tuple(map(tuple, d)) for d in draws.tolist()}
        candidates = [apply_offsets(baseline, OffsetSequence(d)) for d in sorted(unique)]
    return rank_survivors(baseline, candidates, env, obs, cfg.alpha, cfg.beta, cfg.critic_keep)

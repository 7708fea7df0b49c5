"""Hypothesis generators: the component that proposes next states.

Two implementations share one interface, ``propose(ctx, state, k)``:

* :class:`ScriptedGenerator`, a deterministic stand-in for a vision-language
  model. It ranks the kinematic neighbourhood of a state with a fixed linear
  score that favours keeping heading and speed, and it deliberately slips a
  fraction of over-aggressive (kinematically impossible) candidates into its
  output. Feedback in the context changes its behaviour: accepted offset
  motifs raise the score of the maneuvers they contain, rejection notes make
  it increasingly aware of the rule that was broken.
* :class:`ExternalGenerator`, a client for an out-of-process generator that
  speaks line-delimited JSON over stdin/stdout.
"""

from __future__ import annotations

import json
import math
import logging
import queue
import shlex
import subprocess
import threading
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Protocol, Sequence

import numpy as np

from .core import (HEADING_VECTORS, AgentState, Observation, heading_diff, observation_to_record,
                   state_from_record, state_to_record)
from .errors import ExternalGeneratorFailure
from .world_model import EnvMap, kinematic_candidates, violation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OffsetMotif:
    deltas: tuple  # ((dx, dy, dheading, dspeed), ...)
    source: str = "critic"

    def maneuvers(self) -> set:
        """The non-trivial (dheading, dspeed) pairs this motif contains."""
        return {(d[2], d[3]) for d in self.deltas if (d[2], d[3]) != (0, 0)}

    def to_record(self) -> dict:
        return {"deltas": [list(d) for d in self.deltas], "source": self.source}

    @classmethod
    def from_record(cls, rec: dict) -> "OffsetMotif":
        return cls(tuple(tuple(int(v) for v in d) for d in rec["deltas"]), rec.get("source", "critic"))


@dataclass(frozen=True)
class RejectionNote:
    violation_kind: str
    step_index: int
    dheading: int = 0
    dspeed: int = 0

    def to_record(self) -> dict:
        return {"violation_kind": self.violation_kind, "step_index": self.step_index,
                "dheading": self.dheading, "dspeed": self.dspeed}

    @classmethod
    def from_record(cls, rec: dict) -> "RejectionNote":
        return cls(rec["violation_kind"], int(rec["step_index"]), int(rec.get("dheading", 0)),
                   int(rec.get("dspeed", 0)))


@dataclass(frozen=True)
class GeneratorContext:
    env: EnvMap
    anchor: AgentState
    last_obs: Observation
    accepted_motifs: tuple = ()
    rejection_notes: tuple = ()
    iteration: int = 0
    # (state, candidate) pairs the generator must not propose again; used by GIoT.
    exclusions: frozenset = frozenset()

    @cached_property
    def motif_counts(self) -> Counter:
        counts = Counter()
        for motif in self.accepted_motifs:
            counts.update(motif.maneuvers())
        return counts

    @cached_property
    def note_counts(self) -> Counter:
        return Counter(n.violation_kind for n in self.rejection_notes)


class Generator(Protocol):
    def propose(self, ctx: GeneratorContext, state: AgentState, k: int) -> list: ...


# -- scripted generator ------------------------------------------------------------

@dataclass(frozen=True)
class ScriptedWeights:
    heading: float = 3.0      # w1, heading persistence
    speed: float = 1.0        # w2, speed persistence
    lane: float = 1.0         # w3, lane alignment
    obstacle: float = 1.0     # w4, obstacle proximity
    motif: float = 1.5        # w5, accepted-motif bonus
    note: float = 4.0         # w6, rule-awareness penalty
    conservatism: float = 0.2
    near_miss_rate: float = 1.0
    note_scale: float = 40.0  # notes needed to learn ~63% of a rule
    note_transfer: float = 0.5  # weight of notes about other rules
    motif_half_saturation: float = 2000.0


DEFAULT_WEIGHTS = ScriptedWeights()

# Share of the conservatism prior that applies to each rule before any notes.
_PRIOR_SALIENCE = {"collision": 1.0, "lane": 1.0, "yield": 1.0, "kinematic": 0.0,
                   "observation": 0.0}


def learned_fraction(n: float, weights: ScriptedWeights = DEFAULT_WEIGHTS) -> float:
    """Share of a rule learned after ``n`` rejection notes of that kind."""
    return 1.0 - math.exp(-n / weights.note_scale)


def effective_notes(kind: str, ctx: GeneratorContext, weights: ScriptedWeights = DEFAULT_WEIGHTS) -> float:
    """Notes of ``kind`` plus a discounted share of notes about other rules."""
    counts = ctx.note_counts
    own = counts.get(kind, 0)
    return own + weights.note_transfer * (sum(counts.values()) - own)


def rule_awareness(kind: str, ctx: GeneratorContext, weights: ScriptedWeights = DEFAULT_WEIGHTS) -> float:
    prior = weights.conservatism * _PRIOR_SALIENCE.get(kind, 0.0)
    n = effective_notes(kind, ctx, weights)
    return prior + (1.0 - prior) * learned_fraction(n, weights)


def _blocked_fraction(env: EnvMap, x: int, y: int) -> float:
    blocked = 0
    for dx, dy in HEADING_VECTORS:
        if not env.navigable(x + dx, y + dy):
            blocked += 1
    return blocked / 8.0


def scripted_rank(state: AgentState, candidate: AgentState, ctx: GeneratorContext,
                  weights: ScriptedWeights = DEFAULT_WEIGHTS) -> float:
    env = ctx.env
    dh = heading_diff(candidate.heading, state.heading)
    ds = candidate.speed - state.speed
    heading_persistence = 1.0 - abs(dh) / 4.0
    # a stopped agent is expected to get under way again
    cruise = max(state.speed, 1)
    speed_persistence = 1.0 - abs(candidate.speed - cruise) / 2.0

    lane_alignment = 0.0
    lane = env.lane_direction(candidate.x, candidate.y) if env.in_bounds(candidate.x, candidate.y) else None
    if lane is not None:
        off = abs(heading_diff(candidate.heading, lane))
        lane_alignment = 1.0 if off == 0 else (0.5 if off <= env.rules.lane_tolerance else 0.0)

    proximity = _blocked_fraction(env, candidate.x, candidate.y)

    motif_bonus = 0.0
    if (dh, ds) != (0, 0):
        n = ctx.motif_counts.get((dh, ds), 0)
        motif_bonus = n / (n + weights.motif_half_saturation)

    note_penalty = 0.0
    kind = violation(state, candidate, env)
    if kind is not None:
        note_penalty = rule_awareness(kind, ctx, weights)

    return (weights.heading * heading_persistence
            + weights.speed * speed_persistence
            + weights.lane * lane_alignment
            - weights.obstacle * proximity
            + weights.motif * motif_bonus
            - weights.note * note_penalty)


def _near_miss(state: AgentState, pick: AgentState, sign: int) -> AgentState:
    """An over-aggressive variant of ``pick`` that breaks the kinematic limits."""
    if state.speed > 0:
        turn = heading_diff(pick.heading, state.heading)
        direction = turn if turn != 0 else sign
        heading = (state.heading + 2 * (1 if direction > 0 else -1)) % 8
        speed = max(1, pick.speed)
    else:
        heading = pick.heading
        speed = 2
    dx, dy = HEADING_VECTORS[heading]
    return AgentState(state.x + speed * dx, state.y + speed * dy, heading, speed)


class ScriptedGenerator:
    """Deterministic, feedback-aware proposal policy.

    Ranking: candidates are scored by :func:`scripted_rank` and the top ``k``
    kept, ties going to the smaller ``(heading, speed)``. When ``k > 1`` the
    last kept slot is swapped for an over-aggressive variant with probability
    ``near_miss_rate * (1 - conservatism) * (1 - learned)``, where ``learned``
    grows with the rejection notes seen so far (kinematic ones count fully,
    others by ``note_transfer``). The random draws are a pure function of the
    seed, the window, the iteration and the state.
    """

    def __init__(self, seed: int = 0, weights: ScriptedWeights = DEFAULT_WEIGHTS):
        self.seed = int(seed)
        self.weights = weights

    def rank(self, state: AgentState, candidate: AgentState, ctx: GeneratorContext) -> float:
        return scripted_rank(state, candidate, ctx, self.weights)

    def ranked_candidates(self, ctx: GeneratorContext, state: AgentState) -> list:
        env = ctx.env
        cands = [c for c in kinematic_candidates(state, env.rules)
                 if env.in_bounds(c.x, c.y) and (state, c) not in ctx.exclusions]
        scored = [(-self.rank(state, c, ctx), c.heading, c.speed, c) for c in cands]
        scored.sort(key=lambda t: t[:3])
        return [t[3] for t in scored]

    def slip_probability(self, ctx: GeneratorContext) -> float:
        w = self.weights
        learned = learned_fraction(effective_notes("kinematic", ctx, w), w)
        return w.near_miss_rate * (1.0 - w.conservatism) * (1.0 - learned)

    def propose(self, ctx: GeneratorContext, state: AgentState, k: int) -> list:
        if k < 1:
            raise ValueError("k must be >= 1")
        picks = self.ranked_candidates(ctx, state)[:k]
        rng = np.random.default_rng([self.seed % 2**63, ctx.last_obs.time, ctx.iteration,
                                     state.x, state.y, state.heading, state.speed])
        draws = rng.random(k)
        signs = rng.integers(0, 2, size=k)
        p = self.slip_probability(ctx)
        out = []
        for j, pick in enumerate(picks):
            if 0 < j == k - 1 and draws[j] < p:
                slip = _near_miss(state, pick, 1 if signs[j] else -1)
                if (state, slip) not in ctx.exclusions:
                    pick = slip
            if pick not in out:
                out.append(pick)
        return out


# -- external generator ------------------------------------------------------------

def context_to_request(ctx: GeneratorContext, state: AgentState, k: int) -> dict:
    return {
        "type": "propose",
        "map": ctx.env.to_text(),
        "anchor": state_to_record(ctx.anchor),
        "state": state_to_record(state),
        "last_obs": observation_to_record(ctx.last_obs),
        "accepted_motifs": [m.to_record() for m in ctx.accepted_motifs],
        "rejection_notes": [n.to_record() for n in ctx.rejection_notes],
        "k": k,
        "iteration": ctx.iteration,
        # candidates already tried from this state
        "exclusions": [state_to_record(b) for b in sorted(b for a, b in ctx.exclusions if a == state)],
    }


def parse_response(line: str, k: int) -> list:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ExternalGeneratorFailure(f"malformed response: {exc}") from None
    if not isinstance(msg, dict) or msg.get("type") != "candidates":
        raise ExternalGeneratorFailure(f"expected a 'candidates' message, got {line.strip()[:80]!r}")
    states = msg.get("states")
    if not isinstance(states, list):
        raise ExternalGeneratorFailure("'states' must be a list")
    try:
        out = [state_from_record(s) for s in states]
    except (KeyError, TypeError, ValueError) as exc:
        raise ExternalGeneratorFailure(f"bad state record: {exc}") from None
    for s in out:
        if not (0 <= s.heading < 8 and 0 <= s.speed <= 2):
            raise ExternalGeneratorFailure(f"state out of range: {s}")
    if len(out) > k:
        raise ExternalGeneratorFailure(f"peer returned {len(out)} states for k={k}")
    deduped = []
    for s in out:
        if s not in deduped:
            deduped.append(s)
    return deduped


class ExternalGenerator:
    """Session with a generator process speaking the line protocol.

    One request is in flight at a time. The process is started on first use
    and stopped by :meth:`close` (or the context manager).
    """

    def __init__(self, cmd: Sequence[str] | str, timeout: float = 30.0):
        self.cmd = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        self.timeout = timeout
        self._proc: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._lock = threading.Lock()

    def _start(self):
        try:
            self._proc = subprocess.Popen(self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                          stderr=subprocess.DEVNULL, text=True, bufsize=1)
        except OSError as exc:
            raise ExternalGeneratorFailure(f"cannot start generator {self.cmd!r}: {exc}") from None
        threading.Thread(target=self._pump, args=(self._proc.stdout,), daemon=True).start()

    def _pump(self, stream):
        for line in stream:
            self._lines.put(line)
        self._lines.put(None)

    def propose(self, ctx: GeneratorContext, state: AgentState, k: int) -> list:
        with self._lock:
            if self._proc is None:
                self._start()
            request = json.dumps(context_to_request(ctx, state, k), separators=(",", ":"))
            try:
                self._proc.stdin.write(request + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError, ValueError):
                raise ExternalGeneratorFailure("generator process is not accepting input") from None
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                raise ExternalGeneratorFailure(f"no response within {self.timeout}s") from None
            if line is None:
                self._lines.put(None)
                raise ExternalGeneratorFailure("generator process exited")
            return parse_response(line, k)

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

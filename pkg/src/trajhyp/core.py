"""Shared value types: agent states, trajectories, observations, the
hypothesis tree and the run configuration.

Grid convention: ``x`` is the column, ``y`` the row, with row 0 at the top of
a map file. Headings are eight compass directions numbered counter-clockwise
from east, so ``heading + 1`` is a 45 degree left turn.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Optional

E, NE, N, NW, W, SW, S, SE = range(8)
HEADING_NAMES = ("E", "NE", "N", "NW", "W", "SW", "S", "SE")
# (dx, dy) per unit of speed; y grows downwards.
HEADING_VECTORS = ((1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1))
SPEEDS = (0, 1, 2)


def heading_from_name(name: str) -> int:
    name = name.strip().upper()
    if name.isdigit():
        value = int(name)
        if 0 <= value < 8:
            return value
        raise ValueError(f"heading out of range: {name}")
    try:
        return HEADING_NAMES.index(name)
    except ValueError:
        raise ValueError(f"unknown heading: {name!r}") from None


def heading_diff(a: int, b: int) -> int:
    """Smallest signed rotation taking heading ``b`` to ``a`` (in -4..3)."""
    return (a - b + 4) % 8 - 4


class AgentState(NamedTuple):
    x: int
    y: int
    heading: int
    speed: int

    def __str__(self):
        name = HEADING_NAMES[self.heading] if 0 <= self.heading < 8 else self.heading
        return f"({self.x},{self.y},{name},{self.speed})"


class Observation(NamedTuple):
    time: int
    measured_x: int
    measured_y: int
    noise_radius: int = 0


@dataclass(frozen=True)
class Trajectory:
    start_time: int
    states: tuple

    def __post_init__(self):
        if not self.states:
            raise ValueError("a trajectory needs at least one state")
        if not isinstance(self.states, tuple):
            object.__setattr__(self, "states", tuple(self.states))

    def __len__(self):
        return len(self.states)

    def __iter__(self) -> Iterator[AgentState]:
        return iter(self.states)

    @property
    def end_time(self) -> int:
        return self.start_time + len(self.states) - 1

    def state_at(self, time: int) -> Optional[AgentState]:
        i = time - self.start_time
        if 0 <= i < len(self.states):
            return self.states[i]
        return None

    def transitions(self):
        return zip(self.states, self.states[1:])

    def sort_key(self):
        return (self.start_time, self.states)


def chebyshev(ax: int, ay: int, bx: int, by: int) -> int:
    return max(abs(ax - bx), abs(ay - by))


def trajectory_equals(a: Trajectory, b: Trajectory) -> bool:
    return a.start_time == b.start_time and a.states == b.states


def consistent_with(traj: Trajectory, obs: Observation) -> bool:
    state = traj.state_at(obs.time)
    if state is None:
        return True
    return chebyshev(state.x, state.y, obs.measured_x, obs.measured_y) <= obs.noise_radius


# -- hypothesis tree ---------------------------------------------------------

TAGS = ("proposed", "feasible", "implausible", "edge_case", "pruned")


@dataclass
class TreeNode:
    id: int
    parent_id: Optional[int]
    state: AgentState
    depth: int
    tag: str


class TrajectoryTree:
    """Rooted tree of partial trajectories.

    Children are keyed by state, so a state reached twice from the same
    parent is stored once and paths grafted later share their prefixes.
    """

    def __init__(self, root: AgentState, start_time: int = 0):
        self.start_time = start_time
        self.nodes: dict[int, TreeNode] = {0: TreeNode(0, None, root, 0, "feasible")}
        self._children: dict[int, dict[AgentState, int]] = {0: {}}

    @property
    def root(self) -> AgentState:
        return self.nodes[0].state

    def __len__(self):
        return len(self.nodes)

    def child(self, parent_id: int, state: AgentState) -> Optional[int]:
        return self._children[parent_id].get(state)

    def children(self, node_id: int) -> list[int]:
        return list(self._children[node_id].values())

    def add_child(self, parent_id: int, state: AgentState, tag: str) -> tuple[int, bool]:
        """Return ``(node_id, created)``; an existing child keeps its tag."""
        if tag not in TAGS:
            raise ValueError(f"unknown tag {tag!r}")
        existing = self._children[parent_id].get(state)
        if existing is not None:
            return existing, False
        node_id = len(self.nodes)
        parent = self.nodes[parent_id]
        self.nodes[node_id] = TreeNode(node_id, parent_id, state, parent.depth + 1, tag)
        self._children[parent_id][state] = node_id
        self._children[node_id] = {}
        return node_id, True

    def path_states(self, node_id: int) -> tuple:
        states = []
        nid: Optional[int] = node_id
        while nid is not None:
            node = self.nodes[nid]
            states.append(node.state)
            nid = node.parent_id
        return tuple(reversed(states))

    def path(self, node_id: int) -> Trajectory:
        return Trajectory(self.start_time, self.path_states(node_id))

    def graft(self, states: Iterable[AgentState], tag: str) -> list[int]:
        """Insert a root-anchored path, returning the ids of newly created nodes."""
        states = tuple(states)
        if states[0] != self.root:
            raise ValueError("grafted path must start at the root state")
        created = []
        nid = 0
        for state in states[1:]:
            nid, new = self.add_child(nid, state, tag)
            if new:
                created.append(nid)
        return created

    def live(self, node_id: int) -> bool:
        return self.nodes[node_id].tag not in ("implausible", "pruned")

    def leaf_paths(self, depth: int) -> set:
        """All root-to-node trajectories of exactly ``depth`` steps over live nodes."""
        out = set()
        stack = [0]
        while stack:
            nid = stack.pop()
            node = self.nodes[nid]
            if node.depth == depth:
                out.add(self.path(nid))
                continue
            for cid in self._children[nid].values():
                if self.live(cid):
                    stack.append(cid)
        return out

    def subtree(self, node_id: int) -> list[int]:
        out, stack = [], [node_id]
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(self._children[nid].values())
        return out

    def check_well_formed(self, max_depth: int) -> None:
        roots = [n for n in self.nodes.values() if n.parent_id is None]
        assert len(roots) == 1 and roots[0].id == 0, "tree must have exactly one root"
        for node in self.nodes.values():
            if node.parent_id is None:
                continue
            parent = self.nodes[node.parent_id]
            assert node.depth == parent.depth + 1, f"bad depth at node {node.id}"
            assert node.depth <= max_depth, f"node {node.id} deeper than {max_depth}"


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    depth: int = 4
    branching: int = 3
    horizon: Optional[int] = None
    alpha: float = 1.0
    beta: float = 1.0
    critic_samples: int = 64
    critic_keep: int = 4
    seed: int = 0
    feedback_enabled: bool = True
    iterations: int = 3
    giot_rounds: int = 3
    node_budget: int = 10**7

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.branching < 1:
            raise ValueError("branching must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.critic_samples < 0:
            raise ValueError("critic_samples must be >= 0")
        if self.critic_keep < 1:
            raise ValueError("critic_keep must be >= 1")
        if self.critic_samples and self.critic_keep > self.critic_samples:
            raise ValueError("critic_keep cannot exceed critic_samples")
        if self.iterations < 1 or self.giot_rounds < 1:
            raise ValueError("iterations and giot_rounds must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Hash of every setting except the seed, used to keep reports comparable."""
        payload = {k: v for k, v in self.to_dict().items() if k != "seed"}
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# -- serialization -------------------------------------------------------------

def state_to_record(state: AgentState) -> dict:
    return {"x": state.x, "y": state.y, "heading": state.heading, "speed": state.speed}


def state_from_record(rec) -> AgentState:
    if isinstance(rec, dict):
        return AgentState(int(rec["x"]), int(rec["y"]), int(rec["heading"]), int(rec["speed"]))
    x, y, h, s = rec
    return AgentState(int(x), int(y), int(h), int(s))


def observation_to_record(obs: Observation) -> dict:
    return obs._asdict()


def observation_from_record(rec: dict) -> Observation:
    return Observation(int(rec["time"]), int(rec["measured_x"]), int(rec["measured_y"]),
                       int(rec.get("noise_radius", 0)))


def trajectory_to_record(traj: Trajectory) -> dict:
    return {"start_time": traj.start_time, "states": [list(s) for s in traj.states]}


def trajectory_from_record(rec: dict) -> Trajectory:
    return Trajectory(int(rec["start_time"]), tuple(state_from_record(s) for s in rec["states"]))


def trajectory_set_digest(trajs: Iterable[Trajectory]) -> str:
    h = hashlib.sha256()
    for t in sorted(trajs, key=Trajectory.sort_key):
        h.update(json.dumps(trajectory_to_record(t), separators=(",", ":")).encode())
        h.update(b"\n")
    return h.hexdigest()

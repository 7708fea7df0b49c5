"""Grid world, constraint set and the binary transition feasibility test.

A transition is feasible when it passes both the kinematic check (speed,
acceleration and turn limits plus the displacement rule) and the compliance
check (swept cells free, lane heading tolerance, yield-cell speed cap).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import HEADING_VECTORS, AgentState, heading_diff
from .errors import ParseError

FREE, OBSTACLE, RESTRICTED, LANE = "free", "obstacle", "restricted", "lane"
KIND_CODES = {FREE: 0, OBSTACLE: 1, RESTRICTED: 2, LANE: 3}

_LANE_CHARS = {">": 0, "^": 2, "<": 4, "v": 6}
_DIR_TO_CHAR = {v: k for k, v in _LANE_CHARS.items()}

VIOLATIONS = ("kinematic", "collision", "lane", "yield", "observation")


@dataclass(frozen=True)
class CellZone:
    kind: str
    lane_direction: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown cell kind {self.kind!r}")
        if (self.kind == LANE) != (self.lane_direction is not None):
            raise ValueError("lane_direction must be set exactly for lane cells")


@dataclass(frozen=True)
class RuleSet:
    max_speed: int = 2
    max_speed_delta: int = 1
    max_heading_delta: int = 1
    lane_tolerance: int = 1
    yield_speed_cap: int = 1
    yield_cells: frozenset = frozenset()

    def __post_init__(self):
        for name in ("max_speed", "max_speed_delta", "max_heading_delta",
                     "lane_tolerance", "yield_speed_cap"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.max_speed > 2:
            raise ValueError("max_speed above 2 cells/step is not representable")


RULE_KEYS = ("max_speed", "max_speed_delta", "max_heading_delta", "lane_tolerance",
             "yield_speed_cap")


@dataclass(eq=False)
class EnvMap:
    """Immutable grid map. Equality is identity; use ``to_text`` to compare content."""

    width: int
    height: int
    cells: tuple  # rows of CellZone, indexed cells[y][x]
    rules: RuleSet = field(default_factory=RuleSet)

    def __post_init__(self):
        if self.width * self.height < 1:
            raise ValueError("map must have at least one cell")
        if len(self.cells) != self.height or any(len(r) != self.width for r in self.cells):
            raise ValueError("cell grid does not match declared size")
        blocked = set()
        lanes = {}
        for y, row in enumerate(self.cells):
            for x, zone in enumerate(row):
                if zone.kind in (OBSTACLE, RESTRICTED):
                    blocked.add((x, y))
                elif zone.kind == LANE:
                    lanes[(x, y)] = zone.lane_direction
        self._blocked = frozenset(blocked)
        self._lanes = lanes
        self._succ_cache: dict = {}
        self._gamma_cache: dict = {}

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def navigable(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and (x, y) not in self._blocked

    def blocked(self, x: int, y: int) -> bool:
        return (x, y) in self._blocked

    def lane_direction(self, x: int, y: int) -> Optional[int]:
        return self._lanes.get((x, y))

    def cell(self, x: int, y: int) -> CellZone:
        return self.cells[y][x]

    def is_yield(self, x: int, y: int) -> bool:
        return (x, y) in self.rules.yield_cells

    def kind_array(self) -> np.ndarray:
        """Integer kind codes as an (height, width) array, for plotting."""
        return np.array([[KIND_CODES[z.kind] for z in row] for row in self.cells], dtype=np.int8)

    def with_rules(self, **changes) -> "EnvMap":
        return EnvMap(self.width, self.height, self.cells, dataclasses.replace(self.rules, **changes))

    def to_text(self) -> str:
        lines = [f"{self.width} {self.height}"]
        for y, row in enumerate(self.cells):
            chars = []
            for x, zone in enumerate(row):
                if zone.kind == OBSTACLE:
                    chars.append("#")
                elif zone.kind == RESTRICTED:
                    chars.append("x")
                elif zone.kind == LANE:
                    chars.append(_DIR_TO_CHAR.get(zone.lane_direction, "?"))
                else:
                    chars.append("Y" if (x, y) in self.rules.yield_cells else ".")
            lines.append("".join(chars))
        other = sorted((y, x) for x, y in self.rules.yield_cells if self.cell(x, y).kind != FREE)
        if other:
            lines.append("yield = " + "; ".join(f"{x} {y} {x} {y}" for y, x in other))
        default = RuleSet()
        for key in RULE_KEYS:
            value = getattr(self.rules, key)
            if value != getattr(default, key):
                lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


# -- map text format -----------------------------------------------------------

def parse_map(text: str, path=None, allow_extra: bool = False):
    """Parse the map text format.

    A ``W H`` header, then H rows of W characters: ``.`` free, ``#``
    obstacle, ``x`` restricted, ``> ^ < v`` lane cells with that direction,
    ``Y`` a free yield cell. After the grid come optional ``key = value``
    lines: rule overrides (``max_speed = 1``) and ``yield = x0 y0 x1 y1``
    rectangles (several separated by ``;``) that make any cells yield cells.
    Lines starting with ``#`` after the grid are comments.

    Returns ``(env, extra)`` where ``extra`` maps unrecognised ``key = value``
    lines to ``(value, line_number)``; those are an error unless
    ``allow_extra`` is set (scenario files carry their own parameters).
    """
    lines = text.splitlines()
    idx = 0
    while idx < len(lines) and not lines[idx].strip():
        idx += 1
    if idx >= len(lines):
        raise ParseError("empty map", path=path)
    header = lines[idx].split()
    if len(header) != 2 or not all(h.isdigit() for h in header):
        raise ParseError("header must be 'W H'", line=idx + 1, column=1, path=path)
    width, height = int(header[0]), int(header[1])
    if width * height < 1:
        raise ParseError("map must have at least one cell", line=idx + 1, column=1, path=path)
    rows = []
    yields = set()
    for y in range(height):
        lineno = idx + 2 + y
        if idx + 1 + y >= len(lines):
            raise ParseError(f"expected {height} map rows, got {y}", line=lineno, path=path)
        raw = lines[idx + 1 + y].rstrip("\n\r")
        if len(raw) != width:
            raise ParseError(f"row has {len(raw)} cells, expected {width}",
                             line=lineno, column=min(len(raw), width) + 1, path=path)
        row = []
        for x, ch in enumerate(raw):
            if ch == ".":
                row.append(CellZone(FREE))
            elif ch == "#":
                row.append(CellZone(OBSTACLE))
            elif ch == "x":
                row.append(CellZone(RESTRICTED))
            elif ch in _LANE_CHARS:
                row.append(CellZone(LANE, _LANE_CHARS[ch]))
            elif ch == "Y":
                row.append(CellZone(FREE))
                yields.add((x, y))
            else:
                raise ParseError(f"unknown cell character {ch!r}", line=lineno, column=x + 1,
                                 path=path)
        rows.append(tuple(row))

    overrides = {}
    extra = {}
    for offset, raw in enumerate(lines[idx + 1 + height:]):
        lineno = idx + 2 + height + offset
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ParseError("expected 'key = value'", line=lineno, column=1, path=path)
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key == "yield":
            yields |= _yield_rects(value, width, height, lineno, raw.index("=") + 2, path)
        elif key in RULE_KEYS:
            try:
                overrides[key] = int(value)
            except ValueError:
                raise ParseError(f"{key} must be an integer", line=lineno,
                                 column=raw.index("=") + 2, path=path) from None
        elif allow_extra:
            extra[key] = (value, lineno)
        else:
            raise ParseError(f"unknown parameter {key!r}", line=lineno, column=1, path=path)
    try:
        rules = RuleSet(yield_cells=frozenset(yields), **overrides)
    except ValueError as exc:
        raise ParseError(str(exc), path=path) from None
    return EnvMap(width, height, tuple(rows), rules), extra


def _yield_rects(value: str, width: int, height: int, lineno: int, column: int, path) -> set:
    cells = set()
    for group in value.split(";"):
        try:
            x0, y0, x1, y1 = (int(v) for v in group.split())
        except ValueError:
            raise ParseError("yield expects 'x0 y0 x1 y1' rectangles separated by ';'",
                             line=lineno, column=column, path=path) from None
        if not (0 <= x0 <= x1 < width and 0 <= y0 <= y1 < height):
            raise ParseError(f"yield rectangle {group.strip()!r} is empty or off the map",
                             line=lineno, column=column, path=path)
        cells.update((x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1))
    return cells


def load_map(path) -> EnvMap:
    path = Path(path)
    env, _ = parse_map(path.read_text(), path=path)
    return env


# -- feasibility -----------------------------------------------------------------

def line_cells(x0: int, y0: int, x1: int, y1: int) -> list:
    """Bresenham cells from (x0, y0) exclusive to (x1, y1) inclusive.

    A zero-length line yields the single end cell so a stop-in-place move
    still checks the occupied cell.
    """
    if (x0, y0) == (x1, y1):
        return [(x1, y1)]
    cells = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while (x, y) != (x1, y1):
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
        cells.append((x, y))
    return cells


def check_kinematic(prev: AgentState, nxt: AgentState, rules: RuleSet) -> bool:
    if not 0 <= nxt.speed <= rules.max_speed or not 0 <= nxt.heading < 8:
        return False
    if abs(nxt.speed - prev.speed) > rules.max_speed_delta:
        return False
    if prev.speed > 0 and abs(heading_diff(nxt.heading, prev.heading)) > rules.max_heading_delta:
        return False
    dx, dy = HEADING_VECTORS[nxt.heading]
    return nxt.x == prev.x + nxt.speed * dx and nxt.y == prev.y + nxt.speed * dy


def compliance_violation(prev: AgentState, nxt: AgentState, env: EnvMap) -> Optional[str]:
    for cx, cy in line_cells(prev.x, prev.y, nxt.x, nxt.y):
        if not env.navigable(cx, cy):
            return "collision"
    lane = env.lane_direction(nxt.x, nxt.y)
    if lane is not None and abs(heading_diff(nxt.heading, lane)) > env.rules.lane_tolerance:
        return "lane"
    if env.is_yield(nxt.x, nxt.y) and nxt.speed > env.rules.yield_speed_cap:
        return "yield"
    return None


def check_compliance(prev: AgentState, nxt: AgentState, env: EnvMap) -> bool:
    return compliance_violation(prev, nxt, env) is None


def violation(prev: AgentState, nxt: AgentState, env: EnvMap) -> Optional[str]:
    """Name of the first failing check, or None for a feasible transition."""
    if not env.in_bounds(nxt.x, nxt.y):
        return "kinematic" if not check_kinematic(prev, nxt, env.rules) else "collision"
    if not check_kinematic(prev, nxt, env.rules):
        return "kinematic"
    return compliance_violation(prev, nxt, env)


def feasibility(prev: AgentState, nxt: AgentState, env: EnvMap) -> int:
    if not env.in_bounds(nxt.x, nxt.y) or not env.in_bounds(prev.x, prev.y):
        return 0
    return int(check_kinematic(prev, nxt, env.rules) and check_compliance(prev, nxt, env))


def kinematic_candidates(state: AgentState, rules: RuleSet) -> list:
    """Every (heading, speed) successor inside the kinematic deltas, in map-free form."""
    if state.speed > 0:
        d = rules.max_heading_delta
        headings = sorted({(state.heading + k) % 8 for k in range(-d, d + 1)})
    else:
        headings = range(8)
    lo = max(0, state.speed - rules.max_speed_delta)
    hi = min(rules.max_speed, state.speed + rules.max_speed_delta)
    out = []
    for h in headings:
        dx, dy = HEADING_VECTORS[h]
        for s in range(lo, hi + 1):
            out.append(AgentState(state.x + s * dx, state.y + s * dy, h, s))
    return out


def successors(state: AgentState, env: EnvMap) -> frozenset:
    cached = env._succ_cache.get(state)
    if cached is not None:
        return cached
    out = frozenset(c for c in kinematic_candidates(state, env.rules) if feasibility(state, c, env))
    env._succ_cache[state] = out
    return out


def is_feasible(prev: AgentState, nxt: AgentState, env: EnvMap) -> bool:
    """Cached equivalent of ``feasibility(prev, nxt, env) == 1``."""
    if not env.in_bounds(prev.x, prev.y):
        return False
    return nxt in successors(prev, env)


def trajectory_feasible(traj, env: EnvMap) -> bool:
    return all(is_feasible(a, b, env) for a, b in traj.transitions())

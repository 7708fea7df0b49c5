import sys
from pathlib import Path

import pytest

from trajhyp.core import AgentState, Trajectory
from trajhyp.world_model import parse_map

sys.path.insert(0, str(Path(__file__).parent))


def env_from(text: str):
    env, _ = parse_map(text)
    return env


# Three micro-maps used by the oracle and critic cross-checks.
MICRO_MAPS = {
    "open": """6 6
......
......
......
......
......
......
""",
    "obstacles": """7 7
.......
..#....
..#..x.
.......
.#.....
.....#.
.......
""",
    "lanes": """8 5
########
>>>>>>>>
...Y....
<<<<<<<<
########
""",
}

CORRIDOR = """8 1
........
"""


@pytest.fixture
def open_env():
    return env_from(MICRO_MAPS["open"])


@pytest.fixture
def corridor_env():
    return env_from(CORRIDOR)


def straight(x, y, heading, speed, steps, start_time=0):
    from trajhyp.core import HEADING_VECTORS
    dx, dy = HEADING_VECTORS[heading]
    states = [AgentState(x + i * speed * dx, y + i * speed * dy, heading, speed) for i in range(steps + 1)]
    return Trajectory(start_time, tuple(states))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])

import pytest
from hypothesis import given, settings, strategies as st

from conftest import CORRIDOR, MICRO_MAPS, env_from
from oracles import naive_gamma_star
from trajhyp.core import AgentState, Observation, RunConfig, Trajectory, consistent_with
from trajhyp.engine import WindowMetrics
from trajhyp.errors import CapacityExceeded, EmptyGroundTruth
from trajhyp.oracle_eval import (CoverageReport, build_report, coverage, coverage_detail,
                                 enumerate_gamma_star, recompute_coverage, reports_to_csv)
from trajhyp.world_model import trajectory_feasible

E, NE, N, NW, W, SW, S, SE = range(8)

MICRO_CASES = [
    ("open", AgentState(2, 2, E, 1), [Observation(2, 4, 2, 1)]),
    ("obstacles", AgentState(0, 3, E, 1), []),
    ("lanes", AgentState(1, 1, E, 1), [Observation(3, 4, 2, 1)]),
]


@pytest.mark.parametrize("name,anchor,obs", MICRO_CASES)
def test_matches_naive_recursive_oracle(name, anchor, obs):
    env = env_from(MICRO_MAPS[name])
    for depth in (1, 2, 3):
        assert enumerate_gamma_star(anchor, env, obs, depth) == naive_gamma_star(anchor, env, obs, depth)


def test_corridor_hand_count():
    # 1x8 corridor, anchor (0,0,E,1), depth 3. Only E/W moves stay on the map;
    # at rest any of the 8 headings can be taken in place.
    #   S0(x, r): paths of r steps from a stopped state at x
    #           = 8*S0(x, r-1) + [x<7]*M1(x+1, r-1) + [x>0]*M1w(x-1, r-1)
    #   M1(x, 1) = 3 + [x+1<=7] + [x+2<=7]   (three stop headings, E1, E2)
    #   M2(x, 1) = [x+1<=7] + [x+2<=7]       (E1, E2; cannot stop from 2)
    # step 1 from the anchor: stop with NE/E/SE, (1,E,1), (2,E,2)
    #   S0(0,2) = 8*9 + M1(1,1) = 72 + 5 = 77
    #   M1(1,2) = 3*S0(1,1) + M1(2,1) + M2(3,1) = 30 + 5 + 2 = 37
    #   M2(2,2) = M1(3,1) + M2(4,1) = 5 + 2 = 7
    #   total  = 3*77 + 37 + 7 = 275
    env = env_from(CORRIDOR)
    star = enumerate_gamma_star(AgentState(0, 0, E, 1), env, [], 3)
    assert len(star) == 275


def test_enclosed_anchor_gives_every_heading_sequence():
    env = env_from("3 3\n###\n#.#\n###\n")
    star = enumerate_gamma_star(AgentState(1, 1, E, 0), env, [], 3)
    assert len(star) == 8 ** 3
    assert star == naive_gamma_star(AgentState(1, 1, E, 0), env, [], 3)


def test_symmetric_fork_observation_halves_the_set():
    # E moves are blocked by the wall, and an agent at speed 2 cannot stop,
    # so every path is above or below the axis at t=1 and the map is mirror
    # symmetric about row 2.
    env = env_from("6 5\n......\n......\n.##...\n......\n......\n")
    anchor = AgentState(0, 2, E, 2)
    full = enumerate_gamma_star(anchor, env, [], 3)
    upper = enumerate_gamma_star(anchor, env, [Observation(1, 1, 0, 1)], 3)
    assert len(full) == 2 * len(upper) > 0
    mirror = {Trajectory(t.start_time, tuple(AgentState(s.x, 4 - s.y, (-s.heading) % 8, s.speed)
                                             for s in t.states)) for t in upper}
    assert mirror.isdisjoint(upper) and mirror | upper == full


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 5), st.integers(0, 5), st.integers(0, 7), st.integers(0, 2),
       st.integers(1, 3), st.integers(0, 5), st.integers(0, 5), st.integers(0, 2))
def test_output_is_sound_and_stricter_schedules_shrink_it(x, y, h, s, t, mx, my, r):
    env = env_from(MICRO_MAPS["open"])
    anchor = AgentState(x, y, h, s)
    loose = enumerate_gamma_star(anchor, env, [Observation(t, 0, 0, 10)], 3)
    obs = Observation(t, mx, my, r)
    strict = enumerate_gamma_star(anchor, env, [obs], 3)
    assert strict <= loose
    for traj in strict:
        assert len(traj) == 4 and trajectory_feasible(traj, env) and consistent_with(traj, obs)


def test_node_budget_guard():
    env = env_from(MICRO_MAPS["open"])
    with pytest.raises(CapacityExceeded):
        enumerate_gamma_star(AgentState(2, 2, E, 1), env, [], 4, node_budget=50)


def test_anchor_inconsistent_with_observation_gives_empty_set():
    env = env_from(MICRO_MAPS["open"])
    assert enumerate_gamma_star(AgentState(0, 0, E, 0), env, [Observation(0, 5, 5, 0)], 2) == set()


def test_coverage_examples():
    env = env_from(CORRIDOR)
    star = enumerate_gamma_star(AgentState(0, 0, E, 1), env, [], 2)
    ordered = sorted(star, key=Trajectory.sort_key)
    assert coverage(star, star) == 1.0
    assert coverage(set(), star) == 0.0
    assert coverage(ordered[: len(ordered) // 2], star) == pytest.approx((len(ordered) // 2) / len(ordered))
    foreign = Trajectory(0, (AgentState(9, 9, E, 0),))
    assert coverage_detail(star | {foreign}, star) == (1.0, len(star), 1)
    with pytest.raises(EmptyGroundTruth):
        coverage(star, set())


def _oracle_report():
    env = env_from(MICRO_MAPS["open"])
    cfg = RunConfig(depth=2)
    windows = []
    for i, (t, anchor) in enumerate([(0, AgentState(2, 2, E, 1)), (2, AgentState(4, 2, E, 1))]):
        star = enumerate_gamma_star(anchor, env, [Observation(t, anchor.x, anchor.y, 0)], 2, t)
        windows.append(WindowMetrics(window=i, anchor=anchor, start_time=t, valid_count=9,
                                     invalid_count=3, distinct_vlm_valid_count=4,
                                     hypotheses=frozenset(star)))
    return env, build_report("X", "trace", cfg, windows, env)


def test_oracle_against_itself_is_full_coverage():
    env, report = _oracle_report()
    assert report.coverage == 1.0 and report.unsound_count == 0
    assert report.per_window_invalid_rate == [0.25, 0.25]
    assert report.per_window_distinct_valid == [4, 4]
    assert recompute_coverage(report, env) == 1.0


def test_report_roundtrip_is_lossless():
    _, report = _oracle_report()
    again = CoverageReport.from_json(report.to_json())
    assert again.to_json() == report.to_json()
    assert again.hypothesis_union() == report.hypothesis_union()
    assert reports_to_csv([again]) == reports_to_csv([report])
    assert reports_to_csv([report]).count("\n") == 3

import pytest

from trajhyp.core import AgentState, Observation, chebyshev
from trajhyp.errors import ParseError, ValidationError
from trajhyp.oracle_eval import enumerate_gamma_star
from trajhyp.scenarios import (BUNDLED_IDS, bundled, load_scenario, parse_scenario, resolve,
                               simulate_observations, simulate_truth)
from trajhyp.world_model import trajectory_feasible

SMALL = """6 3
......
......
......
id = S1
anchor = 1 1 E 1
obs_times = 0 2 4
"""


def star_of(sc, depth=3):
    a = sc.target_anchor
    return enumerate_gamma_star(a, sc.env, [Observation(sc.obs_times[0], a.x, a.y, 0)], depth,
                                sc.obs_times[0])


def test_bundled_scenarios_load_and_are_multimodal():
    scs = bundled()
    assert [s.id for s in scs] == list(BUNDLED_IDS)
    for sc in scs:
        assert 12 <= sc.env.width <= 20 and 12 <= sc.env.height <= 20
        assert len(star_of(sc)) >= 2, sc.id


def test_t4_is_a_two_lane_road():
    sc = resolve("t4")
    dirs = {sc.env.lane_direction(x, y) for y in range(sc.env.height) for x in range(sc.env.width)}
    assert dirs - {None} == {0, 4}
    a = sc.target_anchor
    assert sc.env.lane_direction(a.x, a.y) == a.heading


def test_t5_has_straight_and_turn_paths():
    sc = resolve("t5")
    star = star_of(sc)
    assert any(sc.ends_in("straight", t) for t in star)
    assert any(sc.ends_in("turn", t) for t in star)


def test_t2_paths_stay_in_the_channel():
    sc = resolve("t2")
    channel = {(x, y) for y in range(sc.env.height) for x in range(sc.env.width)
               if sc.env.navigable(x, y)}
    assert {y for _, y in channel} == {5, 6, 7}
    for t in star_of(sc):
        assert all((s.x, s.y) in channel for s in t.states)


def test_t1_and_t3_have_yield_cells():
    for sid in ("t1", "t3"):
        assert resolve(sid).env.rules.yield_cells


def test_parse_small_scenario():
    sc = parse_scenario(SMALL + "depth = 3\nregion.end = 4 0 5 2\n")
    assert sc.target_anchor == AgentState(1, 1, 0, 1)
    assert sc.config().depth == 3 and sc.config(seed=5).seed == 5
    assert sc.in_region("end", 5, 1) and not sc.in_region("end", 1, 1)


@pytest.mark.parametrize("extra,exc", [
    ("anchor = 9 9 E 1\n", ValidationError),
    ("obs_times = 0 2 2\n", ValidationError),
    ("obs_times = 0 9\n", ValidationError),
    ("noise_radius = -1\n", ValidationError),
    ("anchor = 1 1 UP 1\n", ParseError),
    ("colour = red\n", ParseError),
    ("depth = deep\n", ParseError),
    ("branching = 0\n", ValidationError),
])
def test_invalid_scenarios(extra, exc):
    lines = [l for l in SMALL.splitlines() if not l.startswith(extra.split("=")[0].strip() + " ")]
    with pytest.raises(exc):
        parse_scenario("\n".join(lines) + "\n" + extra)


def test_anchor_in_obstacle_is_rejected():
    with pytest.raises(ValidationError, match="obstacle"):
        parse_scenario(SMALL.replace("......\n......\n......", "......\n.#....\n......"))


def test_missing_required_key():
    with pytest.raises(ValidationError, match="anchor"):
        parse_scenario(SMALL.replace("anchor = 1 1 E 1\n", ""))


def test_missing_file_names_the_path(tmp_path):
    with pytest.raises(ParseError, match="nope.scn"):
        load_scenario(tmp_path / "nope.scn")


@pytest.mark.parametrize("sid", BUNDLED_IDS)
def test_simulated_observations_follow_a_feasible_truth(sid):
    sc = resolve(sid)
    for seed in (1, 2, 3):
        truth = simulate_truth(sc, seed)
        assert trajectory_feasible(truth, sc.env)
        obs = simulate_observations(sc, seed)
        assert [o.time for o in obs] == list(sc.obs_times)
        assert (obs[0].measured_x, obs[0].measured_y) == sc.target_anchor[:2]
        for o in obs:
            s = truth.state_at(o.time)
            assert chebyshev(s.x, s.y, o.measured_x, o.measured_y) <= o.noise_radius
            assert sc.env.navigable(o.measured_x, o.measured_y)
        assert obs == simulate_observations(sc, seed)

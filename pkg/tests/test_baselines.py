import pytest

from conftest import CORRIDOR, MICRO_MAPS, env_from
from sweep_cache import SEEDS, batch, scenarios
from trajhyp.baselines import run_cot, run_giot, run_tot
from trajhyp.core import AgentState, Observation, RunConfig
from trajhyp.engine import initial_state, run_window
from trajhyp.generators import ScriptedGenerator
from trajhyp.oracle_eval import coverage, enumerate_gamma_star
from trajhyp.scenarios import simulate_observations
from trajhyp.world_model import trajectory_feasible

E = 0


def first_window(sc, seed):
    return sc.env, sc.target_anchor, simulate_observations(sc, seed)[0], sc.config(seed=seed)


def test_cot_in_a_corridor_is_one_path():
    env = env_from(CORRIDOR)
    anchor = AgentState(0, 0, E, 1)
    out = run_cot(env, anchor, Observation(0, 0, 0, 0), RunConfig(depth=3), ScriptedGenerator(1))
    assert len(out) == 1
    (traj,) = out
    assert len(traj) == 4 and trajectory_feasible(traj, env)


class ForwardOnly:
    def propose(self, ctx, state, k):
        return [AgentState(state.x + 1, state.y, E, 1)]


def test_cot_dead_end_is_empty():
    env = env_from("4 1\n..#.\n")
    out = run_cot(env, AgentState(0, 0, E, 1), Observation(0, 0, 0, 0), RunConfig(depth=3), ForwardOnly())
    assert out == set()


def test_giot_single_round_is_one_plain_pass():
    for sc in scenarios()[:3]:
        env, anchor, obs, cfg = first_window(sc, 3)
        giot = run_giot(env, anchor, obs, cfg, ScriptedGenerator(3), rounds=1)
        tot = run_tot(env, anchor, obs, cfg.replace(iterations=1), ScriptedGenerator(3))
        assert giot == tot
    with pytest.raises(ValueError):
        run_giot(env, anchor, obs, cfg, ScriptedGenerator(3), rounds=0)


class Recorder:
    def __init__(self, inner):
        self.inner = inner
        self.rounds = {}

    def propose(self, ctx, state, k):
        out = self.inner.propose(ctx, state, k)
        self.rounds.setdefault(ctx.iteration, []).extend((state, c) for c in out)
        return out


def test_giot_rounds_never_repeat_a_proposal():
    sc = scenarios()[1]
    env, anchor, obs, cfg = first_window(sc, 2)
    rec = Recorder(ScriptedGenerator(2))
    run_giot(env, anchor, obs, cfg, rec, rounds=3)
    seen = set()
    for it in sorted(rec.rounds):
        pairs = set(rec.rounds[it])
        assert not pairs & seen
        seen |= pairs


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_giot_coverage_is_non_decreasing_in_rounds(seed):
    for sc in scenarios():
        env, anchor, obs, cfg = first_window(sc, seed)
        star = enumerate_gamma_star(anchor, env, [Observation(obs.time, anchor.x, anchor.y, 0)], cfg.depth)
        covs = [coverage(run_giot(env, anchor, obs, cfg, ScriptedGenerator(seed), rounds=n), star)
                for n in (1, 2, 3)]
        assert covs == sorted(covs), (sc.id, covs)


def test_tot_is_trace_without_critic_and_feedback():
    for sc in scenarios():
        env, anchor, obs, cfg = first_window(sc, 5)
        tot = run_tot(env, anchor, obs, cfg, ScriptedGenerator(5))
        ablated = cfg.replace(critic_samples=0, feedback_enabled=False)
        st = initial_state(env, anchor, obs, ablated)
        _, m = run_window(st, ScriptedGenerator(5), env, ablated)
        assert tot == set(m.hypotheses)


@pytest.mark.parametrize("seed", SEEDS)
def test_enrichment_only_adds(seed):
    for sc in scenarios():
        env, anchor, obs, cfg = first_window(sc, seed)
        tot = run_tot(env, anchor, obs, cfg, ScriptedGenerator(seed))
        plain = cfg.replace(feedback_enabled=False)
        _, m = run_window(initial_state(env, anchor, obs, plain), ScriptedGenerator(seed), env, plain)
        assert tot <= set(m.hypotheses)
        # with feedback on, the first iteration sees an empty context, so it matches too
        one = cfg.replace(iterations=1)
        tot1 = run_tot(env, anchor, obs, one, ScriptedGenerator(seed))
        _, m1 = run_window(initial_state(env, anchor, obs, one), ScriptedGenerator(seed), env, one)
        assert tot1 <= set(m1.hypotheses)


def test_coverage_dominance_per_scenario_and_seed():
    cot, _ = batch("cot")
    tot, _ = batch("tot")
    trace_nf, _ = batch("trace", False)
    for key in cot:
        assert cot[key].coverage <= tot[key].coverage, key
        assert tot[key].coverage <= trace_nf[key].coverage, key


def test_every_method_output_is_sound():
    for method in ("cot", "giot", "tot", "trace"):
        reports, _ = batch(method)
        assert all(r.unsound_count == 0 for r in reports.values()), method

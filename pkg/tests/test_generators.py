import json

import pytest
from hypothesis import given, settings, strategies as st

from conftest import MICRO_MAPS, env_from
from trajhyp.core import AgentState, Observation
from trajhyp.errors import ExternalGeneratorFailure
from trajhyp.generators import (GeneratorContext, OffsetMotif, RejectionNote, ScriptedGenerator,
                                ScriptedWeights, context_to_request, learned_fraction,
                                parse_response, rule_awareness, scripted_rank)
from trajhyp.world_model import kinematic_candidates, violation

E, NE, N, NW, W, SW, S, SE = range(8)


def ctx_for(env, anchor, **kw):
    return GeneratorContext(env=env, anchor=anchor, last_obs=Observation(0, anchor.x, anchor.y, 0), **kw)


def test_top_candidate_in_a_straight_lane_is_straight_on():
    env = env_from(MICRO_MAPS["lanes"])
    s = AgentState(2, 1, E, 1)
    # heading, speed and lane terms are all maximal for (3,1,E,1); the speed-2
    # twin loses half the speed term and the same obstacle-proximity term applies
    assert ScriptedGenerator(7).propose(ctx_for(env, s), s, 1) == [AgentState(3, 1, E, 1)]


def test_enclosed_conservative_generator_only_stops_in_place():
    env = env_from("3 3\n###\n#.#\n###\n")
    s = AgentState(1, 1, E, 0)
    gen = ScriptedGenerator(3, ScriptedWeights(conservatism=1.0))
    out = gen.propose(ctx_for(env, s), s, 3)
    assert out and all((c.x, c.y, c.speed) == (1, 1, 0) for c in out)


def test_propose_is_deterministic_and_bounded():
    env = env_from(MICRO_MAPS["open"])
    s = AgentState(2, 2, E, 1)
    ctx = ctx_for(env, s)
    a = ScriptedGenerator(11).propose(ctx, s, 3)
    b = ScriptedGenerator(11).propose(ctx, s, 3)
    assert a == b and len(a) <= 3 and len(set(a)) == len(a)
    with pytest.raises(ValueError):
        ScriptedGenerator(11).propose(ctx, s, 0)


def test_persistence_terms_are_maximal_for_an_unchanged_candidate():
    env = env_from(MICRO_MAPS["open"])
    s = AgentState(2, 2, E, 1)
    ctx = ctx_for(env, s)
    w = ScriptedWeights(lane=0.0, obstacle=0.0)
    same = scripted_rank(s, AgentState(3, 2, E, 1), ctx, w)
    assert same == pytest.approx(w.heading + w.speed)
    for c in kinematic_candidates(s, env.rules):
        assert scripted_rank(s, c, ctx, w) <= same


def test_motif_bonus_raises_matching_candidate():
    env = env_from(MICRO_MAPS["open"])
    s = AgentState(2, 2, E, 1)
    left = AgentState(3, 1, NE, 1)
    plain = ctx_for(env, s)
    motifs = tuple(OffsetMotif(((0, -1, 1, 0),)) for _ in range(5))
    with_motif = ctx_for(env, s, accepted_motifs=motifs)
    assert scripted_rank(s, left, with_motif) > scripted_rank(s, left, plain)


def test_rejection_notes_lower_a_repeated_violation():
    env = env_from(MICRO_MAPS["obstacles"])
    s = AgentState(1, 3, N, 1)
    bad = AgentState(1, 2, N, 1)
    assert violation(s, bad, env) is None
    bad = AgentState(2, 2, NE, 1)
    assert violation(s, bad, env) == "collision"
    notes = tuple(RejectionNote("collision", 1) for _ in range(10))
    assert scripted_rank(s, bad, ctx_for(env, s, rejection_notes=notes)) < scripted_rank(s, bad, ctx_for(env, s))


@given(st.integers(0, 500), st.integers(0, 500))
def test_learned_fraction_is_monotone_and_bounded(a, b):
    lo, hi = sorted((a, b))
    assert 0.0 <= learned_fraction(lo) <= learned_fraction(hi) <= 1.0


def test_rule_awareness_starts_at_the_prior():
    env = env_from(MICRO_MAPS["open"])
    ctx = ctx_for(env, AgentState(0, 0, E, 0))
    w = ScriptedWeights(conservatism=0.3)
    assert rule_awareness("collision", ctx, w) == pytest.approx(0.3)
    assert rule_awareness("kinematic", ctx, w) == 0.0


def test_slips_scale_with_conservatism():
    env = env_from(MICRO_MAPS["open"])

    def bad_count(conservatism):
        gen = ScriptedGenerator(5, ScriptedWeights(conservatism=conservatism, near_miss_rate=1.0))
        n = 0
        for x in range(1, 5):
            for y in range(1, 5):
                s = AgentState(x, y, E, 1)
                n += sum(violation(s, c, env) == "kinematic" for c in gen.propose(ctx_for(env, s), s, 3))
        return n

    assert bad_count(1.0) == 0
    assert bad_count(0.0) > 0


def test_slip_probability_decays_with_kinematic_notes():
    env = env_from(MICRO_MAPS["open"])
    gen = ScriptedGenerator(1)
    s = AgentState(2, 2, E, 1)
    ps = [gen.slip_probability(ctx_for(env, s, rejection_notes=(RejectionNote("kinematic", 1),) * n))
          for n in (0, 10, 50, 200)]
    assert ps == sorted(ps, reverse=True) and ps[0] > ps[-1]


def test_exclusions_are_honoured():
    env = env_from(MICRO_MAPS["open"])
    s = AgentState(2, 2, E, 1)
    first = ScriptedGenerator(1).propose(ctx_for(env, s), s, 3)
    ctx = ctx_for(env, s, exclusions=frozenset((s, c) for c in first))
    second = ScriptedGenerator(1).propose(ctx, s, 3)
    assert not set(first) & set(second)


def test_request_and_response_codec():
    env = env_from(MICRO_MAPS["lanes"])
    s = AgentState(2, 1, E, 1)
    ctx = ctx_for(env, s, accepted_motifs=(OffsetMotif(((0, 0, 1, 0),)),),
                  rejection_notes=(RejectionNote("lane", 2, 1, 0),))
    req = json.loads(json.dumps(context_to_request(ctx, s, 3)))
    assert req["type"] == "propose" and req["k"] == 3
    assert env_from(req["map"]).to_text() == env.to_text()
    assert RejectionNote.from_record(req["rejection_notes"][0]) == ctx.rejection_notes[0]
    assert OffsetMotif.from_record(req["accepted_motifs"][0]) == ctx.accepted_motifs[0]

    line = json.dumps({"type": "candidates", "states": [[3, 1, 0, 1], {"x": 3, "y": 1, "heading": 0, "speed": 1}]})
    assert parse_response(line, 3) == [AgentState(3, 1, 0, 1)]
    for bad in ("not json", '{"type": "other"}', '{"type": "candidates", "states": 3}',
                '{"type": "candidates", "states": [[1, 2, 9, 0]]}',
                '{"type": "candidates", "states": [[1, 2]]}',
                '{"type": "candidates", "states": [[0,0,0,0],[1,0,0,1]]}'):
        with pytest.raises(ExternalGeneratorFailure):
            parse_response(bad, 1)

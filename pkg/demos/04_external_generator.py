"""
Plugging in an external generator
=================================

Any program that reads one JSON request per line on stdin and answers with a
``candidates`` message can stand in for the scripted generator. This one
writes a tiny peer to a temporary file and drives a single run with it. The
peer keeps the feasible candidates and prefers the smallest change of heading,
which is roughly what a cautious driver would do.
"""

import sys
import tempfile
import textwrap
from pathlib import Path

from trajhyp import ExternalGenerator, resolve, run_method

PEER = textwrap.dedent("""
    import json, sys
    from trajhyp.core import heading_diff, state_from_record, state_to_record
    from trajhyp.world_model import is_feasible, kinematic_candidates, parse_map

    for line in sys.stdin:
        req = json.loads(line)
        env, _ = parse_map(req["map"])
        state = state_from_record(req["state"])
        cands = [c for c in kinematic_candidates(state, env.rules) if is_feasible(state, c, env)]
        cands.sort(key=lambda c: (abs(heading_diff(c.heading, state.heading)), abs(c.speed - 1)))
        cands = cands[: req["k"]]
        print(json.dumps({"type": "candidates",
                          "states": [state_to_record(c) for c in cands]}), flush=True)
""")

with tempfile.TemporaryDirectory() as tmp:
    peer = Path(tmp) / "peer.py"
    peer.write_text(PEER)
    sc = resolve("t1")
    with ExternalGenerator([sys.executable, str(peer)], timeout=10) as gen:
        report = run_method(sc, "trace", sc.config(seed=1, iterations=2), generator=gen)
    print(f"coverage {report.coverage:.3f}, invalid rate per window {report.per_window_invalid_rate}")

# the same thing from the shell:
#   trajhyp run --scenario t1 --generator external --cmd "python3 peer.py"

"""Independent reference implementations used as test oracles.

These are written from the rule definitions rather than by calling into the
package's own feasibility code, so agreement is evidence and not tautology.
"""

from trajhyp.core import AgentState, Trajectory

VECTORS = {0: (1, 0), 1: (1, -1), 2: (0, -1), 3: (-1, -1), 4: (-1, 0), 5: (-1, 1), 6: (0, 1), 7: (1, 1)}


def _cell_ok(env, x, y):
    if not (0 <= x < env.width and 0 <= y < env.height):
        return False
    return env.cells[y][x].kind in ("free", "lane")


def naive_feasible(prev, nxt, env):
    r = env.rules
    if not (0 <= nxt.x < env.width and 0 <= nxt.y < env.height):
        return False
    if nxt.speed not in range(r.max_speed + 1) or abs(nxt.speed - prev.speed) > r.max_speed_delta:
        return False
    turn = min((nxt.heading - prev.heading) % 8, (prev.heading - nxt.heading) % 8)
    if prev.speed > 0 and turn > r.max_heading_delta:
        return False
    dx, dy = VECTORS[nxt.heading]
    if (nxt.x, nxt.y) != (prev.x + nxt.speed * dx, prev.y + nxt.speed * dy):
        return False
    # movement is always along one heading, so the swept cells are the unit steps
    for i in range(1, nxt.speed + 1):
        if not _cell_ok(env, prev.x + i * dx, prev.y + i * dy):
            return False
    if not _cell_ok(env, nxt.x, nxt.y):
        return False
    zone = env.cells[nxt.y][nxt.x]
    if zone.kind == "lane":
        off = min((nxt.heading - zone.lane_direction) % 8, (zone.lane_direction - nxt.heading) % 8)
        if off > r.lane_tolerance:
            return False
    if (nxt.x, nxt.y) in r.yield_cells and nxt.speed > r.yield_speed_cap:
        return False
    return True


def all_states(env):
    for y in range(env.height):
        for x in range(env.width):
            for h in range(8):
                for s in range(3):
                    yield AgentState(x, y, h, s)


def naive_successors(state, env):
    return {n for n in all_states(env) if naive_feasible(state, n, env)}


def naive_gamma_star(anchor, env, observations, depth, start_time=0):
    def consistent(state, t):
        return all(max(abs(state.x - o.measured_x), abs(state.y - o.measured_y)) <= o.noise_radius
                   for o in observations if o.time == t)

    def rec(path, t):
        if len(path) == depth + 1:
            return [tuple(path)]
        out = []
        for n in naive_successors(path[-1], env):
            if consistent(n, t + 1):
                out.extend(rec(path + [n], t + 1))
        return out

    if not consistent(anchor, start_time):
        return set()
    return {Trajectory(start_time, p) for p in rec([anchor], start_time)}


def brute_force_counterfactuals(baseline, env, obs):
    """Every feasible, observation-consistent trajectory that differs from
    ``baseline`` and whose states are each within one unit of the baseline
    state in x, y, heading (mod 8) and speed (clamped to 0..2)."""
    options = []
    for s in baseline.states[1:]:
        opts = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dh in (-1, 0, 1):
                    for sp in sorted({min(2, max(0, s.speed + d)) for d in (-1, 0, 1)}):
                        opts.append(AgentState(s.x + dx, s.y + dy, (s.heading + dh) % 8, sp))
        options.append(opts)

    out = set()

    def rec(path):
        i = len(path) - 1
        if i == len(options):
            traj = Trajectory(baseline.start_time, tuple(path))
            if traj.states != baseline.states:
                st = traj.state_at(obs.time) if obs is not None else None
                if st is None or max(abs(st.x - obs.measured_x), abs(st.y - obs.measured_y)) <= obs.noise_radius:
                    out.add(traj)
            return
        for cand in options[i]:
            if naive_feasible(path[-1], cand, env):
                rec(path + [cand])

    rec([baseline.states[0]])
    return out

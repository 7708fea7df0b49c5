"""Command-line entry point.

Subcommands:

``run``
    one method on one scenario; writes a report line and optionally a CSV.
``oracle``
    enumerates the ground-truth set for a scenario anchor (or for every
    window of a saved report) and prints its size and digest.
``eval``
    joins saved reports with fresh ground truth and prints the coverage,
    invalid-rate and diversity tables.
``sweep``
    ``run`` over seeds 1..S for several scenarios and methods, appending to
    a report file and skipping runs that are already in it.

Exit codes: 1 for bad input (parse or validation errors, missing files),
2 when enumeration exceeds the node budget, 3 when an external generator
fails. Diagnostics go to stderr; set ``TRACE_LOG`` to error, info or debug.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .baselines import METHODS
from .core import Observation, trajectory_to_record
from .errors import (CapacityExceeded, EmptyGroundTruth, ExternalGeneratorFailure, ParseError,
                     ValidationError)
from .generators import ExternalGenerator, ScriptedGenerator
from .oracle_eval import (CoverageReport, enumerate_gamma_star, gamma_star_digest,
                          recompute_coverage, reports_to_csv)
from .runner import run_method
from .scenarios import BUNDLED_IDS, resolve, simulate_observations

log = logging.getLogger("trajhyp")

EXIT_INPUT, EXIT_CAPACITY, EXIT_GENERATOR = 1, 2, 3


def _configure_logging():
    level = os.environ.get("TRACE_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        level = "error"
    logging.basicConfig(level=levels[level], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _add_run_flags(p: argparse.ArgumentParser, single: bool = True):
    if single:
        p.add_argument("--scenario", required=True,
                       help="scenario file, or a bundled id (t1..t5)")
        p.add_argument("--method", default="trace", choices=METHODS)
        p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--generator", default="scripted", choices=("scripted", "external"))
    p.add_argument("--cmd", help="generator program for --generator external")
    p.add_argument("--depth", type=int)
    p.add_argument("--branching", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--critic-samples", type=int)
    p.add_argument("--critic-keep", type=int)
    p.add_argument("--no-feedback", action="store_true")
    p.add_argument("--out", help="report file (one JSON record per line)")
    p.add_argument("--export-csv", help="per-window CSV export")


def _overrides(args) -> dict:
    out = {}
    for flag in ("depth", "branching", "iterations", "alpha", "beta", "critic_samples",
                 "critic_keep"):
        value = getattr(args, flag)
        if value is not None:
            out[flag] = value
    if args.no_feedback:
        out["feedback_enabled"] = False
    return out


def _config(scenario, args, seed):
    try:
        return scenario.config(seed=seed, **_overrides(args))
    except ValueError as exc:
        raise ValidationError(f"bad run configuration: {exc}") from None


def _generator(args, seed):
    if args.generator == "external":
        if not args.cmd:
            raise ValidationError("--generator external needs --cmd")
        return ExternalGenerator(args.cmd)
    return ScriptedGenerator(seed)


def _run_one(scenario, method, cfg, args) -> CoverageReport:
    generator = _generator(args, cfg.seed)
    try:
        return run_method(scenario, method, cfg, generator)
    finally:
        if isinstance(generator, ExternalGenerator):
            generator.close()


def _sweep_task(task) -> CoverageReport:
    name, method, cfg, args = task
    return _run_one(resolve(name), method, cfg, args)


def _summary(report: CoverageReport) -> str:
    return (f"{report.scenario_id} {report.method} seed={report.seed} "
            f"coverage={report.coverage:.4f} |G*|={report.gamma_star_size} "
            f"|G+|={report.gamma_dagger_size} unsound={report.unsound_count}")


def read_reports(path) -> list:
    reports = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                reports.append(CoverageReport.from_json(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad report record: {exc}", line=lineno, path=path) from None
    return reports


# -- subcommands -------------------------------------------------------------------

def cmd_run(args) -> int:
    scenario = resolve(args.scenario)
    cfg = _config(scenario, args, args.seed)
    report = _run_one(scenario, args.method, cfg, args)
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
    if args.export_csv:
        Path(args.export_csv).write_text(reports_to_csv([report]))
    print(_summary(report))
    return 0


def cmd_oracle(args) -> int:
    scenario = resolve(args.scenario)
    depth = args.depth or scenario.config().depth
    windows = []
    if args.report:
        for report in read_reports(args.report):
            if report.scenario_id != scenario.id:
                continue
            for w in report.windows:
                windows.append((w.start_time, w.anchor))
            break
        if not windows:
            raise ValidationError(f"{args.report}: no report for scenario {scenario.id}")
    else:
        first = simulate_observations(scenario, args.seed)[0]
        windows.append((first.time, scenario.target_anchor))
    records = []
    for start, anchor in windows:
        obs = Observation(start, anchor.x, anchor.y, 0)
        star = enumerate_gamma_star(anchor, scenario.env, [obs], depth, start, args.node_budget)
        digest = gamma_star_digest(star)
        print(f"{scenario.id} t={start} anchor={anchor} depth={depth} size={len(star)} digest={digest}")
        records.append({"start_time": start, "anchor": list(anchor), "depth": depth,
                        "size": len(star), "digest": digest,
                        "trajectories": [trajectory_to_record(t) for t in
                                         sorted(star, key=lambda t: t.sort_key())]})
    if args.out:
        Path(args.out).write_text(json.dumps({"scenario_id": scenario.id, "windows": records},
                                             sort_keys=True) + "\n")
    return 0


def _mean(values) -> float:
    return float(np.mean(values)) if values else float("nan")


def _format_table(title, header, rows) -> str:
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    lines = [title]
    for row in [header] + rows:
        lines.append("  ".join(str(c).rjust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)


def tables(reports) -> str:
    by = defaultdict(list)
    for r in reports:
        by[(r.scenario_id, r.method)].append(r)
    scenarios = sorted({r.scenario_id for r in reports})
    methods = [m for m in METHODS if any(r.method == m for r in reports)]
    n_windows = max(len(r.windows) for r in reports)

    cov_rows = []
    for sid in scenarios:
        cov_rows.append([sid] + [f"{100 * _mean([r.coverage for r in by[(sid, m)]]):.1f}"
                                 for m in methods])
    cov_rows.append(["mean"] + [f"{100 * _mean([r.coverage for r in reports if r.method == m]):.1f}"
                                for m in methods])
    out = [_format_table("coverage (%)", ["scenario"] + methods, cov_rows)]

    for label, field in (("invalid rate (%) per window", "per_window_invalid_rate"),
                         ("distinct generator-valid paths per window", "per_window_distinct_valid")):
        rows = []
        for m in methods:
            series = []
            for i in range(n_windows):
                vals = [getattr(r, field)[i] for r in reports if r.method == m and len(r.windows) > i]
                v = _mean(vals)
                series.append(f"{100 * v:.1f}" if field == "per_window_invalid_rate" else f"{v:.1f}")
            rows.append([m] + series)
        out.append(_format_table(label, ["method"] + [f"w{i + 1}" for i in range(n_windows)], rows))
    return "\n\n".join(out)


def cmd_eval(args) -> int:
    reports = []
    for path in args.reports:
        reports.extend(read_reports(path))
    if not reports:
        raise ValidationError("no reports to evaluate")
    digests = sorted({r.config_digest for r in reports})
    if args.digest:
        reports = [r for r in reports if r.config_digest == args.digest]
        if not reports:
            raise ValidationError(f"no report has config digest {args.digest}")
    elif len(digests) > 1:
        raise ValidationError("reports come from different run configurations "
                              f"({', '.join(digests)}); pick one with --digest")
    scenarios = {}
    for r in reports:
        if r.scenario_id not in scenarios:
            scenarios[r.scenario_id] = resolve(args.scenario_dir / f"{r.scenario_id.lower()}.scn"
                                               if args.scenario_dir else r.scenario_id)
        fresh = recompute_coverage(r, scenarios[r.scenario_id].env)
        if abs(fresh - r.coverage) > 1e-12:
            log.error("%s %s seed=%d: stored coverage %.6f, recomputed %.6f", r.scenario_id,
                      r.method, r.seed, r.coverage, fresh)
            raise ValidationError(f"coverage mismatch for {r.scenario_id}/{r.method}/seed {r.seed}")
        if r.unsound_count:
            log.warning("%s %s seed=%d: %d unsound hypotheses", r.scenario_id, r.method, r.seed,
                        r.unsound_count)
    print(tables(reports))
    if args.export_csv:
        Path(args.export_csv).write_text(reports_to_csv(reports))
    return 0


def cmd_sweep(args) -> int:
    scenario_names = args.scenarios or [s.lower() for s in BUNDLED_IDS]
    methods = args.methods or list(METHODS)
    for m in methods:
        if m not in METHODS:
            raise ValidationError(f"unknown method {m!r}")
    done = set()
    reports = []
    if args.out and Path(args.out).exists():
        for r in read_reports(args.out):
            done.add((r.scenario_id, r.method, r.seed, r.config_digest))
            reports.append(r)
    pending = []
    for name in scenario_names:
        scenario = resolve(name)
        for method in methods:
            for seed in range(1, args.seeds + 1):
                cfg = _config(scenario, args, seed)
                key = (scenario.id, method, seed, cfg.digest())
                if key in done:
                    log.info("skipping %s %s seed=%d (already in %s)", *key[:3], args.out)
                    continue
                done.add(key)
                pending.append((name, method, cfg, args))
    sink = open(args.out, "a") if args.out else None
    try:
        if args.jobs > 1 and len(pending) > 1:
            pool = ProcessPoolExecutor(max_workers=args.jobs)
            results = pool.map(_sweep_task, pending)
        else:
            pool = None
            results = map(_sweep_task, pending)
        # map yields in submission order, so the report file does not depend on --jobs
        for report in results:
            reports.append(report)
            if sink:
                sink.write(report.to_json() + "\n")
                sink.flush()
        if pool:
            pool.shutdown()
    finally:
        if sink:
            sink.close()
    wanted = {resolve(n).id for n in scenario_names}
    selected = [r for r in reports if r.scenario_id in wanted and r.method in methods
                and r.seed <= args.seeds]
    print(tables(selected))
    if args.export_csv:
        Path(args.export_csv).write_text(reports_to_csv(
            sorted(selected, key=lambda r: (r.scenario_id, METHODS.index(r.method), r.seed))))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajhyp", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one method on one scenario")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="enumerate the ground-truth trajectory set")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--depth", type=int)
    p.add_argument("--report", help="enumerate for every window of the first matching report")
    p.add_argument("--node-budget", type=int, default=10**7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("eval", help="tabulate saved reports against fresh ground truth")
    p.add_argument("reports", nargs="+")
    p.add_argument("--digest", help="only use reports with this config digest")
    p.add_argument("--scenario-dir", type=Path, help="directory of <id>.scn files (default: bundled)")
    p.add_argument("--export-csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run seeds 1..S over scenarios and methods")
    p.add_argument("--scenarios", nargs="+", help="scenario files or bundled ids (default: all)")
    p.add_argument("--methods", nargs="+", help=f"default: {' '.join(METHODS)}")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    _add_run_flags(p, single=False)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, EmptyGroundTruth) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: file not found", file=sys.stderr)
        return EXIT_INPUT
    except CapacityExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ExternalGeneratorFailure as exc:
        print(f"error: external generator: {exc}", file=sys.stderr)
        return EXIT_GENERATOR


if __name__ == "__main__":
    sys.exit(main())

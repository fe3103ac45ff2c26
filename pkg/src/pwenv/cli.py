"""Command-line front end.

    pwenv simulate        coverage CSV + per-receiver report for a scenario
    pwenv optimize        greedy + max-min tile assignment, before/after reports
    pwenv reproduce-paper baseline / greedy / optimized comparison on the reference room
    pwenv route           air-route report for a set of objectives
    pwenv serve           run the configuration service on a local TCP socket

All artifacts are plain CSV/text and byte-identical for identical invocations.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .optimize import (
    EvalReport,
    TileAssignment,
    evaluate_assignment,
    empty_assignment,
    greedy_assign,
    maxmin_search,
    report_to_csv,
    route_delay_spread,
)
from .raytrace import TraceConfig, coverage_map, coverage_to_csv
from .routing import Objective, build_tile_graph, plan_routes, routes_report
from .scene import Scenario, ScenarioError, build_paper_scenario, load_scenario_file, serialize

log = logging.getLogger("pwenv")

DEFAULT_SEED = 0
DEFAULT_BUDGET = 2000
DEFAULT_SERVICE_BUDGET = 300


class CliError(Exception):
    pass


def _scenario(args) -> Scenario:
    if args.scenario is None:
        return build_paper_scenario()
    try:
        return load_scenario_file(args.scenario)
    except OSError as exc:
        raise CliError(f"cannot read scenario {args.scenario}: {exc.strerror}") from None


def _trace_cfg(args) -> TraceConfig:
    cfg = TraceConfig(coherent=args.coherent)
    if args.max_depth is not None:
        cfg = replace(cfg, max_specular_depth=args.max_depth)
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")
    log.info("wrote %s", path)


def _objectives(path: str | None, scenario: Scenario) -> list[Objective]:
    """JSON list of objectives; default is one QOS objective per receiver."""
    if path is None:
        return [Objective(f"qos-{r.id}", "QOS", r.id) for r in scenario.receivers]
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read objectives {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"objectives {path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, list):
        raise CliError("objectives file must hold a JSON list")
    objs = []
    for i, o in enumerate(raw):
        try:
            avoid = o.get("avoid")
            objs.append(Objective(
                o["id"], o["kind"], o["device"], o.get("source"), o.get("radius"),
                tuple(avoid) if avoid is not None else None, o.get("delay_cap"),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(f"objectives[{i}]: {exc}") from None
    return objs


def _assignment_csv(assignment) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tile", "action", "owner"])
    w.writerows(assignment.to_rows())
    for rid in assignment.unserved:
        w.writerow(["", "UNSERVED", rid])
    return buf.getvalue()


def _comparison(stages: list[tuple[str, EvalReport, int]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "min_dbm", "mean_dbm", "max_dbm", "spread_db", "disconnected", "tiles"])
    for name, r, tiles in stages:
        w.writerow([name, f"{r.min:.6f}", f"{r.mean:.6f}", f"{r.max:.6f}", f"{r.max - r.min:.6f}", r.disconnected, tiles])
    return buf.getvalue()


def _per_receiver(stages: list[tuple[str, EvalReport, int]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["receiver"] + [name for name, _, _ in stages])
    for rid, _ in stages[0][1].per_receiver:
        w.writerow([rid] + [f"{r.power(rid):.6f}" for _, r, _ in stages])
    return buf.getvalue()


def _optimize(scenario: Scenario, args, cfg: TraceConfig):
    graph = build_tile_graph(scenario)
    base = scenario.with_functions({})
    baseline = evaluate_assignment(base, empty_assignment(), cfg=cfg)
    greedy = greedy_assign(base, graph=graph)
    greedy_rep = evaluate_assignment(base, greedy, cfg=cfg)
    best = maxmin_search(base, greedy, budget=args.budget, seed=args.seed, graph=graph, cfg=cfg)
    best_rep = evaluate_assignment(base, best, cfg=cfg)
    stages = [("baseline", baseline, 0), ("greedy", greedy_rep, greedy.tile_count), ("optimized", best_rep, best.tile_count)]
    return base, best, stages


def cmd_simulate(args) -> int:
    scenario = _scenario(args)
    cfg = _trace_cfg(args)
    if not scenario.transmitters:
        raise CliError("scenario has no transmitter")
    tx = scenario.transmitters[0]
    out = _out(args)
    height = args.height if args.height is not None else (scenario.receivers[0].position.z if scenario.receivers else 1.5)
    grid = coverage_map(scenario, tx, height, args.cell, cfg)
    _write(out / "coverage.csv", coverage_to_csv(grid))
    if scenario.receivers:
        rep = evaluate_assignment(scenario, TileAssignment(scenario.assignment()), cfg=cfg)
        _write(out / "report.csv", report_to_csv(rep, scenario))
        print(rep.summary())
    return 0


def cmd_optimize(args) -> int:
    scenario = _scenario(args)
    if not scenario.transmitters or not scenario.receivers:
        raise CliError("optimization needs a transmitter and at least one receiver")
    cfg = _trace_cfg(args)
    out = _out(args)
    base, best, stages = _optimize(scenario, args, cfg)
    _write(out / "assignment.csv", _assignment_csv(best))
    _write(out / "optimized_scenario.json", serialize(base.with_functions(best.functions)))
    _write(out / "before.csv", report_to_csv(stages[0][1], base))
    _write(out / "after.csv", report_to_csv(stages[2][1], base))
    sys.stdout.write(_comparison(stages))
    if best.unserved:
        raise CliError(f"no air-route for: {', '.join(best.unserved)}")
    return 0


def cmd_reproduce(args) -> int:
    scenario = build_paper_scenario() if args.scenario is None else _scenario(args)
    cfg = _trace_cfg(args)
    out = _out(args)
    t0 = time.perf_counter()
    base, best, stages = _optimize(scenario, args, cfg)
    log.info("optimization took %.1f s", time.perf_counter() - t0)
    table = _comparison(stages)
    _write(out / "comparison.csv", table)
    _write(out / "receivers.csv", _per_receiver(stages))
    _write(out / "assignment.csv", _assignment_csv(best))
    sys.stdout.write(table)
    return 0


def cmd_route(args) -> int:
    scenario = _scenario(args)
    objs = _objectives(args.objectives, scenario)
    graph = build_tile_graph(scenario)
    cfg = _trace_cfg(args)
    plan = plan_routes(objs, graph, scenario, K=args.k, rms_spread=lambda s, r: route_delay_spread(s, r, cfg))
    out = _out(args)
    routed = {r.objective_id for r in plan.routes}
    blocks = {oid: tiles for oid, tiles in plan.claims.items() if oid not in routed}
    text = routes_report(plan.routes, plan.infeasible, blocks)
    _write(out / "routes.tsv", text)
    sys.stdout.write(text)
    return 0


def cmd_serve(args) -> int:
    from .confservice import ConfigurationService, serve

    scenario = _scenario(args)
    objs = _objectives(args.objectives, scenario)
    svc = ConfigurationService(scenario, objs, seed=args.seed, budget=args.budget)
    print(f"configured {len(svc.state.functions)} tiles; {svc.report.summary()}", flush=True)
    serve(svc, args.host, args.port, ready=lambda a: print(f"listening on {a[0]}:{a[1]}", flush=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario JSON (default: built-in reference room)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"search seed (default: {DEFAULT_SEED})")
    common.add_argument("--max-depth", type=int, default=None, help="maximum specular reflection depth")
    common.add_argument("--budget", type=int, default=None, help="max-min search evaluations")
    common.add_argument("--coherent", action="store_true", help="sum path amplitudes with phase")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pwenv", description="Programmable wireless environment simulator.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    s = sub.add_parser("simulate", parents=[common], help="coverage map and receiver report")
    s.add_argument("--height", type=float, default=None, help="grid height in metres (default: receiver height)")
    s.add_argument("--cell", type=float, default=0.5, help="grid cell size in metres")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("optimize", parents=[common], help="greedy + max-min tile assignment")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("reproduce-paper", parents=[common], help="baseline vs optimized on the reference room")
    s.set_defaults(func=cmd_reproduce)

    s = sub.add_parser("route", parents=[common], help="air-route report for objectives")
    s.add_argument("--objectives", help="JSON list of objectives (default: QOS for every receiver)")
    s.add_argument("-k", type=int, default=8, help="candidate routes per objective")
    s.set_defaults(func=cmd_route)

    s = sub.add_parser("serve", parents=[common], help="run the configuration service")
    s.add_argument("--objectives", help="JSON list of objectives (default: QOS for every receiver)")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=7461)
    s.set_defaults(func=cmd_serve)
    return p


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.budget is None:
        args.budget = DEFAULT_SERVICE_BUDGET if args.command == "serve" else DEFAULT_BUDGET
    if args.budget < 1:
        print("pwenv: error: --budget must be >= 1", file=sys.stderr)
        return 2
    if args.max_depth is not None and args.max_depth < 0:
        print("pwenv: error: --max-depth must be >= 0", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (CliError, ScenarioError, ValueError, KeyError) as exc:
        print(f"pwenv: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Command-line experiment harness.

    swarm-ot case-study [--eta 10] [--out trace.csv]
    swarm-ot converge   [--agents 3 --waypoints 10 --seed 0] [--out trace.csv]
    swarm-ot dynamic    [--update-every 250 --seed 0] [--out epochs.csv]
    swarm-ot sim        [--scenario file.json] [--allocator ot|greedy] [--out visits.csv]
    swarm-ot compare    [--scenario file.json | --random-scenarios N --seed S] [--out table.csv]

Exit status is 0 on success, 1 when a golden check fails, 2 on any error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import casestudy
from .admm import AdmmConfig, run_until_converged
from .core import ENUMERATION_GUARD, Bounds, aggregate_utility, brute_force_optimal, random_instance
from .dynamic import extract_assignment
from .errors import MaxIterationsExceeded, SwarmOTError
from .experiments import compare, random_comparison, replay_update_protocol
from .sim import Allocator, MissionConfig, load_scenario, run_mission

EXIT_OK, EXIT_MISMATCH, EXIT_ERROR = 0, 1, 2


def _fmt(x: float) -> str:
    return f"{x:.6f}"


@contextlib.contextmanager
def _csv_out(path: str | None):
    """Yield a csv writer on ``path``; without a path, rows are discarded."""
    if path is None:
        yield csv.writer(io.StringIO())
        return
    with open(path, "w", newline="") as fh:
        yield csv.writer(fh, lineterminator="\n")


def _bundled_scenario() -> Path:
    return Path(str(resources.files("swarm_ot") / "data" / "demo_scenario.json"))


def _solver_config(args) -> AdmmConfig:
    return AdmmConfig(args.eta, args.epsilon, args.max_iterations)


def _write_trace(path: str | None, report) -> None:
    with _csv_out(path) as w:
        w.writerow(["iteration", "aggregate_utility", "primal_residual"])
        for i, (u, r) in enumerate(zip(report.utility_trace, report.residual_trace), start=1):
            w.writerow([i, _fmt(u), f"{r:.3e}"])


def cmd_case_study(args) -> int:
    topology, params, bounds = casestudy.case_study()
    try:
        state, report = run_until_converged(topology, params, bounds, _solver_config(args))
    except MaxIterationsExceeded as exc:
        _write_trace(args.out, exc.report)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _write_trace(args.out, report)
    assignment = extract_assignment(state, topology, args.epsilon)
    utility = aggregate_utility(assignment, params)
    print(f"iterations: {report.iterations}")
    print(f"assignment: {assignment}")
    print(f"utility: {utility:g}")
    if assignment != casestudy.EXPECTED_ASSIGNMENT:
        print(f"mismatch: expected {casestudy.EXPECTED_ASSIGNMENT}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_converge(args) -> int:
    rng = np.random.default_rng(args.seed)
    topology, params = random_instance(rng, args.agents, args.waypoints)
    bounds = Bounds.matching(args.agents, args.waypoints)
    try:
        state, report = run_until_converged(topology, params, bounds, _solver_config(args))
    except MaxIterationsExceeded as exc:
        _write_trace(args.out, exc.report)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _write_trace(args.out, report)
    assignment = extract_assignment(state, topology, args.epsilon)
    utility = aggregate_utility(assignment, params)
    print(f"iterations: {report.iterations}")
    print(f"assignment: {assignment}")
    print(f"utility: {utility:g}")
    if args.agents <= ENUMERATION_GUARD:
        best, optimum = brute_force_optimal(topology, params)
        print(f"brute-force optimum: {optimum:g} {best}")
        if utility != optimum:
            return EXIT_MISMATCH
    return EXIT_OK


def cmd_dynamic(args) -> int:
    try:
        epochs = replay_update_protocol(args.update_every, args.seed, args.eta, args.epsilon)
    except MaxIterationsExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    status = EXIT_OK
    with _csv_out(args.out) as w:
        w.writerow(["epoch", "waypoints", "iterations", "primal_residual", "drift", "utility", "optimum", "assignment"])
        for e in epochs:
            w.writerow(
                [e.epoch, e.active_waypoints, e.iterations, f"{e.primal_residual:.3e}", f"{e.drift:.3e}",
                 _fmt(e.utility), _fmt(e.optimum), str(e.assignment)]
            )
    for e in epochs:
        flag = "ok" if e.utility == e.optimum else "MISMATCH"
        print(f"epoch {e.epoch}: {e.iterations} iterations, utility {e.utility:g} / optimum {e.optimum:g} {flag}")
        if e.utility != e.optimum:
            status = EXIT_MISMATCH
    return status


def _mission_config(args) -> MissionConfig:
    eta = args.eta if args.eta is not None else MissionConfig.eta
    return MissionConfig(eta=eta, epsilon=args.epsilon, budget=args.max_iterations)


def cmd_sim(args) -> int:
    scenario = load_scenario(args.scenario or _bundled_scenario())
    report = run_mission(scenario, Allocator(args.allocator), _mission_config(args))
    with _csv_out(args.out) as w:
        w.writerow(["agent", "waypoint", "time", "reading"])
        for agent, waypoint, t in report.visit_order:
            w.writerow([agent + 1, waypoint + 1, _fmt(t), report.readings[waypoint]])
    for a, d in enumerate(report.per_agent_distance, start=1):
        print(f"agent {a}: {d:.1f} m")
    print(f"total: {report.total_distance:.1f} m")
    return EXIT_OK


def cmd_compare(args) -> int:
    config = _mission_config(args)
    if args.random_scenarios:
        rows = random_comparison(args.random_scenarios, args.seed, config)
        with _csv_out(args.out) as w:
            w.writerow(["seed", "greedy_total", "ot_total", "ot_wins"])
            for r in rows:
                w.writerow([r.seed, _fmt(r.greedy_total), _fmt(r.ot_total), int(r.ot_wins)])
        greedy = np.mean([r.greedy_total for r in rows])
        ot = np.mean([r.ot_total for r in rows])
        win_rate = np.mean([r.ot_wins for r in rows])
        print(f"scenarios: {len(rows)}")
        print(f"mean greedy total: {greedy:.1f} m")
        print(f"mean OT total: {ot:.1f} m")
        print(f"OT win rate: {win_rate:.2f}")
        if not all(r.greedy_complete and r.ot_complete for r in rows):
            print("error: a mission skipped or repeated a waypoint", file=sys.stderr)
            return EXIT_ERROR
        return EXIT_OK

    scenario = load_scenario(args.scenario or _bundled_scenario())
    reports = compare(scenario, config)
    with _csv_out(args.out) as w:
        w.writerow(["allocator", "agent", "distance"])
        for alloc, rep in reports.items():
            for a, d in enumerate(rep.per_agent_distance, start=1):
                w.writerow([alloc.value, a, _fmt(d)])
            w.writerow([alloc.value, "total", _fmt(rep.total_distance)])
    print(f"{'agent':>6} {'greedy':>9} {'ot':>9}")
    g, o = reports[Allocator.GREEDY], reports[Allocator.DYNAMIC_OT]
    for a, (dg, do) in enumerate(zip(g.per_agent_distance, o.per_agent_distance), start=1):
        print(f"{a:>6} {dg:>8.1f}m {do:>8.1f}m")
    print(f"{'total':>6} {g.total_distance:>8.1f}m {o.total_distance:>8.1f}m")
    return EXIT_OK


def _positive_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(s: str) -> int:
    v = int(s)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarm-ot", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, eta_default=10.0, max_iterations=10_000):
        p.add_argument("--eta", type=_positive_float, default=eta_default)
        p.add_argument("--epsilon", type=_positive_float, default=1e-6)
        p.add_argument("--max-iterations", type=_positive_int, default=max_iterations)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="CSV output path")

    p = sub.add_parser("case-study", help="three agents, ten waypoints")
    common(p)
    p.set_defaults(func=cmd_case_study)

    p = sub.add_parser("converge", help="trace the solver on a random instance")
    common(p)
    p.add_argument("--agents", type=_positive_int, default=3)
    p.add_argument("--waypoints", type=_positive_int, default=10)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("dynamic", help="case study with periodic network updates")
    common(p, max_iterations=500)
    p.add_argument("--update-every", type=_positive_int, default=250)
    p.set_defaults(func=cmd_dynamic)

    p = sub.add_parser("sim", help="fly one mission")
    common(p, eta_default=None, max_iterations=MissionConfig.budget)
    p.add_argument("--scenario", help="scenario JSON (default: bundled demo)")
    p.add_argument("--allocator", choices=[a.value for a in Allocator], default=Allocator.DYNAMIC_OT.value)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("compare", help="greedy vs dynamic OT distances")
    common(p, eta_default=None, max_iterations=MissionConfig.budget)
    p.add_argument("--scenario", help="scenario JSON (default: bundled demo)")
    p.add_argument("--random-scenarios", type=_positive_int, metavar="N")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SwarmOTError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

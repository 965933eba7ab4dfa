"""Command line entry point: run, compare and validate scenario files."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ScenarioError
from .harness import compare_weight_profiles, format_table, run_scenario, write_traces
from .scenario import load_profiles, load_scenario

EXIT_OK, EXIT_USAGE, EXIT_COLLISION, EXIT_PLANNING = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is reserved for collisions here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _summary(r) -> dict:
    return {
        "name": r.name, "status": r.status, "collision": r.collision,
        "final_pose": [r.final_pose.x, r.final_pose.y, r.final_pose.heading],
        "final_pose_error": list(r.final_pose_error), "max_slack": r.max_slack,
        "infeasible_cycles": r.infeasible_cycles, "emergency_stops": r.emergency_stops,
        "relaxation_requests": r.relaxation_requests, "mean_solve_time": r.mean_solve_time,
        "max_solve_time": r.max_solve_time, "mean_cycle_time": r.mean_cycle_time, "message": r.message,
    }


def _cmd_run(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    r = run_scenario(sc)
    if args.out:
        if args.no_plots:
            write_traces(r, args.out)
        else:
            from .plots import emit_plots
            emit_plots(r, args.out)
    print(json.dumps(_summary(r), indent=2))
    if r.status == "planning_failure":
        return EXIT_PLANNING
    return EXIT_COLLISION if r.collision else EXIT_OK


def _cmd_compare(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    rows = compare_weight_profiles(sc, load_profiles(args.profiles))
    print(format_table(rows))
    return EXIT_OK


def _cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    print(f"{sc.name}: ok ({sc.cycles} cycles, {sc.plant_steps} plant steps, "
          f"{len(sc.world.obstacles)} obstacles)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mpcguide", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="simulate a scenario")
    run.add_argument("scenario")
    run.add_argument("--out", help="directory for traces and plots")
    run.add_argument("--seed", type=int)
    run.add_argument("--no-plots", action="store_true", help="write traces only")
    run.set_defaults(func=_cmd_run)
    cmp_ = sub.add_parser("compare", help="run a scenario under several weight profiles")
    cmp_.add_argument("scenario")
    cmp_.add_argument("--profiles", required=True)
    cmp_.add_argument("--seed", type=int)
    cmp_.set_defaults(func=_cmd_compare)
    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("scenario")
    val.set_defaults(func=_cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

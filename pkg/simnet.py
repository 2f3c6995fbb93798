#!/usr/bin/env python3
# simnet.py - Command line entry point
"""
Usage:
    python simnet.py run <scenario.ini> [--seed N] [--trace out.log] [--csv out.csv] [--queries file]
    python simnet.py sweep <scenario.ini> --vary <key> --values a,b,c --csv out.csv [--jobs N]
    python simnet.py validate <scenario.ini>

Exit codes: 0 ok, 1 usage error, 2 scenario error, 3 runtime error.
Environment (.env honoured): SIMNET_LOG_DIR, SIMNET_LOG_LEVEL, SIMNET_JOBS.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from config import EXIT_OK, EXIT_RUNTIME, EXIT_SCENARIO, EXIT_USAGE
from dns_wire import WireError
from experiment import format_summary, run_scenario, sweep, write_csv
from nodes import QueryFileError, ResolverConfigError
from scenario import ScenarioError, UnknownParameterError, load_scenario
from sim_kernel import SchedulingError, SimulationError
from sim_logging import log_error, setup_sim_logging
from zone_config import ZoneParseError

logger = logging.getLogger(__name__)

# raised while reading or building a scenario
SCENARIO_ERRORS = (ScenarioError, ZoneParseError, QueryFileError, ResolverConfigError, SchedulingError)


class SimnetArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = SimnetArgumentParser(
        prog="simnet",
        description="Deterministic DNS / mDNS-SD network simulator"
    )
    parser.add_argument("--log-dir", default=os.getenv("SIMNET_LOG_DIR"),
                        help="Directory for the JSONL log (default: logs/ or SIMNET_LOG_DIR)")
    parser.add_argument("--log-level", default=os.getenv("SIMNET_LOG_LEVEL"),
                        help="Console log level (default: INFO or SIMNET_LOG_LEVEL)")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run one scenario")
    run.add_argument("scenario", type=str, help="Scenario file")
    run.add_argument("--seed", type=int, help="Master seed (default: the scenario's)")
    run.add_argument("--trace", type=str, help="Write the event trace to this file")
    run.add_argument("--csv", type=str, help="Write per-node counters to this CSV file")
    run.add_argument("--queries", type=str, help="Query file for every traffic generator")
    run.add_argument("--check-invariants", action="store_true",
                     help="Verify kernel bookkeeping after every event (slow)")

    sweep_cmd = commands.add_parser("sweep", help="Run a scenario once per parameter value")
    sweep_cmd.add_argument("scenario", type=str, help="Scenario file")
    sweep_cmd.add_argument("--vary", required=True, help="Parameter, as 'section.key' or a bare key")
    sweep_cmd.add_argument("--values", required=True, help="Comma-separated values")
    sweep_cmd.add_argument("--csv", required=True, help="Output CSV file")
    sweep_cmd.add_argument("--seed", type=int, help="Master seed (default: the scenario's)")
    sweep_cmd.add_argument("--jobs", type=int, default=int(os.getenv("SIMNET_JOBS", "1")),
                           help="Worker processes (default: 1 or SIMNET_JOBS)")

    validate = commands.add_parser("validate", help="Parse and validate a scenario without running it")
    validate.add_argument("scenario", type=str, help="Scenario file")
    return parser


def _command_run(args) -> int:
    cfg = load_scenario(args.scenario)
    result = run_scenario(cfg, args.seed, trace=bool(args.trace), check_invariants=args.check_invariants,
                          queries_override=args.queries)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as f:
            f.writelines(line + "\n" for line in result.trace or ())
    if args.csv:
        write_csv([result], args.csv)
    else:
        print(format_summary(result))
    return EXIT_OK


def _command_sweep(args, parser: argparse.ArgumentParser) -> int:
    values = [value.strip() for value in args.values.split(",") if value.strip()]
    if not values:
        parser.error("--values needs at least one value")
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg = cfg.with_overrides({"experiment.seed": args.seed})
    try:
        results = sweep(cfg, args.vary, values, jobs=args.jobs)
    except UnknownParameterError as e:
        parser.error(str(e))
    write_csv(results, args.csv)
    print(f"{len(values)} points written to {args.csv}")
    return EXIT_OK


def _command_validate(args) -> int:
    cfg = load_scenario(args.scenario)
    print(f"{args.scenario}: ok ({cfg.mdns.num_resolvers} generated hosts, {len(cfg.hosts)} explicit hosts, "
          f"{len(cfg.dns.servers)} DNS servers, {len(cfg.dns.clients)} clients)")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main function with command line interface"""
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_sim_logging(args.log_dir, args.log_level)

    try:
        if args.command == "run":
            return _command_run(args)
        if args.command == "sweep":
            return _command_sweep(args, parser)
        return _command_validate(args)
    except SCENARIO_ERRORS as e:
        log_error("scenario", e, {"scenario": args.scenario})
        print(f"Scenario error: {e}", file=sys.stderr)
        return EXIT_SCENARIO
    except (SimulationError, WireError) as e:
        event = getattr(e, "event", None)
        context = {"scenario": args.scenario}
        if event is None:
            log_error("simulation", e, context)
        else:
            context["kind"] = event.kind
            log_error("simulation", e, context, node=event.owner, sim_time=event.expiry)
        print(f"Runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        log_error("io", e, {"scenario": args.scenario})
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

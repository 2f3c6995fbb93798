# experiment.py - Seeded runs, parameter sweeps and CSV output
"""
run_scenario()  one seeded run of a scenario, returning frozen traffic rows
sweep()         one run per value of a scenario parameter; point i runs with
                seed master ^ i on the network fixed by the structure seed
write_csv()     the stable CSV contract: one row per node plus an "ALL" row
                per parameter value, columns as in config.CSV_COLUMNS
"""

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO, Tuple, Union

from config import AGGREGATE_NODE_ID, CSV_COLUMNS, seconds_to_ns
from network_configurator import SimNetwork, build_network
from nodes import PrivacyViolation, audit_privacy
from scenario import ScenarioConfig, UnknownParameterError, is_known_parameter
from sim_kernel import SimulationError
from sim_logging import log_event

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunResult:
    """Snapshot of one finished run"""
    param_value: str
    seed: int
    duration: float
    rows: Tuple[Dict[str, Any], ...]
    counters: Dict[str, Dict[str, Any]]
    events_processed: int
    delivered_bytes: int
    violations: Tuple[PrivacyViolation, ...] = ()
    trace: Optional[Tuple[str, ...]] = None

    @property
    def aggregate(self) -> Dict[str, Any]:
        return next(row for row in self.rows if row["node_id"] == AGGREGATE_NODE_ID)

    @property
    def total_bytes(self) -> int:
        return self.aggregate["total_bytes"]

    @property
    def mcast_bytes(self) -> int:
        return self.aggregate["mcast_bytes"]

    def node_row(self, node_id: str) -> Dict[str, Any]:
        return next(row for row in self.rows if row["node_id"] == node_id)


def run_network(network: SimNetwork, param_value: str = "") -> RunResult:
    """Run an already built network for the scenario's duration and snapshot it"""
    kernel = network.kernel
    duration = network.config.experiment.duration
    t_end = seconds_to_ns(duration)
    if t_end > 0:
        kernel.run_until(t_end)

    stats = kernel.stats
    received = stats.total_received_bytes()
    if received != kernel.delivered_bytes:
        raise SimulationError(f"byte ledger mismatch: nodes received {received}, kernel delivered "
                              f"{kernel.delivered_bytes}")

    violations = audit_privacy(kernel.capture or [], network.private_names())
    rows = tuple({"param_value": param_value, **row} for row in stats.rows(include_aggregate=True))
    result = RunResult(
        param_value=param_value,
        seed=kernel.seed,
        duration=duration,
        rows=rows,
        counters=stats.to_dict(),
        events_processed=kernel.events_processed,
        delivered_bytes=kernel.delivered_bytes,
        violations=tuple(violations),
        trace=tuple(kernel.trace) if kernel.trace is not None else None,
    )
    aggregate = result.aggregate
    log_event("run_summary", "Simulation finished", param_value=param_value, seed=kernel.seed,
              duration=duration, events=kernel.events_processed, nodes=len(stats),
              mcast_bytes=aggregate["mcast_bytes"], ucast_bytes=aggregate["ucast_bytes"],
              total_bytes=aggregate["total_bytes"], violations=len(violations))
    return result


def run_scenario(cfg: ScenarioConfig, seed: Optional[int] = None, *, param_value: str = "",
                 trace: bool = False, check_invariants: bool = False,
                 queries_override: Optional[str] = None) -> RunResult:
    network = build_network(cfg, seed, trace=trace, capture=True, check_invariants=check_invariants,
                            queries_override=queries_override)
    return run_network(network, param_value)


def _run_point(point: Tuple[ScenarioConfig, int, str, bool]) -> RunResult:
    cfg, seed, value, check_invariants = point
    return run_scenario(cfg, seed, param_value=value, check_invariants=check_invariants)


def sweep(cfg: ScenarioConfig, vary: str, values: Sequence[Any], *, jobs: int = 1,
          check_invariants: bool = False) -> List[RunResult]:
    """One run per value; results come back in value order"""
    if not is_known_parameter(vary):
        raise UnknownParameterError(f"unknown scenario parameter {vary!r}")
    if not values:
        raise ValueError("sweep needs at least one value")

    master = cfg.experiment.seed
    # pin the structure seed so every point builds the same network
    fixed = cfg.with_overrides({"experiment.structure_seed": cfg.structure_seed})
    points = [(fixed.with_overrides({vary: value}), master ^ index, str(value), check_invariants)
              for index, value in enumerate(values)]

    logger.info(f"Sweeping {vary} over {len(points)} values with {jobs} worker(s)")
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, points))
    else:
        results = [_run_point(point) for point in points]

    log_event("sweep_summary", "Sweep finished", parameter=vary, values=[str(v) for v in values],
              total_bytes=[result.total_bytes for result in results])
    return results


# ============= CSV =============

def result_rows(results: Sequence[RunResult]) -> List[Dict[str, Any]]:
    return [row for result in results for row in result.rows]


def write_csv_rows(results: Sequence[RunResult], stream: TextIO) -> int:
    writer = csv.DictWriter(stream, fieldnames=CSV_COLUMNS, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    rows = result_rows(results)
    writer.writerows(rows)
    return len(rows)


def write_csv(results: Sequence[RunResult], output_file: Union[str, Path]) -> int:
    """Write the result table; returns the number of data rows"""
    with open(output_file, "w", newline="", encoding="utf-8") as f:
        count = write_csv_rows(results, f)
    logger.info(f"Wrote {count} rows to {output_file}")
    return count


def csv_text(results: Sequence[RunResult]) -> str:
    buffer = io.StringIO()
    write_csv_rows(results, buffer)
    return buffer.getvalue()


def format_summary(result: RunResult) -> str:
    """Per-node table printed by `simnet run` without --csv"""
    columns = ["node_id", "mcast_bytes", "ucast_bytes", "total_bytes", "mcast_packets", "ucast_packets",
               "queries_sent", "responses_sent"]
    table = [columns] + [[str(row[column]) for column in columns] for row in result.rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(columns))]
    lines = ["  ".join(cell.rjust(width) if i else cell.ljust(width)
                       for i, (cell, width) in enumerate(zip(line, widths)))
             for line in table]
    lines.insert(1, "  ".join("-" * width for width in widths))
    footer = f"seed {result.seed}, {result.duration:g}s simulated, {result.events_processed} events"
    if result.violations:
        footer += f", {len(result.violations)} PRIVACY VIOLATIONS"
    return "\n".join(lines + ["", footer])

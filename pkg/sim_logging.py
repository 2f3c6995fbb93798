# sim_logging.py - Structured JSONL logging for simnet runs
"""
JSON Lines logging for simulation runs.
Every record is one machine-parseable JSON object; simulation events
(renames, resolution failures, privacy violations, run summaries) carry the
event kind, node and simulated time as top-level keys and the rest of their
payload under "data".

The event trace used for determinism checks is NOT written here: log records
carry wall-clock timestamps, the trace carries simulated time only.
"""

import datetime
import json
import logging
import logging.handlers
import sys
import traceback
from pathlib import Path
from typing import Optional

from config import LOGGING_CONFIG, NS_PER_SECOND

EVENT_LOGGER_NAME = "simnet"


# attributes every LogRecord has; anything else came in through extra=
_RECORD_ATTRS = frozenset(logging.LogRecord("", 0, "", 0, "", (), None).__dict__) | {"message", "asctime"}

# promoted to the top level of each line, in this order
SIM_FIELDS = ("event_type", "node", "sim_time")


class JSONFormatter(logging.Formatter):
    """
    One JSON object per record.

    Simulation records put the event kind, node id and simulated time (ns) at
    the top level, next to the wall-clock timestamp. Other extra fields are
    grouped under "data". Records from plain module loggers only get the
    wall-clock part.
    """
    def format(self, record: logging.LogRecord) -> str:
        line = {
            "timestamp": datetime.datetime.fromtimestamp(record.created).isoformat(timespec="milliseconds"),
            "level": record.levelname,
            "logger": record.name,
        }
        for key in SIM_FIELDS:
            value = getattr(record, key, None)
            if value is not None:
                line[key] = value
        if isinstance(line.get("sim_time"), int):
            line["sim_seconds"] = line["sim_time"] / NS_PER_SECOND
        line["message"] = record.getMessage()

        data = {k: v for k, v in record.__dict__.items() if k not in _RECORD_ATTRS and k not in SIM_FIELDS}
        if data:
            line["data"] = data
        if record.exc_info:
            line["exception"] = self.formatException(record.exc_info)
            if record.exc_info[2]:
                frame = traceback.extract_tb(record.exc_info[2])[-1]
                line["origin"] = f"{Path(frame.filename).stem}.{frame.name}:{frame.lineno}"
        return json.dumps(line, default=str)


def setup_sim_logging(log_dir: Optional[str] = None, level: Optional[str] = None) -> logging.Logger:
    """
    Setup simnet logging with:
    - JSONL file output (size rotated) in log_dir
    - Human-readable console output on stderr

    Args:
        log_dir: Directory for log files (default from LOGGING_CONFIG)
        level: Console level name, e.g. "INFO" or "DEBUG"

    Returns:
        The 'simnet' event logger
    """
    log_path = Path(log_dir or LOGGING_CONFIG["log_dir"])
    log_path.mkdir(parents=True, exist_ok=True)
    console_level = getattr(logging, (level or LOGGING_CONFIG["log_level"]).upper(), logging.INFO)

    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)
    root_logger.handlers.clear()

    json_handler = logging.handlers.RotatingFileHandler(
        log_path / "simnet.jsonl",
        maxBytes=LOGGING_CONFIG["max_log_size_mb"] * 1024 * 1024,
        backupCount=LOGGING_CONFIG["backup_count"],
        encoding="utf-8",
    )
    json_handler.setFormatter(JSONFormatter())
    json_handler.setLevel(logging.DEBUG)
    root_logger.addHandler(json_handler)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(logging.Formatter(LOGGING_CONFIG["console_format"]))
    console_handler.setLevel(console_level)
    root_logger.addHandler(console_handler)

    event_logger = logging.getLogger(EVENT_LOGGER_NAME)
    event_logger.debug("Logging initialized", extra={
        "event_type": "startup",
        "config": {"log_dir": str(log_path), "console_level": logging.getLevelName(console_level)},
    })
    return event_logger


def log_event(event_type: str, message: str = "", **kwargs) -> None:
    """
    Structured event logging.

    Example:
        log_event("service_renamed", "Name conflict resolved",
                  node="host-2", sim_time=kernel.now, old="Printer", new="Printer #2")
    """
    logger = logging.getLogger(EVENT_LOGGER_NAME)
    logger.info(message or event_type, extra={"event_type": event_type, **kwargs})


def log_error(component: str, error: BaseException, context: Optional[dict] = None, *,
              node: Optional[str] = None, sim_time: Optional[int] = None) -> None:
    """
    Structured error logging.

    Args:
        component: Where the error occurred (e.g., "kernel", "scenario")
        error: The exception that was raised
        context: Additional context about what was happening
        node, sim_time: Where and when in the simulation, if known
    """
    logger = logging.getLogger(EVENT_LOGGER_NAME)
    logger.error(
        str(error),
        exc_info=error if error.__traceback__ else None,
        extra={
            "event_type": "error",
            "node": node,
            "sim_time": sim_time,
            "component": component,
            "error_type": type(error).__name__,
            "context": context or {},
        },
    )

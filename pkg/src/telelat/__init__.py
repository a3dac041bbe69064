"""Latency measurement toolkit for vehicle teleoperation.

Motion-to-motion (M2M), glass-to-glass (G2G) and end-to-end (E2E)
latencies from two-clock event logs, a motion-onset detector for gyro
streams, and a seeded simulator of the full measurement loop.
"""

__version__ = "0.1.0"

from .events import (  # noqa: E402
    ClockDomain, EventKind, GroundTruth, LogFormat, SessionRecord, Timestamp, ValidityReport,
    derive_led_delay, ingest_log, read_log, validate_session, write_log,
)
from .latency import LatencyStats, LatencyTriple, aggregate, compute_triple, decompose  # noqa: E402

__all__ = [
    "ClockDomain", "EventKind", "GroundTruth", "LogFormat", "SessionRecord", "Timestamp",
    "ValidityReport", "derive_led_delay", "ingest_log", "read_log", "validate_session", "write_log",
    "LatencyStats", "LatencyTriple", "aggregate", "compute_triple", "decompose", "__version__",
]

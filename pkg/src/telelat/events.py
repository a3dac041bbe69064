"""Timestamps, sessions, and event-log ingestion.

A log is a flat list of ``(session_id, event_kind, clock_domain, t_ns)``
rows.  Rows are grouped by ``session_id`` into :class:`SessionRecord`
objects; incomplete or ambiguous sessions are kept and flagged, never
dropped, so that analysis can report how many were excluded.

Two encodings are accepted: CSV with the header
``session_id,event_kind,clock_domain,t_ns`` and JSON lines with the same
field names.  Lines starting with ``#`` are comments, except for the
``#simulated=true`` flag which unlocks the ground-truth event kinds.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .errors import DomainError, LogParseError, LogValidationError, UsageError

CSV_FIELDS = ("session_id", "event_kind", "clock_domain", "t_ns")

# Reason codes attached to invalid sessions.
MISSING_EVENT = "missing_event"
MULTIPLE_DETECTIONS = "multiple_detections"
LED_BEFORE_ONSET = "led_before_onset"
TRIGGER_BEFORE_LED = "trigger_before_led"
DOMAIN_MISMATCH = "domain_mismatch"
OVERLAPPING_SESSION = "overlapping_session"
NO_DETECTION = "no_detection"


class ClockDomain(str, enum.Enum):
    STATION = "station"
    VEHICLE = "vehicle"
    # true time; only exists in simulation
    REFERENCE = "reference"


class LogFormat(str, enum.Enum):
    CSV = "csv"
    JSONL = "jsonl"

    @classmethod
    def parse(cls, value: str | "LogFormat") -> "LogFormat":
        if isinstance(value, LogFormat):
            return value
        v = value.lower()
        if v in ("json", "jsonl", "ndjson"):
            return cls.JSONL
        if v == "csv":
            return cls.CSV
        raise UsageError(f"unknown log format {value!r}")


class EventKind(str, enum.Enum):
    GY_STATION = "GY_STATION"
    GY_VEHICLE = "GY_VEHICLE"
    LED_ON = "LED_ON"
    PT_TRIGGER = "PT_TRIGGER"
    M_STATION = "M_STATION"
    M_VEHICLE = "M_VEHICLE"
    LED_PHY = "LED_PHY"
    PT_PHY = "PT_PHY"

    @property
    def is_ground_truth(self) -> bool:
        return self in _TRUTH_KINDS


_TRUTH_KINDS = frozenset(
    {EventKind.M_STATION, EventKind.M_VEHICLE, EventKind.LED_PHY, EventKind.PT_PHY}
)

# Domain each anchor must carry in a valid session.
ANCHOR_DOMAINS = {
    EventKind.GY_STATION: ClockDomain.STATION,
    EventKind.GY_VEHICLE: ClockDomain.VEHICLE,
    EventKind.LED_ON: ClockDomain.VEHICLE,
    EventKind.PT_TRIGGER: ClockDomain.STATION,
}

# Order used when serializing one session (roughly chronological).
WRITE_ORDER = (
    EventKind.M_STATION,
    EventKind.GY_STATION,
    EventKind.M_VEHICLE,
    EventKind.GY_VEHICLE,
    EventKind.LED_ON,
    EventKind.LED_PHY,
    EventKind.PT_PHY,
    EventKind.PT_TRIGGER,
)


@dataclass(frozen=True, slots=True, order=True)
class Timestamp:
    """Integer nanoseconds since the session epoch, tagged with its clock."""

    t_ns: int
    domain: ClockDomain

    def __post_init__(self):
        if not isinstance(self.t_ns, int) or isinstance(self.t_ns, bool):
            # numpy integers are fine, floats are not
            try:
                as_int = int(self.t_ns)
            except (TypeError, ValueError, OverflowError):
                raise TypeError(f"t_ns must be an integer, got {self.t_ns!r}") from None
            if as_int != self.t_ns:
                raise TypeError(f"t_ns must be an integer, got {self.t_ns!r}")
            object.__setattr__(self, "t_ns", as_int)
        object.__setattr__(self, "domain", ClockDomain(self.domain))

    def __sub__(self, other: "Timestamp") -> int:
        if not isinstance(other, Timestamp):
            return NotImplemented
        if other.domain is not self.domain:
            raise DomainError(
                f"cannot subtract {other.domain.value} time from {self.domain.value} time; "
                "align the timestamps first"
            )
        return self.t_ns - other.t_ns

    def shifted(self, delta_ns: int) -> "Timestamp":
        return Timestamp(self.t_ns + int(delta_ns), self.domain)

    def relabel(self, domain: ClockDomain) -> "Timestamp":
        return Timestamp(self.t_ns, domain)


@dataclass(frozen=True)
class ValidityReport:
    session_id: int
    violations: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.passed


@dataclass(frozen=True)
class SessionRecord:
    """The four anchor events of one measurement cycle."""

    session_id: int
    gy_station: Timestamp | None
    gy_vehicle: Timestamp | None
    led_on: Timestamp | None
    pt_trigger: Timestamp | None
    pt_trigger_count: int = 1
    valid: bool = True
    reasons: tuple[str, ...] = ()
    # later PT_TRIGGER rows beyond the first, kept for faithful re-serialization
    extra_triggers: tuple[Timestamp, ...] = field(default=(), compare=True)

    def __post_init__(self):
        if self.pt_trigger_count < 0:
            raise ValueError("pt_trigger_count must be non-negative")

    @classmethod
    def checked(cls, session_id: int, gy_station, gy_vehicle, led_on, pt_trigger,
                pt_trigger_count: int = 1, extra_triggers=(), extra_reasons=()) -> "SessionRecord":
        """Build a record and set ``valid``/``reasons`` from :func:`validate_session`."""
        draft = cls(session_id, gy_station, gy_vehicle, led_on, pt_trigger,
                    pt_trigger_count, True, (), tuple(extra_triggers))
        report = validate_session(draft)
        reasons = report.violations + tuple(r for r in extra_reasons if r not in report.violations)
        return cls(session_id, gy_station, gy_vehicle, led_on, pt_trigger,
                   pt_trigger_count, not reasons, reasons, tuple(extra_triggers))

    def with_reasons(self, *reasons: str) -> "SessionRecord":
        merged = self.reasons + tuple(r for r in reasons if r not in self.reasons)
        return SessionRecord(self.session_id, self.gy_station, self.gy_vehicle, self.led_on,
                             self.pt_trigger, self.pt_trigger_count, not merged, merged,
                             self.extra_triggers)


@dataclass(frozen=True)
class GroundTruth:
    """True (Reference-domain) times of the physical events of one session.

    ``draws`` optionally carries the simulator's named error draws in ns,
    so the measured-minus-physical identity can be checked term by term.
    """

    session_id: int
    m_station: Timestamp
    m_vehicle: Timestamp
    led_phy: Timestamp
    pt_phy: Timestamp
    draws: Mapping[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("m_station", "m_vehicle", "led_phy", "pt_phy"):
            if getattr(self, name).domain is not ClockDomain.REFERENCE:
                raise DomainError(f"ground truth {name} must be in the reference domain")

    def error_terms(self, record: SessionRecord) -> "ErrorTerms":
        """Per-event measurement errors in ns.

        Measured timestamps are read on the nominal (synchronized) timescale,
        so residual clock error is part of each term.
        """
        if None in (record.gy_station, record.gy_vehicle, record.led_on, record.pt_trigger):
            raise UsageError(f"session {record.session_id} lacks anchor events")
        return ErrorTerms(
            e_gys=record.gy_station.t_ns - self.m_station.t_ns,
            e_gyv=record.gy_vehicle.t_ns - self.m_vehicle.t_ns,
            e_led=self.led_phy.t_ns - record.led_on.t_ns,
            e_pt=record.pt_trigger.t_ns - self.pt_phy.t_ns,
        )


@dataclass(frozen=True)
class ErrorTerms:
    e_gys: int
    e_gyv: int
    e_led: int
    e_pt: int


@dataclass(frozen=True)
class EventRow:
    session_id: int
    kind: EventKind
    domain: ClockDomain
    t_ns: int


@dataclass
class EventLog:
    """Parsed log: session records plus ground truth when simulated."""

    records: list[SessionRecord]
    truth: dict[int, GroundTruth] = field(default_factory=dict)
    simulated: bool = False

    @property
    def valid_records(self) -> list[SessionRecord]:
        return [r for r in self.records if r.valid]


# -- validation --------------------------------------------------------------

def validate_session(record: SessionRecord, aligned: bool = False) -> ValidityReport:
    """Check one record against the session invariants.

    Ordering across the two clock domains (LED_ON is a vehicle time,
    PT_TRIGGER a station time) is only checked when ``aligned`` is set.
    """
    violations: list[str] = []
    anchors = {
        EventKind.GY_STATION: record.gy_station,
        EventKind.GY_VEHICLE: record.gy_vehicle,
        EventKind.LED_ON: record.led_on,
        EventKind.PT_TRIGGER: record.pt_trigger,
    }
    if any(ts is None for ts in anchors.values()) or record.pt_trigger_count == 0:
        violations.append(MISSING_EVENT)
    if record.pt_trigger_count > 1:
        violations.append(MULTIPLE_DETECTIONS)
    if any(ts is not None and ts.domain is not ANCHOR_DOMAINS[k] for k, ts in anchors.items()):
        violations.append(DOMAIN_MISMATCH)

    gyv, led, pt = record.gy_vehicle, record.led_on, record.pt_trigger
    if gyv is not None and led is not None and (aligned or gyv.domain is led.domain):
        if led.t_ns < gyv.t_ns:
            violations.append(LED_BEFORE_ONSET)
    if led is not None and pt is not None and (aligned or led.domain is pt.domain):
        if pt.t_ns < led.t_ns:
            violations.append(TRIGGER_BEFORE_LED)
    # reasons assigned outside this check (overlap, simulator misses) stay attached
    for r in record.reasons:
        if r in (OVERLAPPING_SESSION, NO_DETECTION) and r not in violations:
            violations.append(r)
    return ValidityReport(record.session_id, tuple(violations))


def derive_led_delay(record: SessionRecord) -> int:
    """Vehicle-side lag from detected onset to the LED drive command, in ns."""
    if not record.valid:
        raise UsageError(f"session {record.session_id} is invalid: {', '.join(record.reasons)}")
    if record.gy_vehicle.domain is not ClockDomain.VEHICLE or record.led_on.domain is not ClockDomain.VEHICLE:
        raise UsageError("LED delay needs both timestamps in the vehicle domain")
    return record.led_on - record.gy_vehicle


# -- parsing ------------------------------------------------------------------

def _text_lines(stream: IO | bytes | str | Iterable) -> Iterator[str]:
    if isinstance(stream, bytes):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    for line in stream:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        yield line.rstrip("\r\n")


def _parse_flag(comment: str) -> tuple[str, str] | None:
    body = comment.lstrip("#").strip()
    if "=" not in body:
        return None
    key, _, value = body.partition("=")
    return key.strip().lower(), value.strip().lower()


def _coerce_row(lineno: int, sid, kind, domain, t_ns) -> EventRow:
    try:
        session_id = int(sid)
        if isinstance(t_ns, float) or (isinstance(t_ns, str) and not t_ns.strip().lstrip("+-").isdigit()):
            raise ValueError(f"t_ns must be an integer, got {t_ns!r}")
        t = int(t_ns)
    except (TypeError, ValueError) as exc:
        raise LogParseError(lineno, str(exc)) from None
    try:
        ek = EventKind(str(kind).strip().upper())
    except ValueError:
        raise LogParseError(lineno, f"unknown event_kind {kind!r}") from None
    try:
        cd = ClockDomain(str(domain).strip().lower())
    except ValueError:
        raise LogParseError(lineno, f"unknown clock_domain {domain!r}") from None
    return EventRow(session_id, ek, cd, t)


def parse_rows(stream, fmt: LogFormat | str | None = None) -> tuple[list[tuple[int, EventRow]], bool]:
    """Parse raw rows with their line numbers; returns ``(rows, simulated)``."""
    fmt = LogFormat.parse(fmt) if fmt is not None else None
    simulated = False
    rows: list[tuple[int, EventRow]] = []
    header_seen = False
    for lineno, line in enumerate(_text_lines(stream), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            flag = _parse_flag(stripped)
            if flag and flag[0] == "simulated":
                simulated = flag[1] in ("true", "1", "yes")
            continue
        if fmt is None:
            fmt = LogFormat.JSONL if stripped.startswith("{") else LogFormat.CSV
        if fmt is LogFormat.JSONL:
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise LogParseError(lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise LogParseError(lineno, "expected a JSON object")
            if set(obj) == {"simulated"}:
                simulated = bool(obj["simulated"])
                continue
            missing = [f for f in CSV_FIELDS if f not in obj]
            if missing:
                raise LogParseError(lineno, f"missing field(s) {', '.join(missing)}")
            rows.append((lineno, _coerce_row(lineno, *(obj[f] for f in CSV_FIELDS))))
        else:
            cells = next(csv.reader([stripped]))
            cells = [c.strip() for c in cells]
            if not header_seen and tuple(cells) == CSV_FIELDS:
                header_seen = True
                continue
            if len(cells) != len(CSV_FIELDS):
                raise LogParseError(lineno, f"expected {len(CSV_FIELDS)} columns, got {len(cells)}")
            rows.append((lineno, _coerce_row(lineno, *cells)))
    return rows, simulated


def _group(rows: list[tuple[int, EventRow]], simulated: bool) -> EventLog:
    by_session: dict[int, dict[EventKind, list[tuple[int, EventRow]]]] = {}
    for lineno, row in rows:
        if row.kind.is_ground_truth:
            if not simulated:
                raise LogValidationError(
                    f"ground-truth event {row.kind.value} requires the #simulated=true header", lineno)
            if row.domain is not ClockDomain.REFERENCE:
                raise LogValidationError(f"{row.kind.value} must be in the reference domain", lineno)
        elif row.domain is ClockDomain.REFERENCE:
            raise LogValidationError(f"{row.kind.value} cannot carry a reference-domain time", lineno)
        kinds = by_session.setdefault(row.session_id, {})
        seen = kinds.setdefault(row.kind, [])
        if seen and row.kind is not EventKind.PT_TRIGGER:
            raise LogValidationError(
                f"duplicate {row.kind.value} for session {row.session_id} "
                f"(first on line {seen[0][0]})", lineno)
        seen.append((lineno, row))

    records: list[SessionRecord] = []
    truth: dict[int, GroundTruth] = {}
    for sid in sorted(by_session):
        kinds = by_session[sid]

        def ts(kind: EventKind) -> Timestamp | None:
            got = kinds.get(kind)
            if not got:
                return None
            return Timestamp(got[0][1].t_ns, got[0][1].domain)

        triggers = [Timestamp(r.t_ns, r.domain) for _, r in kinds.get(EventKind.PT_TRIGGER, [])]
        records.append(SessionRecord.checked(
            sid, ts(EventKind.GY_STATION), ts(EventKind.GY_VEHICLE), ts(EventKind.LED_ON),
            triggers[0] if triggers else None, len(triggers), extra_triggers=triggers[1:],
        ))
        gt = [ts(k) for k in (EventKind.M_STATION, EventKind.M_VEHICLE, EventKind.LED_PHY, EventKind.PT_PHY)]
        if all(t is not None for t in gt):
            truth[sid] = GroundTruth(sid, *gt)
    return EventLog(flag_overlaps(records), truth, simulated)


def flag_overlaps(records: Sequence[SessionRecord]) -> list[SessionRecord]:
    """Mark sessions whose [GY_STATION, PT_TRIGGER] spans overlap a neighbour.

    Spans are compared on the nominal timescale; sessions lacking either
    endpoint are ignored.
    """
    spans = []
    for i, r in enumerate(records):
        if r.gy_station is not None and r.pt_trigger is not None:
            lo = min(r.gy_station.t_ns, r.pt_trigger.t_ns)
            hi = max(r.gy_station.t_ns, r.pt_trigger.t_ns)
            spans.append((lo, hi, i))
    spans.sort()
    hit: set[int] = set()
    max_hi, max_i = None, None
    for lo, hi, i in spans:
        if max_hi is not None and lo <= max_hi:
            hit.update((i, max_i))
        if max_hi is None or hi > max_hi:
            max_hi, max_i = hi, i
    return [r.with_reasons(OVERLAPPING_SESSION) if i in hit else r for i, r in enumerate(records)]


def read_log(stream, fmt: LogFormat | str | None = None) -> EventLog:
    """Parse a full log, keeping ground truth when the log is simulated."""
    rows, simulated = parse_rows(stream, fmt)
    return _group(rows, simulated)


def ingest_log(stream, fmt: LogFormat | str | None = None) -> list[SessionRecord]:
    """One :class:`SessionRecord` per session id, invalid ones flagged."""
    return read_log(stream, fmt).records


# -- serialization -----------------------------------------------------------

def session_rows(record: SessionRecord, truth: GroundTruth | None = None) -> list[EventRow]:
    out: dict[EventKind, list[Timestamp]] = {}
    if truth is not None:
        out[EventKind.M_STATION] = [truth.m_station]
        out[EventKind.M_VEHICLE] = [truth.m_vehicle]
        out[EventKind.LED_PHY] = [truth.led_phy]
        out[EventKind.PT_PHY] = [truth.pt_phy]
    for kind, ts in ((EventKind.GY_STATION, record.gy_station),
                     (EventKind.GY_VEHICLE, record.gy_vehicle),
                     (EventKind.LED_ON, record.led_on)):
        if ts is not None:
            out[kind] = [ts]
    if record.pt_trigger is not None:
        out[EventKind.PT_TRIGGER] = [record.pt_trigger, *record.extra_triggers]
    return [EventRow(record.session_id, kind, ts.domain, ts.t_ns)
            for kind in WRITE_ORDER for ts in out.get(kind, ())]


def write_log(out: IO[str], records: Iterable[SessionRecord],
              truth: Mapping[int, GroundTruth] | None = None,
              fmt: LogFormat | str = LogFormat.CSV) -> None:
    """Serialize records (and ground truth, which marks the log simulated)."""
    fmt = LogFormat.parse(fmt)
    truth = truth or {}
    if truth:
        out.write("#simulated=true\n")
    if fmt is LogFormat.CSV:
        out.write(",".join(CSV_FIELDS) + "\n")
    for record in sorted(records, key=lambda r: r.session_id):
        for row in session_rows(record, truth.get(record.session_id)):
            if fmt is LogFormat.CSV:
                out.write(f"{row.session_id},{row.kind.value},{row.domain.value},{row.t_ns}\n")
            else:
                out.write(json.dumps({
                    "session_id": row.session_id,
                    "event_kind": row.kind.value,
                    "clock_domain": row.domain.value,
                    "t_ns": row.t_ns,
                }) + "\n")


def dumps_log(records, truth=None, fmt: LogFormat | str = LogFormat.CSV) -> str:
    buf = io.StringIO()
    write_log(buf, records, truth, fmt)
    return buf.getvalue()

"""Per-session latencies, error decomposition, and aggregate statistics.

All per-session arithmetic is in integer nanoseconds, so the identity
``e2e == m2m + g2g`` holds exactly.  Statistics are reported in
milliseconds.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .clocks import ClockModel, align
from .errors import UsageError
from .events import ClockDomain, GroundTruth, SessionRecord, derive_led_delay

QUARTILE_METHOD = "linear interpolation between order statistics (type 7)"
METRICS = ("M2M", "G2G", "E2E")
ERROR_LABELS = {"M2M": "E_M2M", "G2G": "E_G2G", "E2E": "E_E2E"}
STATS_FIELDS = ("metric", "n", "excluded", "min_ms", "max_ms", "mean_ms", "std_ms", "median_ms", "iqr_ms")


class SkippedSession(UsageError):
    """Raised for invalid sessions; carries the record's reason codes."""

    def __init__(self, record: SessionRecord):
        self.session_id = record.session_id
        self.reasons = record.reasons
        super().__init__(f"session {record.session_id} skipped: {', '.join(record.reasons) or 'invalid'}")


@dataclass(frozen=True)
class LatencyTriple:
    m2m_ns: int
    g2g_ns: int
    e2e_ns: int

    def __post_init__(self):
        if self.e2e_ns != self.m2m_ns + self.g2g_ns:
            raise ValueError(f"E2E {self.e2e_ns} != M2M {self.m2m_ns} + G2G {self.g2g_ns}")

    def get(self, metric: str) -> int:
        return {"M2M": self.m2m_ns, "G2G": self.g2g_ns, "E2E": self.e2e_ns}[metric]


@dataclass(frozen=True)
class ErrorDecomposition:
    m2m_phy: int
    g2g_phy: int
    e2e_phy: int
    e_m2m: int
    e_g2g: int
    e_e2e: int


@dataclass(frozen=True)
class LatencyStats:
    min: float
    max: float
    mean: float
    std: float
    median: float
    iqr: float
    n: int
    excluded: int = 0

    def row(self, metric: str) -> dict:
        return {"metric": metric, "n": self.n, "excluded": self.excluded,
                "min_ms": self.min, "max_ms": self.max, "mean_ms": self.mean, "std_ms": self.std,
                "median_ms": self.median, "iqr_ms": self.iqr}


def _anchors_ns(record: SessionRecord, station_model: ClockModel | None,
                vehicle_model: ClockModel | None, assume_synchronized: bool):
    stamps = (record.gy_station, record.gy_vehicle, record.led_on, record.pt_trigger)
    if assume_synchronized:
        return tuple(ts.t_ns for ts in stamps)
    if station_model is None or vehicle_model is None:
        raise UsageError("cross-domain latency needs both clock models or assume_synchronized=True")
    models = {ClockDomain.STATION: station_model, ClockDomain.VEHICLE: vehicle_model}
    return tuple(align(ts, models.get(ts.domain)).t_ns for ts in stamps)


def compute_triple(record: SessionRecord, *, assume_synchronized: bool = True,
                   station_model: ClockModel | None = None,
                   vehicle_model: ClockModel | None = None) -> LatencyTriple:
    """M2M, G2G and E2E for one valid session.

    E2E is computed as ``PT_TRIGGER - GY_STATION - LED_delay`` and checked
    against ``M2M + G2G`` by the :class:`LatencyTriple` constructor.
    """
    if not record.valid:
        raise SkippedSession(record)
    gys, gyv, led, pt = _anchors_ns(record, station_model, vehicle_model, assume_synchronized)
    m2m = gyv - gys
    g2g = pt - led
    led_delay = derive_led_delay(record) if assume_synchronized else led - gyv
    return LatencyTriple(m2m, g2g, pt - gys - led_delay)


def compute_triples(records: Iterable[SessionRecord], **kw) -> tuple[dict[int, LatencyTriple], dict[int, tuple[str, ...]]]:
    """Triples of valid sessions, plus reasons for every excluded one."""
    triples: dict[int, LatencyTriple] = {}
    excluded: dict[int, tuple[str, ...]] = {}
    for r in records:
        if r.valid:
            triples[r.session_id] = compute_triple(r, **kw)
        else:
            excluded[r.session_id] = r.reasons
    return triples, excluded


def decompose(record: SessionRecord, truth: GroundTruth | None) -> ErrorDecomposition:
    """Split measured latencies into physical latency plus measurement error."""
    if truth is None:
        raise UsageError(f"session {record.session_id}: decomposition needs ground truth")
    measured = compute_triple(record)
    m2m_phy = truth.m_vehicle - truth.m_station
    g2g_phy = truth.pt_phy - truth.led_phy
    e2e_phy = m2m_phy + g2g_phy
    dec = ErrorDecomposition(m2m_phy, g2g_phy, e2e_phy,
                             measured.m2m_ns - m2m_phy,
                             measured.g2g_ns - g2g_phy,
                             measured.e2e_ns - e2e_phy)
    terms = truth.error_terms(record)
    if (dec.e_m2m != terms.e_gyv - terms.e_gys or dec.e_g2g != terms.e_pt + terms.e_led
            or dec.e_e2e != dec.e_m2m + dec.e_g2g):
        raise ValueError(f"session {record.session_id}: error terms do not close")
    return dec


def aggregate(values: Sequence[float], excluded: int = 0) -> LatencyStats:
    """min/max/mean/sample-std/median/IQR of ``values`` (same unit out as in)."""
    # sorted so the float sums, and hence the result, ignore input order
    x = np.sort(np.asarray(values, dtype=np.float64))
    if x.size == 0:
        raise UsageError("aggregate needs at least one value")
    q1, med, q3 = np.percentile(x, [25.0, 50.0, 75.0], method="linear")
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    lo, hi = float(x.min()), float(x.max())
    mean = min(max(float(x.mean()), lo), hi)
    return LatencyStats(lo, hi, mean, std, float(med), max(float(q3 - q1), 0.0), int(x.size), int(excluded))


def aggregate_ns(values_ns: Sequence[int], excluded: int = 0) -> LatencyStats:
    return aggregate(np.asarray(values_ns, dtype=np.float64) / 1e6, excluded)


def summarize(records: Sequence[SessionRecord], **kw) -> dict[str, LatencyStats]:
    """Statistics per metric over valid sessions; invalid ones are counted."""
    triples, excluded = compute_triples(records, **kw)
    if not triples:
        raise UsageError("no valid sessions to summarize")
    ordered = [triples[k] for k in sorted(triples)]
    return {m: aggregate_ns([t.get(m) for t in ordered], len(excluded)) for m in METRICS}


def baseline_errors(records: Sequence[SessionRecord], **kw) -> dict[str, LatencyStats]:
    """Baseline-rig statistics, labelled as the measurement-error terms."""
    return {ERROR_LABELS[m]: s for m, s in summarize(records, **kw).items()}


def stats_csv(stats: Mapping[str, LatencyStats]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=STATS_FIELDS, lineterminator="\n")
    w.writeheader()
    for metric, s in stats.items():
        w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in s.row(metric).items()})
    return buf.getvalue()


def stats_json(stats: Mapping[str, LatencyStats], **extra) -> str:
    doc = {"unit": "ms", "quartile_method": QUARTILE_METHOD,
           "metrics": {m: asdict(s) for m, s in stats.items()}}
    doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def per_session_rows(triples: Mapping[int, LatencyTriple]) -> str:
    """Tidy table: one row per session per metric, for external plotting."""
    buf = io.StringIO()
    buf.write("session_id,metric,latency_ms\n")
    for sid in sorted(triples):
        for m in METRICS:
            buf.write(f"{sid},{m},{triples[sid].get(m) / 1e6:.6f}\n")
    return buf.getvalue()

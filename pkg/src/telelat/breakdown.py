"""Component-wise attribution of mean chain latency.

Components that were measured directly are subtracted from the chain's
mean total; whatever remains is attributed to the one component that
could not be measured.  Sums are carried out in decimal arithmetic so a
table always closes exactly on its total, whatever the input order.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Mapping, Sequence

from .errors import NegativeResidualError, UsageError


class Provenance(str, enum.Enum):
    MEASURED = "measured"
    ESTIMATED = "estimated"
    RESIDUAL = "residual"


@dataclass(frozen=True)
class Component:
    name: str
    exact: Decimal
    provenance: Provenance

    @property
    def mean_ms(self) -> float:
        return float(self.exact)


@dataclass(frozen=True)
class BreakdownTable:
    chain: str
    total: Decimal
    components: tuple[Component, ...]

    def __post_init__(self):
        residuals = [c for c in self.components if c.provenance is Provenance.RESIDUAL]
        if len(residuals) != 1:
            raise ValueError(f"{self.chain}: expected exactly one residual component, got {len(residuals)}")
        if sum((c.exact for c in self.components), Decimal(0)) != self.total:
            raise ValueError(f"{self.chain}: components do not sum to the total")

    @property
    def total_ms(self) -> float:
        return float(self.total)

    @property
    def residual(self) -> Component:
        return next(c for c in self.components if c.provenance is Provenance.RESIDUAL)

    def component(self, name: str) -> Component:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)


def _dec(v) -> Decimal:
    if isinstance(v, Decimal):
        return v
    if isinstance(v, float):
        return Decimal(repr(v))
    return Decimal(str(v))


def attribute_residual(total_ms, measured: Iterable[tuple], residual_name: str,
                       chain: str = "M2M") -> BreakdownTable:
    """Close the chain total with a residual component.

    ``measured`` holds ``(name, mean_ms)`` pairs, or ``(name, mean_ms,
    provenance)`` to mark derived rather than measured inputs.
    """
    total = _dec(total_ms)
    if not total > 0:
        raise UsageError(f"{chain}: total must be > 0")
    comps = []
    for item in measured:
        name, mean = item[0], _dec(item[1])
        prov = Provenance(item[2]) if len(item) > 2 else Provenance.MEASURED
        if prov is Provenance.RESIDUAL:
            raise UsageError(f"{chain}: {name} cannot be an input residual")
        if mean < 0:
            raise UsageError(f"{chain}: component {name} is negative")
        comps.append(Component(name, mean, prov))
    if residual_name in {c.name for c in comps}:
        raise UsageError(f"{chain}: residual {residual_name!r} is also listed as measured")
    residual = total - sum((c.exact for c in comps), Decimal(0))
    if residual < 0:
        raise NegativeResidualError(chain, float(-residual))
    comps.append(Component(residual_name, residual, Provenance.RESIDUAL))
    return BreakdownTable(chain, total, tuple(comps))


def network_latency_from_throughput(payload_kb: float, throughput_kbps: float) -> float:
    """Serialization delay in ms of ``payload_kb`` at ``throughput_kbps``."""
    if not throughput_kbps > 0:
        raise UsageError("throughput must be > 0")
    if payload_kb < 0:
        raise UsageError("payload must be >= 0")
    return payload_kb / throughput_kbps * 1000.0


def refresh_expectation(rate_hz: float) -> float:
    """Mean wait for the next refresh, uniform over one period, in ms."""
    if not rate_hz > 0:
        raise UsageError("refresh rate must be > 0")
    return (1000.0 / rate_hz) / 2.0


def e2e_share(m2m_mean: float, g2g_mean: float) -> tuple[float, float]:
    if m2m_mean < 0 or g2g_mean < 0:
        raise UsageError("means must be non-negative")
    total = m2m_mean + g2g_mean
    if total == 0:
        raise UsageError("M2M and G2G means sum to zero")
    m = m2m_mean / total
    return m, 1.0 - m


# -- report documents ----------------------------------------------------------

def _component_input(chain: str, spec: Mapping) -> tuple[str, Decimal, Provenance]:
    name = spec.get("name")
    if not name:
        raise UsageError(f"{chain}: component without a name")
    prov = spec.get("provenance")
    if "mean_ms" in spec:
        return name, _dec(spec["mean_ms"]), Provenance(prov or "measured")
    if "throughput" in spec:
        t = spec["throughput"]
        ms = network_latency_from_throughput(float(t["payload_kb"]), float(t["throughput_kbps"]))
        return name, _dec(ms), Provenance(prov or "estimated")
    if "refresh_hz" in spec:
        return name, _dec(refresh_expectation(float(spec["refresh_hz"]))), Provenance(prov or "estimated")
    raise UsageError(f"{chain}: component {name} needs mean_ms, throughput or refresh_hz")


def tables_from_document(doc: Mapping) -> list[BreakdownTable]:
    """Build tables from a breakdown input document (see presets/breakdown-5g-nsa.json)."""
    chains = doc.get("chains")
    if not isinstance(chains, list) or not chains:
        raise UsageError("breakdown document needs a non-empty 'chains' list")
    tables = []
    for entry in chains:
        chain = str(entry.get("chain", "")).upper()
        if chain not in ("M2M", "G2G"):
            raise UsageError(f"unknown chain {entry.get('chain')!r}")
        if "total_ms" not in entry or "residual" not in entry:
            raise UsageError(f"{chain}: total_ms and residual are required")
        comps = [_component_input(chain, c) for c in entry.get("components", [])]
        tables.append(attribute_residual(entry["total_ms"], comps, entry["residual"], chain))
    return tables


def _fmt(d: Decimal) -> str:
    return format(d.normalize(), "f") if d != 0 else "0"


def report_csv(tables: Sequence[BreakdownTable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["chain", "component", "mean_ms", "provenance"])
    for t in tables:
        for c in t.components:
            w.writerow([t.chain, c.name, _fmt(c.exact), c.provenance.value])
    return buf.getvalue()


def report_json(tables: Sequence[BreakdownTable], footnotes: Sequence[str] = ()) -> str:
    doc: dict = {"unit": "ms", "chains": []}
    for t in tables:
        doc["chains"].append({
            "chain": t.chain,
            "total_ms": float(t.total),
            "components": [{"name": c.name, "mean_ms": c.mean_ms, "provenance": c.provenance.value}
                           for c in t.components],
        })
    totals = {t.chain: float(t.total) for t in tables}
    if "M2M" in totals and "G2G" in totals:
        m, g = e2e_share(totals["M2M"], totals["G2G"])
        doc["e2e_share"] = {"M2M": m, "G2G": g}
    if footnotes:
        doc["footnotes"] = list(footnotes)
    return json.dumps(doc, indent=2) + "\n"

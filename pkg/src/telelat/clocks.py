"""Two imperfect node clocks: reading, alignment, and offset estimation.

A node clock reads true (reference) time ``t`` as

    t + offset_ns + round(drift_ppb * t / 1e9) + jitter

with the drift term rounded half-to-even in exact rational arithmetic and
the jitter draw a deterministic function of ``(seed, draw_index)``.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, UsageError
from .events import ClockDomain, Timestamp

_BILLION = 10**9


@dataclass(frozen=True)
class ClockModel:
    offset_ns: int = 0
    drift_ppb: float = 0.0
    jitter_std_ns: float = 0.0
    seed: int = 0
    domain: ClockDomain = ClockDomain.STATION

    def __post_init__(self):
        if not self.jitter_std_ns >= 0:
            raise ConfigError(f"jitter_std_ns must be >= 0, got {self.jitter_std_ns}")
        if self.seed < 0:
            raise ConfigError("clock seed must be non-negative")
        if self.domain is ClockDomain.REFERENCE:
            raise ConfigError("a node clock cannot live in the reference domain")
        object.__setattr__(self, "offset_ns", int(self.offset_ns))


@dataclass(frozen=True)
class OffsetStats:
    min_us: float
    max_us: float
    mean_us: float
    std_us: float
    n: int

    def as_dict(self) -> dict:
        return {"n": self.n, "min_us": self.min_us, "max_us": self.max_us,
                "mean_us": self.mean_us, "std_us": self.std_us}


class _JitterCache:
    """Standard-normal streams per seed, grown on demand.

    numpy fills arrays sequentially, so a longer draw from a fresh
    generator extends a shorter one without changing its prefix.
    """

    def __init__(self):
        self._streams: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    def get(self, seed: int, index: int) -> float:
        return float(self.block(seed, index, 1)[0])

    def block(self, seed: int, start: int, count: int) -> np.ndarray:
        need = start + count
        with self._lock:
            arr = self._streams.get(seed)
            if arr is None or arr.shape[0] < need:
                size = max(need, 1024, 0 if arr is None else 2 * arr.shape[0])
                arr = np.random.default_rng(seed).standard_normal(size)
                if len(self._streams) > 64:
                    self._streams.clear()
                self._streams[seed] = arr
            return arr[start:need]


_jitter = _JitterCache()


def drift_term(drift_ppb: float, t_ns: int) -> int:
    return round(Fraction(drift_ppb) * t_ns / _BILLION)


def jitter_ns(model: ClockModel, draw_index: int) -> int:
    if model.jitter_std_ns == 0:
        return 0
    return round(model.jitter_std_ns * _jitter.get(model.seed, draw_index))


def jitter_block(model: ClockModel, start: int, count: int) -> np.ndarray:
    """Jitter for draw indices ``start .. start+count-1`` as int64 ns."""
    if model.jitter_std_ns == 0:
        return np.zeros(count, dtype=np.int64)
    # np.rint rounds half to even, same as round() above
    return np.rint(model.jitter_std_ns * _jitter.block(model.seed, start, count)).astype(np.int64)


def read_clock(model: ClockModel, true_time: Timestamp, draw_index: int = 0) -> Timestamp:
    """What the node clock displays at true time ``true_time``."""
    if true_time.domain is not ClockDomain.REFERENCE:
        raise DomainError("read_clock expects a reference-domain time")
    t = true_time.t_ns
    return Timestamp(t + model.offset_ns + drift_term(model.drift_ppb, t) + jitter_ns(model, draw_index),
                     model.domain)


class ClockReader:
    """A clock model plus its draw counter; one per simulation worker."""

    def __init__(self, model: ClockModel, start_index: int = 0):
        self.model = model
        self.draws = start_index

    def read(self, true_time: Timestamp) -> Timestamp:
        ts = read_clock(self.model, true_time, self.draws)
        self.draws += 1
        return ts


def _to_reference(t_ns: int, model: ClockModel) -> int:
    # Invert t -> t + round(d*t/1e9) on integers; the map is injective for
    # drift >= 0, while negative drift forces occasional 1 ns collisions.
    u = t_ns - model.offset_ns
    d = Fraction(model.drift_ppb)
    if d == 0:
        return u
    exact = Fraction(u) * _BILLION / (_BILLION + d)
    guess = round(exact)
    hits = [c for c in range(guess - 2, guess + 3) if c + drift_term(d, c) == u]
    if hits:
        return min(hits, key=lambda c: (abs(c - exact), c))
    return guess


def align(t: Timestamp, from_model: ClockModel | None = None,
          to: ClockDomain = ClockDomain.REFERENCE, *, to_model: ClockModel | None = None,
          assume_synchronized: bool = False) -> Timestamp:
    """Map ``t`` into another domain by inverting offset and drift.

    Jitter cannot be undone.  Real logs have no clock model; pass
    ``assume_synchronized=True`` to relabel them as if disciplined.
    """
    if assume_synchronized:
        return t.relabel(to)
    if t.domain is to:
        return t
    if t.domain is ClockDomain.REFERENCE:
        ref = t.t_ns
    else:
        if from_model is None:
            raise UsageError(
                f"no clock model for the {t.domain.value} domain; "
                "use assume_synchronized for disciplined real-world logs")
        if from_model.domain is not t.domain:
            raise DomainError(f"model is for {from_model.domain.value}, timestamp is {t.domain.value}")
        ref = _to_reference(t.t_ns, from_model)
    if to is ClockDomain.REFERENCE:
        return Timestamp(ref, to)
    if to_model is None:
        return Timestamp(ref, to)
    if to_model.domain is not to:
        raise DomainError(f"target model is for {to_model.domain.value}")
    return Timestamp(ref + to_model.offset_ns + drift_term(to_model.drift_ppb, ref), to)


def _as_ns(v) -> int:
    return v.t_ns if isinstance(v, Timestamp) else int(v)


def estimate_offset(paired_events: Iterable[tuple]) -> OffsetStats:
    """Absolute station/vehicle disagreement over same-event pairs, in µs."""
    diffs = np.array([abs(_as_ns(s) - _as_ns(v)) for s, v in paired_events], dtype=np.float64)
    if diffs.size == 0:
        raise UsageError("estimate_offset needs at least one pair")
    us = diffs / 1e3
    std = float(np.std(us, ddof=1)) if us.size > 1 else 0.0
    mean = float(np.mean(us))
    lo, hi = float(us.min()), float(us.max())
    # guard the min <= mean <= max invariant against summation rounding
    mean = min(max(mean, lo), hi)
    return OffsetStats(lo, hi, mean, std, int(us.size))


def read_paired_events(path) -> list[tuple[int, int]]:
    """Load ``event_id,t_station_ns,t_vehicle_ns`` rows (header optional)."""
    pairs = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#") or row[0].strip() == "event_id":
                continue
            if len(row) != 3:
                raise ConfigError(f"expected 3 columns, got {len(row)}", line=lineno, path=str(path))
            try:
                pairs.append((int(row[1]), int(row[2])))
            except ValueError as exc:
                raise ConfigError(str(exc), line=lineno, path=str(path)) from None
    return pairs


def write_paired_events(fh, pairs: Sequence[tuple[int, int]]) -> None:
    fh.write("event_id,t_station_ns,t_vehicle_ns\n")
    for i, (s, v) in enumerate(pairs):
        fh.write(f"{i},{_as_ns(s)},{_as_ns(v)}\n")

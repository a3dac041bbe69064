"""Steering-wheel motion onset/completion detection from gyroscope streams.

Tri-axial angular velocity is fused to one scalar per sample, smoothed by a
first-order IIR low-pass filter and compared against a threshold.  Onset is
the first sample whose filtered value strictly exceeds the threshold while no
motion is active.  A motion completes at the first sub-threshold sample after
which the signal stays at or below threshold for ``completion_window``
seconds.  Filter state runs continuously across motions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, DetectionFailure, UsageError
from .events import ClockDomain, Timestamp

NOMINAL_SAMPLE_PERIOD_NS = 250_000


@dataclass(frozen=True)
class L2Norm:
    def __call__(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        return np.sqrt(w[..., 0] * w[..., 0] + w[..., 1] * w[..., 1] + w[..., 2] * w[..., 2])


@dataclass(frozen=True)
class AxisProjection:
    axis: tuple[float, float, float]

    def __post_init__(self):
        a = tuple(float(v) for v in self.axis)
        if len(a) != 3:
            raise ConfigError("projection axis needs three components")
        norm = math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
        if not norm > 0 or not math.isfinite(norm):
            raise ConfigError("projection axis must have non-zero length")
        object.__setattr__(self, "axis", (a[0] / norm, a[1] / norm, a[2] / norm))

    def __call__(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        ax, ay, az = self.axis
        return np.abs(w[..., 0] * ax + w[..., 1] * ay + w[..., 2] * az)


Fusion = L2Norm | AxisProjection


@dataclass(frozen=True)
class DetectorConfig:
    alpha: float = 0.1
    threshold: float = 0.05          # rad/s
    completion_window: float = 2.5  # seconds
    fusion: Fusion = field(default_factory=L2Norm)

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if not self.threshold > 0:
            raise ConfigError(f"threshold must be > 0, got {self.threshold}")
        if not self.completion_window > 0:
            raise ConfigError(f"completion_window must be > 0, got {self.completion_window}")

    @property
    def window_ns(self) -> int:
        return round(self.completion_window * 1e9)


@dataclass(frozen=True)
class GyroSample:
    t: Timestamp
    wx: float
    wy: float
    wz: float


@dataclass(frozen=True)
class MotionEvent:
    onset: Timestamp
    completion: Timestamp | None
    peak_velocity: float

    def __post_init__(self):
        if self.completion is not None and not self.completion.t_ns > self.onset.t_ns:
            raise ValueError("completion must come after onset")


@dataclass
class GyroTrace:
    """Columnar gyro stream: ``t_ns`` (n,) int64 and ``w`` (n, 3) rad/s."""

    t_ns: np.ndarray
    w: np.ndarray
    domain: ClockDomain = ClockDomain.REFERENCE

    def __post_init__(self):
        self.t_ns = np.asarray(self.t_ns, dtype=np.int64)
        self.w = np.asarray(self.w, dtype=np.float64).reshape(-1, 3)
        if self.t_ns.shape[0] != self.w.shape[0]:
            raise UsageError("timestamps and samples differ in length")

    @classmethod
    def from_samples(cls, samples: Sequence[GyroSample]) -> "GyroTrace":
        if not samples:
            return cls(np.empty(0, np.int64), np.empty((0, 3)))
        domain = samples[0].t.domain
        return cls(np.array([s.t.t_ns for s in samples], dtype=np.int64),
                   np.array([(s.wx, s.wy, s.wz) for s in samples], dtype=np.float64),
                   domain)

    def __len__(self) -> int:
        return int(self.t_ns.shape[0])


def read_gyro_trace(path, domain: ClockDomain = ClockDomain.REFERENCE) -> GyroTrace:
    """Load a ``t_ns,wx,wy,wz`` CSV file (header optional)."""
    t, w = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if row[0].strip() == "t_ns":
                continue
            if len(row) != 4:
                raise ConfigError(f"expected 4 columns, got {len(row)}", line=lineno, path=str(path))
            try:
                t.append(int(row[0]))
                w.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ConfigError(str(exc), line=lineno, path=str(path)) from None
    trace = GyroTrace(np.array(t, dtype=np.int64), np.array(w, dtype=np.float64).reshape(-1, 3), domain)
    _check_increasing(trace.t_ns)
    return trace


def _check_increasing(t: np.ndarray, after: int | None = None) -> None:
    if t.size and after is not None and t[0] <= after:
        raise UsageError("sample timestamps must be strictly increasing")
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise UsageError("sample timestamps must be strictly increasing")


def fuse(sample: GyroSample, config: DetectorConfig) -> float:
    """Scalar angular speed of one sample under the configured fusion."""
    return float(config.fusion(np.array([sample.wx, sample.wy, sample.wz])))


def lowpass(stream: Iterable[float], alpha: float) -> np.ndarray:
    """y[0] = x[0]; y[n] = alpha*x[n] + (1-alpha)*y[n-1]."""
    if not (0.0 < alpha <= 1.0):
        raise ConfigError(f"alpha must be in (0, 1], got {alpha}")
    return kernels.lowpass(np.asarray(list(stream) if not isinstance(stream, np.ndarray) else stream,
                                      dtype=np.float64), alpha)


class MotionDetector:
    """Streaming detector; feed chunks in time order, then call :meth:`finish`."""

    def __init__(self, config: DetectorConfig, domain: ClockDomain = ClockDomain.REFERENCE):
        self.config = config
        self.domain = domain
        self._window = config.window_ns
        self._state = kernels.initial_state()
        self._last_t: int | None = None
        self.events: list[MotionEvent] = []

    def _event(self, onset: int, completion: int | None, peak: float) -> MotionEvent:
        return MotionEvent(Timestamp(onset, self.domain),
                           None if completion is None else Timestamp(completion, self.domain),
                           float(peak))

    @property
    def active_onset(self) -> Timestamp | None:
        """Onset of the motion in progress, if any."""
        if self._state[2]:
            return Timestamp(self._state[3], self.domain)
        return None

    def feed_fused(self, t_ns, x) -> list[MotionEvent]:
        t_ns = np.asarray(t_ns, dtype=np.int64)
        _check_increasing(t_ns, self._last_t)
        if t_ns.size == 0:
            return []
        raw, self._state = kernels.run_detector(
            t_ns, x, self.config.alpha, self.config.threshold, self._window, self._state)
        self._last_t = int(t_ns[-1])
        new = [self._event(*e) for e in raw]
        self.events.extend(new)
        return new

    def feed(self, trace: GyroTrace) -> list[MotionEvent]:
        return self.feed_fused(trace.t_ns, self.config.fusion(trace.w))

    def finish(self) -> list[MotionEvent]:
        """All events, including a motion still ongoing at stream end."""
        out = list(self.events)
        if self._state[2]:
            out.append(self._event(self._state[3], None, self._state[4]))
        return out


def detect_fused(t_ns, x, config: DetectorConfig,
                 domain: ClockDomain = ClockDomain.REFERENCE) -> list[MotionEvent]:
    """Run the detector over an already-fused scalar signal."""
    det = MotionDetector(config, domain)
    det.feed_fused(t_ns, x)
    return det.finish()


def detect(stream: Sequence[GyroSample] | GyroTrace, config: DetectorConfig) -> list[MotionEvent]:
    trace = stream if isinstance(stream, GyroTrace) else GyroTrace.from_samples(list(stream))
    if len(trace) == 0:
        raise UsageError("detect() needs a non-empty stream")
    det = MotionDetector(config, trace.domain)
    det.feed(trace)
    return det.finish()


def detection_lag(stream, config: DetectorConfig, true_onset: Timestamp) -> int:
    """First detected onset minus the true onset, in ns."""
    events = detect(stream, config)
    if not events:
        raise DetectionFailure("no motion detected in stream")
    return events[0].onset - true_onset

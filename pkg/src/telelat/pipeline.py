"""Deterministic simulator of the teleoperation measurement loop.

Each session starts with the operator moving the station wheel at a known
true time.  The command chain (input device, pre-processing, network,
post-processing, actuation) delays the matching vehicle-wheel motion; each
wheel is sampled by its own gyro and run through its own detector.  The
vehicle detection drives the LED, the video chain (camera, stream server,
network, stream client, monitor) delays the light reaching the
phototransistor, and each node stamps its events on its own imperfect
clock.  Every random draw is kept in the session's ground-truth ledger.

Randomness is split into seed lanes: lane ``k`` of master seed ``s`` is the
generator ``default_rng(SeedSequence([s, k]))``; per-session lanes append the
session id.  A component's draws depend only on its own lane, so changing
one lane never perturbs another chain.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .clocks import ClockModel, drift_term, jitter_block
from .errors import ConfigError
from .events import (
    NO_DETECTION, ClockDomain, GroundTruth, LogFormat, SessionRecord, Timestamp, write_log,
)
from .motion import DetectorConfig, GyroTrace, MotionDetector

M2M_COMPONENTS = ("input_device", "pre_processing", "network_cmd", "post_processing", "actuation")
G2G_COMPONENTS = ("camera", "stream_pre", "network_video", "stream_post", "monitor")

DEFAULT_LANES = {
    "input_device": 1, "pre_processing": 2, "network_cmd": 3, "post_processing": 4, "actuation": 5,
    "camera": 11, "stream_pre": 12, "network_video": 13, "stream_post": 14, "monitor": 15,
    "led_drive": 21, "led_error": 22, "pt_error": 23, "extra_trigger": 24, "extra_trigger_delay": 25,
    "sampling_station": 31, "sampling_vehicle": 32,
    "clock_station": 41, "clock_vehicle": 42,
}

SESSION_EPOCH_NS = 1_000_000_000
_CHUNK = 256


def lane_rng(master_seed: int, lane: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(lane), *map(int, extra)]))


def lane_seed(master_seed: int, lane: int) -> int:
    """Integer seed for consumers that take a plain seed (clock jitter)."""
    return int(np.random.SeedSequence([int(master_seed), int(lane)]).generate_state(1, np.uint64)[0] >> 1)


def ms_to_ns(ms) -> np.ndarray:
    return np.rint(np.asarray(ms, dtype=np.float64) * 1e6).astype(np.int64)


# -- delay models ---------------------------------------------------------------

@dataclass(frozen=True)
class DelayModel:
    lane: int = field(default=0, kw_only=True)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def mean_ms(self) -> float:
        raise NotImplementedError

    def sample_ns(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return ms_to_ns(self.sample(rng, n))

    def with_lane(self, lane: int) -> "DelayModel":
        return replace(self, lane=lane)


@dataclass(frozen=True)
class Constant(DelayModel):
    ms: float

    def __post_init__(self):
        if self.ms < 0:
            raise ConfigError(f"constant delay must be >= 0, got {self.ms}")

    def sample(self, rng, n):
        return np.full(n, float(self.ms))

    @property
    def mean_ms(self):
        return float(self.ms)


@dataclass(frozen=True)
class Uniform(DelayModel):
    lo: float
    hi: float

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi:
            raise ConfigError(f"uniform bounds need 0 <= lo <= hi, got ({self.lo}, {self.hi})")

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, n)

    @property
    def mean_ms(self):
        return (self.lo + self.hi) / 2


@dataclass(frozen=True)
class Normal(DelayModel):
    """Normal truncated at zero (negative draws are redrawn)."""

    mean: float
    std: float

    def __post_init__(self):
        if self.std < 0:
            raise ConfigError("normal std must be >= 0")
        if self.std == 0 and self.mean < 0:
            raise ConfigError("degenerate normal below zero")
        if self.std > 0 and self.mean / self.std < -5:
            raise ConfigError("normal delay is almost entirely below zero")

    def sample(self, rng, n):
        out = rng.normal(self.mean, self.std, n)
        bad = out < 0
        while bad.any():
            out[bad] = rng.normal(self.mean, self.std, int(bad.sum()))
            bad = out < 0
        return out

    @property
    def mean_ms(self):
        if self.std == 0:
            return float(self.mean)
        from math import erf, exp, pi, sqrt
        a = -self.mean / self.std
        pdf = exp(-a * a / 2) / sqrt(2 * pi)
        tail = 1 - 0.5 * (1 + erf(a / sqrt(2)))
        return self.mean + self.std * pdf / tail


@dataclass(frozen=True)
class LogNormal(DelayModel):
    """exp(N(mu, sigma)) milliseconds."""

    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError("lognormal sigma must be >= 0")

    def sample(self, rng, n):
        return rng.lognormal(self.mu, self.sigma, n)

    @property
    def mean_ms(self):
        return float(np.exp(self.mu + self.sigma**2 / 2))


@dataclass(frozen=True)
class PeriodicSampling(DelayModel):
    """Wait for the next tick of a periodic process.

    With a random phase the wait is Uniform[0, period); with a fixed phase
    it is that constant.
    """

    period: float
    phase: float | None = None

    def __post_init__(self):
        if not self.period > 0:
            raise ConfigError("sampling period must be > 0")
        if self.phase is not None and not 0 <= self.phase < self.period:
            raise ConfigError("fixed phase must lie in [0, period)")

    def sample(self, rng, n):
        if self.phase is not None:
            return np.full(n, float(self.phase))
        return rng.uniform(0.0, self.period, n)

    @property
    def mean_ms(self):
        return float(self.phase) if self.phase is not None else self.period / 2


@dataclass(frozen=True)
class Sum(DelayModel):
    """Sum of independent terms drawn in order from the same lane."""

    terms: tuple[DelayModel, ...]

    def sample(self, rng, n):
        total = np.zeros(n)
        for term in self.terms:
            total = total + term.sample(rng, n)
        return total

    def sample_ns(self, rng, n):
        # round each term separately so Constant terms shift draws exactly
        total = np.zeros(n, dtype=np.int64)
        for term in self.terms:
            total += term.sample_ns(rng, n)
        return total

    @property
    def mean_ms(self):
        return sum(t.mean_ms for t in self.terms)


# -- configuration --------------------------------------------------------------

@dataclass(frozen=True)
class ProfileSpec:
    """Operator motion: a step or ramp in angular speed, or a recorded trace.

    Velocity is applied along ``axis``.  A recorded trace is replayed with
    zero-order hold; its time zero is the true motion onset.
    """

    kind: str = "step"
    amplitude: float = 1.0        # rad/s, step
    slope: float = 1.0            # rad/s^2, ramp
    trace: GyroTrace | None = field(default=None, compare=False)
    duration: float = 1.0         # s of motion after onset
    inter_session_gap: float = 5.0
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("step", "ramp", "recorded"):
            raise ConfigError(f"unknown profile kind {self.kind!r}")
        if self.kind == "recorded" and self.trace is None:
            raise ConfigError("recorded profile needs a trace")
        if self.kind == "ramp" and not self.slope > 0:
            raise ConfigError("ramp slope must be > 0")
        if not self.duration > 0 or not self.inter_session_gap > 0:
            raise ConfigError("duration and inter_session_gap must be > 0")

    @property
    def duration_ns(self) -> int:
        return round(self.duration * 1e9)

    def velocity(self, t_rel_ns: np.ndarray) -> np.ndarray:
        """Angular velocity (n, 3) at times relative to the true onset."""
        t = np.asarray(t_rel_ns, dtype=np.int64)
        axis = np.asarray(self.axis, dtype=np.float64)
        if self.kind == "recorded":
            tr = self.trace
            idx = np.searchsorted(tr.t_ns, t, side="right") - 1
            out = np.zeros((t.shape[0], 3))
            ok = (idx >= 0) & (t <= tr.t_ns[-1])
            out[ok] = tr.w[idx[ok]]
            return out
        moving = (t >= 0) & (t < self.duration_ns)
        if self.kind == "step":
            speed = np.where(moving, self.amplitude, 0.0)
        else:
            speed = np.where(moving, self.slope * (t / 1e9), 0.0)
        return speed[:, None] * axis[None, :]


@dataclass(frozen=True)
class SamplingConfig:
    """How one node samples its gyro: period, phase, additive sensor noise."""

    period_ns: int = 250_000
    phase: str = "random"     # random | fixed
    noise_std: float = 0.0    # rad/s per axis
    lane: int = 0

    def __post_init__(self):
        if not self.period_ns > 0:
            raise ConfigError("sample period must be > 0")
        if self.phase not in ("random", "fixed"):
            raise ConfigError(f"phase must be random or fixed, got {self.phase!r}")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")


@dataclass(frozen=True)
class OpticsConfig:
    led_drive: DelayModel = field(default_factory=lambda: Constant(0.1, lane=DEFAULT_LANES["led_drive"]))
    led_error: DelayModel = field(default_factory=lambda: Constant(0.0, lane=DEFAULT_LANES["led_error"]))
    pt_error: DelayModel = field(default_factory=lambda: Constant(0.0, lane=DEFAULT_LANES["pt_error"]))
    extra_trigger_prob: float = 0.0
    extra_trigger_delay: DelayModel = field(
        default_factory=lambda: Uniform(1.0, 20.0, lane=DEFAULT_LANES["extra_trigger_delay"]))
    extra_trigger_lane: int = DEFAULT_LANES["extra_trigger"]

    def __post_init__(self):
        if not 0 <= self.extra_trigger_prob <= 1:
            raise ConfigError("extra_trigger_prob must lie in [0, 1]")


def _zero_chain(names) -> dict[str, DelayModel]:
    return {n: Constant(0.0, lane=DEFAULT_LANES[n]) for n in names}


@dataclass(frozen=True)
class PipelineConfig:
    m2m_chain: Mapping[str, DelayModel] = field(default_factory=lambda: _zero_chain(M2M_COMPONENTS))
    g2g_chain: Mapping[str, DelayModel] = field(default_factory=lambda: _zero_chain(G2G_COMPONENTS))
    station_clock: ClockModel = field(default_factory=lambda: ClockModel(
        seed=DEFAULT_LANES["clock_station"], domain=ClockDomain.STATION))
    vehicle_clock: ClockModel = field(default_factory=lambda: ClockModel(
        seed=DEFAULT_LANES["clock_vehicle"], domain=ClockDomain.VEHICLE))
    detector_station: DetectorConfig = field(default_factory=DetectorConfig)
    detector_vehicle: DetectorConfig = field(default_factory=DetectorConfig)
    sampling_station: SamplingConfig = field(default_factory=lambda: SamplingConfig(
        lane=DEFAULT_LANES["sampling_station"]))
    sampling_vehicle: SamplingConfig = field(default_factory=lambda: SamplingConfig(
        lane=DEFAULT_LANES["sampling_vehicle"]))
    optics: OpticsConfig = field(default_factory=OpticsConfig)
    motion_profile: ProfileSpec = field(default_factory=ProfileSpec)
    sessions: int = 100
    seed: int = 0
    pre_roll_ms: float = 20.0

    def __post_init__(self):
        for label, chain, names in (("m2m", self.m2m_chain, M2M_COMPONENTS),
                                    ("g2g", self.g2g_chain, G2G_COMPONENTS)):
            missing = [n for n in names if n not in chain]
            extra = [n for n in chain if n not in names]
            if missing or extra:
                raise ConfigError(f"{label} chain: missing {missing} unknown {extra}")
        if self.sessions < 1:
            raise ConfigError("sessions must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.station_clock.domain is not ClockDomain.STATION:
            raise ConfigError("station clock must be in the station domain")
        if self.vehicle_clock.domain is not ClockDomain.VEHICLE:
            raise ConfigError("vehicle clock must be in the vehicle domain")
        prof = self.motion_profile
        for side, det in (("station", self.detector_station), ("vehicle", self.detector_vehicle)):
            if prof.kind == "step" and not prof.amplitude > det.threshold:
                raise ConfigError(f"step amplitude {prof.amplitude} must exceed the {side} threshold")
            if prof.inter_session_gap < det.completion_window:
                raise ConfigError("inter_session_gap must be >= completion_window")
        if self.pre_roll_ms < 0:
            raise ConfigError("pre_roll_ms must be >= 0")

    @property
    def gap_ns(self) -> int:
        return round(self.motion_profile.inter_session_gap * 1e9)


# -- simulation -------------------------------------------------------------------

@dataclass
class SimulationResult:
    records: list[SessionRecord]
    truth: list[GroundTruth]
    config: PipelineConfig
    baseline: bool = False

    @property
    def truth_by_session(self) -> dict[int, GroundTruth]:
        return {g.session_id: g for g in self.truth}

    def event_log(self, fmt: LogFormat | str = LogFormat.CSV) -> str:
        buf = io.StringIO()
        truth = self.truth_by_session
        write_log(buf, self.records, truth, fmt)
        if not truth:
            # still a simulated log, even if every session failed
            return "#simulated=true\n" + buf.getvalue()
        return buf.getvalue()

    def ledger_jsonl(self) -> str:
        import json
        lines = []
        for g in sorted(self.truth, key=lambda g: g.session_id):
            lines.append(json.dumps({"session_id": g.session_id, **{k: int(v) for k, v in g.draws.items()}},
                                    sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


def _chain_draws(chain: Mapping[str, DelayModel], names, master: int, n: int) -> dict[str, np.ndarray]:
    return {name: chain[name].sample_ns(lane_rng(master, chain[name].lane), n) for name in names}


def _detect_onset(profile: ProfileSpec, sampling: SamplingConfig, detector: DetectorConfig,
                  onset_ns: int, pre_roll_ns: int, rng: np.random.Generator) -> int | None:
    """True time of the first detected onset for one wheel, or None."""
    period = sampling.period_ns
    phase = int(rng.integers(0, period)) if sampling.phase == "random" else 0
    # with fixed phase a sample lands exactly on the true onset
    first = onset_ns - (pre_roll_ns // period) * period + phase
    end = onset_ns + profile.duration_ns
    det = MotionDetector(detector, ClockDomain.REFERENCE)
    k = 0
    while True:
        t = first + period * np.arange(k, k + _CHUNK, dtype=np.int64)
        w = profile.velocity(t - onset_ns)
        if sampling.noise_std > 0:
            w = w + rng.normal(0.0, sampling.noise_std, w.shape)
        det.feed(GyroTrace(t, w))
        if det.events:
            return det.events[0].onset.t_ns
        if det.active_onset is not None:
            return det.active_onset.t_ns
        if t[-1] >= end:
            return None
        k += _CHUNK


def _read(model: ClockModel, t_ref: int, jitter: int) -> int:
    return t_ref + model.offset_ns + drift_term(model.drift_ppb, t_ref) + jitter


def _run(config: PipelineConfig, baseline: bool) -> SimulationResult:
    n = config.sessions
    master = config.seed
    m2m = _chain_draws(config.m2m_chain, M2M_COMPONENTS, master, n)
    g2g = _chain_draws(config.g2g_chain, G2G_COMPONENTS, master, n)
    opt = config.optics
    led_drive = opt.led_drive.sample_ns(lane_rng(master, opt.led_drive.lane), n)
    led_err = opt.led_error.sample_ns(lane_rng(master, opt.led_error.lane), n)
    pt_err = opt.pt_error.sample_ns(lane_rng(master, opt.pt_error.lane), n)
    extra_u = lane_rng(master, opt.extra_trigger_lane).random(n)
    extra_delay = opt.extra_trigger_delay.sample_ns(lane_rng(master, opt.extra_trigger_delay.lane), n)

    # a clock model's seed field is its lane inside a pipeline
    sclk = replace(config.station_clock, seed=lane_seed(master, config.station_clock.seed))
    vclk = replace(config.vehicle_clock, seed=lane_seed(master, config.vehicle_clock.seed))
    sjit = jitter_block(sclk, 0, 2 * n)
    vjit = jitter_block(vclk, 0, 2 * n)

    pre_roll = round(config.pre_roll_ms * 1e6)
    records: list[SessionRecord] = []
    truths: list[GroundTruth] = []
    for i in range(n):
        sid = i + 1
        m_s = SESSION_EPOCH_NS + i * config.gap_ns
        m2m_phy = 0 if baseline else int(sum(int(m2m[c][i]) for c in M2M_COMPONENTS))
        g2g_phy = 0 if baseline else int(sum(int(g2g[c][i]) for c in G2G_COMPONENTS))
        m_v = m_s + m2m_phy
        gys_ref = _detect_onset(config.motion_profile, config.sampling_station, config.detector_station,
                                m_s, pre_roll, lane_rng(master, config.sampling_station.lane, sid))
        gyv_ref = _detect_onset(config.motion_profile, config.sampling_vehicle, config.detector_vehicle,
                                m_v, pre_roll, lane_rng(master, config.sampling_vehicle.lane, sid))

        draws: dict[str, int] = {}
        if not baseline:
            draws.update({f"m2m.{c}": int(m2m[c][i]) for c in M2M_COMPONENTS})
            draws.update({f"g2g.{c}": int(g2g[c][i]) for c in G2G_COMPONENTS})

        gy_s = gy_v = led_on = pt = None
        triggers: list[Timestamp] = []
        if gys_ref is not None:
            gy_s = _read(sclk, gys_ref, int(sjit[2 * i]))
            draws["station_detection_lag"] = gys_ref - m_s
            draws["station_clock_gy"] = gy_s - gys_ref
        if gyv_ref is not None:
            gy_v = _read(vclk, gyv_ref, int(vjit[2 * i]))
            draws["vehicle_detection_lag"] = gyv_ref - m_v
            draws["vehicle_clock_gy"] = gy_v - gyv_ref
            led_ref = gyv_ref + int(led_drive[i])
            led_on = _read(vclk, led_ref, int(vjit[2 * i + 1]))
            led_phy = led_ref + int(led_err[i])
            pt_phy = led_phy + g2g_phy
            pt_ref = pt_phy + int(pt_err[i])
            pt = _read(sclk, pt_ref, int(sjit[2 * i + 1]))
            draws.update({"led_drive": int(led_drive[i]), "vehicle_clock_led": led_on - led_ref,
                          "led_error": int(led_err[i]), "pt_error": int(pt_err[i]),
                          "station_clock_pt": pt - pt_ref})
            triggers.append(Timestamp(pt, ClockDomain.STATION))
            if extra_u[i] < opt.extra_trigger_prob:
                triggers.append(Timestamp(pt + max(int(extra_delay[i]), 1), ClockDomain.STATION))
            truths.append(GroundTruth(
                sid, Timestamp(m_s, ClockDomain.REFERENCE), Timestamp(m_v, ClockDomain.REFERENCE),
                Timestamp(led_phy, ClockDomain.REFERENCE), Timestamp(pt_phy, ClockDomain.REFERENCE),
                draws))

        extra_reasons = (NO_DETECTION,) if gys_ref is None or gyv_ref is None else ()
        records.append(SessionRecord.checked(
            sid,
            None if gy_s is None else Timestamp(gy_s, ClockDomain.STATION),
            None if gy_v is None else Timestamp(gy_v, ClockDomain.VEHICLE),
            None if led_on is None else Timestamp(led_on, ClockDomain.VEHICLE),
            triggers[0] if triggers else None,
            len(triggers), extra_triggers=triggers[1:], extra_reasons=extra_reasons,
        ))
    return SimulationResult(records, truths, config, baseline)


def simulate(config: PipelineConfig) -> SimulationResult:
    """Field-mode run: full command and video chains."""
    return _run(config, baseline=False)


def run_baseline(config: PipelineConfig) -> SimulationResult:
    """Baseline rig: both gyros on the station wheel, LED facing the phototransistor.

    Chains are bypassed so physical latencies are zero and every measured
    latency is pure measurement error.
    """
    return _run(config, baseline=True)


def simulate_offset_pairs(config: PipelineConfig, n: int | None = None) -> list[tuple[int, int]]:
    """Both node clocks stamping the same physical events (an offset study)."""
    n = config.sessions if n is None else n
    master = config.seed
    sclk = replace(config.station_clock, seed=lane_seed(master, config.station_clock.seed))
    vclk = replace(config.vehicle_clock, seed=lane_seed(master, config.vehicle_clock.seed))
    # draw indices past those used by the sessions themselves
    start = 2 * config.sessions
    sjit = jitter_block(sclk, start, n)
    vjit = jitter_block(vclk, start, n)
    pairs = []
    for i in range(n):
        t = SESSION_EPOCH_NS + i * config.gap_ns + config.gap_ns // 2
        pairs.append((_read(sclk, t, int(sjit[i])), _read(vclk, t, int(vjit[i]))))
    return pairs

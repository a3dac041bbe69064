"""Reader for pipeline configuration files.

The format is an INI-style key/value document::

    [run]               sessions, seed, pre_roll_ms
    [profile]           kind (step|ramp|recorded), amplitude, slope, trace,
                        duration, inter_session_gap, axis
    [m2m]               input_device, pre_processing, network_cmd,
                        post_processing, actuation          (all required)
    [g2g]               camera, stream_pre, network_video, stream_post,
                        monitor                             (all required)
    [optics]            led_drive, led_error, pt_error, extra_trigger_prob,
                        extra_trigger_delay
    [detector.station]  alpha, threshold, completion_window, fusion,
    [detector.vehicle]  sample_period_us, phase, noise_std, lane
    [clock.station]     offset_ns, drift_ppb, jitter_std_ns, lane
    [clock.vehicle]

Delays are expressions in milliseconds: ``constant(5)``, ``uniform(0, 16.67)``,
``normal(275, 36)`` (truncated at 0), ``lognormal(2.2, 0.4)``,
``periodic(30)`` (random phase) or ``periodic(30, 7.5)`` (fixed phase), and
sums of these joined by ``+``.  ``<name>.lane = N`` overrides the seed lane
of a delay.  Durations in ``[profile]`` are seconds.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import replace
from pathlib import Path

from .clocks import ClockModel
from .errors import ConfigError
from .events import ClockDomain
from .motion import AxisProjection, DetectorConfig, L2Norm, read_gyro_trace
from .pipeline import (
    DEFAULT_LANES, G2G_COMPONENTS, M2M_COMPONENTS, Constant, DelayModel, LogNormal, Normal,
    OpticsConfig, PeriodicSampling, PipelineConfig, ProfileSpec, SamplingConfig, Sum, Uniform,
)

PRESET_DIR = Path(__file__).with_name("presets")
PRESETS = {"4g": "4g.cfg", "5g-nsa": "5g-nsa.cfg", "baseline": "baseline.cfg"}

_SECTIONS = {
    "run": {"sessions", "seed", "pre_roll_ms"},
    "profile": {"kind", "amplitude", "slope", "trace", "duration", "inter_session_gap", "axis"},
    "m2m": set(M2M_COMPONENTS),
    "g2g": set(G2G_COMPONENTS),
    "optics": {"led_drive", "led_error", "pt_error", "extra_trigger_prob", "extra_trigger_delay",
               "extra_trigger"},
    "detector.station": {"alpha", "threshold", "completion_window", "fusion", "sample_period_us",
                         "phase", "noise_std", "lane"},
    "clock.station": {"offset_ns", "drift_ppb", "jitter_std_ns", "lane"},
}
_SECTIONS["detector.vehicle"] = _SECTIONS["detector.station"]
_SECTIONS["clock.vehicle"] = _SECTIONS["clock.station"]
_LANE_KEYS = {"m2m", "g2g", "optics"}

_TERM = re.compile(r"^\s*([a-z_]+)\s*\(([^()]*)\)\s*$", re.I)
_SECTION_LINE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_LINE = re.compile(r"^\s*([^#;=:\s][^=:]*?)\s*[=:]")


class _Source:
    """Parsed document plus (section, key) -> line number, for error messages."""

    def __init__(self, text: str, path: str):
        self.path = path
        self.lines: dict[tuple[str, str | None], int] = {}
        section = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            m = _SECTION_LINE.match(line)
            if m:
                section = m.group(1).strip().lower()
                self.lines.setdefault((section, None), lineno)
                continue
            m = _KEY_LINE.match(line)
            if m and section is not None:
                self.lines.setdefault((section, m.group(1).strip().lower()), lineno)
        self.cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
        try:
            self.cp.read_string(text, source=path)
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigError(str(exc).splitlines()[0], line=line, path=path) from None

    def error(self, section: str, key: str | None, message: str) -> ConfigError:
        return ConfigError(f"[{section}] {key + ': ' if key else ''}{message}",
                           line=self.lines.get((section, key), self.lines.get((section, None))),
                           path=self.path)

    def get(self, section: str, key: str, default=None):
        if not self.cp.has_section(section) or not self.cp.has_option(section, key):
            return default
        return self.cp.get(section, key).strip()

    def number(self, section: str, key: str, default, kind=float):
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            value = kind(raw)
        except ValueError:
            raise self.error(section, key, f"expected a number, got {raw!r}") from None
        return value


def parse_delay(text: str, lane: int = 0) -> DelayModel:
    """Parse a delay expression such as ``periodic(30) + constant(105)``."""
    terms = [t for t in text.split("+")]
    models = []
    for term in terms:
        m = _TERM.match(term)
        if not m:
            raise ConfigError(f"cannot parse delay term {term.strip()!r}")
        name = m.group(1).lower()
        try:
            args = [float(a) for a in m.group(2).split(",") if a.strip()]
        except ValueError:
            raise ConfigError(f"non-numeric argument in {term.strip()!r}") from None
        arity = {"constant": (1,), "uniform": (2,), "normal": (2,), "lognormal": (2,), "periodic": (1, 2)}
        if name not in arity:
            raise ConfigError(f"unknown delay model {name!r}")
        if len(args) not in arity[name]:
            raise ConfigError(f"{name} takes {' or '.join(map(str, arity[name]))} argument(s)")
        cls = {"constant": Constant, "uniform": Uniform, "normal": Normal,
               "lognormal": LogNormal, "periodic": PeriodicSampling}[name]
        models.append(cls(*args, lane=lane))
    if len(models) == 1:
        return models[0]
    return Sum(tuple(models), lane=lane)


def _delay(src: _Source, section: str, key: str, default: DelayModel | None = None) -> DelayModel:
    lane_default = DEFAULT_LANES.get(key, 0)
    lane = src.number(section, f"{key}.lane", lane_default, int)
    raw = src.get(section, key)
    if raw is None:
        if default is None:
            raise src.error(section, None, f"missing required delay {key!r}")
        return default.with_lane(lane)
    try:
        return parse_delay(raw, lane)
    except ConfigError as exc:
        raise src.error(section, key, str(exc)) from None


def _fusion(src: _Source, section: str):
    raw = src.get(section, "fusion", "l2").lower()
    if raw in ("l2", "l2norm", "norm"):
        return L2Norm()
    m = re.match(r"^axis\s*\(([^()]*)\)$", raw)
    if not m:
        raise src.error(section, "fusion", f"expected l2 or axis(x, y, z), got {raw!r}")
    try:
        return AxisProjection(tuple(float(v) for v in m.group(1).split(",")))
    except (ValueError, ConfigError) as exc:
        raise src.error(section, "fusion", str(exc)) from None


def _detector(src: _Source, side: str) -> tuple[DetectorConfig, SamplingConfig]:
    sec = f"detector.{side}"
    try:
        det = DetectorConfig(
            alpha=src.number(sec, "alpha", 0.1),
            threshold=src.number(sec, "threshold", 0.05),
            completion_window=src.number(sec, "completion_window", 2.5),
            fusion=_fusion(src, sec),
        )
        samp = SamplingConfig(
            period_ns=round(src.number(sec, "sample_period_us", 250.0) * 1000),
            phase=src.get(sec, "phase", "random").lower(),
            noise_std=src.number(sec, "noise_std", 0.0),
            lane=src.number(sec, "lane", DEFAULT_LANES[f"sampling_{side}"], int),
        )
    except ConfigError as exc:
        raise src.error(sec, None, str(exc)) from None
    return det, samp


def _clock(src: _Source, side: str) -> ClockModel:
    sec = f"clock.{side}"
    try:
        return ClockModel(
            offset_ns=src.number(sec, "offset_ns", 0, int),
            drift_ppb=src.number(sec, "drift_ppb", 0.0),
            jitter_std_ns=src.number(sec, "jitter_std_ns", 0.0),
            seed=src.number(sec, "lane", DEFAULT_LANES[f"clock_{side}"], int),
            domain=ClockDomain(side),
        )
    except ConfigError as exc:
        raise src.error(sec, None, str(exc)) from None


def _profile(src: _Source, base_dir: Path | None) -> ProfileSpec:
    sec = "profile"
    kind = src.get(sec, "kind", "step").lower()
    trace = None
    if kind == "recorded":
        raw = src.get(sec, "trace")
        if not raw:
            raise src.error(sec, "trace", "recorded profile needs a trace file")
        path = Path(raw)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        try:
            trace = read_gyro_trace(path)
        except OSError as exc:
            raise src.error(sec, "trace", str(exc)) from None
    axis_raw = src.get(sec, "axis", "0 0 1")
    try:
        axis = tuple(float(v) for v in axis_raw.replace(",", " ").split())
        if len(axis) != 3:
            raise ValueError
    except ValueError:
        raise src.error(sec, "axis", f"expected three numbers, got {axis_raw!r}") from None
    try:
        return ProfileSpec(
            kind=kind,
            amplitude=src.number(sec, "amplitude", 1.0),
            slope=src.number(sec, "slope", 1.0),
            trace=trace,
            duration=src.number(sec, "duration", 1.0),
            inter_session_gap=src.number(sec, "inter_session_gap", 5.0),
            axis=axis,
        )
    except ConfigError as exc:
        raise src.error(sec, None, str(exc)) from None


def loads_config(text: str, path: str = "<config>", base_dir: Path | None = None) -> PipelineConfig:
    src = _Source(text, path)
    for section in src.cp.sections():
        allowed = _SECTIONS.get(section.lower())
        if allowed is None:
            raise src.error(section.lower(), None, "unknown section")
        for key in src.cp.options(section):
            bare = key[:-5] if key.endswith(".lane") and section.lower() in _LANE_KEYS else key
            if bare not in allowed:
                raise src.error(section.lower(), key, "unknown key")
    for sec in ("m2m", "g2g"):
        if not src.cp.has_section(sec):
            raise ConfigError(f"missing required section [{sec}]", path=path)

    m2m = {name: _delay(src, "m2m", name) for name in M2M_COMPONENTS}
    g2g = {name: _delay(src, "g2g", name) for name in G2G_COMPONENTS}
    base = OpticsConfig()
    try:
        optics = OpticsConfig(
            led_drive=_delay(src, "optics", "led_drive", base.led_drive),
            led_error=_delay(src, "optics", "led_error", base.led_error),
            pt_error=_delay(src, "optics", "pt_error", base.pt_error),
            extra_trigger_prob=src.number("optics", "extra_trigger_prob", 0.0),
            extra_trigger_delay=_delay(src, "optics", "extra_trigger_delay", base.extra_trigger_delay),
            extra_trigger_lane=src.number("optics", "extra_trigger.lane", DEFAULT_LANES["extra_trigger"], int),
        )
    except ConfigError as exc:
        if exc.line is not None:
            raise
        raise src.error("optics", None, str(exc)) from None
    det_s, samp_s = _detector(src, "station")
    det_v, samp_v = _detector(src, "vehicle")
    try:
        return PipelineConfig(
            m2m_chain=m2m, g2g_chain=g2g,
            station_clock=_clock(src, "station"), vehicle_clock=_clock(src, "vehicle"),
            detector_station=det_s, detector_vehicle=det_v,
            sampling_station=samp_s, sampling_vehicle=samp_v,
            optics=optics,
            motion_profile=_profile(src, base_dir),
            sessions=src.number("run", "sessions", 100, int),
            seed=src.number("run", "seed", 0, int),
            pre_roll_ms=src.number("run", "pre_roll_ms", 20.0),
        )
    except ConfigError as exc:
        if exc.line is not None:
            raise
        raise ConfigError(str(exc), path=path) from None


def resolve_config_path(name: str | Path) -> Path:
    """A filesystem path, or a shipped preset by name or ``presets/<file>``."""
    p = Path(name)
    if p.exists():
        return p
    key = p.name[:-4] if p.name.endswith(".cfg") else p.name
    if key in PRESETS:
        return PRESET_DIR / PRESETS[key]
    if (PRESET_DIR / p.name).exists():
        return PRESET_DIR / p.name
    raise ConfigError(f"config file not found: {name}")


def load_config(path: str | Path, *, sessions: int | None = None, seed: int | None = None) -> PipelineConfig:
    p = resolve_config_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(str(exc), path=str(path)) from None
    cfg = loads_config(text, str(path), p.parent)
    if sessions is not None:
        cfg = replace(cfg, sessions=sessions)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg


def emulate_field(preset: str, *, sessions: int | None = None, seed: int | None = None) -> PipelineConfig:
    """Shipped field preset: ``"4g"`` / ``"FourG"`` or ``"5g-nsa"`` / ``"FiveGNSA"``."""
    key = {"fourg": "4g", "4g": "4g", "fivegnsa": "5g-nsa", "5g-nsa": "5g-nsa", "5g": "5g-nsa"}.get(
        str(preset).lower().replace("_", ""))
    if key is None:
        raise ConfigError(f"unknown field preset {preset!r}")
    return load_config(PRESET_DIR / PRESETS[key], sessions=sessions, seed=seed)

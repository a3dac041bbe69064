"""Command-line front end.

Exit codes: 0 success, 2 input error, 3 analysis error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .breakdown import report_csv, report_json, tables_from_document
from .clocks import estimate_offset, read_paired_events, write_paired_events
from .config import load_config, resolve_config_path
from .errors import ConfigError, LogParseError, LogValidationError, NegativeResidualError, UsageError
from .events import LogFormat, read_log, validate_session
from .latency import (
    ERROR_LABELS, METRICS, aggregate_ns, compute_triples, decompose, per_session_rows, stats_csv,
    stats_json, summarize,
)
from .pipeline import run_baseline, simulate, simulate_offset_pairs

log = logging.getLogger("telelat")

EXIT_OK, EXIT_INPUT, EXIT_ANALYSIS = 0, 2, 3


class InputError(Exception):
    pass


class AnalysisError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _timestamp(inputs: list[Path]) -> str:
    # reproducible: SOURCE_DATE_EPOCH, else the newest input's mtime
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        secs = int(epoch)
    else:
        secs = int(max((p.stat().st_mtime for p in inputs), default=0))
    return _dt.datetime.fromtimestamp(secs, _dt.timezone.utc).isoformat()


class OutputDir:
    """Collects written files and finishes with a single manifest.json."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            self.path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise InputError(f"cannot create output directory {path}: {exc}") from None
        self.files: list[str] = []

    def write(self, name: str, text: str) -> Path:
        p = self.path / name
        p.write_text(text)
        if name not in self.files:
            self.files.append(name)
        return p

    def manifest(self, command: str, config: str | None, seed: int | None, inputs: list[Path]) -> None:
        doc = {
            "command": command,
            "config": config,
            "seed": seed,
            "version": __version__,
            "inputs": {str(p): _sha256(p) for p in inputs},
            "outputs": {name: _sha256(self.path / name) for name in sorted(self.files)},
            "timestamp": _timestamp(inputs),
        }
        (self.path / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _stats_files(out: OutputDir, stem: str, stats, fmt: str, **extra) -> None:
    if fmt == "json":
        out.write(f"{stem}.json", stats_json(stats, **extra))
    else:
        out.write(f"{stem}.csv", stats_csv(stats))


def _positional(args, attr: str, pos_attr: str):
    value = getattr(args, attr) or getattr(args, pos_attr, None)
    if value is None:
        raise InputError(f"missing --{attr}")
    return value


def _load(args):
    cfg_arg = _positional(args, "config", "config_pos")
    path = resolve_config_path(cfg_arg)
    cfg = load_config(path, sessions=args.sessions, seed=args.seed)
    return cfg_arg, path, cfg


def _log_format(fmt: str) -> LogFormat:
    return LogFormat.JSONL if fmt == "json" else LogFormat.CSV


def _write_sim(out: OutputDir, result, fmt: str) -> None:
    suffix = "jsonl" if fmt == "json" else "csv"
    out.write(f"events.{suffix}", result.event_log(_log_format(fmt)))
    out.write("ground_truth.jsonl", result.ledger_jsonl())


def cmd_simulate(args) -> int:
    cfg_arg, path, cfg = _load(args)
    out = OutputDir(_positional(args, "out", "out_pos"))
    result = simulate(cfg)
    _write_sim(out, result, args.format)
    out.manifest("simulate", str(cfg_arg), cfg.seed, [path])
    valid = sum(r.valid for r in result.records)
    print(f"simulated {len(result.records)} sessions ({valid} valid) -> {out.path}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg_arg, path, cfg = _load(args)
    out = OutputDir(_positional(args, "out", "out_pos"))
    result = run_baseline(cfg)
    _write_sim(out, result, args.format)
    try:
        stats = {ERROR_LABELS[m]: s for m, s in summarize(result.records).items()}
    except UsageError as exc:
        raise AnalysisError(str(exc)) from None
    _stats_files(out, "baseline_errors", stats, args.format)
    pairs = simulate_offset_pairs(cfg)
    offset = estimate_offset(pairs)
    buf = io.StringIO()
    write_paired_events(buf, pairs)
    out.write("offset_pairs.csv", buf.getvalue())
    out.write("offset.json", json.dumps({"unit": "us", **offset.as_dict()}, indent=2, sort_keys=True) + "\n")
    out.manifest("baseline", str(cfg_arg), cfg.seed, [path])
    for label, s in stats.items():
        print(f"{label}: mean {s.mean:.3f} ms  std {s.std:.3f}  min {s.min:.3f}  max {s.max:.3f}  (n={s.n})")
    print(f"offset: mean {offset.mean_us:.3f} us  std {offset.std_us:.3f}  "
          f"min {offset.min_us:.3f}  max {offset.max_us:.3f}  (n={offset.n})")
    return EXIT_OK


def _read_log(path: str):
    p = Path(path)
    try:
        with open(p, "rb") as fh:
            return p, read_log(fh)
    except OSError as exc:
        raise InputError(str(exc)) from None


def cmd_analyze(args) -> int:
    path, elog = _read_log(args.log)
    triples, excluded = compute_triples(elog.records)
    if not triples:
        raise AnalysisError(f"no valid sessions in {path} ({len(excluded)} excluded)")
    stats = summarize(elog.records)
    out = OutputDir(args.out)
    _stats_files(out, "stats", stats, args.format,
                 excluded_sessions={str(k): list(v) for k, v in sorted(excluded.items())})
    lines = ["session_id,reasons"] + [f"{sid},{';'.join(r)}" for sid, r in sorted(excluded.items())]
    out.write("excluded.csv", "\n".join(lines) + "\n")
    if args.per_session:
        out.write("sessions.csv", per_session_rows(triples))
    if elog.truth:
        decs = [decompose(r, elog.truth[r.session_id]) for r in elog.records
                if r.valid and r.session_id in elog.truth]
        if decs:
            errs = {
                "E_M2M": aggregate_ns([d.e_m2m for d in decs]),
                "E_G2G": aggregate_ns([d.e_g2g for d in decs]),
                "E_E2E": aggregate_ns([d.e_e2e for d in decs]),
            }
            _stats_files(out, "measurement_errors", errs, args.format)
    out.manifest("analyze", None, None, [path])
    for m in METRICS:
        s = stats[m]
        print(f"{m}: median {s.median:.3f} ms  IQR {s.iqr:.3f}  mean {s.mean:.3f}  "
              f"(n={s.n}, excluded={s.excluded})")
    return EXIT_OK


def cmd_breakdown(args) -> int:
    p = Path(args.input)
    if not p.exists():
        alt = resolve_preset_file(args.input)
        if alt is None:
            raise InputError(f"no such file: {args.input}")
        p = alt
    try:
        doc = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{p}: {exc}") from None
    try:
        tables = tables_from_document(doc)
    except (UsageError, KeyError, ValueError, TypeError) as exc:
        raise InputError(f"{p}: {exc}") from None
    footnotes = doc.get("footnotes", [])
    csv_text = report_csv(tables)
    if args.out:
        out = OutputDir(args.out)
        if args.format == "json":
            out.write("breakdown.json", report_json(tables, footnotes))
        else:
            out.write("breakdown.csv", csv_text)
        out.manifest("breakdown", None, None, [p])
    if args.format == "json" and not args.out:
        sys.stdout.write(report_json(tables, footnotes))
    else:
        sys.stdout.write(csv_text)
        for i, note in enumerate(footnotes, start=1):
            print(f"[{i}] {note}")
    return EXIT_OK


def resolve_preset_file(name: str) -> Path | None:
    from .config import PRESET_DIR
    cand = PRESET_DIR / Path(name).name
    return cand if cand.exists() else None


def cmd_validate(args) -> int:
    path, elog = _read_log(args.log)
    n_bad = 0
    for r in elog.records:
        report = validate_session(r, aligned=args.aligned)
        if not report.passed:
            n_bad += 1
            print(f"session {r.session_id}: {', '.join(report.violations)}")
    print(f"{len(elog.records)} sessions, {len(elog.records) - n_bad} valid, {n_bad} excluded")
    return EXIT_OK


def cmd_offset_study(args) -> int:
    inputs: list[Path] = []
    cfg_arg = None
    seed = None
    if args.pairs:
        p = Path(args.pairs)
        try:
            pairs = read_paired_events(p)
        except OSError as exc:
            raise InputError(str(exc)) from None
        inputs.append(p)
    else:
        if args.config is None:
            raise InputError("give a paired-event CSV or --config with --seed")
        if args.seed is None:
            raise InputError("--seed is required when simulating an offset study")
        cfg_arg, path, cfg = _load(args)
        inputs.append(path)
        seed = cfg.seed
        pairs = simulate_offset_pairs(cfg)
    try:
        stats = estimate_offset(pairs)
    except UsageError as exc:
        raise AnalysisError(str(exc)) from None
    if args.out:
        out = OutputDir(args.out)
        if args.format == "json":
            out.write("offset.json", json.dumps({"unit": "us", **stats.as_dict()}, indent=2, sort_keys=True) + "\n")
        else:
            out.write("offset.csv", "n,min_us,max_us,mean_us,std_us\n"
                      f"{stats.n},{stats.min_us:.6f},{stats.max_us:.6f},{stats.mean_us:.6f},{stats.std_us:.6f}\n")
        if not args.pairs:
            buf = io.StringIO()
            write_paired_events(buf, pairs)
            out.write("offset_pairs.csv", buf.getvalue())
        out.manifest("offset-study", None if cfg_arg is None else str(cfg_arg), seed, inputs)
    print(f"offset: mean {stats.mean_us:.3f} us  std {stats.std_us:.3f}  "
          f"min {stats.min_us:.3f}  max {stats.max_us:.3f}  (n={stats.n})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="telelat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def sim_args(p, seed_required=True):
        p.add_argument("config_pos", nargs="?", metavar="CONFIG")
        p.add_argument("out_pos", nargs="?", metavar="OUT")
        p.add_argument("--config", help="config file or preset name (4g, 5g-nsa, baseline)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, required=seed_required, help="master seed (required)")
        p.add_argument("--sessions", type=int, help="override the session count")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("simulate", help="simulate field sessions and write an event log")
    sim_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("baseline", help="simulate the baseline rig and report error statistics")
    sim_args(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("analyze", help="compute M2M/G2G/E2E statistics from an event log")
    p.add_argument("log")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--per-session", action="store_true", help="also write tidy per-session rows")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("breakdown", help="attribute chain totals to components")
    p.add_argument("input", help="breakdown input document (JSON)")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_breakdown)

    p = sub.add_parser("validate", help="report session validity for an event log")
    p.add_argument("log")
    p.add_argument("--aligned", action="store_true",
                   help="treat clocks as aligned and check cross-domain ordering too")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("offset-study", help="clock offset statistics from paired events")
    p.add_argument("pairs", nargs="?", help="CSV event_id,t_station_ns,t_vehicle_ns")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--sessions", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_offset_study)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("TELELAT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    log.debug("command %s", args.command)
    try:
        return args.func(args)
    except (InputError, ConfigError, LogParseError, LogValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NegativeResidualError as exc:
        print(f"error: {exc} (deficit {exc.deficit_ms:.3f} ms)", file=sys.stderr)
        return EXIT_ANALYSIS
    except AnalysisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())

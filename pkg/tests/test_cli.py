import csv
import json
import subprocess
import sys

import pytest

from telelat.cli import main
from telelat.config import PRESET_DIR

ZERO_CFG = """\
[run]
sessions = 25

[m2m]
input_device = constant(0)
pre_processing = constant(0)
network_cmd = constant(0)
post_processing = constant(0)
actuation = constant(0)

[g2g]
camera = constant(0)
stream_pre = constant(0)
network_video = constant(0)
stream_post = constant(0)
monitor = constant(0)

[detector.station]
alpha = 1
phase = fixed

[detector.vehicle]
alpha = 1
phase = fixed
"""

LOG = """session_id,event_kind,clock_domain,t_ns
1,GY_STATION,station,0
1,GY_VEHICLE,vehicle,318000000
1,LED_ON,vehicle,318500000
1,PT_TRIGGER,station,520500000
"""

TWO_TRIGGER = """2,GY_STATION,station,10000000000
2,GY_VEHICLE,vehicle,10300000000
2,LED_ON,vehicle,10300100000
2,PT_TRIGGER,station,10500000000
2,PT_TRIGGER,station,10510000000
"""


def stats_rows(path):
    with open(path) as fh:
        return {row["metric"]: row for row in csv.DictReader(fh)}


def test_simulate_then_analyze(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "5g-nsa", str(out), "--seed", "1", "--sessions", "120"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["events.csv", "ground_truth.jsonl", "manifest.json"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 1 and man["command"] == "simulate"
    assert set(man["outputs"]) == {"events.csv", "ground_truth.jsonl"}
    res = tmp_path / "an"
    assert main(["analyze", str(out / "events.csv"), "--out", str(res), "--per-session"]) == 0
    rows = stats_rows(res / "stats.csv")
    assert int(rows["M2M"]["n"]) >= 100
    assert (res / "sessions.csv").exists() and (res / "measurement_errors.csv").exists()


def test_json_format(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", "4g", "--out", str(out), "--seed", "2",
                 "--sessions", "30", "--format", "json"]) == 0
    assert (out / "events.jsonl").exists()
    res = tmp_path / "an"
    assert main(["analyze", str(out / "events.jsonl"), "--out", str(res), "--format", "json"]) == 0
    doc = json.loads((res / "stats.json").read_text())
    assert doc["quartile_method"] and doc["metrics"]["E2E"]["n"] == 30


def test_seed_is_required(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "5g-nsa", "out"])
    assert exc.value.code == 2


def test_bad_config_exits_2_with_line(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(ZERO_CFG.replace("actuation = constant(0)", "actuation = constant(-3)"))
    assert main(["simulate", str(cfg), str(tmp_path / "o"), "--seed", "1"]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:9:" in err


def test_zero_delay_gives_zero_triples(tmp_path):
    cfg = tmp_path / "zero.cfg"
    cfg.write_text(ZERO_CFG)
    assert main(["simulate", str(cfg), str(tmp_path / "s"), "--seed", "5"]) == 0
    assert main(["analyze", str(tmp_path / "s" / "events.csv"), "--out", str(tmp_path / "a")]) == 0
    for row in stats_rows(tmp_path / "a" / "stats.csv").values():
        assert float(row["min_ms"]) == float(row["max_ms"]) == 0.0


def test_symmetric_baseline_errors_zero(tmp_path):
    cfg = tmp_path / "zero.cfg"
    cfg.write_text(ZERO_CFG)
    assert main(["baseline", str(cfg), str(tmp_path / "b"), "--seed", "5"]) == 0
    rows = stats_rows(tmp_path / "b" / "baseline_errors.csv")
    assert set(rows) == {"E_M2M", "E_G2G", "E_E2E"}
    assert all(float(r["mean_ms"]) == 0.0 for r in rows.values())
    assert json.loads((tmp_path / "b" / "offset.json").read_text())["mean_us"] == 0.0


def test_analyze_single_session_and_exclusion(tmp_path, capsys):
    log = tmp_path / "one.csv"
    log.write_text(LOG)
    assert main(["analyze", str(log), "--out", str(tmp_path / "a")]) == 0
    rows = stats_rows(tmp_path / "a" / "stats.csv")
    assert [float(rows[m]["median_ms"]) for m in ("M2M", "G2G", "E2E")] == [318.0, 202.0, 520.0]
    log.write_text(LOG + TWO_TRIGGER)
    assert main(["analyze", str(log), "--out", str(tmp_path / "b")]) == 0
    rows = stats_rows(tmp_path / "b" / "stats.csv")
    assert rows["M2M"]["excluded"] == "1" and rows["M2M"]["n"] == "1"
    assert "2,multiple_detections" in (tmp_path / "b" / "excluded.csv").read_text()


def test_analyze_error_codes(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("session_id,event_kind,clock_domain,t_ns\n1,GY_STATION,station,abc\n")
    assert main(["analyze", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "line 2" in capsys.readouterr().err
    none_valid = tmp_path / "none.csv"
    none_valid.write_text("session_id,event_kind,clock_domain,t_ns\n" + TWO_TRIGGER)
    assert main(["analyze", str(none_valid), "--out", str(tmp_path / "y")]) == 3
    assert main(["analyze", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "z")]) == 2


def test_breakdown(tmp_path, capsys):
    assert main(["breakdown", str(PRESET_DIR / "breakdown-5g-nsa.json")]) == 0
    out = capsys.readouterr().out
    assert "M2M,actuation,270.7,residual" in out and "G2G,camera,120.17,residual" in out
    bad = tmp_path / "neg.json"
    bad.write_text(json.dumps({"chains": [{"chain": "M2M", "total_ms": 20, "residual": "actuation",
                                           "components": [{"name": "a", "mean_ms": 25}]}]}))
    assert main(["breakdown", str(bad)]) == 3
    assert "deficit 5.000 ms" in capsys.readouterr().err


def test_validate(tmp_path, capsys):
    log = tmp_path / "l.csv"
    log.write_text(LOG + TWO_TRIGGER)
    assert main(["validate", str(log)]) == 0
    out = capsys.readouterr().out
    assert "session 2: multiple_detections" in out and "2 sessions, 1 valid, 1 excluded" in out


def test_offset_study(tmp_path, capsys):
    pairs = tmp_path / "p.csv"
    pairs.write_text("event_id,t_station_ns,t_vehicle_ns\n0,0,1000\n1,5000,2000\n")
    assert main(["offset-study", str(pairs), "--out", str(tmp_path / "o")]) == 0
    row = next(csv.DictReader(open(tmp_path / "o" / "offset.csv")))
    assert float(row["mean_us"]) == 2.0
    assert main(["offset-study", "--config", "baseline", "--seed", "3", "--sessions", "50"]) == 0
    assert main(["offset-study"]) == 2


def test_reruns_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "4g", str(tmp_path / name), "--seed", "11", "--sessions", "40"]) == 0
    for f in ("events.csv", "ground_truth.jsonl", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_entry_point_runs(tmp_path):
    env_run = subprocess.run([sys.executable, "-m", "telelat.cli", "--version"],
                             capture_output=True, text=True, env={"TELELAT_LOG": "debug", "PATH": ""})
    assert env_run.returncode == 0 and "telelat" in env_run.stdout


def test_tuned_baseline_report(tmp_path):
    from telelat.clocks import estimate_offset
    from telelat.config import load_config
    from telelat.pipeline import simulate_offset_pairs

    assert main(["baseline", "baseline", str(tmp_path), "--seed", "21", "--sessions", "1000"]) == 0
    rows = stats_rows(tmp_path / "baseline_errors.csv")
    assert 0.688 <= float(rows["E_E2E"]["mean_ms"]) <= 7.826
    report = json.loads((tmp_path / "offset.json").read_text())
    direct = estimate_offset(simulate_offset_pairs(load_config("baseline", sessions=1000, seed=21)))
    assert report["mean_us"] == direct.mean_us and report["n"] == direct.n

from __future__ import annotations

import pytest

from oracles import ACCEPTANCE
from telelat.events import ClockDomain, SessionRecord, Timestamp

S, V, R = ClockDomain.STATION, ClockDomain.VEHICLE, ClockDomain.REFERENCE


def record(sid, gys, gyv, led, pt, count=1):
    """Valid-or-flagged record from plain nanosecond values."""
    return SessionRecord.checked(
        sid,
        None if gys is None else Timestamp(gys, S),
        None if gyv is None else Timestamp(gyv, V),
        None if led is None else Timestamp(led, V),
        None if pt is None else Timestamp(pt, S),
        count,
    )


@pytest.fixture
def make_record():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")

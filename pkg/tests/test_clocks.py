import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from telelat.clocks import (
    ClockModel, ClockReader, align, estimate_offset, jitter_block, jitter_ns, read_clock,
    read_paired_events, write_paired_events,
)
from telelat.errors import ConfigError, DomainError, UsageError
from telelat.events import ClockDomain, Timestamp

R, S, V = ClockDomain.REFERENCE, ClockDomain.STATION, ClockDomain.VEHICLE
ref = lambda t: Timestamp(t, R)


def test_read_clock_examples():
    assert read_clock(ClockModel(), ref(123)) == Timestamp(123, S)
    assert read_clock(ClockModel(offset_ns=3226), ref(10**9)).t_ns == 10**9 + 3226
    assert read_clock(ClockModel(drift_ppb=1000), ref(10**9)).t_ns == 10**9 + 1000
    with pytest.raises(DomainError):
        read_clock(ClockModel(), Timestamp(0, S))


def test_drift_rounds_half_even():
    # 0.5 ns drift rounds to 0, 1.5 ns rounds to 2
    assert read_clock(ClockModel(drift_ppb=0.5), ref(10**9)).t_ns == 10**9
    assert read_clock(ClockModel(drift_ppb=1.5), ref(10**9)).t_ns == 10**9 + 2


def test_align_examples():
    m = ClockModel(domain=V)
    assert align(Timestamp(77, V), m) == ref(77)
    assert align(Timestamp(10_000, S), ClockModel(offset_ns=5000)) == ref(5000)
    with pytest.raises(UsageError):
        align(Timestamp(1, S))
    assert align(Timestamp(1, S), assume_synchronized=True) == ref(1)
    with pytest.raises(DomainError):
        align(Timestamp(1, S), ClockModel(domain=V))


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**13), st.integers(-10**7, 10**7), st.floats(0, 5e4))
def test_round_trip_without_jitter(t, offset, drift):
    m = ClockModel(offset_ns=offset, drift_ppb=drift)
    assert align(read_clock(m, ref(t)), m) == ref(t)


def test_station_to_vehicle_mapping():
    s = ClockModel(offset_ns=100)
    v = ClockModel(offset_ns=-50, domain=V)
    t = read_clock(s, ref(10_000))
    assert align(t, s, V, to_model=v) == read_clock(v, ref(10_000))


def test_jitter_is_prefix_consistent_and_seeded():
    m = ClockModel(jitter_std_ns=2000, seed=9)
    long = jitter_block(m, 0, 5000)
    assert np.array_equal(jitter_block(m, 0, 10), long[:10])
    assert np.array_equal(jitter_block(m, 1234, 50), long[1234:1284])
    assert jitter_ns(m, 4321) == long[4321]
    assert not np.array_equal(jitter_block(ClockModel(jitter_std_ns=2000, seed=10), 0, 10), long[:10])
    assert abs(long.std() - 2000) < 100


def test_reader_advances_draws():
    m = ClockModel(jitter_std_ns=1000, seed=1)
    r = ClockReader(m)
    a, b = r.read(ref(0)), r.read(ref(0))
    assert (a.t_ns, b.t_ns) == (jitter_ns(m, 0), jitter_ns(m, 1))


def test_estimate_offset():
    zero = estimate_offset([(Timestamp(5, S), Timestamp(5, V))] * 3)
    assert (zero.min_us, zero.max_us, zero.mean_us, zero.std_us) == (0, 0, 0, 0)
    st_ = estimate_offset([(0, 1000), (3000, 0), (0, 2000)])
    assert (st_.min_us, st_.max_us, st_.mean_us) == (1.0, 3.0, 2.0)
    assert math.isclose(st_.std_us, 1.0)
    with pytest.raises(UsageError):
        estimate_offset([])


def test_offset_recovery_matches_injected_distribution():
    # |N(mu, sigma)| from two jittered clocks; mean of the folded normal is the oracle
    n = 4000
    s = ClockModel(jitter_std_ns=1000, seed=3)
    v = ClockModel(offset_ns=3226, jitter_std_ns=1000, seed=4, domain=V)
    pairs = [(read_clock(s, ref(i * 10**6), i), read_clock(v, ref(i * 10**6), i)) for i in range(n)]
    got = estimate_offset(pairs)
    mu, sigma = 3.226, math.sqrt(2) * 1.0
    folded = sigma * math.sqrt(2 / math.pi) * math.exp(-mu * mu / (2 * sigma * sigma)) \
        + mu * math.erf(mu / (sigma * math.sqrt(2)))
    assert abs(got.mean_us - folded) < 3 * got.std_us / math.sqrt(n)


def test_paired_events_io(tmp_path):
    buf = io.StringIO()
    write_paired_events(buf, [(1, 2), (30, 40)])
    p = tmp_path / "pairs.csv"
    p.write_text(buf.getvalue())
    assert read_paired_events(p) == [(1, 2), (30, 40)]
    p.write_text("event_id,t_station_ns,t_vehicle_ns\n0,1\n")
    with pytest.raises(ConfigError, match=":2:"):
        read_paired_events(p)


def test_model_validation():
    with pytest.raises(ConfigError):
        ClockModel(jitter_std_ns=-1)
    with pytest.raises(ConfigError):
        ClockModel(domain=R)

from __future__ import annotations

import subprocess
import sys
import time

import pytest

from faasbench.telemetry import (
    TelemetryError,
    TelemetrySample,
    aggregate,
    start_sampling,
)

MS = 1_000_000


def child(code: str) -> subprocess.Popen:
    return subprocess.Popen([sys.executable, "-c", code])


def sample(t, cpu, rss=100, hwm=None, iid="a"):
    return TelemetrySample(pid=1, instance_id=iid, t_sample=t, cpu_time_ns=cpu, rss_bytes=rss, hwm_bytes=hwm)


def test_aggregate_examples():
    u = aggregate([sample(0, 10 * MS), sample(1, 25 * MS, rss=300)])
    assert u.cpu_time_delta_ns == 15 * MS
    assert u.peak_rss_bytes == 300 and u.mean_rss_bytes == 200
    assert not u.low_confidence
    single = aggregate([sample(5, 1)])
    assert single.low_confidence and single.samples == 1


def test_aggregate_window_and_hwm():
    s = [sample(0, 0), sample(10, 5, hwm=999), sample(20, 9), sample(30, 30)]
    u = aggregate(s, window=(10, 20))
    assert u.cpu_time_delta_ns == 4 and u.peak_rss_bytes == 999 and u.window == (10, 20)
    with pytest.raises(TelemetryError, match="empty-window"):
        aggregate(s, window=(100, 200))
    with pytest.raises(TelemetryError):
        aggregate([sample(0, 0, iid="a"), sample(1, 0, iid="b")])


def test_dead_pid_is_an_error():
    p = child("pass")
    p.wait()
    with pytest.raises(TelemetryError, match="pid-not-found"):
        start_sampling(p.pid, "x", 50)


def test_sample_count_and_idempotent_stop():
    p = child("import time; time.sleep(3)")
    try:
        s = start_sampling(p.pid, "x", interval_ms=100)
        time.sleep(1.0)
        samples = s.stop()
        assert 9 <= len(samples) <= 12  # the initial sample plus ~10 ticks
        assert s.stop() == samples
        cpu = [x.cpu_time_ns for x in samples]
        assert cpu == sorted(cpu)
    finally:
        p.kill()
        p.wait()


def test_sampling_ends_quietly_when_process_exits():
    p = child("import time; time.sleep(0.2)")
    s = start_sampling(p.pid, "x", interval_ms=20)
    p.wait()
    time.sleep(0.2)
    assert s.snapshot() is False
    assert len(s.stop()) >= 2

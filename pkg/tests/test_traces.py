from __future__ import annotations

import math
import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faasbench.observer import ExecutionRecord
from faasbench.traces import (
    RPS_LADDER,
    InvocationTrace,
    TraceError,
    TracePattern,
    expected_count,
    generate_trace,
    replay,
)
from faasbench.workloads import PhaseTimings, WorkloadId, WorkloadRequest

TEMPLATE = WorkloadRequest(WorkloadId.FIBONACCI, group=1, params={"n": "10"})
BURST = dict(base_rate_rps=2, burst_rate_rps=20, burst_len_s=1, period_s=10, duration_s=60)


class FakeExecutor:
    """Sleeps, then returns a successful record; tracks concurrency itself."""

    mode = "fake"

    def __init__(self, delay_s: float = 0.0, fail_every: int = 0):
        self.delay_s = delay_s
        self.fail_every = fail_every
        self.lock = threading.Lock()
        self.active = 0
        self.peak = 0
        self.starts: dict[int, int] = {}

    def __call__(self, request, start_kind, run_index):
        t0 = time.monotonic_ns()
        with self.lock:
            self.active += 1
            self.peak = max(self.peak, self.active)
            self.starts[run_index] = t0
        try:
            if self.fail_every and run_index % self.fail_every == 0:
                raise RuntimeError("boom")
            time.sleep(self.delay_s)
        finally:
            with self.lock:
                self.active -= 1
        t1 = time.monotonic_ns()
        return ExecutionRecord(
            experiment_id="t", run_index=run_index, workload=request.workload.value, group=request.group,
            mode="fake", start_kind=start_kind, instance_id="i", pid=1, t_submit=t0,
            t_spawn=t0 if start_kind == "cold" else None, t_ready=t0 if start_kind == "cold" else None,
            t_request_sent=t0, t_response_recv=t1, phases=PhaseTimings(), success=True,
        )


def test_sequential_definition():
    trace = generate_trace(TracePattern.sequential(10), TEMPLATE, 1)
    assert len(trace) == 10
    assert all(e.t_offset_ns == 0 and e.request == TEMPLATE for e in trace.entries)


def test_concurrent_definition():
    trace = generate_trace(TracePattern.concurrent(level=5, count=12), TEMPLATE, 1)
    assert len(trace) == 12 and trace.pattern.bound == 5


def test_seeded_determinism_and_jsonl_roundtrip(tmp_path):
    p = TracePattern.burst(**BURST)
    a, b = generate_trace(p, TEMPLATE, 42), generate_trace(p, TEMPLATE, 42)
    assert a.dumps().encode() == b.dumps().encode()
    assert generate_trace(p, TEMPLATE, 43).dumps() != a.dumps()
    path = a.save(tmp_path / "trace.jsonl")
    again = InvocationTrace.load(path)
    assert again.dumps() == a.dumps() and again.entries == a.entries


def test_burst_offsets_sorted_and_inside_duration():
    trace = generate_trace(TracePattern.burst(**BURST), TEMPLATE, 7)
    offs = [e.t_offset_ns for e in trace.entries]
    assert offs == sorted(offs) and 0 <= offs[0] and offs[-1] < 60e9


def test_burst_count_expectation():
    p = TracePattern.burst(**BURST)
    assert expected_count(p) == 228  # 2*54 + 20*6
    mu, sigma = 228, math.sqrt(228)
    for seed in range(20):
        assert abs(len(generate_trace(p, TEMPLATE, seed)) - mu) <= 3 * sigma


def test_burst_rate_is_higher_inside_windows():
    p = TracePattern.burst(**BURST)
    inside = outside = 0
    for seed in range(30):
        for e in generate_trace(p, TEMPLATE, seed).entries:
            if (e.t_offset_ns / 1e9) % 10 < 1:
                inside += 1
            else:
                outside += 1
    # expected per seed: 120 inside, 108 outside
    assert abs(inside / 30 - 120) < 3 * math.sqrt(120 / 30) * 3
    assert abs(outside / 30 - 108) < 3 * math.sqrt(108 / 30) * 3


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="sequential", count=0),
        dict(kind="concurrent", count=5),
        dict(kind="concurrent", count=5, level=-1),
        dict(kind="burst", **{**BURST, "burst_len_s": 10}),
        dict(kind="burst", **{**BURST, "base_rate_rps": 0}),
        dict(kind="poisson", count=3),
        dict(kind="sequential", count=3, level=2),
    ],
)
def test_invalid_patterns(kwargs):
    with pytest.raises(TraceError) as exc:
        TracePattern(**kwargs).validate()
    assert exc.value.code == "invalid-pattern"


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 200), st.integers(1, 500), st.integers(0, 2**64 - 1))
def test_closed_loop_entry_arithmetic(level, count, seed):
    trace = generate_trace(TracePattern.concurrent(level, count), TEMPLATE, seed)
    assert len(trace) == count and {e.t_offset_ns for e in trace.entries} == {0}


def test_seed_range_enforced():
    with pytest.raises(TraceError):
        generate_trace(TracePattern.sequential(1), TEMPLATE, 2**64)


def test_ladder_bounds():
    assert RPS_LADDER[0] == 1 and RPS_LADDER[-1] == 200


# -- replay ----------------------------------------------------------


def test_empty_replay():
    res = replay(InvocationTrace(0, TracePattern.sequential(1), []), FakeExecutor())
    assert res.records == [] and res.throughput_rps == 0.0


def test_sequential_replay_order():
    ex = FakeExecutor()
    res = replay(generate_trace(TracePattern.sequential(8), TEMPLATE, 0), ex, "cold")
    assert [r.run_index for r in res.records] == list(range(8))
    assert [ex.starts[i] for i in range(8)] == sorted(ex.starts.values())
    assert ex.peak == 1 and res.max_in_flight == 1
    assert all(r.start_kind == "cold" for r in res.records)


@pytest.mark.parametrize("level", [1, 7, 50])
def test_closed_loop_bound(level):
    ex = FakeExecutor(delay_s=0.005)
    res = replay(generate_trace(TracePattern.concurrent(level, 120), TEMPLATE, 0), ex)
    assert len(res.records) == 120
    assert res.max_in_flight <= level and ex.peak <= level
    assert res.throughput_rps > 0


def test_failures_become_records():
    ex = FakeExecutor(fail_every=3)
    res = replay(generate_trace(TracePattern.concurrent(4, 30), TEMPLATE, 0), ex)
    assert len(res.records) == 30
    failed = [r for r in res.records if not r.success]
    assert len(failed) == 10 and {r.error_code for r in failed} == {"RuntimeError"}
    assert res.completed == 20


def test_open_loop_honours_offsets():
    p = TracePattern.burst(base_rate_rps=20, burst_rate_rps=100, burst_len_s=0.2, period_s=0.5, duration_s=1.0)
    trace = generate_trace(p, TEMPLATE, 3)
    ex = FakeExecutor(delay_s=0.05)
    t0 = time.monotonic_ns()
    res = replay(trace, ex)
    assert len(res.records) == len(trace)
    for i, e in enumerate(trace.entries):
        lag_ms = (ex.starts[i] - t0 - e.t_offset_ns) / 1e6
        assert -1.0 <= lag_ms < 50.0
    # open-loop: requests overlap when arrivals outpace the service time
    assert ex.peak > 1


def test_policy_callable():
    res = replay(generate_trace(TracePattern.sequential(4), TEMPLATE, 0), FakeExecutor(),
                 lambda i: "cold" if i == 0 else "warm")
    assert [r.start_kind for r in res.records] == ["cold", "warm", "warm", "warm"]

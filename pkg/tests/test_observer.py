from __future__ import annotations

from dataclasses import replace

import pytest

from faasbench.observer import (
    SLACK_NS,
    ExecutionRecord,
    MetricsError,
    derive_metrics,
    error_rate,
    is_valid,
)
from faasbench.workloads import PhaseTimings

MS = 1_000_000


def record(**kw) -> ExecutionRecord:
    base = dict(
        experiment_id="e", run_index=0, workload="fibonacci", group=1, mode="native-process", start_kind="warm",
        instance_id="i", pid=1, t_submit=0, t_spawn=None, t_ready=None, t_request_sent=1 * MS,
        t_response_recv=12 * MS, phases=PhaseTimings(), success=True,
    )
    base.update(kw)
    return ExecutionRecord(**base)


def test_warm_derivation_example():
    phases = PhaseTimings(io_fetch_ns=2 * MS, deserialize_ns=1 * MS, compute_ns=5 * MS, serialize_ns=1 * MS,
                          io_store_ns=1 * MS)
    m = derive_metrics(record(phases=phases))
    assert (m.io_latency_ns, m.serialization_ns, m.compute_ns, m.cold_start_ns) == (3 * MS, 2 * MS, 5 * MS, 0)
    assert m.total_ns == 12 * MS
    assert m.components() <= m.total_ns + SLACK_NS


def test_cold_degenerate_start():
    m = derive_metrics(record(start_kind="cold", t_spawn=5, t_ready=5, t_request_sent=6))
    assert m.cold_start_ns == 0


def test_cold_start_measured():
    m = derive_metrics(record(start_kind="cold", t_spawn=1, t_ready=4 * MS, t_request_sent=5 * MS))
    assert m.cold_start_ns == 4 * MS - 1


@pytest.mark.parametrize(
    "kw",
    [
        dict(start_kind="cold"),  # no spawn/ready
        dict(t_spawn=1, t_ready=2),  # warm with spawn data
        dict(t_request_sent=20 * MS),  # sent after received
        dict(start_kind="cold", t_spawn=3, t_ready=2, t_request_sent=4),
        dict(phases=None),  # success without phases
        dict(t_response_recv=None),
        dict(artifact_load_ns=5),  # load time on a warm record
        dict(start_kind="cold", t_spawn=1, t_ready=4, t_request_sent=5, artifact_load_ns=10),
    ],
)
def test_inconsistent_timestamps(kw):
    rec = record(**kw)
    with pytest.raises(MetricsError) as exc:
        derive_metrics(rec)
    assert exc.value.code == "inconsistent-timestamps"
    assert not is_valid(rec)


def test_error_rate_examples():
    ok = record()
    bad = replace(ok, success=False, error_code="x")
    assert error_rate([ok, ok]) == 0.0
    assert error_rate([bad, bad]) == 1.0
    assert error_rate([ok, bad, ok, ok]) == 0.25
    # inconsistent records count as errors too
    assert error_rate([ok, record(t_spawn=1, t_ready=2)]) == 0.5
    with pytest.raises(MetricsError) as exc:
        error_rate([])
    assert exc.value.code == "empty-input"


def test_record_json_roundtrip():
    rec = record(phases=PhaseTimings(1, 2, 3, 4, 5), params={"n": "3"})
    assert ExecutionRecord.from_json(rec.to_json()) == rec
    with pytest.raises(ValueError):
        ExecutionRecord.from_json({**rec.to_json(), "surprise": 1})

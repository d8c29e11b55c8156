"""Execution records and the per-invocation metric set derived from them."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Iterable

from faasbench.workloads import PhaseTimings

# Slack for timer granularity when comparing phase sums to totals.
SLACK_NS = 1_000_000


class MetricsError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class ExecutionRecord:
    experiment_id: str
    run_index: int
    workload: str
    group: int | None
    mode: str
    start_kind: str
    instance_id: str | None
    pid: int | None
    t_submit: int
    t_spawn: int | None
    t_ready: int | None
    t_request_sent: int | None
    t_response_recv: int | None
    phases: PhaseTimings | None = None
    success: bool = False
    error_code: str | None = None
    output_len: int = 0
    output_digest: str | None = None
    server_total_ns: int = 0
    params: dict[str, str] = field(default_factory=dict)
    # engine + module load inside spawn->ready; bytecode cold starts only
    artifact_load_ns: int | None = None

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["phases"] = asdict(self.phases) if self.phases is not None else None
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> ExecutionRecord:
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown record fields: {sorted(extra)}")
        doc = dict(doc)
        if doc.get("phases") is not None:
            doc["phases"] = PhaseTimings(**doc["phases"])
        return cls(**doc)


@dataclass(frozen=True)
class MetricSet:
    total_ns: int
    cold_start_ns: int
    io_latency_ns: int
    serialization_ns: int
    compute_ns: int
    output_len: int

    def components(self) -> int:
        return self.cold_start_ns + self.io_latency_ns + self.serialization_ns + self.compute_ns


def check_timestamps(record: ExecutionRecord) -> None:
    """Raises MetricsError("inconsistent-timestamps") when ordering is violated."""
    if record.t_request_sent is None or record.t_response_recv is None:
        raise MetricsError("inconsistent-timestamps", "request/response timestamps missing")
    if record.start_kind == "cold":
        chain = [record.t_submit, record.t_spawn, record.t_ready, record.t_request_sent, record.t_response_recv]
        if any(t is None for t in chain):
            raise MetricsError("inconsistent-timestamps", "cold record lacks spawn/ready timestamps")
    else:
        if record.t_spawn is not None or record.t_ready is not None:
            raise MetricsError("inconsistent-timestamps", "warm record carries spawn/ready timestamps")
        chain = [record.t_submit, record.t_request_sent, record.t_response_recv]
    if any(a > b for a, b in zip(chain, chain[1:])):
        raise MetricsError("inconsistent-timestamps", f"non-monotonic lifecycle {chain}")
    if record.artifact_load_ns is not None and (
        record.start_kind != "cold" or not 0 <= record.artifact_load_ns <= record.t_ready - record.t_spawn
    ):
        raise MetricsError("inconsistent-timestamps", "artifact load outside spawn->ready")
    if record.success and record.phases is None:
        raise MetricsError("inconsistent-timestamps", "successful record without phases")


def derive_metrics(record: ExecutionRecord) -> MetricSet:
    check_timestamps(record)
    ph = record.phases or PhaseTimings()
    cold = record.t_ready - record.t_spawn if record.start_kind == "cold" else 0
    return MetricSet(
        total_ns=record.t_response_recv - record.t_submit,
        cold_start_ns=cold,
        io_latency_ns=ph.io_fetch_ns + ph.io_store_ns,
        serialization_ns=ph.serialize_ns + ph.deserialize_ns,
        compute_ns=ph.compute_ns,
        output_len=record.output_len,
    )


def is_valid(record: ExecutionRecord) -> bool:
    """Successful and internally consistent; only these enter latency aggregates."""
    if not record.success:
        return False
    try:
        check_timestamps(record)
    except MetricsError:
        return False
    return True


def error_rate(records: Iterable[ExecutionRecord]) -> float:
    """Fraction of records that failed or carry inconsistent timestamps."""
    records = list(records)
    if not records:
        raise MetricsError("empty-input", "error rate of no records")
    failed = sum(1 for r in records if not is_valid(r))
    return failed / len(records)

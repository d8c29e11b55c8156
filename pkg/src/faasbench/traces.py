"""Seeded invocation schedules and their replay against an executor.

Sequential and concurrent traces are closed-loop: every entry sits at
offset 0 and replay bounds the number in flight. Burst traces are
open-loop: entries carry Poisson arrival offsets whose rate switches to
the burst rate during the first ``burst_len_s`` of every period.
"""

from __future__ import annotations

import json
import math
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from faasbench.observer import ExecutionRecord
from faasbench.workloads import WorkloadRequest

# Default closed-loop concurrency ladder for throughput sweeps.
RPS_LADDER = (1, 10, 20, 30, 40, 50, 60, 70, 80, 100, 200)
PATTERN_KINDS = ("sequential", "concurrent", "burst")


class TraceError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class TracePattern:
    kind: str
    count: int | None = None
    level: int | None = None
    base_rate_rps: float | None = None
    burst_rate_rps: float | None = None
    burst_len_s: float | None = None
    period_s: float | None = None
    duration_s: float | None = None

    @classmethod
    def sequential(cls, count: int) -> TracePattern:
        return cls("sequential", count=count).validate()

    @classmethod
    def concurrent(cls, level: int, count: int) -> TracePattern:
        return cls("concurrent", count=count, level=level).validate()

    @classmethod
    def burst(
        cls, base_rate_rps: float, burst_rate_rps: float, burst_len_s: float, period_s: float, duration_s: float
    ) -> TracePattern:
        return cls(
            "burst", base_rate_rps=base_rate_rps, burst_rate_rps=burst_rate_rps, burst_len_s=burst_len_s,
            period_s=period_s, duration_s=duration_s,
        ).validate()

    def validate(self) -> TracePattern:
        def positive(name: str, integral: bool = False) -> None:
            v = getattr(self, name)
            if v is None or isinstance(v, bool) or (integral and not isinstance(v, int)):
                raise TraceError("invalid-pattern", f"{self.kind} needs {'an integer' if integral else 'a'} {name}")
            if not (v > 0 and math.isfinite(v)):
                raise TraceError("invalid-pattern", f"{name} must be > 0, got {v}")

        if self.kind == "sequential":
            positive("count", True)
            used = {"count"}
        elif self.kind == "concurrent":
            positive("count", True)
            positive("level", True)
            used = {"count", "level"}
        elif self.kind == "burst":
            used = {"base_rate_rps", "burst_rate_rps", "burst_len_s", "period_s", "duration_s"}
            for name in sorted(used):
                positive(name)
            if self.burst_len_s >= self.period_s:
                raise TraceError("invalid-pattern", "burst_len_s must be < period_s")
        else:
            raise TraceError("invalid-pattern", f"unknown pattern kind {self.kind!r}")
        stray = [k for k, v in asdict(self).items() if k != "kind" and k not in used and v is not None]
        if stray:
            raise TraceError("invalid-pattern", f"{self.kind} does not take {stray}")
        return self

    @property
    def closed_loop(self) -> bool:
        return self.kind != "burst"

    @property
    def bound(self) -> int:
        """Maximum entries in flight during replay (0 for open-loop)."""
        return {"sequential": 1, "concurrent": self.level or 0}.get(self.kind, 0)

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_json(cls, doc: dict) -> TracePattern:
        try:
            return cls(**doc).validate()
        except TypeError as exc:
            raise TraceError("invalid-pattern", str(exc)) from None


def burst_windows_s(p: TracePattern) -> tuple[float, float]:
    """(seconds at burst rate, seconds at base rate) within the duration."""
    full, rest = divmod(p.duration_s, p.period_s)
    burst = full * p.burst_len_s + min(rest, p.burst_len_s)
    return burst, p.duration_s - burst


def expected_count(p: TracePattern) -> float:
    """Analytic expected number of entries (exact for closed-loop kinds)."""
    if p.kind != "burst":
        return float(p.count)
    burst, base = burst_windows_s(p)
    return p.burst_rate_rps * burst + p.base_rate_rps * base


@dataclass(frozen=True)
class TraceEntry:
    t_offset_ns: int
    request: WorkloadRequest


@dataclass
class InvocationTrace:
    seed: int
    pattern: TracePattern
    entries: list[TraceEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def dumps(self) -> str:
        head = {"seed": self.seed, "pattern": self.pattern.to_json(), "entries": len(self.entries)}
        lines = [json.dumps(head, sort_keys=True)]
        lines += [
            json.dumps({"t_offset_ns": e.t_offset_ns, "request": e.request.to_json()}, sort_keys=True)
            for e in self.entries
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> InvocationTrace:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise TraceError("invalid-trace", "empty trace file")
        head = json.loads(lines[0])
        entries = [
            TraceEntry(doc["t_offset_ns"], WorkloadRequest.from_json(doc["request"]))
            for doc in map(json.loads, lines[1:])
        ]
        if head.get("entries", len(entries)) != len(entries):
            raise TraceError("invalid-trace", f"header announces {head['entries']} entries, found {len(entries)}")
        return cls(seed=head["seed"], pattern=TracePattern.from_json(head["pattern"]), entries=entries)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path

    @classmethod
    def load(cls, path: str | Path) -> InvocationTrace:
        return cls.loads(Path(path).read_text())


def _segments(p: TracePattern) -> list[tuple[float, float, float]]:
    """Constant-rate pieces ``(start, end, rate)`` covering the duration."""
    out = []
    k = 0
    while k * p.period_s < p.duration_s:
        t0 = k * p.period_s
        t1 = min(t0 + p.burst_len_s, p.duration_s)
        out.append((t0, t1, p.burst_rate_rps))
        t2 = min(t0 + p.period_s, p.duration_s)
        if t2 > t1:
            out.append((t1, t2, p.base_rate_rps))
        k += 1
    return out


def _burst_offsets(p: TracePattern, rng: random.Random) -> list[int]:
    # An arrival that would cross a rate boundary is discarded and sampling
    # restarts at the boundary, which is exact for a Poisson process.
    out: list[int] = []
    for start, end, rate in _segments(p):
        t = start + rng.expovariate(rate)
        while t < end:
            out.append(int(t * 1e9))
            t += rng.expovariate(rate)
    return out


def generate_trace(pattern: TracePattern, template: WorkloadRequest, seed: int) -> InvocationTrace:
    """Pure function of its arguments."""
    pattern = pattern.validate()
    if not 0 <= seed < 2**64:
        raise TraceError("invalid-pattern", "seed must fit in 64 bits")
    if pattern.kind == "burst":
        offsets = _burst_offsets(pattern, random.Random(seed))
    else:
        offsets = [0] * pattern.count
    return InvocationTrace(seed, pattern, [TraceEntry(t, template) for t in offsets])


# -- replay ----------------------------------------------------------


class Executor(Protocol):
    def __call__(self, request: WorkloadRequest, start_kind: str, run_index: int) -> ExecutionRecord: ...


StartPolicy = str | Callable[[int], str]


@dataclass
class ReplayResult:
    records: list[ExecutionRecord]
    makespan_ns: int
    max_in_flight: int

    @property
    def completed(self) -> int:
        return sum(1 for r in self.records if r.success)

    @property
    def throughput_rps(self) -> float:
        return self.completed / (self.makespan_ns / 1e9) if self.makespan_ns > 0 else 0.0


class _InFlight:
    def __init__(self, bound: int):
        self.bound = bound
        self.current = 0
        self.peak = 0
        self._lock = threading.Lock()

    def __enter__(self):
        with self._lock:
            self.current += 1
            self.peak = max(self.peak, self.current)
            if self.bound and self.current > self.bound:
                raise AssertionError(f"in-flight {self.current} exceeds bound {self.bound}")
        return self

    def __exit__(self, *exc):
        with self._lock:
            self.current -= 1


def _error_record(request: WorkloadRequest, start_kind: str, run_index: int, t_submit: int, exc: BaseException,
                  mode: str) -> ExecutionRecord:
    return ExecutionRecord(
        experiment_id="", run_index=run_index, workload=request.workload.value, group=request.group, mode=mode,
        start_kind=start_kind, instance_id=None, pid=None, t_submit=t_submit, t_spawn=None, t_ready=None,
        t_request_sent=None, t_response_recv=None, success=False,
        error_code=getattr(exc, "code", None) or type(exc).__name__, params=dict(request.params),
    )


def replay(
    trace: InvocationTrace,
    executor: Executor,
    start_policy: StartPolicy = "warm",
    max_workers: int = 256,
) -> ReplayResult:
    """Runs every entry once; failures become error records, never exceptions.

    Closed-loop traces keep at most ``pattern.bound`` entries in flight.
    Open-loop traces dispatch each entry at its offset; ``max_workers``
    caps the threads available to absorb bursts.
    """
    n = len(trace.entries)
    if n == 0:
        return ReplayResult([], 0, 0)
    policy = start_policy if callable(start_policy) else (lambda _i, k=start_policy: k)
    mode = getattr(executor, "mode", "")
    records: list[ExecutionRecord | None] = [None] * n
    gauge = _InFlight(trace.pattern.bound)

    def run(i: int) -> None:
        entry = trace.entries[i]
        kind = policy(i)
        t_submit = time.monotonic_ns()
        with gauge:
            try:
                records[i] = executor(entry.request, kind, i)
            except AssertionError:
                raise
            except Exception as exc:  # noqa: BLE001 - recorded, replay continues
                records[i] = _error_record(entry.request, kind, i, t_submit, exc, mode)

    start = time.monotonic_ns()
    if trace.pattern.kind == "sequential":
        for i in range(n):
            run(i)
    elif trace.pattern.closed_loop:
        with ThreadPoolExecutor(max_workers=trace.pattern.bound) as pool:
            for fut in [pool.submit(run, i) for i in range(n)]:
                fut.result()
    else:
        futures = []
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            for i, entry in enumerate(trace.entries):
                delay = (start + entry.t_offset_ns - time.monotonic_ns()) / 1e9
                if delay > 0:
                    time.sleep(delay)
                futures.append(pool.submit(run, i))
            for fut in futures:
                fut.result()
    makespan = time.monotonic_ns() - start
    return ReplayResult([r for r in records if r is not None], makespan, gauge.peak)


class InstancePool:
    """Executor backed by runtime instances of one artifact.

    Warm entries reuse idle instances, spawning and pre-warming a new one
    when none is idle and fewer than ``max_instances`` exist; otherwise they
    wait. Waiting counts toward the record's total latency. Cold entries
    get a fresh instance each.
    """

    def __init__(self, adapter, artifact, experiment_id: str = "", warmup_request: WorkloadRequest | None = None,
                 max_instances: int | None = None):
        self.adapter = adapter
        self.artifact = artifact
        self.experiment_id = experiment_id
        self.warmup_request = warmup_request
        self.max_instances = max_instances
        self.mode = artifact.mode.value
        self._idle: list = []
        self._all: list = []
        self._spawning = 0
        self._cond = threading.Condition()

    def _new(self, request: WorkloadRequest):
        try:
            h = self.adapter.spawn_instance(self.artifact)
            self.adapter.invoke(h, self.warmup_request or request)
        except BaseException:
            with self._cond:
                self._spawning -= 1
                self._cond.notify()
            raise
        with self._cond:
            self._spawning -= 1
            self._all.append(h)
        return h

    def prewarm(self, n: int, request: WorkloadRequest) -> None:
        if self.max_instances is not None:
            n = min(n, self.max_instances - len(self._all))
        for _ in range(max(0, n)):
            with self._cond:
                self._spawning += 1
            h = self._new(request)
            self._release(h)

    def _acquire(self, request: WorkloadRequest):
        with self._cond:
            while True:
                while self._idle:
                    h = self._idle.pop()
                    if h.alive:
                        return h
                    self._all.remove(h)
                if self.max_instances is None or len(self._all) + self._spawning < self.max_instances:
                    self._spawning += 1
                    break
                self._cond.wait()
        return self._new(request)

    def _release(self, h) -> None:
        with self._cond:
            if h.alive:
                self._idle.append(h)
            elif h in self._all:
                self._all.remove(h)
            self._cond.notify()

    def __call__(self, request: WorkloadRequest, start_kind: str, run_index: int) -> ExecutionRecord:
        if start_kind == "cold":
            return self.adapter.measure_cold(self.artifact, request, self.experiment_id, run_index)
        t_submit = time.monotonic_ns()
        h = self._acquire(request)
        try:
            rec = self.adapter.warm_record(h, request, self.experiment_id, run_index)
        finally:
            self._release(h)
        rec.t_submit = t_submit
        return rec

    @property
    def instances(self) -> list:
        with self._cond:
            return list(self._all)

    def close(self) -> None:
        with self._cond:
            handles, self._all, self._idle = self._all, [], []
        for h in handles:
            self.adapter.shutdown(h)

    def __enter__(self) -> InstancePool:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

"""Per-process CPU time and memory sampling.

Samples come from the OS process accounting (psutil); peak memory also
reads the kernel high-water mark where ``/proc`` exposes it.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import psutil

DEFAULT_INTERVAL_MS = 50


class TelemetryError(RuntimeError):
    pass


@dataclass(frozen=True)
class TelemetrySample:
    pid: int
    instance_id: str
    t_sample: int
    cpu_time_ns: int
    rss_bytes: int
    hwm_bytes: int | None = None


@dataclass(frozen=True)
class ResourceUsage:
    instance_id: str
    window: tuple[int, int]
    cpu_time_delta_ns: int
    peak_rss_bytes: int
    mean_rss_bytes: float
    samples: int
    low_confidence: bool


def _hwm_bytes(pid: int) -> int | None:
    try:
        with open(f"/proc/{pid}/status") as fh:
            for line in fh:
                if line.startswith("VmHWM:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    return None


def read_sample(proc: psutil.Process, instance_id: str) -> TelemetrySample:
    with proc.oneshot():
        cpu = proc.cpu_times()
        rss = proc.memory_info().rss
    return TelemetrySample(
        pid=proc.pid,
        instance_id=instance_id,
        t_sample=time.monotonic_ns(),
        cpu_time_ns=int(round((cpu.user + cpu.system) * 1e9)),
        rss_bytes=rss,
        hwm_bytes=_hwm_bytes(proc.pid),
    )


class Sampler:
    """Background sampler for one process.

    Samples accumulate in ``samples`` until :meth:`stop`; a process that
    exits ends sampling quietly.
    """

    def __init__(self, pid: int, instance_id: str, interval_ms: float = DEFAULT_INTERVAL_MS):
        try:
            self._proc = psutil.Process(pid)
            first = read_sample(self._proc, instance_id)
        except (psutil.NoSuchProcess, psutil.ZombieProcess) as exc:
            raise TelemetryError(f"pid-not-found: {pid}") from exc
        self.pid = pid
        self.instance_id = instance_id
        self.interval_s = interval_ms / 1000.0
        self.samples: list[TelemetrySample] = [first]
        self._last_cpu = first.cpu_time_ns
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name=f"telemetry-{pid}", daemon=True)
        self._thread.start()

    def _take(self) -> bool:
        try:
            s = read_sample(self._proc, self.instance_id)
        except (psutil.NoSuchProcess, psutil.ZombieProcess, psutil.AccessDenied):
            return False
        # cumulative CPU must never run backwards
        if s.cpu_time_ns < self._last_cpu:
            s = TelemetrySample(s.pid, s.instance_id, s.t_sample, self._last_cpu, s.rss_bytes, s.hwm_bytes)
        self._last_cpu = s.cpu_time_ns
        self.samples.append(s)
        return True

    def _run(self) -> None:
        next_t = time.monotonic() + self.interval_s
        while not self._stop.wait(max(0.0, next_t - time.monotonic())):
            if not self._take():
                return
            next_t += self.interval_s
            now = time.monotonic()
            if next_t < now:
                # missed ticks are skipped, not replayed
                next_t = now + self.interval_s

    def snapshot(self) -> bool:
        """Takes one sample immediately; False when the process is gone."""
        return self._take()

    def stop(self) -> list[TelemetrySample]:
        self._stop.set()
        if self._thread.is_alive() and self._thread is not threading.current_thread():
            self._thread.join()
        return list(self.samples)


def start_sampling(pid: int, instance_id: str, interval_ms: float = DEFAULT_INTERVAL_MS) -> Sampler:
    return Sampler(pid, instance_id, interval_ms)


def aggregate(samples: list[TelemetrySample], window: tuple[int, int] | None = None) -> ResourceUsage:
    """CPU-time delta and RSS statistics over the samples inside ``window``."""
    picked = sorted(
        (s for s in samples if window is None or window[0] <= s.t_sample <= window[1]),
        key=lambda s: s.t_sample,
    )
    if not picked:
        raise TelemetryError("empty-window")
    ids = {s.instance_id for s in picked}
    if len(ids) > 1:
        raise TelemetryError(f"samples from several instances: {sorted(ids)}")
    rss = [s.rss_bytes for s in picked]
    peak = max(rss)
    hwm = [s.hwm_bytes for s in picked if s.hwm_bytes is not None]
    if hwm:
        peak = max(peak, max(hwm))
    w = window or (picked[0].t_sample, picked[-1].t_sample)
    return ResourceUsage(
        instance_id=picked[0].instance_id,
        window=w,
        cpu_time_delta_ns=max(0, picked[-1].cpu_time_ns - picked[0].cpu_time_ns),
        peak_rss_bytes=peak,
        mean_rss_bytes=sum(rss) / len(rss),
        samples=len(picked),
        low_confidence=len(picked) < 2,
    )

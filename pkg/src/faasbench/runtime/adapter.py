"""Instance lifecycle: spawn, readiness, invoke, shutdown, and start timing."""

from __future__ import annotations

import os
import select
import socket
import subprocess
import sys
import tempfile
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from faasbench.observer import ExecutionRecord
from faasbench.runtime.build import ArtifactInfo, RuntimeMode, ToolchainConfig
from faasbench.telemetry import Sampler, TelemetryError, TelemetrySample
from faasbench.workloads import WorkloadRequest, WorkloadResponse
from faasbench.workloads.protocol import HEADER, LOAD_TAG, MAX_FRAME, FrameError, encode_frame, read_exact

DEFAULT_READY_TIMEOUT_S = 30.0
SHUTDOWN_GRACE_S = 2.0
_PKG_ROOT = str(Path(__file__).resolve().parents[2])


class InstanceError(RuntimeError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class InstanceHandle:
    instance_id: str
    pid: int
    mode: RuntimeMode
    spawn_t: int
    ready_t: int
    artifact: ArtifactInfo
    transport: str
    invocations: int = 0
    artifact_load_ns: int | None = None
    samples: list[TelemetrySample] = field(default_factory=list)
    _proc: subprocess.Popen | None = field(default=None, repr=False)
    _sock: socket.socket | None = field(default=None, repr=False)
    _stderr: object = field(default=None, repr=False)
    _sampler: Sampler | None = field(default=None, repr=False)
    _exit: int | None = field(default=None, repr=False)

    @property
    def alive(self) -> bool:
        return self._exit is None and self._proc is not None and self._proc.poll() is None


@dataclass
class Invocation:
    response: WorkloadResponse
    client_total_ns: int
    t_request_sent: int
    t_response_recv: int


def _load_ns(stderr: bytes) -> int | None:
    for line in stderr.decode(errors="replace").splitlines():
        if line.startswith(LOAD_TAG) and line[len(LOAD_TAG):].isdigit():
            return int(line[len(LOAD_TAG):])
    return None


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class RuntimeAdapter:
    """Spawns and drives function instances for every runtime mode.

    Live instances are tracked by pid so :meth:`close_all` can guarantee
    that no process outlives an experiment. Distinct handles may be used
    from different threads concurrently.
    """

    def __init__(
        self,
        toolchain: ToolchainConfig | None = None,
        transport: str = "stdio",
        ready_timeout_s: float = DEFAULT_READY_TIMEOUT_S,
        response_timeout_s: float | None = 600.0,
        telemetry_interval_ms: float | None = None,
    ):
        self.toolchain = toolchain or ToolchainConfig()
        if transport not in ("stdio", "socket"):
            raise ValueError(f"transport must be 'stdio' or 'socket', got {transport!r}")
        self.transport = transport
        self.ready_timeout_s = ready_timeout_s
        self.response_timeout_s = response_timeout_s
        self.telemetry_interval_ms = telemetry_interval_ms
        self.telemetry_sink: list[TelemetrySample] = []
        self._live: dict[int, InstanceHandle] = {}
        self._lock = threading.Lock()

    # -- lifecycle ---------------------------------------------------

    def command(self, artifact: ArtifactInfo) -> list[str]:
        if artifact.mode is RuntimeMode.NATIVE:
            return [artifact.path]
        engine = artifact.engine or (
            self.toolchain.interpreted_engine if artifact.mode is RuntimeMode.INTERPRETED else self.toolchain.aot_engine
        )
        return [sys.executable, "-m", "faasbench.runtime.host", "--engine", engine, artifact.path]

    def spawn_instance(self, artifact: ArtifactInfo, env: dict[str, str] | None = None) -> InstanceHandle:
        if not Path(artifact.path).is_file():
            raise InstanceError("spawn-failure", f"artifact {artifact.path} does not exist")
        instance_id = f"{artifact.workload.value}-{artifact.mode.value}-{uuid.uuid4().hex[:10]}"
        transport = "stdio" if self.transport == "stdio" else f"socket:{_free_port()}"
        child_env = dict(os.environ)
        child_env.update(env or {})
        child_env["LUMOS_TRANSPORT"] = transport
        child_env["LUMOS_INSTANCE_ID"] = instance_id
        child_env["PYTHONPATH"] = os.pathsep.join(p for p in (_PKG_ROOT, child_env.get("PYTHONPATH")) if p)
        stderr = tempfile.TemporaryFile()
        spawn_t = time.monotonic_ns()
        try:
            proc = subprocess.Popen(
                self.command(artifact), stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=stderr,
                env=child_env, bufsize=0,
            )
        except OSError as exc:
            stderr.close()
            raise InstanceError("spawn-failure", str(exc)) from exc
        handle = InstanceHandle(
            instance_id=instance_id, pid=proc.pid, mode=artifact.mode, spawn_t=spawn_t, ready_t=spawn_t,
            artifact=artifact, transport=transport, _proc=proc, _stderr=stderr,
        )
        with self._lock:
            self._live[proc.pid] = handle
        try:
            line = self._await_ready(handle)
        except InstanceError:
            self.shutdown(handle)
            raise
        handle.ready_t = time.monotonic_ns()
        if line != f"READY {instance_id}":
            self.shutdown(handle)
            raise InstanceError("spawn-failure", f"unexpected readiness line {line!r}")
        if transport.startswith("socket:"):
            try:
                sock = socket.create_connection(("127.0.0.1", int(transport.split(":")[1])), timeout=5)
            except OSError as exc:
                self.shutdown(handle)
                raise InstanceError("spawn-failure", f"cannot connect to instance: {exc}") from exc
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            handle._sock = sock
        if artifact.mode is not RuntimeMode.NATIVE:
            handle.artifact_load_ns = _load_ns(self._stderr_bytes(handle))
        if self.telemetry_interval_ms:
            try:
                handle._sampler = Sampler(proc.pid, instance_id, self.telemetry_interval_ms)
            except TelemetryError:
                pass
        return handle

    @staticmethod
    def _stderr_bytes(handle: InstanceHandle) -> bytes:
        # pread leaves the offset the child shares with us untouched
        f = handle._stderr
        if f is None:
            return b""
        try:
            fd = f.fileno()
            return os.pread(fd, os.fstat(fd).st_size, 0)
        except (OSError, ValueError):
            return b""

    def _stderr_text(self, handle: InstanceHandle) -> str:
        return self._stderr_bytes(handle).decode(errors="replace").strip()[-2000:]

    def _await_ready(self, handle: InstanceHandle) -> str:
        fd = handle._proc.stdout.fileno()
        deadline = time.monotonic() + self.ready_timeout_s
        buf = b""
        while b"\n" not in buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise InstanceError("readiness-timeout", f"no READY within {self.ready_timeout_s}s")
            r, _, _ = select.select([fd], [], [], remaining)
            if not r:
                continue
            chunk = os.read(fd, 256)
            if not chunk:
                handle._proc.wait()
                raise InstanceError(
                    "spawn-failure",
                    f"instance exited with {handle._proc.returncode} before READY: {self._stderr_text(handle)}",
                )
            buf += chunk
        line, rest = buf.split(b"\n", 1)
        if rest:
            raise InstanceError("spawn-failure", "unexpected output after READY")
        return line.decode(errors="replace")

    def shutdown(self, handle: InstanceHandle) -> int:
        """Closes the request channel, then kills after the grace period.

        Idempotent: a second call returns the recorded exit status.
        """
        if handle._exit is not None:
            return handle._exit
        proc = handle._proc
        if handle._sampler is not None:
            handle._sampler.snapshot()
            handle.samples = handle._sampler.stop()
            self.telemetry_sink.extend(handle.samples)
            handle._sampler = None
        try:
            if handle._sock is not None:
                handle._sock.close()
            if proc.stdin and not proc.stdin.closed:
                proc.stdin.close()
        except OSError:
            pass
        try:
            code = proc.wait(timeout=SHUTDOWN_GRACE_S)
        except subprocess.TimeoutExpired:
            proc.kill()
            code = proc.wait()
        for f in (proc.stdout, handle._stderr):
            try:
                f.close()
            except (OSError, AttributeError):
                pass
        handle._exit = code
        with self._lock:
            self._live.pop(handle.pid, None)
        return code

    def live_pids(self) -> list[int]:
        with self._lock:
            return sorted(self._live)

    def close_all(self) -> None:
        with self._lock:
            handles = list(self._live.values())
        for h in handles:
            self.shutdown(h)

    def __enter__(self) -> RuntimeAdapter:
        return self

    def __exit__(self, *exc) -> None:
        self.close_all()

    # -- invocation --------------------------------------------------

    def _reader(self, handle: InstanceHandle, deadline: float | None):
        if handle._sock is not None:
            sock = handle._sock

            def read(n: int) -> bytes:
                if deadline is not None:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        raise InstanceError("response-timeout", "no response in time")
                    sock.settimeout(remaining)
                try:
                    return sock.recv(n)
                except socket.timeout as exc:
                    raise InstanceError("response-timeout", "no response in time") from exc

            return read
        fd = handle._proc.stdout.fileno()

        def read(n: int) -> bytes:
            while True:
                timeout = None if deadline is None else deadline - time.monotonic()
                if timeout is not None and timeout <= 0:
                    raise InstanceError("response-timeout", "no response in time")
                r, _, _ = select.select([fd], [], [], timeout)
                if r:
                    return os.read(fd, n)

        return read

    def _send(self, handle: InstanceHandle, frame: bytes) -> None:
        if handle._sock is not None:
            handle._sock.sendall(frame)
        else:
            handle._proc.stdin.write(frame)

    def invoke(self, handle: InstanceHandle, request: WorkloadRequest | bytes) -> Invocation:
        if not handle.alive:
            raise InstanceError("io-error", f"instance {handle.instance_id} is not running")
        body = request if isinstance(request, bytes) else request.encode()
        frame = encode_frame(body)
        deadline = None if self.response_timeout_s is None else time.monotonic() + self.response_timeout_s
        read = self._reader(handle, deadline)
        t_sent = time.monotonic_ns()
        try:
            self._send(handle, frame)
            n = HEADER.unpack(read_exact(read, HEADER.size))[0]
            if n > MAX_FRAME:
                raise InstanceError("io-error", f"oversized response frame ({n} bytes)")
            raw = read_exact(read, n)
        except (OSError, ValueError, FrameError) as exc:
            raise InstanceError("io-error", str(exc)) from exc
        t_recv = time.monotonic_ns()
        handle.invocations += 1
        return Invocation(WorkloadResponse.decode(raw), t_recv - t_sent, t_sent, t_recv)

    # -- start-kind measurements -------------------------------------

    def _record(self, artifact, request, handle, inv, start_kind, t_submit, experiment_id, run_index):
        resp = inv.response
        return ExecutionRecord(
            experiment_id=experiment_id,
            run_index=run_index,
            workload=artifact.workload.value,
            group=request.group,
            mode=artifact.mode.value,
            start_kind=start_kind,
            instance_id=handle.instance_id,
            pid=handle.pid,
            t_submit=t_submit,
            t_spawn=handle.spawn_t if start_kind == "cold" else None,
            t_ready=handle.ready_t if start_kind == "cold" else None,
            artifact_load_ns=handle.artifact_load_ns if start_kind == "cold" else None,
            t_request_sent=inv.t_request_sent,
            t_response_recv=inv.t_response_recv,
            phases=resp.phases,
            success=resp.ok,
            error_code=resp.error_code,
            output_len=resp.output_len,
            output_digest=resp.output_digest,
            server_total_ns=resp.server_total_ns,
            params=dict(request.params),
        )

    def measure_cold(
        self, artifact: ArtifactInfo, request: WorkloadRequest, experiment_id: str = "", run_index: int = 0
    ) -> ExecutionRecord:
        """Fresh spawn, one invocation, shutdown. Total spans submit to response."""
        t_submit = time.monotonic_ns()
        handle = self.spawn_instance(artifact)
        try:
            inv = self.invoke(handle, request)
        finally:
            self.shutdown(handle)
        return self._record(artifact, request, handle, inv, "cold", t_submit, experiment_id, run_index)

    def measure_warm(
        self,
        artifact: ArtifactInfo,
        request: WorkloadRequest,
        warmup_count: int = 1,
        experiment_id: str = "",
        run_index: int = 0,
        handle: InstanceHandle | None = None,
    ) -> ExecutionRecord:
        """Invocation on an instance that already served ``warmup_count`` requests.

        With ``handle`` given the instance is reused and left running;
        otherwise a private instance is spawned and shut down afterwards.
        """
        if warmup_count < 1:
            raise ValueError("warmup_count must be >= 1")
        own = handle is None
        handle = handle or self.spawn_instance(artifact)
        try:
            for _ in range(warmup_count):
                self.invoke(handle, request)
            t_submit = time.monotonic_ns()
            inv = self.invoke(handle, request)
        finally:
            if own:
                self.shutdown(handle)
        return self._record(artifact, request, handle, inv, "warm", t_submit, experiment_id, run_index)

    def warm_record(
        self, handle: InstanceHandle, request: WorkloadRequest, experiment_id: str = "", run_index: int = 0
    ) -> ExecutionRecord:
        """One invocation on a handle that has served at least one request."""
        if handle.invocations < 1:
            raise ValueError("a warm record needs a prior invocation on the handle")
        t_submit = time.monotonic_ns()
        inv = self.invoke(handle, request)
        return self._record(handle.artifact, request, handle, inv, "warm", t_submit, experiment_id, run_index)


def failed_record(
    artifact: ArtifactInfo, request: WorkloadRequest, start_kind: str, t_submit: int, error_code: str,
    experiment_id: str = "", run_index: int = 0,
) -> ExecutionRecord:
    """Record for an invocation that never produced a response."""
    return ExecutionRecord(
        experiment_id=experiment_id, run_index=run_index, workload=artifact.workload.value, group=request.group,
        mode=artifact.mode.value, start_kind=start_kind, instance_id=None, pid=None, t_submit=t_submit,
        t_spawn=None, t_ready=None, t_request_sent=None, t_response_recv=None, success=False,
        error_code=error_code, params=dict(request.params),
    )

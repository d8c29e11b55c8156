"""Local key-value service with injectable latency and bandwidth caps.

Wire format (all integers 4-byte big-endian)::

    request:  op:u8  klen:u32 key  vlen:u32 value
    response: status:u8  vlen:u32 value

Ops are get (0), put (1) and configure (2, value is a JSON config object).
"""

from __future__ import annotations

import json
import socket
import socketserver
import struct
import threading
import time
from dataclasses import asdict, dataclass, replace

OP_GET, OP_PUT, OP_CONFIGURE = 0, 1, 2
ST_OK, ST_NOT_FOUND, ST_TOO_LARGE, ST_BAD_REQUEST = 0, 1, 2, 3
STATUS_CODES = {ST_NOT_FOUND: "not-found", ST_TOO_LARGE: "value-too-large", ST_BAD_REQUEST: "bad-request"}

MAX_KEY_BYTES = 256
DEFAULT_MAX_VALUE_BYTES = 64 * 1024 * 1024
_U32 = struct.Struct(">I")
_CHUNK = 64 * 1024


class BaasError(RuntimeError):
    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.detail = message


@dataclass(frozen=True)
class BaasConfig:
    port: int = 0
    artificial_latency_ms: float = 0.0
    bandwidth_cap_bytes_per_s: int = 0
    max_value_bytes: int = DEFAULT_MAX_VALUE_BYTES
    host: str = "127.0.0.1"

    def validate(self) -> BaasConfig:
        if not 0 <= self.port <= 65535:
            raise BaasError("invalid-config", f"port {self.port} out of range")
        if not self.artificial_latency_ms >= 0:
            raise BaasError("invalid-config", "artificial_latency_ms must be >= 0")
        if self.bandwidth_cap_bytes_per_s < 0:
            raise BaasError("invalid-config", "bandwidth_cap_bytes_per_s must be >= 0")
        if self.max_value_bytes <= 0:
            raise BaasError("invalid-config", "max_value_bytes must be > 0")
        return self

    @classmethod
    def from_dict(cls, doc: dict) -> BaasConfig:
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise BaasError("invalid-config", f"unknown fields {sorted(unknown)}")
        try:
            return cls(**doc).validate()
        except TypeError as exc:
            raise BaasError("invalid-config", str(exc)) from None


class _Pacer:
    """Holds a transfer to ``cap`` bytes per second; no-op when cap is 0."""

    def __init__(self, cap: int):
        self.cap = cap
        self.start = time.monotonic()
        self.sent = 0

    def account(self, n: int) -> None:
        if not self.cap:
            return
        self.sent += n
        lag = self.start + self.sent / self.cap - time.monotonic()
        if lag > 0:
            time.sleep(lag)


def _recv_exact(sock: socket.socket, n: int, pacer: _Pacer | None = None) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(_CHUNK, n - len(buf)))
        if not chunk:
            raise EOFError
        buf += chunk
        if pacer:
            pacer.account(len(chunk))
    return bytes(buf)


def _send_paced(sock: socket.socket, data: bytes, pacer: _Pacer) -> None:
    if not pacer.cap:
        sock.sendall(data)
        return
    step = max(1, min(_CHUNK, pacer.cap // 20 or 1))
    view = memoryview(data)
    for i in range(0, len(view), step):
        part = view[i : i + step]
        pacer.account(len(part))
        sock.sendall(part)


class _Handler(socketserver.BaseRequestHandler):
    server: _TCPServer

    def handle(self) -> None:
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        owner = self.server.owner
        try:
            while True:
                self._one(sock, owner)
        except (EOFError, ConnectionError, OSError):
            pass

    def _one(self, sock: socket.socket, owner: BaasServer) -> None:
        head = _recv_exact(sock, 5)
        op, klen = head[0], _U32.unpack(head[1:])[0]
        if klen > MAX_KEY_BYTES:
            # framing can no longer be trusted
            self._reply(sock, owner.config, ST_BAD_REQUEST, b"key too long")
            raise EOFError
        key = _recv_exact(sock, klen)
        vlen = _U32.unpack(_recv_exact(sock, 4))[0]
        cfg = owner.config
        pacer = _Pacer(cfg.bandwidth_cap_bytes_per_s)
        if vlen > cfg.max_value_bytes:
            remaining = vlen
            while remaining:
                remaining -= len(_recv_exact(sock, min(_CHUNK, remaining)))
            self._reply(sock, cfg, ST_TOO_LARGE, b"")
            return
        value = _recv_exact(sock, vlen, pacer if op == OP_PUT else None)

        if op == OP_GET:
            found = owner._get(key)
            if found is None:
                self._reply(sock, cfg, ST_NOT_FOUND, b"")
            else:
                self._reply(sock, cfg, ST_OK, found, pacer)
        elif op == OP_PUT:
            owner._put(key, value)
            self._reply(sock, cfg, ST_OK, b"")
        elif op == OP_CONFIGURE:
            try:
                owner.configure(BaasConfig.from_dict({**asdict(cfg), **json.loads(value), "port": cfg.port, "host": cfg.host}))
            except BaasError as exc:
                self._reply(sock, cfg, ST_BAD_REQUEST, exc.detail.encode())
                return
            except (ValueError, TypeError) as exc:
                self._reply(sock, cfg, ST_BAD_REQUEST, str(exc).encode())
                return
            self._reply(sock, cfg, ST_OK, b"")
        else:
            self._reply(sock, cfg, ST_BAD_REQUEST, f"unknown op {op}".encode())

    @staticmethod
    def _reply(sock: socket.socket, cfg: BaasConfig, status: int, value: bytes, pacer: _Pacer | None = None) -> None:
        if cfg.artificial_latency_ms > 0:
            time.sleep(cfg.artificial_latency_ms / 1000.0)
        sock.sendall(bytes([status]) + _U32.pack(len(value)))
        if value:
            _send_paced(sock, value, pacer or _Pacer(0))


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True
    owner: BaasServer


class BaasServer:
    """Threaded TCP key-value server; use as a context manager or start/stop."""

    def __init__(self, config: BaasConfig | None = None):
        self._config = (config or BaasConfig()).validate()
        self._store: dict[bytes, bytes] = {}
        self._lock = threading.Lock()
        self._server: _TCPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def config(self) -> BaasConfig:
        return self._config

    @property
    def port(self) -> int:
        return self._config.port

    @property
    def host(self) -> str:
        return self._config.host

    def configure(self, config: BaasConfig) -> None:
        config = config.validate()
        if self._server is not None:
            config = replace(config, port=self._config.port, host=self._config.host)
        self._config = config

    def set_latency(self, ms: float) -> None:
        self.configure(replace(self._config, artificial_latency_ms=ms))

    def _get(self, key: bytes) -> bytes | None:
        with self._lock:
            return self._store.get(key)

    def _put(self, key: bytes, value: bytes) -> None:
        with self._lock:
            self._store[key] = value

    def start(self) -> BaasServer:
        if self._server is not None:
            return self
        srv = _TCPServer((self._config.host, self._config.port), _Handler)
        srv.owner = self
        self._server = srv
        self._config = replace(self._config, port=srv.server_address[1])
        self._thread = threading.Thread(target=srv.serve_forever, name="baas", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is None:
            return
        self._server.shutdown()
        self._server.server_close()
        self._thread.join()
        self._server = None

    def serve_forever(self) -> None:
        self.start()
        try:
            self._thread.join()
        finally:
            self.stop()

    def __enter__(self) -> BaasServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


class BaasClient:
    """Blocking client holding one connection."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, timeout: float | None = 30.0):
        self.host, self.port = host, port
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except ConnectionRefusedError as exc:
            raise BaasError("connection-refused", f"{host}:{port}") from exc
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _call(self, op: int, key: bytes, value: bytes = b"") -> tuple[int, bytes]:
        if len(key) > MAX_KEY_BYTES:
            raise BaasError("bad-request", "key longer than 256 bytes")
        self._sock.sendall(bytes([op]) + _U32.pack(len(key)) + key + _U32.pack(len(value)) + value)
        head = _recv_exact(self._sock, 5)
        return head[0], _recv_exact(self._sock, _U32.unpack(head[1:])[0])

    @staticmethod
    def _key(key: str | bytes) -> bytes:
        return key.encode() if isinstance(key, str) else key

    def get(self, key: str | bytes) -> bytes:
        status, value = self._call(OP_GET, self._key(key))
        if status != ST_OK:
            raise BaasError(STATUS_CODES.get(status, "bad-request"), value.decode(errors="replace"))
        return value

    def put(self, key: str | bytes, value: bytes) -> None:
        status, msg = self._call(OP_PUT, self._key(key), value)
        if status != ST_OK:
            raise BaasError(STATUS_CODES.get(status, "bad-request"), msg.decode(errors="replace"))

    def configure(self, **fields) -> None:
        status, msg = self._call(OP_CONFIGURE, b"", json.dumps(fields).encode())
        if status != ST_OK:
            raise BaasError("invalid-config", msg.decode(errors="replace"))

    def close(self) -> None:
        self._sock.close()

    def __enter__(self) -> BaasClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def config_dict(config: BaasConfig) -> dict:
    return asdict(config)

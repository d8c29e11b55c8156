"""Bytecode engines that execute function modules.

Both engines link the same ``faas`` host import set, so a module behaves
identically under either. :class:`Wasm3Engine` interprets the module file
directly; :class:`WasmtimeEngine` loads a module that was precompiled to
machine code ahead of time by :func:`precompile`.
"""

from __future__ import annotations

import os
import socket
import time
from pathlib import Path
from typing import Callable

IMPORT_MODULE = "faas"

# name -> (wasm3 signature, wasmtime params, wasmtime results)
_SIGNATURES = {
    "clock_ns": ("I()", [], ["i64"]),
    "read": ("i(ii)", ["i32", "i32"], ["i32"]),
    "write": ("i(ii)", ["i32", "i32"], ["i32"]),
    "ready": ("i(ii)", ["i32", "i32"], ["i32"]),
    "env": ("i(iiii)", ["i32", "i32", "i32", "i32"], ["i32"]),
    "sock_connect": ("i(iii)", ["i32", "i32", "i32"], ["i32"]),
    "sock_send": ("i(iii)", ["i32", "i32", "i32"], ["i32"]),
    "sock_recv": ("i(iii)", ["i32", "i32", "i32"], ["i32"]),
    "sock_close": ("i(i)", ["i32"], ["i32"]),
}


class EngineError(RuntimeError):
    pass


class Channel:
    """Request channel of an instance: stdio pipes or one accepted socket."""

    def __init__(self, transport: str = "stdio"):
        self._listener: socket.socket | None = None
        self._conn: socket.socket | None = None
        if transport == "stdio":
            return
        if not transport.startswith("socket:"):
            raise EngineError(f"invalid transport {transport!r}")
        port = int(transport.split(":", 1)[1])
        lst = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        lst.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        lst.bind(("127.0.0.1", port))
        lst.listen(1)
        self._listener = lst

    def _accept(self) -> None:
        assert self._listener is not None
        conn, _ = self._listener.accept()
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._listener.close()
        self._listener = None
        self._conn = conn

    def read(self, n: int) -> bytes:
        if self._listener is not None:
            self._accept()
        if self._conn is not None:
            return self._conn.recv(n)
        return os.read(0, n)

    def write(self, data: bytes) -> int:
        if self._conn is not None:
            return self._conn.send(data)
        return os.write(1, data)


class HostImports:
    """Implementation of the ``faas`` import module.

    ``mem_read``/``mem_write`` are bound by the engine once the module is
    instantiated; every pointer argument is an offset into linear memory.
    """

    def __init__(self, channel: Channel | None = None, env: dict[str, str] | None = None):
        self.channel = channel
        self.env = dict(os.environ) if env is None else env
        self.mem_read: Callable[[int, int], bytes] = _unbound
        self.mem_write: Callable[[int, bytes], None] = _unbound
        self._sockets: dict[int, socket.socket] = {}
        self._next_handle = 3

    def clock_ns(self) -> int:
        return time.monotonic_ns()

    def read(self, ptr: int, n: int) -> int:
        if self.channel is None:
            return -1
        try:
            data = self.channel.read(n)
        except OSError:
            return -1
        if data:
            self.mem_write(ptr, data)
        return len(data)

    def write(self, ptr: int, n: int) -> int:
        if self.channel is None:
            return -1
        try:
            return self.channel.write(self.mem_read(ptr, n))
        except OSError:
            return -1

    def ready(self, ptr: int, n: int) -> int:
        data = self.mem_read(ptr, n)
        view = memoryview(data)
        while view:
            view = view[os.write(1, view):]
        return n

    def env_get(self, name_ptr: int, name_len: int, dst: int, cap: int) -> int:
        name = self.mem_read(name_ptr, name_len).decode("utf-8", "replace")
        value = self.env.get(name)
        if value is None:
            return -1
        raw = value.encode()[:cap]
        self.mem_write(dst, raw)
        return len(raw)

    def sock_connect(self, host_ptr: int, host_len: int, port: int) -> int:
        host = self.mem_read(host_ptr, host_len).decode("ascii", "replace")
        try:
            sock = socket.create_connection((host, port))
        except OSError:
            return -1
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        handle = self._next_handle
        self._next_handle += 1
        self._sockets[handle] = sock
        return handle

    def sock_send(self, h: int, ptr: int, n: int) -> int:
        sock = self._sockets.get(h)
        if sock is None:
            return -1
        try:
            return sock.send(self.mem_read(ptr, n))
        except OSError:
            return -1

    def sock_recv(self, h: int, ptr: int, n: int) -> int:
        sock = self._sockets.get(h)
        if sock is None:
            return -1
        try:
            data = sock.recv(n)
        except OSError:
            return -1
        if data:
            self.mem_write(ptr, data)
        return len(data)

    def sock_close(self, h: int) -> int:
        sock = self._sockets.pop(h, None)
        if sock is None:
            return -1
        sock.close()
        return 0

    def functions(self) -> dict[str, Callable[..., int]]:
        return {
            "clock_ns": self.clock_ns,
            "read": self.read,
            "write": self.write,
            "ready": self.ready,
            "env": self.env_get,
            "sock_connect": self.sock_connect,
            "sock_send": self.sock_send,
            "sock_recv": self.sock_recv,
            "sock_close": self.sock_close,
        }


def _unbound(*_args):
    raise EngineError("memory accessors are not bound yet")


class Wasm3Engine:
    """Interprets a ``.wasm`` file with wasm3."""

    name = "wasm3"

    def __init__(self, module_path: str | Path, host: HostImports, stack_bytes: int = 1 << 20):
        import wasm3

        self.host = host
        env = wasm3.Environment()
        self._rt = env.new_runtime(stack_bytes)
        self._mod = env.parse_module(Path(module_path).read_bytes())
        self._rt.load(self._mod)
        for name, fn in host.functions().items():
            self._mod.link_function(IMPORT_MODULE, name, _SIGNATURES[name][0], fn)
        host.mem_read = self.mem_read
        host.mem_write = self.mem_write

    def mem_read(self, ptr: int, n: int) -> bytes:
        return bytes(self._rt.get_memory(0)[ptr : ptr + n])

    def mem_write(self, ptr: int, data: bytes) -> None:
        self._rt.get_memory(0)[ptr : ptr + len(data)] = data

    def call(self, name: str, *args: int) -> int:
        try:
            return self._rt.find_function(name)(*args)
        except RuntimeError as exc:
            raise EngineError(f"{name}: {exc}") from exc


def _wasmtime_engine():
    import wasmtime

    return wasmtime.Engine(wasmtime.Config())


def precompile(wasm_path: str | Path, out_path: str | Path) -> int:
    """Compiles a module to a native ``.cwasm`` artifact; returns its size."""
    import wasmtime

    module = wasmtime.Module(_wasmtime_engine(), Path(wasm_path).read_bytes())
    data = module.serialize()
    Path(out_path).write_bytes(data)
    return len(data)


class WasmtimeEngine:
    """Runs an ahead-of-time compiled ``.cwasm`` artifact with wasmtime."""

    name = "wasmtime-aot"

    def __init__(self, cwasm_path: str | Path, host: HostImports):
        import wasmtime

        self.host = host
        engine = _wasmtime_engine()
        self._store = wasmtime.Store(engine)
        module = wasmtime.Module.deserialize_file(engine, str(cwasm_path))
        linker = wasmtime.Linker(engine)
        types = {"i32": wasmtime.ValType.i32(), "i64": wasmtime.ValType.i64()}
        for name, fn in host.functions().items():
            _, params, results = _SIGNATURES[name]
            ty = wasmtime.FuncType([types[p] for p in params], [types[r] for r in results])
            linker.define_func(IMPORT_MODULE, name, ty, fn)
        self._instance = linker.instantiate(self._store, module)
        exports = self._instance.exports(self._store)
        self._memory = exports["memory"]
        self._exports = exports
        host.mem_read = self.mem_read
        host.mem_write = self.mem_write

    def mem_read(self, ptr: int, n: int) -> bytes:
        return bytes(self._memory.read(self._store, ptr, ptr + n))

    def mem_write(self, ptr: int, data: bytes) -> None:
        self._memory.write(self._store, data, ptr)

    def call(self, name: str, *args: int) -> int:
        import wasmtime

        try:
            return self._exports[name](self._store, *args)
        except (wasmtime.Trap, wasmtime.WasmtimeError) as exc:
            raise EngineError(f"{name}: {exc}") from exc


ENGINES = {"wasm3": Wasm3Engine, "wasmtime-aot": WasmtimeEngine}


def open_engine(engine: str, module_path: str | Path, host: HostImports):
    try:
        cls = ENGINES[engine]
    except KeyError:
        raise EngineError(f"unknown engine {engine!r}") from None
    return cls(module_path, host)


class ModuleRunner:
    """Executes requests against a module in the current process.

    Useful for kernel tests: no process spawn, same code path as the
    served instance after framing.
    """

    def __init__(self, engine: str, module_path: str | Path, env: dict[str, str] | None = None):
        self.host = HostImports(channel=None, env=env if env is not None else {})
        self.engine = open_engine(engine, module_path, self.host)

    def handle(self, request: bytes) -> bytes:
        ptr = self.engine.call("scratch", len(request))
        if ptr == 0:
            raise EngineError("request too large for the module's input buffer")
        self.engine.mem_write(ptr, request)
        n = self.engine.call("handle", ptr, len(request))
        if n < 0:
            raise EngineError("module failed to render a response")
        return self.engine.mem_read(self.engine.call("response"), n)

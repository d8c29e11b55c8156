"""Artifact builds for each runtime mode.

Native artifacts are statically linked executables. Bytecode artifacts are
freestanding wasm32 modules; the AoT artifact is the same module compiled
to machine code by the AoT engine.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import subprocess
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

from faasbench.workloads import WorkloadId, parse_workload

CSRC = Path(__file__).resolve().parent.parent / "workloads" / "csrc"
SOURCES = ("function.c", "platform.h", "lang_samples.h")

# Stand-in for a container base layer; puts the fibonacci native image within 2% of 80.7 MB.
DEFAULT_BASE_LAYER_BYTES = 79_400_000


class RuntimeMode(str, Enum):
    NATIVE = "native-process"
    INTERPRETED = "bytecode-interpreted"
    AOT = "bytecode-aot"

    @property
    def bytecode(self) -> bool:
        return self is not RuntimeMode.NATIVE


def parse_mode(value: str | RuntimeMode) -> RuntimeMode:
    try:
        return RuntimeMode(value)
    except ValueError:
        raise ValueError(f"unknown runtime mode {value!r}") from None


class BuildError(RuntimeError):
    def __init__(self, kind: str, message: str, output: str = ""):
        super().__init__(f"{kind}: {message}" + (f"\n{output}" if output else ""))
        self.kind = kind
        self.output = output


@dataclass
class ToolchainConfig:
    native_cc: str = "gcc"
    wasm_cc: str = "clang"
    wasm_ld: str = "wasm-ld"
    cflags: tuple[str, ...] = ("-O2", "-ffp-contract=off")
    base_layer_bytes: int = DEFAULT_BASE_LAYER_BYTES
    interpreted_engine: str = "wasm3"
    aot_engine: str = "wasmtime-aot"

    @classmethod
    def from_dict(cls, doc: dict) -> ToolchainConfig:
        doc = dict(doc)
        if "cflags" in doc:
            doc["cflags"] = tuple(doc["cflags"])
        return cls(**doc)


@dataclass
class ArtifactInfo:
    workload: WorkloadId
    mode: RuntimeMode
    path: str
    artifact_bytes: int
    base_layer_bytes: int = 0
    built_at: float = field(default_factory=time.time)
    engine: str | None = None
    module_path: str | None = None
    source_hash: str = ""

    @property
    def image_size(self) -> int:
        return self.artifact_bytes + self.base_layer_bytes

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["workload"] = self.workload.value
        doc["mode"] = self.mode.value
        doc["image_size"] = self.image_size
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> ArtifactInfo:
        doc = {k: v for k, v in doc.items() if k != "image_size"}
        doc["workload"] = parse_workload(doc["workload"])
        doc["mode"] = parse_mode(doc["mode"])
        return cls(**doc)


def probe_toolchain(mode: RuntimeMode, tc: ToolchainConfig) -> list[str]:
    """Names of missing tools for a mode; empty when the mode can be built."""
    missing = []
    if mode is RuntimeMode.NATIVE:
        if shutil.which(tc.native_cc) is None:
            missing.append(tc.native_cc)
        return missing
    for tool in (tc.wasm_cc, tc.wasm_ld):
        if shutil.which(tool) is None:
            missing.append(tool)
    modules = {"wasm3": "wasm3", "wasmtime-aot": "wasmtime"}
    engine = tc.interpreted_engine if mode is RuntimeMode.INTERPRETED else tc.aot_engine
    try:
        __import__(modules[engine])
    except (ImportError, KeyError):
        missing.append(engine)
    return missing


def _source_hash(workload: WorkloadId, mode: RuntimeMode, tc: ToolchainConfig) -> str:
    h = hashlib.sha256()
    for name in SOURCES + (("platform_native.c",) if mode is RuntimeMode.NATIVE else ("platform_wasm.c",)):
        h.update(name.encode())
        h.update((CSRC / name).read_bytes())
    h.update(json.dumps([workload.value, mode.value, asdict(tc)], sort_keys=True).encode())
    return h.hexdigest()


def _run(cmd: list[str]) -> None:
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise BuildError("compile-failure", " ".join(cmd), proc.stdout + proc.stderr)


def _compile_native(workload: WorkloadId, out: Path, tc: ToolchainConfig) -> None:
    _run(
        [tc.native_cc, *tc.cflags, "-static", "-s", f"-DWORKLOAD_ID={workload.build_id}", f"-I{CSRC}",
         "-o", str(out), str(CSRC / "function.c"), str(CSRC / "platform_native.c")]
    )


def _compile_wasm(workload: WorkloadId, out: Path, tc: ToolchainConfig) -> None:
    _run(
        [tc.wasm_cc, "--target=wasm32", *tc.cflags, "-nostdlib", "-fno-builtin",
         f"-DWORKLOAD_ID={workload.build_id}", f"-I{CSRC}", "-Wl,--no-entry", "-Wl,--strip-all",
         "-o", str(out), str(CSRC / "function.c"), str(CSRC / "platform_wasm.c")]
    )


def artifact_path(out_dir: str | Path, workload: WorkloadId, mode: RuntimeMode) -> Path:
    suffix = {RuntimeMode.NATIVE: "", RuntimeMode.INTERPRETED: ".wasm", RuntimeMode.AOT: ".cwasm"}[mode]
    return Path(out_dir) / workload.value / mode.value / f"function{suffix}"


def build_artifact(
    workload: WorkloadId | str,
    mode: RuntimeMode | str,
    out_dir: str | Path,
    toolchain: ToolchainConfig | None = None,
    force: bool = False,
) -> ArtifactInfo:
    """Builds (or reuses) the artifact of one workload for one mode.

    A rebuild is skipped when the recorded source hash matches, unless
    ``force`` is set.
    """
    workload = parse_workload(workload)
    mode = parse_mode(mode)
    tc = toolchain or ToolchainConfig()
    missing = probe_toolchain(mode, tc)
    if missing:
        raise BuildError("toolchain-missing", f"{mode.value} needs {', '.join(missing)}")

    path = artifact_path(out_dir, workload, mode)
    path.parent.mkdir(parents=True, exist_ok=True)
    digest = _source_hash(workload, mode, tc)
    stamp = path.with_name(path.name + ".json")
    if not force and path.exists() and stamp.exists():
        prev = ArtifactInfo.from_json(json.loads(stamp.read_text()))
        if prev.source_hash == digest and prev.artifact_bytes == path.stat().st_size:
            return prev

    module_path = None
    engine = None
    if mode is RuntimeMode.NATIVE:
        _compile_native(workload, path, tc)
    elif mode is RuntimeMode.INTERPRETED:
        _compile_wasm(workload, path, tc)
        engine = tc.interpreted_engine
    else:
        from faasbench.runtime.engines import precompile

        wasm = path.with_suffix(".wasm")
        _compile_wasm(workload, wasm, tc)
        try:
            precompile(wasm, path)
        except Exception as exc:
            raise BuildError("compile-failure", f"AoT precompile of {wasm}", str(exc)) from exc
        module_path = str(wasm)
        engine = tc.aot_engine

    info = ArtifactInfo(
        workload=workload,
        mode=mode,
        path=str(path),
        artifact_bytes=path.stat().st_size,
        base_layer_bytes=tc.base_layer_bytes if mode is RuntimeMode.NATIVE else 0,
        engine=engine,
        module_path=module_path,
        source_hash=digest,
    )
    tmp = stamp.with_suffix(".tmp")
    tmp.write_text(json.dumps(info.to_json(), indent=2))
    os.replace(tmp, stamp)
    return info

"""JSONL results files.

Every file opens with one meta line; each further line is a typed object
(``record``, ``sample``, ``artifact`` or ``replay``). Lines are written and
flushed one at a time, so an interrupted run still leaves a parseable file.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import psutil

from faasbench.observer import ExecutionRecord
from faasbench.runtime.build import ArtifactInfo
from faasbench.telemetry import TelemetrySample

SCHEMA_VERSION = 1


class StoreError(IOError):
    def __init__(self, code: str, message: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{code}{where}: {message}")
        self.code = code
        self.line = line


def _cpu_model() -> str:
    try:
        with open("/proc/cpuinfo") as fh:
            for ln in fh:
                if ln.startswith("model name"):
                    return ln.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine()


def host_descriptor() -> dict:
    return {
        "cpu_model": _cpu_model(),
        "cores": psutil.cpu_count(logical=True) or 0,
        "memory_bytes": psutil.virtual_memory().total,
        "platform": platform.platform(),
    }


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class ExperimentMeta:
    experiment_id: str
    timestamp: float = field(default_factory=time.time)
    host: dict = field(default_factory=dict)
    config_hash: str = ""
    repetitions: int = 0
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> dict:
        return {"type": "meta", **asdict(self)}

    @classmethod
    def from_json(cls, doc: dict) -> ExperimentMeta:
        doc = {k: v for k, v in doc.items() if k != "type"}
        return cls(**doc)


@dataclass
class ReplaySummary:
    """Outcome of one trace replay (one point of a throughput curve)."""

    workload: str
    mode: str
    level: int
    completed: int
    entries: int
    makespan_ns: int
    throughput_rps: float
    experiment_id: str = ""

    def to_json(self) -> dict:
        return asdict(self)


Item = ExecutionRecord | TelemetrySample | ArtifactInfo | ReplaySummary


def _encode(item: Item) -> dict:
    if isinstance(item, ExecutionRecord):
        return {"type": "record", **item.to_json()}
    if isinstance(item, TelemetrySample):
        return {"type": "sample", **asdict(item)}
    if isinstance(item, ArtifactInfo):
        return {"type": "artifact", **item.to_json()}
    if isinstance(item, ReplaySummary):
        return {"type": "replay", **item.to_json()}
    raise TypeError(f"cannot persist {type(item).__name__}")


_DECODERS = {
    "record": ExecutionRecord.from_json,
    "sample": lambda d: TelemetrySample(**d),
    "artifact": ArtifactInfo.from_json,
    "replay": lambda d: ReplaySummary(**d),
}


@dataclass
class ResultsFile:
    meta: ExperimentMeta
    records: list[ExecutionRecord] = field(default_factory=list)
    samples: list[TelemetrySample] = field(default_factory=list)
    artifacts: list[ArtifactInfo] = field(default_factory=list)
    replays: list[ReplaySummary] = field(default_factory=list)

    def extend(self, other: ResultsFile) -> None:
        self.records += other.records
        self.samples += other.samples
        self.artifacts += other.artifacts
        self.replays += other.replays


class ResultsWriter:
    """Append-only writer; the meta line is written on open."""

    def __init__(self, path: str | Path, meta: ExperimentMeta):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")
        self.count = 0
        self._line(meta.to_json())

    def _line(self, doc: dict) -> None:
        self._fh.write(json.dumps(doc, sort_keys=True) + "\n")
        self._fh.flush()

    def write(self, item: Item) -> None:
        self._line(_encode(item))
        self.count += 1

    def write_all(self, items: Iterable[Item]) -> None:
        for item in items:
            self.write(item)

    def close(self) -> None:
        if not self._fh.closed:
            os.fsync(self._fh.fileno())
            self._fh.close()

    def __enter__(self) -> ResultsWriter:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def persist(items: Iterable[Item], path: str | Path, meta: ExperimentMeta | None = None) -> int:
    """Writes ``items`` after a meta line; returns the number of items."""
    meta = meta or ExperimentMeta(experiment_id=Path(path).stem, host=host_descriptor())
    try:
        with ResultsWriter(path, meta) as w:
            w.write_all(items)
            return w.count
    except OSError as exc:
        raise StoreError("io", str(exc)) from exc


def load(path: str | Path) -> ResultsFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise StoreError("io", str(exc)) from exc
    result: ResultsFile | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            kind = doc.pop("type")
        except (ValueError, KeyError, AttributeError, TypeError) as exc:
            raise StoreError("corrupt-line", f"{path}: {exc}", lineno) from None
        if result is None:
            if kind != "meta":
                raise StoreError("missing-meta", f"{path}: first line is {kind!r}", lineno)
            if doc.get("schema_version") != SCHEMA_VERSION:
                raise StoreError(
                    "schema-version",
                    f"{path}: schema_version {doc.get('schema_version')!r}, expected {SCHEMA_VERSION}",
                    lineno,
                )
            result = ResultsFile(meta=ExperimentMeta.from_json(doc))
            continue
        if kind == "meta":
            raise StoreError("corrupt-line", f"{path}: second meta line", lineno)
        decode = _DECODERS.get(kind)
        if decode is None:
            raise StoreError("corrupt-line", f"{path}: unknown line type {kind!r}", lineno)
        try:
            item = decode(doc)
        except (TypeError, ValueError, KeyError) as exc:
            raise StoreError("corrupt-line", f"{path}: {exc}", lineno) from None
        getattr(result, {"record": "records", "sample": "samples", "artifact": "artifacts", "replay": "replays"}[kind]).append(item)
    if result is None:
        raise StoreError("missing-meta", f"{path}: empty file")
    return result


def load_dir(results_dir: str | Path) -> ResultsFile:
    """Merges every ``*.jsonl`` below ``results_dir`` in path order."""
    files = sorted(Path(results_dir).rglob("*.jsonl"))
    if not files:
        raise StoreError("missing-results", f"no results under {results_dir}")
    merged = load(files[0])
    for f in files[1:]:
        merged.extend(load(f))
    return merged

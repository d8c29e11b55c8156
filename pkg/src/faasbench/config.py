"""Experiment configuration: one JSON document drives every command."""

from __future__ import annotations

import itertools
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from faasbench.baas import BaasConfig, BaasError
from faasbench.runtime.build import RuntimeMode, ToolchainConfig, parse_mode
from faasbench.traces import RPS_LADDER, TraceError, TracePattern
from faasbench.workloads import GROUPS, WorkloadId, parse_workload

START_KINDS = ("cold", "warm")
OUT_ENV = "LUMOS_OUT"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ThroughputConfig:
    """Closed-loop concurrency sweep run once per (workload, mode)."""

    workloads: tuple[str, ...] = ("fibonacci",)
    group: int = 1
    levels: tuple[int, ...] = RPS_LADDER
    requests_per_level: int = 200
    max_instances: int = 16

    def patterns(self) -> list[TracePattern]:
        return [TracePattern.concurrent(lv, max(self.requests_per_level, lv)) for lv in self.levels]


@dataclass(frozen=True)
class MatrixCell:
    workload: WorkloadId
    mode: RuntimeMode
    group: int
    start_kind: str


@dataclass
class ExperimentConfig:
    experiment_id: str = "experiment"
    workloads: list[str] = field(default_factory=lambda: [w.value for w in WorkloadId])
    groups: list[int] = field(default_factory=lambda: [1])
    modes: list[str] = field(default_factory=lambda: [m.value for m in RuntimeMode])
    start_kinds: list[str] = field(default_factory=lambda: list(START_KINDS))
    repetitions: int = 10
    seed: int = 0
    out: str = "results"
    use_storage: bool = True
    transport: str = "stdio"
    telemetry_interval_ms: float = 50.0
    error_threshold: float = 0.05
    baas: dict = field(default_factory=dict)
    throughput: dict | None = None
    toolchain: dict = field(default_factory=dict)

    # -- parsing -----------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        def check(cond: bool, msg: str) -> None:
            if not cond:
                raise ConfigError(msg)

        for name in ("workloads", "groups", "modes", "start_kinds"):
            v = getattr(self, name)
            check(isinstance(v, list) and len(v) > 0, f"{name} must be a nonempty list")
        try:
            [parse_workload(w) for w in self.workloads]
            [parse_mode(m) for m in self.modes]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        check(all(g in GROUPS for g in self.groups), f"groups must be drawn from {list(GROUPS)}")
        check(all(k in START_KINDS for k in self.start_kinds), f"start_kinds must be drawn from {list(START_KINDS)}")
        check(isinstance(self.repetitions, int) and self.repetitions >= 1, "repetitions must be an integer >= 1")
        check(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed must be an unsigned 64-bit integer")
        check(self.transport in ("stdio", "socket"), "transport must be 'stdio' or 'socket'")
        check(self.telemetry_interval_ms >= 0, "telemetry_interval_ms must be >= 0")
        check(0 <= self.error_threshold <= 1, "error_threshold must lie in [0, 1]")
        check(bool(self.experiment_id) and "/" not in self.experiment_id, "experiment_id must be a plain name")
        try:
            self.baas_config()
        except BaasError as exc:
            raise ConfigError(f"baas: {exc}") from None
        try:
            self.toolchain_config()
        except TypeError as exc:
            raise ConfigError(f"toolchain: {exc}") from None
        if self.throughput is not None:
            try:
                tp = self.throughput_config()
                [parse_workload(w) for w in tp.workloads]
                tp.patterns()
            except (TypeError, ValueError, TraceError) as exc:
                raise ConfigError(f"throughput: {exc}") from None
            check(tp.group in GROUPS, "throughput.group must be 1, 2 or 3")
            check(tp.max_instances >= 1, "throughput.max_instances must be >= 1")

    # -- derived -----------------------------------------------------

    def baas_config(self) -> BaasConfig:
        return BaasConfig.from_dict(self.baas)

    def toolchain_config(self) -> ToolchainConfig:
        return ToolchainConfig.from_dict(self.toolchain)

    def throughput_config(self) -> ThroughputConfig | None:
        if self.throughput is None:
            return None
        doc = dict(self.throughput)
        for k in ("workloads", "levels"):
            if k in doc:
                doc[k] = tuple(doc[k])
        return ThroughputConfig(**doc)

    def matrix(self) -> list[MatrixCell]:
        """Run matrix in execution order (a pure function of the config)."""
        return [
            MatrixCell(parse_workload(w), parse_mode(m), g, k)
            for w, m, g, k in itertools.product(self.workloads, self.modes, self.groups, self.start_kinds)
        ]


def resolve_out(cli_out: str | None, config: ExperimentConfig) -> Path:
    """``--out`` beats ``$LUMOS_OUT`` beats the config's ``out``."""
    return Path(cli_out or os.environ.get(OUT_ENV) or config.out)

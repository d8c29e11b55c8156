"""Command-line entry point: build, serve-baas, bench, report.

Exit codes: 0 success, 1 partial failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from faasbench.analysis.report import replay_experiment_id, write_report
from faasbench.analysis.store import (
    ExperimentMeta,
    ReplaySummary,
    ResultsWriter,
    StoreError,
    config_hash,
    host_descriptor,
    load_dir,
)
from faasbench.baas import BaasClient, BaasError, BaasServer
from faasbench.config import ConfigError, ExperimentConfig, MatrixCell, resolve_out
from faasbench.observer import error_rate
from faasbench.runtime.adapter import InstanceError, RuntimeAdapter, failed_record
from faasbench.runtime.build import ArtifactInfo, BuildError, build_artifact
from faasbench.traces import InstancePool, generate_trace, replay
from faasbench.workloads import StorageRef, WorkloadId, WorkloadRequest, generate_payload, make_request

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
log = logging.getLogger("faasbench")


# -- helpers ---------------------------------------------------------


def _parse_hostport(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"--baas expects host:port, got {value!r}")
    return host or "127.0.0.1", int(port)


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.seed = args.seed
    return cfg


def _artifacts_dir(out: Path) -> Path:
    return out / "artifacts"


def _results_dir(out: Path, cfg: ExperimentConfig) -> Path:
    return out / cfg.experiment_id / "results"


# -- build -----------------------------------------------------------


def cmd_build(cfg: ExperimentConfig, out: Path, force: bool = False, dry_run: bool = False) -> int:
    pairs = [(w, m) for w in dict.fromkeys(cfg.workloads) for m in dict.fromkeys(cfg.modes)]
    if dry_run:
        for w, m in pairs:
            print(f"build {w} {m}")
        return EXIT_OK
    tc = cfg.toolchain_config()
    built: list[ArtifactInfo] = []
    failures = []
    for w, m in pairs:
        try:
            info = build_artifact(w, m, _artifacts_dir(out), tc, force=force)
            built.append(info)
            print(f"built {w:<20} {m:<22} {info.artifact_bytes:>9} B  image {info.image_size} B")
        except BuildError as exc:
            failures.append({"workload": w, "mode": m, "kind": exc.kind, "message": str(exc)})
            print(f"FAILED {w} {m}: {exc.kind}", file=sys.stderr)
    manifest = {
        "artifacts": [a.to_json() for a in built],
        "failures": failures,
    }
    path = _artifacts_dir(out) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"manifest: {path} ({len(built)} artifacts, {len(failures)} failures)")
    return EXIT_PARTIAL if failures else EXIT_OK


# -- serve-baas ------------------------------------------------------


def cmd_serve_baas(cfg: ExperimentConfig, baas: str | None) -> int:
    bcfg = cfg.baas_config()
    if baas:
        host, port = _parse_hostport(baas)
        bcfg = replace(bcfg, host=host, port=port).validate()
    server = BaasServer(bcfg).start()
    print(f"baas listening on {server.host}:{server.port}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


# -- bench -----------------------------------------------------------


class _Storage:
    """Seeds payloads into the key-value service and builds storage refs."""

    def __init__(self, host: str, port: int, prefix: str):
        self.host, self.port, self.prefix = host, port, prefix
        self._seeded: set[str] = set()

    def ref(self, workload: WorkloadId, group: int, seed: int) -> StorageRef:
        key = f"{self.prefix}/{workload.value}/g{group}/s{seed}"
        if workload.consumes_input and key not in self._seeded:
            with BaasClient(self.host, self.port) as c:
                c.put(key, generate_payload(workload, group, seed))
            self._seeded.add(key)
        return StorageRef(self.host, self.port, key)


def _request(cfg: ExperimentConfig, w: WorkloadId, group: int, storage: _Storage | None) -> WorkloadRequest:
    ref = None
    if storage is not None and cfg.use_storage and (w.consumes_input or w.generator):
        ref = storage.ref(w, group, cfg.seed)
    return make_request(w, group, seed=cfg.seed, storage=ref)


def _plan(cfg: ExperimentConfig) -> list[str]:
    lines = [f"experiment {cfg.experiment_id} seed={cfg.seed} repetitions={cfg.repetitions}"]
    for cell in cfg.matrix():
        lines.append(
            f"run {cell.workload.value} {cell.mode.value} group={cell.group} {cell.start_kind} x{cfg.repetitions}"
        )
    tp = cfg.throughput_config()
    if tp is not None:
        for w in tp.workloads:
            for m in cfg.modes:
                lines.append(f"replay {w} {m} group={tp.group} levels={list(tp.levels)} max_instances={tp.max_instances}")
    return lines


def _run_cell(adapter: RuntimeAdapter, artifact: ArtifactInfo, cell: MatrixCell, request: WorkloadRequest,
              cfg: ExperimentConfig, writer: ResultsWriter) -> list:
    records = []
    if cell.start_kind == "cold":
        for i in range(cfg.repetitions):
            t0 = time.monotonic_ns()
            try:
                rec = adapter.measure_cold(artifact, request, cfg.experiment_id, i)
            except InstanceError as exc:
                rec = failed_record(artifact, request, "cold", t0, exc.code, cfg.experiment_id, i)
            records.append(rec)
            writer.write(rec)
        return records
    handle = None
    try:
        handle = adapter.spawn_instance(artifact)
        adapter.invoke(handle, request)
    except InstanceError as exc:
        if handle is not None:
            adapter.shutdown(handle)
        for i in range(cfg.repetitions):
            rec = failed_record(artifact, request, "warm", time.monotonic_ns(), exc.code, cfg.experiment_id, i)
            records.append(rec)
            writer.write(rec)
        return records
    try:
        for i in range(cfg.repetitions):
            t0 = time.monotonic_ns()
            try:
                rec = adapter.warm_record(handle, request, cfg.experiment_id, i)
            except InstanceError as exc:
                rec = failed_record(artifact, request, "warm", t0, exc.code, cfg.experiment_id, i)
            records.append(rec)
            writer.write(rec)
    finally:
        adapter.shutdown(handle)
    return records


def _run_throughput(adapter: RuntimeAdapter, artifact: ArtifactInfo, request: WorkloadRequest,
                    cfg: ExperimentConfig, writer: ResultsWriter) -> list:
    tp = cfg.throughput_config()
    records = []
    for pattern in tp.patterns():
        exp = replay_experiment_id(cfg.experiment_id, pattern.level)
        trace = generate_trace(pattern, request, cfg.seed)
        with InstancePool(adapter, artifact, exp, max_instances=tp.max_instances) as pool:
            try:
                pool.prewarm(min(pattern.level, tp.max_instances), request)
            except InstanceError as exc:
                log.warning("prewarm failed for %s: %s", artifact.path, exc)
            result = replay(trace, pool, "warm")
        for rec in result.records:
            rec.experiment_id = exp
            writer.write(rec)
        records += result.records
        writer.write(ReplaySummary(
            workload=artifact.workload.value, mode=artifact.mode.value, level=pattern.level,
            completed=result.completed, entries=len(trace), makespan_ns=result.makespan_ns,
            throughput_rps=result.throughput_rps, experiment_id=exp,
        ))
        print(f"  replay c={pattern.level:<4} {result.throughput_rps:10.1f} rps  "
              f"{result.completed}/{len(trace)} ok", flush=True)
    return records


def cmd_bench(cfg: ExperimentConfig, out: Path, baas: str | None = None, dry_run: bool = False,
              force: bool = False) -> int:
    plan = _plan(cfg)
    for line in plan:
        log.info(line)
    if dry_run:
        print("\n".join(plan))
        return EXIT_OK

    tc = cfg.toolchain_config()
    results = _results_dir(out, cfg)
    results.mkdir(parents=True, exist_ok=True)
    (results.parent / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    meta_base = ExperimentMeta(
        experiment_id=cfg.experiment_id, host=host_descriptor(), config_hash=config_hash(cfg.to_dict()),
        repetitions=cfg.repetitions,
    )

    server = None
    if baas:
        host, port = _parse_hostport(baas)
    else:
        server = BaasServer(replace(cfg.baas_config(), port=0)).start()
        host, port = server.host, server.port
    storage = _Storage(host, port, cfg.experiment_id)
    tp = cfg.throughput_config()
    all_records = []
    failed_cells = 0
    try:
        with RuntimeAdapter(tc, cfg.transport, telemetry_interval_ms=cfg.telemetry_interval_ms or None) as adapter:
            for w in dict.fromkeys(cfg.workloads):
                wid = WorkloadId(w)
                for m in dict.fromkeys(cfg.modes):
                    try:
                        artifact = build_artifact(wid, m, _artifacts_dir(out), tc, force=force)
                    except BuildError as exc:
                        print(f"FAILED build {w} {m}: {exc.kind}", file=sys.stderr)
                        failed_cells += 1
                        continue
                    path = results / wid.value / f"{m}.jsonl"
                    with ResultsWriter(path, replace(meta_base, timestamp=time.time())) as writer:
                        writer.write(artifact)
                        for cell in (c for c in cfg.matrix() if c.workload is wid and c.mode.value == m):
                            try:
                                request = _request(cfg, wid, cell.group, storage)
                            except (BaasError, OSError) as exc:
                                print(f"FAILED storage seeding {w}: {exc}", file=sys.stderr)
                                failed_cells += 1
                                continue
                            recs = _run_cell(adapter, artifact, cell, request, cfg, writer)
                            writer.write_all(adapter.telemetry_sink)
                            adapter.telemetry_sink.clear()
                            ok = sum(r.success for r in recs)
                            print(f"{w:<20} {m:<22} g{cell.group} {cell.start_kind:<4} {ok}/{len(recs)} ok", flush=True)
                            all_records += recs
                        if tp is not None and w in tp.workloads:
                            request = _request(cfg, wid, tp.group, storage)
                            all_records += _run_throughput(adapter, artifact, request, cfg, writer)
                            writer.write_all(adapter.telemetry_sink)
                            adapter.telemetry_sink.clear()
    finally:
        if server is not None:
            server.stop()

    rate = error_rate(all_records) if all_records else 1.0
    print(f"records: {len(all_records)}  error rate: {rate:.4f}  results: {results}")
    if failed_cells or rate > cfg.error_threshold:
        return EXIT_PARTIAL
    return EXIT_OK


# -- report ----------------------------------------------------------


def cmd_report(cfg: ExperimentConfig, out: Path, results: str | None = None) -> int:
    src = Path(results) if results else _results_dir(out, cfg)
    dest = src.parent if src.name == "results" else out / cfg.experiment_id
    try:
        data = load_dir(src)
    except StoreError as exc:
        print(f"report: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    for p in write_report(data, dest):
        print(p)
    return EXIT_OK


# -- entry point -----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment configuration (JSON)")
    common.add_argument("--out", help="output directory (overrides $LUMOS_OUT and the config)")
    common.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    common.add_argument("--dry-run", action="store_true", help="print the plan and execute nothing")
    common.add_argument("--force", action="store_true", help="rebuild artifacts even when cached")
    common.add_argument("--baas", metavar="HOST:PORT", help="use (or, for serve-baas, listen on) this address")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="faasbench", description="Serverless runtime benchmarking harness")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="build the workload x mode artifact matrix")
    sub.add_parser("serve-baas", parents=[common], help="run the key-value service in the foreground")
    sub.add_parser("bench", parents=[common], help="run the experiment matrix")
    rp = sub.add_parser("report", parents=[common], help="aggregate results into report files")
    rp.add_argument("results", nargs="?", help="results directory (default: <out>/<experiment_id>/results)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load_config(args)
        out = resolve_out(args.out, cfg)
        if args.command == "build":
            return cmd_build(cfg, out, force=args.force, dry_run=args.dry_run)
        if args.command == "serve-baas":
            if args.dry_run:
                print(f"serve-baas {args.baas or f'{cfg.baas_config().host}:{cfg.baas_config().port}'}")
                return EXIT_OK
            return cmd_serve_baas(cfg, args.baas)
        if args.command == "bench":
            return cmd_bench(cfg, out, baas=args.baas, dry_run=args.dry_run, force=args.force)
        if args.dry_run:
            print(f"report {args.results or _results_dir(out, cfg)}")
            return EXIT_OK
        return cmd_report(cfg, out, args.results)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BaasError as exc:
        print(f"baas error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if exc.code == "invalid-config" else EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())


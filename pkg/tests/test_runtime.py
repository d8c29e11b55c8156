from __future__ import annotations

import os
import stat
import time

import pytest

from conftest import ALL_MODES
from faasbench.observer import derive_metrics, is_valid
from faasbench.runtime.adapter import InstanceError, RuntimeAdapter
from faasbench.runtime.build import (
    ArtifactInfo,
    BuildError,
    RuntimeMode,
    ToolchainConfig,
    artifact_path,
    build_artifact,
    parse_mode,
)
from faasbench.runtime.engines import ModuleRunner
from faasbench.workloads import WorkloadId, WorkloadRequest, WorkloadResponse, make_request

W = WorkloadId
SHUTDOWN_BUDGET_S = 5.0


def fake_artifact(tmp_path, script: str) -> ArtifactInfo:
    path = tmp_path / "fake"
    path.write_text("#!/bin/sh\n" + script + "\n")
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return ArtifactInfo(W.FIBONACCI, RuntimeMode.NATIVE, str(path), path.stat().st_size)


# -- build -----------------------------------------------------------


def test_mode_names():
    assert [m.value for m in RuntimeMode] == ["native-process", "bytecode-interpreted", "bytecode-aot"]
    with pytest.raises(ValueError):
        parse_mode("docker")


@pytest.mark.parametrize("mode", ALL_MODES)
def test_build_layout_and_cache(mode, build, out_root):
    info = build(W.PRIME_NUMBERS, mode)
    assert info.path == str(artifact_path(out_root / "artifacts", W.PRIME_NUMBERS, mode))
    assert os.path.getsize(info.path) == info.artifact_bytes
    mtime = os.stat(info.path).st_mtime_ns
    again = build_artifact(W.PRIME_NUMBERS, mode, out_root / "artifacts")
    assert again.source_hash == info.source_hash
    assert os.stat(info.path).st_mtime_ns == mtime  # cached: nothing rewritten
    if mode is RuntimeMode.NATIVE:
        assert info.image_size == info.artifact_bytes + info.base_layer_bytes
    else:
        assert info.image_size == info.artifact_bytes


def test_missing_toolchain_is_reported(tmp_path):
    tc = ToolchainConfig(native_cc="no-such-compiler-xyz")
    with pytest.raises(BuildError) as exc:
        build_artifact(W.FIBONACCI, RuntimeMode.NATIVE, tmp_path, tc)
    assert exc.value.kind == "toolchain-missing"


def test_compile_failure_is_reported(tmp_path, have_gcc):
    tc = ToolchainConfig(cflags=("-O2", "--no-such-flag-xyz"))
    with pytest.raises(BuildError) as exc:
        build_artifact(W.FIBONACCI, RuntimeMode.NATIVE, tmp_path, tc)
    assert exc.value.kind == "compile-failure"


def test_artifact_info_json_roundtrip(build):
    info = build(W.FIBONACCI, RuntimeMode.NATIVE)
    assert ArtifactInfo.from_json(info.to_json()) == info


@pytest.mark.parametrize("engine_mode", [RuntimeMode.INTERPRETED, RuntimeMode.AOT])
def test_in_process_module_runner(engine_mode, build):
    info = build(W.FIBONACCI, engine_mode)
    engine = "wasm3" if engine_mode is RuntimeMode.INTERPRETED else "wasmtime-aot"
    runner = ModuleRunner(engine, info.path)
    raw = runner.handle(WorkloadRequest(W.FIBONACCI, params={"n": 20}).encode())
    assert WorkloadResponse.decode(raw).result == "6765"


# -- lifecycle -------------------------------------------------------


@pytest.mark.parametrize("transport", ["stdio", "socket"])
@pytest.mark.parametrize("mode", ALL_MODES)
def test_spawn_invoke_shutdown(mode, transport, build):
    info = build(W.FIBONACCI, mode)
    with RuntimeAdapter(transport=transport) as ad:
        h = ad.spawn_instance(info)
        assert h.alive and h.ready_t >= h.spawn_t
        assert ad.live_pids() == [h.pid]
        inv = ad.invoke(h, WorkloadRequest(W.FIBONACCI, params={"n": 30}))
        assert inv.response.result == "832040"
        assert inv.response.instance_id == h.instance_id
        assert ad.shutdown(h) == 0
        assert ad.shutdown(h) == 0  # idempotent
        assert not h.alive and ad.live_pids() == []
        with pytest.raises(InstanceError) as exc:
            ad.invoke(h, WorkloadRequest(W.FIBONACCI))
        assert exc.value.code == "io-error"


def test_missing_artifact(tmp_path, adapter):
    info = ArtifactInfo(W.FIBONACCI, RuntimeMode.NATIVE, str(tmp_path / "nope"), 0)
    with pytest.raises(InstanceError) as exc:
        adapter.spawn_instance(info)
    assert exc.value.code == "spawn-failure"


def test_readiness_timeout_kills_child(tmp_path):
    info = fake_artifact(tmp_path, "exec sleep 30")
    ad = RuntimeAdapter(ready_timeout_s=0.3)
    t0 = time.monotonic()
    with pytest.raises(InstanceError) as exc:
        ad.spawn_instance(info)
    assert exc.value.code == "readiness-timeout"
    assert time.monotonic() - t0 < SHUTDOWN_BUDGET_S
    assert ad.live_pids() == []


def test_child_exiting_before_ready(tmp_path, adapter):
    info = fake_artifact(tmp_path, "echo boom >&2; exit 3")
    with pytest.raises(InstanceError) as exc:
        adapter.spawn_instance(info)
    assert exc.value.code == "spawn-failure" and "boom" in str(exc.value)


def test_wrong_readiness_line(tmp_path, adapter):
    info = fake_artifact(tmp_path, "echo READY somebody-else; sleep 30")
    with pytest.raises(InstanceError) as exc:
        adapter.spawn_instance(info)
    assert exc.value.code == "spawn-failure"


def test_crash_mid_invocation(tmp_path, adapter):
    info = fake_artifact(tmp_path, 'echo "READY $LUMOS_INSTANCE_ID"; head -c 4 >/dev/null; exit 1')
    h = adapter.spawn_instance(info)
    with pytest.raises(InstanceError) as exc:
        adapter.invoke(h, WorkloadRequest(W.FIBONACCI))
    assert exc.value.code == "io-error"


def test_response_timeout(tmp_path):
    info = fake_artifact(tmp_path, 'echo "READY $LUMOS_INSTANCE_ID"; exec sleep 30')
    with RuntimeAdapter(response_timeout_s=0.3) as ad:
        h = ad.spawn_instance(info)
        with pytest.raises(InstanceError) as exc:
            ad.invoke(h, WorkloadRequest(W.FIBONACCI))
        assert exc.value.code == "response-timeout"


@pytest.mark.parametrize("mode", ALL_MODES)
def test_cold_and_warm_records(mode, build, adapter):
    info = build(W.FIBONACCI, mode)
    req = make_request(W.FIBONACCI, 1)
    cold = adapter.measure_cold(info, req, "exp", 0)
    warm = adapter.measure_warm(info, req, warmup_count=2, experiment_id="exp", run_index=1)
    for rec in (cold, warm):
        assert rec.success and is_valid(rec)
        assert rec.workload == "fibonacci" and rec.mode == mode.value
    assert cold.start_kind == "cold" and cold.t_spawn is not None
    assert warm.start_kind == "warm" and warm.t_spawn is None and warm.t_ready is None
    assert cold.output_digest == warm.output_digest
    assert derive_metrics(cold).cold_start_ns > 0 and derive_metrics(warm).cold_start_ns == 0
    assert warm.artifact_load_ns is None
    if mode is RuntimeMode.NATIVE:
        assert cold.artifact_load_ns is None  # exec-time loading is not separable from spawn
    else:
        assert 0 < cold.artifact_load_ns <= derive_metrics(cold).cold_start_ns


def test_warm_record_requires_prior_invocation(build, adapter):
    h = adapter.spawn_instance(build(W.FIBONACCI, RuntimeMode.NATIVE))
    with pytest.raises(ValueError):
        adapter.warm_record(h, make_request(W.FIBONACCI, 1))


def test_telemetry_attached_on_shutdown(build):
    info = build(W.PRIME_NUMBERS, RuntimeMode.NATIVE)
    with RuntimeAdapter(telemetry_interval_ms=10) as ad:
        h = ad.spawn_instance(info)
        ad.invoke(h, make_request(W.PRIME_NUMBERS, 3))
        ad.shutdown(h)
        assert len(h.samples) >= 2
        assert {s.instance_id for s in ad.telemetry_sink} == {h.instance_id}
        cpu = [s.cpu_time_ns for s in h.samples]
        assert cpu == sorted(cpu)


def test_environment_passthrough(tmp_path, adapter):
    flag = tmp_path / "flag"
    info = fake_artifact(tmp_path, f'echo "$EXTRA_FLAG" > {flag}; echo "READY $LUMOS_INSTANCE_ID"; exec sleep 30')
    h = adapter.spawn_instance(info, env={"EXTRA_FLAG": "on"})
    assert flag.read_text().strip() == "on"
    adapter.shutdown(h)

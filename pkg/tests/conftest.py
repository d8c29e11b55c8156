from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from faasbench.baas import BaasConfig, BaasServer
from faasbench.runtime.adapter import RuntimeAdapter
from faasbench.runtime.build import RuntimeMode, ToolchainConfig, build_artifact, probe_toolchain
from faasbench.workloads import WorkloadId

ALL_MODES = list(RuntimeMode)
ALL_WORKLOADS = list(WorkloadId)

# Lines printed by the acceptance suite in the terminal summary.
ACCEPTANCE_LINES: dict[int, str] = {}


def toolchain_missing(mode: RuntimeMode) -> list[str]:
    return probe_toolchain(mode, ToolchainConfig())


def pytest_collection_modifyitems(config, items):
    missing = {m: toolchain_missing(m) for m in RuntimeMode}
    for item in items:
        modes = item.callspec.params.get("mode") if hasattr(item, "callspec") else None
        if isinstance(modes, RuntimeMode) and missing[modes]:
            item.add_marker(pytest.mark.skip(reason=f"{modes.value} toolchain missing: {missing[modes]}"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def out_root(tmp_path_factory) -> Path:
    """Session output root; artifacts live in ``<root>/artifacts`` (the CLI layout)."""
    return tmp_path_factory.mktemp("faasbench")


@pytest.fixture(scope="session")
def build(out_root):
    """``build(workload, mode)`` compiles once per session."""
    cache = {}

    def _build(workload, mode):
        key = (WorkloadId(workload), RuntimeMode(mode))
        if key not in cache:
            missing = toolchain_missing(key[1])
            if missing:
                pytest.skip(f"{key[1].value} toolchain missing: {missing}")
            cache[key] = build_artifact(key[0], key[1], out_root / "artifacts")
        return cache[key]

    return _build


@pytest.fixture
def adapter():
    ad = RuntimeAdapter()
    yield ad
    ad.close_all()
    assert ad.live_pids() == []


@pytest.fixture(scope="session")
def session_adapter():
    ad = RuntimeAdapter()
    yield ad
    ad.close_all()


@pytest.fixture(scope="session")
def instance(build, session_adapter):
    """``instance(workload, mode)``: a long-lived, already-spawned instance."""
    handles = {}

    def _get(workload, mode=RuntimeMode.NATIVE):
        key = (WorkloadId(workload), RuntimeMode(mode))
        h = handles.get(key)
        if h is None or not h.alive:
            h = handles[key] = session_adapter.spawn_instance(build(*key))
        return h

    return _get


@pytest.fixture(scope="session")
def baas_server():
    server = BaasServer(BaasConfig()).start()
    yield server
    server.stop()


@pytest.fixture
def baas(baas_server):
    baas_server.configure(BaasConfig(port=baas_server.port))
    yield baas_server
    baas_server.configure(BaasConfig(port=baas_server.port))


@pytest.fixture
def have_gcc():
    if shutil.which("gcc") is None:
        pytest.skip("gcc missing")

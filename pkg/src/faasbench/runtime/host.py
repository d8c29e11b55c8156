"""Engine host process for bytecode instances.

    python -m faasbench.runtime.host --engine wasm3 path/to/function.wasm

The module's own serve loop runs inside the engine; this process only
provides the channel, clock, environment and sockets it imports.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from faasbench.runtime.engines import ENGINES, Channel, EngineError, HostImports, open_engine
from faasbench.workloads.protocol import LOAD_TAG


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="faasbench-host")
    ap.add_argument("--engine", required=True, choices=sorted(ENGINES))
    ap.add_argument("module")
    args = ap.parse_args(argv)

    try:
        channel = Channel(os.environ.get("LUMOS_TRANSPORT", "stdio"))
        host = HostImports(channel=channel)
        t0 = time.monotonic_ns()
        engine = open_engine(args.engine, args.module, host)
        # the adapter picks this up after READY; stdout belongs to the module
        print(f"{LOAD_TAG}{time.monotonic_ns() - t0}", file=sys.stderr, flush=True)
        return engine.call("serve")
    except (EngineError, OSError) as exc:
        print(f"faasbench-host: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

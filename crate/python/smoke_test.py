"""Smoke test of the morlicz_py extension.

Build the extension first:

    cargo build -p morlicz-py --release

then run `python3 python/smoke_test.py`. The script looks for the shared
library under target/release or target/debug and imports it as morlicz_py.
"""

import importlib.util
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_extension():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libmorlicz_py.so"
        if lib.exists():
            break
    else:
        sys.exit("libmorlicz_py.so not found; run `cargo build -p morlicz-py --release`")
    tmp = pathlib.Path(tempfile.mkdtemp())
    target = tmp / "morlicz_py.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("morlicz_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    m = load_extension()

    assert m.orlicz_eval("power:2", 3.0) == (4.5, 3.0)
    assert m.gtilde("powerp:2", 1.0) == 1.0
    assert abs(m.gtilde("power:2", 1.0, dim=2) - math.pi / 4) < 1e-12

    lhs = m.modular("powerp:2", "parabola", "ig", half_width=1.5, points=1024)
    assert abs(lhs - 16 / 15) < 5e-3, lhs

    sweep = m.bbm_sweep("power:2", "gaussian:1", [0.6, 0.7, 0.8, 0.875, 0.925, 0.95], points=512)
    assert abs(sweep.target - 0.5 * math.sqrt(math.pi / 2)) < 1e-3, sweep
    assert sweep.rel_gap < 0.03, sweep

    sol = m.solve("powerp_half:2")
    assert sol.converged and abs(sol.energy + 1 / 3) < 1e-4, sol
    peak = max(sol.re)
    assert abs(peak - 0.5) < 1e-3, peak

    try:
        m.gtilde("nonsense", 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("bad family accepted")

    failed = [c for c in m.run_selftest(fast=True) if not c[2]]
    assert not failed, failed
    print("smoke test passed")


if __name__ == "__main__":
    main()

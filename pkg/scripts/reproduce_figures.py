"""Run every bundled figure fixture and write its CSV, plot script and manifest.

Usage: python3 scripts/reproduce_figures.py [out_dir]
"""
import sys
import time
from pathlib import Path

from riemstab.config import bundled_fixtures, load_config
from riemstab.runner import run_and_write


def main(out_root="out"):
    out_root = Path(out_root)
    for name, path in bundled_fixtures().items():
        t0 = time.perf_counter()
        result = run_and_write(load_config(path), out_root / name)
        flag = "" if not result.failures else f" ({result.failures} unconverged)"
        print(f"{name:<18} {len(result.rows):5d} rows  {time.perf_counter() - t0:6.2f}s{flag}")


if __name__ == "__main__":
    main(*sys.argv[1:])

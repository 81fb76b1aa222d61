"""Run the bundled experiment configs through the CLI and print one summary line each.

usage: python scripts/run_experiments.py [--out out] [name ...]
Names are config stems from scripts/configs (default: all of them).
"""
import argparse
import subprocess
import sys
from pathlib import Path

CONFIGS = Path(__file__).resolve().parent / "configs"
# config stem -> CLI command
COMMANDS = {
    "unit_series": "series",
    "smooth_pinns_sweep": "eoc-sweep",
    "singular_galerkin_sweep": "eoc-sweep",
    "singular_pinns_sweep": "eoc-sweep",
    "quad_study": "quad-study",
    "circle_pinns": "pinns",
    "circle_rvpinns": "rvpinns",
    "circle_galerkin": "galerkin",
    "standard_continuation": "pinns",
    "standard_cold": "pinns",
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="config stems to run")
    ap.add_argument("--out", type=Path, default=Path("out"), help="root output directory")
    args = ap.parse_args(argv)
    names = args.names or list(COMMANDS)
    unknown = [n for n in names if n not in COMMANDS]
    if unknown:
        ap.error(f"unknown experiment(s) {unknown}; choose from {list(COMMANDS)}")
    status = 0
    for name in names:
        cmd = [sys.executable, "-m", "pfseries.cli", COMMANDS[name], "--config", str(CONFIGS / f"{name}.yaml"),
               "--out", str(args.out / name)]
        print(f"== {name}", flush=True)
        rc = subprocess.call(cmd)
        if rc:
            print(f"   exited with status {rc}", flush=True)
            status = rc
    return status


if __name__ == "__main__":
    sys.exit(main())

"""Standard map: alpha-continuation against a cold start with the same total iteration budget.

usage: python scripts/continuation_vs_cold.py [--config scripts/configs/standard_continuation.yaml]
"""
import argparse
from pathlib import Path

from pfseries import bench
from pfseries.config import load

DEFAULT = Path(__file__).resolve().parent / "configs" / "standard_continuation.yaml"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=DEFAULT)
    args = ap.parse_args(argv)
    cfg = load(args.config)
    cont, cold, budget = bench.continuation_vs_cold(cfg)
    print(f"budget {budget} iterations, alpha = {cfg.problem.alpha}")
    print(f"continuation final loss {cont.final_loss:.6e} (stage initial loss {cont.initial_loss:.6e})")
    print(f"cold start   final loss {cold.final_loss:.6e}")
    print("continuation no worse" if cont.final_loss <= cold.final_loss else "cold start better")


if __name__ == "__main__":
    main()

"""Train one config over several seeds; report loss, error and the quasi-minimizer gap proxy.

usage: python scripts/seed_study.py CONFIG [--seeds 0 1 2] [--kind pinns|rvpinns]
The gap proxy is final loss minus the best final loss among the seeds run.
"""
import argparse
import dataclasses
from pathlib import Path

from pfseries import bench
from pfseries.config import load


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", type=Path)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--kind", choices=("pinns", "rvpinns"))
    ap.add_argument("--out", type=Path, default=Path("out/seed_study"))
    args = ap.parse_args(argv)
    base = load(args.config)
    kind = args.kind or base.method
    rows = []
    for s in args.seeds:
        cfg = dataclasses.replace(base, seed=s, net=dataclasses.replace(base.net, seed=s),
                                  out_dir=str(args.out / f"seed{s}"))
        rep = bench.run_network(cfg, kind)
        rows.append((s, rep.final_loss, rep.l2_error, rep.extra["relative_l2_error"]))
        print(f"seed {s}: loss {rep.final_loss:.6e} l2 {rep.l2_error:.6e} relative {rep.extra['relative_l2_error']:.4f}",
              flush=True)
    gaps = bench.quasi_minimizer_gap_proxy([r[1] for r in rows])
    print("gap proxy (loss minus best loss over these seeds):")
    for (s, *_), g in zip(rows, gaps):
        print(f"  seed {s}: {g:.3e}")


if __name__ == "__main__":
    main()

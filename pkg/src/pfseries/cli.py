"""Command-line entry point: ``pfseries <command> --config run.yaml``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import bench, checks
from .config import ConfigError, ExperimentConfig, from_dict, load
from .galerkin import SingularSystemError
from .optim import OptimizationAborted
from .quadrature import EvaluationError
from .transfer import SeriesBudgetError

COMMANDS = ("series", "galerkin", "pinns", "rvpinns", "eoc-sweep", "quad-study", "check")
EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVARIANT = 2, 3, 4

log = logging.getLogger("pfseries")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pfseries", description=__doc__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="YAML run configuration (defaults are used if omitted)")
    ap.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
    ap.add_argument("--seed", type=int, help="seed for random initialisation (overrides seed and net.seed)")
    ap.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _config(args) -> ExperimentConfig:
    cfg = load(args.config) if args.config else from_dict({})
    if args.out is not None:
        cfg.out_dir = str(args.out)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg.seed = args.seed
        cfg.net = dataclasses.replace(cfg.net, seed=args.seed)
    if args.command in ("pinns", "rvpinns", "galerkin", "series"):
        cfg.method = args.command
    return cfg.validate()


def _summary(rep: bench.RunReport) -> str:
    parts = [rep.command]
    if rep.final_loss is not None:
        parts.append(f"loss={rep.final_loss:.6e}")
    if rep.l2_error is not None:
        parts.append(f"l2_error={rep.l2_error:.6e}")
    if rep.eoc:
        parts.append("eoc=" + ",".join("nan" if e is None else f"{e:.3f}" for e in rep.eoc))
    for key in ("loglog_slope", "relative_l2_error", "residual_norm", "residual_bound", "monotone"):
        if key in rep.extra and rep.extra[key] is not None:
            val = rep.extra[key]
            parts.append(f"{key}={val:.6e}" if isinstance(val, float) else f"{key}={val}")
    return " ".join(parts)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("config error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    with threadpool_limits(limits=args.threads):
        if args.command == "check":
            results = checks.run_all(cfg.seed, progress=print)
            failed = [r for r in results if not r.passed]
            print(f"{len(results) - len(failed)}/{len(results)} checks passed")
            return EXIT_INVARIANT if failed else 0
        try:
            rep = bench.run(cfg, args.command)
        except (OptimizationAborted, EvaluationError, SingularSystemError, SeriesBudgetError,
                FloatingPointError, np.linalg.LinAlgError) as exc:
            print(f"numerical abort: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        except ValueError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    path = bench.write_report(rep, cfg.out_dir)
    print(_summary(rep))
    log.info("report written to %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: ``elastic-fds --mode accuracy --n 800 --rank 10 20 30 40``."""
from __future__ import annotations

import argparse
import logging
import math
import sys

from .bench import MODES, ExperimentConfig, default_rho1_grid, run_experiment, write_csv
from .solver import ConvRefused


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elastic-fds",
                                description="Elastic transmission BEM experiments (CSV output).")
    p.add_argument("--mode", choices=MODES, default="accuracy")
    p.add_argument("--geometry", choices=("circle", "square", "file"), default="circle")
    p.add_argument("--mesh-file", help="mesh for --geometry file")
    p.add_argument("--n", type=int, nargs="+", default=[800], help="number of elements")
    p.add_argument("--formulation", choices=("pmchwt", "bm"), default="pmchwt")
    p.add_argument("--omega", type=float, nargs="+", default=[4.0])
    p.add_argument("--cl0", type=float, default=math.sqrt(3.0))
    p.add_argument("--ct0", type=float, default=1.0)
    p.add_argument("--rho0", type=float, default=1.0)
    p.add_argument("--cl1", type=float, default=3.0)
    p.add_argument("--ct1", type=float, default=1.5)
    p.add_argument("--rho1", type=float, default=2.0)
    p.add_argument("--rho1-values", type=float, nargs="+",
                   help="density sweep for robustness mode (default 0.1, 0.2, ..., 10.0)")
    p.add_argument("--rank", type=int, nargs="+", default=[30], help="leaf skeleton count(s)")
    p.add_argument("--growth", type=float, default=1.15)
    p.add_argument("--leaf-size", type=int, default=100)
    p.add_argument("--radius-factor", type=float, default=1.75)
    p.add_argument("--proxy-points", type=int, default=64)
    p.add_argument("--top-size", type=int, default=None,
                   help="largest system solved densely at the top of the hierarchy")
    p.add_argument("--alpha-im", type=float, default=None,
                   help="Burton-Miller constant i*alpha_im (default i/kT0)")
    p.add_argument("--num-rhs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-conv", action="store_true", help="skip the dense reference solves")
    p.add_argument("--conv-memory-gb", type=float, default=3.0,
                   help="refuse dense solves whose matrix exceeds this size")
    p.add_argument("--out", default="-", help="CSV path ('-' for stdout)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> ExperimentConfig:
    return ExperimentConfig(
        mode=args.mode, geometry=args.geometry, mesh_file=args.mesh_file, n=tuple(args.n),
        formulation=args.formulation, omega=tuple(args.omega), cl0=args.cl0, ct0=args.ct0,
        rho0=args.rho0, cl1=args.cl1, ct1=args.ct1, rho1=args.rho1, rank=tuple(args.rank),
        growth=args.growth, leaf_size=args.leaf_size, radius_factor=args.radius_factor,
        proxy_points=args.proxy_points, alpha_im=args.alpha_im, num_rhs=args.num_rhs,
        seed=args.seed, top_size=args.top_size,
        rho1_values=tuple(args.rho1_values or default_rho1_grid()), conv=not args.no_conv,
        conv_memory_limit=args.conv_memory_gb * 1e9)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        rows = run_experiment(cfg)
    except ConvRefused as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    write_csv(rows, sys.stdout if args.out == "-" else args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``cauchy-kmf run <experiment> [options]``.

Exit status: 0 when the experiment converged or completed, 2 when an
iteration did not converge, 1 on any error.
"""
from __future__ import annotations

import argparse
import sys

from .errors import CauchyKMFError
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment


def build_parser():
    parser = argparse.ArgumentParser(prog="cauchy-kmf")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one benchmark experiment")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("--config", help="JSON file with ExperimentConfig fields")
    run.add_argument("--out", help="output directory (default results/<experiment>)")
    run.add_argument("--tol", type=float)
    run.add_argument("--max-iter", type=int, dest="max_iter")
    run.add_argument("--resolution", type=int, nargs="+", help="e.g. 128 96 or 32 128")
    run.add_argument("--seed", type=int)
    run.add_argument("--epsilon", type=float)
    run.add_argument("--dump-mesh", action="store_true", default=None, dest="dump_mesh")
    run.add_argument(
        "--pi-half-center", action="store_true", default=None, dest="pi_half_center",
        help="centre the inconsistent-data hat at pi/2 instead of 1/2",
    )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {
        k: getattr(args, k)
        for k in ("tol", "max_iter", "resolution", "seed", "epsilon", "dump_mesh", "pi_half_center", "out")
    }
    if overrides["out"] is None:
        overrides["out"] = f"results/{args.experiment}"
    try:
        if args.config:
            cfg = ExperimentConfig.from_json(args.config, experiment=args.experiment, **overrides)
        else:
            cfg = ExperimentConfig(args.experiment, **{k: v for k, v in overrides.items() if v is not None})
        report = run_experiment(cfg)
    except CauchyKMFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    status = {True: "converged", False: "NOT converged", None: "completed"}[report.converged]
    print(f"{cfg.experiment}: {status} in {report.wall_time:.1f}s -> {cfg.out}/report.json")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())

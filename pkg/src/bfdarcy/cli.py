"""Command-line driver.

Example::

    bfdarcy run --problem example1 --mode uniform --levels 4 --out results/ex1
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass
from typing import Optional

from .adapt import AdaptConfig, run
from .nlsolve import NewtonConfig
from .problems import PROBLEMS, get_problem

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2


@dataclass
class RunManifest:
    problem: str
    mode: str = "uniform"
    levels: int = 5
    dof_budget: Optional[int] = None
    c_adt: float = 0.8
    newton_tol: float = 1e-6
    rho: Optional[float] = None
    out: str = "bfd_out"
    threads: Optional[int] = None
    seed: int = 0

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {s}")
    return v


def _unit_interval(s):
    v = float(s)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {s}")
    return v


def _positive_float(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {s}")
    return v


def _rho(s):
    v = float(s)
    if not 3.0 <= v <= 4.0:
        raise argparse.ArgumentTypeError(f"rho must lie in [3, 4], got {s}")
    return v


def build_parser():
    p = _Parser(prog="bfdarcy", description="Adaptive mixed FEM for coupled Brinkman-Forchheimer/Darcy flow")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a model problem")
    r.error = p.error
    r.add_argument("--problem", required=True, choices=sorted(PROBLEMS))
    r.add_argument("--mode", choices=["uniform", "adaptive"], default="uniform")
    r.add_argument("--levels", type=_positive_int, default=5)
    r.add_argument("--dof-budget", type=_positive_int, default=None)
    r.add_argument("--c-adt", type=_unit_interval, default=0.8)
    r.add_argument("--newton-tol", type=_positive_float, default=1e-6)
    r.add_argument("--rho", type=_rho, default=None)
    r.add_argument("--out", default=None, help="output directory (default: $BFD_OUT or ./bfd_out)")
    r.add_argument("--threads", type=_positive_int, default=None)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--no-snapshots", action="store_true", help="only write history.csv")
    r.add_argument("-v", "--verbose", action="store_true")
    return p


def manifest_from_args(args):
    out = args.out or os.environ.get("BFD_OUT") or "bfd_out"
    return RunManifest(args.problem, args.mode, args.levels, args.dof_budget, args.c_adt,
                       args.newton_tol, args.rho, out, args.threads, args.seed)


def execute(manifest, snapshots=True):
    problem = get_problem(manifest.problem, manifest.rho)
    cfg = AdaptConfig(mode=manifest.mode, c_adt=manifest.c_adt, max_levels=manifest.levels,
                      dof_budget=manifest.dof_budget, newton=NewtonConfig(tol=manifest.newton_tol),
                      threads=manifest.threads, out=manifest.out, snapshots=snapshots)
    os.makedirs(manifest.out, exist_ok=True)
    with open(os.path.join(manifest.out, "manifest.json"), "w") as fh:
        fh.write(manifest.to_json() + "\n")
    return run(problem, cfg)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    manifest = manifest_from_args(args)
    try:
        result = execute(manifest, snapshots=not args.no_snapshots)
    except OSError as exc:
        print(f"bfdarcy: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for rec in result.records:
        print(f"level {rec.level}: DoF {rec.dof}  theta {rec.theta:.3e}  "
              f"e_total {rec.e_total:.3e}  newton {rec.newton_iters}")
    if result.error is not None:
        print(f"bfdarcy: {result.error}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

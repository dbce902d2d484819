"""``bounds`` command line entry point."""
from __future__ import annotations

import argparse
import csv
import sys

from lagdecomp.bab import BOUND_METHODS, COUNTEREXAMPLE
from lagdecomp.decomp import SolverConfig
from lagdecomp.runner import COLUMNS, METHODS, RunSpec, problems_from_files, random_problems, run_experiment, write_csv


def _budget(text):
    method, _, n = text.partition("=")
    if method not in METHODS or not n.isdigit():
        raise argparse.ArgumentTypeError(f"expected METHOD=ITERS, got {text!r}")
    return method, int(n)


def _methods(text):
    out = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in out if m not in METHODS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bounds",
        description="Lower bounds and complete verification for ReLU / sigmoid networks.",
    )
    src = p.add_argument_group("problems")
    src.add_argument("--model", nargs="+", default=[], help="model JSON file(s)")
    src.add_argument("--property", nargs="+", default=[], help="property JSON file(s)")
    src.add_argument("--random-nets", type=int, default=0, metavar="N",
                     help="instead of files, generate N random ReLU nets (seeded by --seed)")
    src.add_argument("--max-hidden", type=int, default=3)
    src.add_argument("--max-width", type=int, default=20)

    p.add_argument("--method", type=_methods, default=("wk",),
                   help=f"comma separated subset of {','.join(METHODS)}")
    p.add_argument("--iters", type=int, default=100, help="iterations of the iterative solvers")
    p.add_argument("--budget", type=_budget, action="append", default=[], metavar="METHOD=ITERS",
                   help="per-method iteration override, e.g. dsg=1040 (repeatable)")
    p.add_argument("--alpha-start", type=float, default=1e-2)
    p.add_argument("--alpha-end", type=float, default=1e-4)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--eta-start", type=float, default=10.0)
    p.add_argument("--eta-end", type=float, default=500.0)
    p.add_argument("--momentum", type=float, default=0.3)
    p.add_argument("--inner-iters", type=int, default=2)

    p.add_argument("--bab-method", choices=BOUND_METHODS, default="supergradient",
                   help="bounding method used inside branch and bound")
    p.add_argument("--bab-iters", type=int, default=50)
    p.add_argument("--max-domains", type=int, default=100000)

    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="-", help="CSV output path ('-' for stdout)")
    return p


def spec_from_args(args) -> RunSpec:
    if args.random_nets:
        if args.model or args.property:
            raise ValueError("--random-nets cannot be combined with --model/--property")
        problems = random_problems(args.random_nets, args.seed, max_hidden=args.max_hidden,
                                   max_width=args.max_width)
    else:
        if not args.model or not args.property:
            raise ValueError("need --model and --property (or --random-nets N)")
        problems = problems_from_files(args.model, args.property)
    solver = SolverConfig(
        iterations=args.iters, alpha_start=args.alpha_start, alpha_end=args.alpha_end,
        beta1=args.beta1, beta2=args.beta2, eta_start=args.eta_start, eta_end=args.eta_end,
        momentum=args.momentum, inner_iterations=args.inner_iters,
    )
    return RunSpec(problems, args.method, solver, dict(args.budget), args.bab_method, args.bab_iters,
                   args.max_domains, args.seed, args.workers)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rows = run_experiment(spec_from_args(args))
    except Exception as e:  # noqa: BLE001
        print(f"bounds: error: {e}", file=sys.stderr)
        return 1
    if args.out == "-":
        w = csv.DictWriter(sys.stdout, fieldnames=COLUMNS)
        w.writeheader()
        w.writerows(rows)
    else:
        write_csv(rows, args.out)
    return 2 if any(r["verdict"] == COUNTEREXAMPLE for r in rows) else 0


if __name__ == "__main__":
    sys.exit(main())

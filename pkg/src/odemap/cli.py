"""Command-line entry point: ``odemap convergence`` and ``odemap solve``."""

import argparse
import sys

import numpy as np

from .bench import PRIORS, ExperimentConfig, dump_solution, fit_rate, make_prior, run_experiment
from .exceptions import ConfigError, OdeMapError, RateFitError
from .problems import PROBLEMS, get_problem, reference_on_grid
from .solvers import METHODS, SolverConfig, solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def parse_int_list(text):
    """``"1,2,4"`` or an inclusive range ``"4..11"`` (mixable: ``"1,3..5"``)."""
    values = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = (int(v) for v in part.split(".."))
                if hi < lo:
                    raise ValueError
                values.extend(range(lo, hi + 1))
            else:
                values.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer list: {text!r}") from None
    return tuple(values)


def parse_methods(text):
    methods = tuple(m.strip().upper() for m in text.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    return methods


def parse_param(text):
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {name} needs a number, got {value!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="odemap", description="MAP estimation for ODEs under Gauss-Markov priors.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", required=True, choices=sorted(PROBLEMS), help="test problem")
    common.add_argument("--param", action="append", type=parse_param, default=[], metavar="NAME=VALUE",
                        help="override a problem parameter (repeatable)")
    common.add_argument("--prior", choices=PRIORS, default="iwp", help="prior family (default: %(default)s)")
    common.add_argument("--prior-rate", type=float, default=1.0,
                        help="IOUP drift rate or Matern lambda (default: %(default)s)")
    common.add_argument("--out", required=True, help="output CSV path")
    common.add_argument("--seedless", action="store_true",
                        help="accepted for compatibility; runs are always deterministic")

    conv = sub.add_parser("convergence", parents=[common], help="run a convergence sweep")
    conv.add_argument("--methods", type=parse_methods, default=METHODS,
                      help="comma-separated subset of EKS0,EKS1,IEKS (default: all)")
    conv.add_argument("--nu", type=parse_int_list, default=(1, 2, 3, 4),
                      help="prior orders, e.g. 1,2 or 1..4 (default: 1..4)")
    conv.add_argument("--dense-exp", type=int, default=12,
                      help="reference grid has 2^E + 1 points (default: %(default)s)")
    conv.add_argument("--decimations", type=parse_int_list, default=tuple(range(4, 12)),
                      help="keep every 2^k-th dense point, e.g. 4..11 (default: 4..11)")
    conv.add_argument("--jobs", type=int, default=1, help="worker processes (default: %(default)s)")
    conv.add_argument("--max-iters", type=int, default=50, help="IEKS pass limit (default: %(default)s)")
    conv.add_argument("--tol", type=float, default=1e-10,
                      help="IEKS relative objective tolerance (default: %(default)s)")

    one = sub.add_parser("solve", parents=[common], help="solve once on a uniform mesh")
    one.add_argument("--method", type=str.upper, choices=METHODS, required=True, help="EKS0, EKS1 or IEKS")
    one.add_argument("--nu", type=int, required=True, help="prior order")
    one.add_argument("--step", type=float, required=True, help="uniform step; must divide the horizon")
    one.add_argument("--max-iters", type=int, default=50, help="IEKS pass limit (default: %(default)s)")
    one.add_argument("--tol", type=float, default=1e-10,
                     help="IEKS relative objective tolerance (default: %(default)s)")
    return parser


def _run_convergence(args):
    config = ExperimentConfig(
        problem=args.problem, methods=args.methods, nu_list=args.nu, dense_exponent=args.dense_exp,
        decimation_exponents=args.decimations, prior=args.prior, prior_rate=args.prior_rate,
        problem_params=dict(args.param), output=args.out, ieks_max_iters=args.max_iters,
        ieks_tol=args.tol, jobs=args.jobs,
    )
    rows = run_experiment(config)
    for method in config.methods:
        for nu in config.nu_list:
            subset = [r for r in rows if r.method == method and r.nu == nu]
            try:
                slope_y, _ = fit_rate(subset, "err_sup_y")
                slope_dy, _ = fit_rate(subset, "err_sup_dy")
                print(f"{method:5s} nu={nu}  slope y={slope_y:6.3f}  dy={slope_dy:6.3f}")
            except RateFitError as err:
                print(f"{method:5s} nu={nu}  no rate ({err})")
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def _run_solve(args):
    named = get_problem(args.problem, **dict(args.param))
    prior = make_prior(args.prior, args.nu, named.problem.d, args.prior_rate)
    config = SolverConfig.uniform(args.method, prior, named.problem.horizon, args.step,
                                  ieks_max_iters=args.max_iters, ieks_tol=args.tol)
    try:
        sol = solve(named.problem, config)
    except OdeMapError as err:
        if isinstance(err, ConfigError):
            raise
        print(f"odemap: solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    reference = reference_on_grid(named, config.mesh)
    dump_solution(sol, reference, args.out)
    err_y = float(np.max(np.abs(sol.derivative(0) - reference[0])))
    status = "" if sol.converged else " (not converged)"
    print(f"{sol.method} nu={sol.nu} N={config.n_updates} iterations={sol.iterations}{status} "
          f"sigma2_hat={sol.sigma2_hat:.6g} sup error={err_y:.3e}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "convergence":
            return _run_convergence(args)
        return _run_solve(args)
    except (ConfigError, TypeError) as err:
        print(f"odemap: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"odemap: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

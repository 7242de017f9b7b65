"""Command-line interface: ``sisopt gen|eq|optimize|lambda0|bench``.

Exit codes: 0 success, 1 a solver did not converge, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from .bench import read_config, rows_to_csv, run_experiment
from .exceptions import DegenerateBudget, GenerationFailed, MaxIters, NotConverged, ParseError, SubproblemFailed
from .lambda_zero import budget_sweep, pipeline
from .local_search import RgmConfig, rgm, scp
from .netmodel import (
    default_dmax,
    generate_scale_free,
    parse_svec,
    read_instance,
    serialize_instance,
    serialize_svec,
    write_instance,
)
from .relaxation import solve_pr1, solve_pr2
from .results import SolveResult, serialize_result, write_result
from .sis_core import equilibrium

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INPUT = 0, 1, 2


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_generate(args) -> int:
    dmax = default_dmax(args.n) if args.dmax == "auto" else int(args.dmax)
    inst = generate_scale_free(
        args.n, power=args.power, dmin=args.dmin, dmax=dmax, seed=args.seed, nu=args.nu, zero_lambda=args.zero_lambda
    )
    if args.output in (None, "-"):
        sys.stdout.write(serialize_instance(inst))
    else:
        write_instance(inst, args.output)
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    inst = read_instance(args.input)
    if args.s:
        with open(args.s, encoding="utf-8") as fh:
            s = parse_svec(fh, n=inst.n)
    else:
        s = np.zeros(inst.n)
    if np.any(s < 0):
        raise ValueError("investment vector must be nonnegative")
    state = equilibrium(inst, s, tol=args.tol, max_iters=args.max_iters)
    _write_text(args.output, serialize_svec(state.p))
    print(f"iters {state.iters} residual {state.residual:.3e}", file=sys.stderr)
    return EXIT_OK


def _write_trace(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "F", "grad_norm", "step", "inner_fp_iters"])
        for row in rows:
            writer.writerow([row[0], repr(float(row[1])), repr(float(row[2])), repr(float(row[3])), row[4]])


def cmd_optimize(args) -> int:
    inst = read_instance(args.input)
    t0 = time.perf_counter()
    method = args.method
    if method in ("pr1", "pr2"):
        sol = solve_pr1(inst, tol=args.tol) if method == "pr1" else solve_pr2(inst, tol=args.tol)
        res = SolveResult(
            method=method,
            objective=sol.upper_bound,
            s=sol.s_feas,
            p=sol.p_feas,
            lower_bound=sol.lower_bound,
            upper_bound=sol.upper_bound,
            exact=sol.exact,
            iters_outer=sol.iters,
            iters_inner=sol.newton_iters,
        )
        trace = []
    else:
        cfg = RgmConfig(strict=args.strict)
        if method == "rgm":
            sol = rgm(inst, cfg, trace=bool(args.trace))
        else:
            backend = "mmatrix" if method == "scp-m" else "expcone"
            sol = scp(inst, backend=backend, tol=args.tol, config=cfg, trace=bool(args.trace))
        res = SolveResult(
            method=method,
            objective=sol.objective,
            s=sol.s,
            p=sol.p,
            upper_bound=sol.objective,
            iters_outer=sol.iters[0],
            iters_inner=sol.iters[1],
        )
        trace = sol.trace
    res.runtime_ms = (time.perf_counter() - t0) * 1e3
    if args.trace:
        _write_trace(args.trace, trace)
    if args.output in (None, "-"):
        sys.stdout.write(serialize_result(res))
    else:
        write_result(res, args.output)
    return EXIT_OK


def cmd_lambda0(args) -> int:
    inst = read_instance(args.input)
    t0 = time.perf_counter()
    rep = pipeline(inst, eps_frac=args.eps_frac)
    res = SolveResult(
        method="lambda0",
        objective=rep.f_upper,
        s=rep.s_out,
        p=rep.p_out,
        lower_bound=rep.f_lower,
        upper_bound=rep.f_upper,
        exact=rep.gap_bound == 0.0,
        route=rep.route,
        runtime_ms=(time.perf_counter() - t0) * 1e3,
        extra={"c_star": rep.c_star, "gap_bound": rep.gap_bound, "epsilon": rep.epsilon},
    )
    if args.output in (None, "-"):
        sys.stdout.write(serialize_result(res))
    else:
        write_result(res, args.output)
    if args.sweep:
        if rep.c_star <= 0:
            raise DegenerateBudget("no sweep: nothing needs to be invested (C* = 0)")
        budgets = rep.c_star * np.linspace(0.05, 0.99, args.sweep_points)
        rows = budget_sweep(inst, budgets)
        with open(args.sweep, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["C", "f_L", "f_U"])
            for C, fl, fu in rows:
                writer.writerow([repr(C), repr(fl), repr(fu)])
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = read_config(args.config)
    rows = run_experiment(cfg)
    _write_text(args.output, rows_to_csv(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sisopt", description="Security investments against SIS epidemics on networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random scale-free instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--power", type=float, default=1.5)
    g.add_argument("--dmin", type=int, default=2)
    g.add_argument("--dmax", default="auto")
    g.add_argument("--nu", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--zero-lambda", action="store_true", help="no external attacks (lambda = 0)")
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("eq", help="equilibrium infection probabilities for an investment vector")
    e.add_argument("-i", "--input", required=True)
    e.add_argument("-s", help="svec file with investments (default: zero)")
    e.add_argument("--tol", type=float, default=1e-7)
    e.add_argument("--max-iters", type=int, default=500)
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_equilibrium)

    o = sub.add_parser("optimize", help="solve with a relaxation or a local method")
    o.add_argument("-i", "--input", required=True)
    o.add_argument("--method", choices=["pr1", "pr2", "rgm", "scp-m", "scp-exp"], default="rgm")
    o.add_argument("--tol", type=float, default=None)
    o.add_argument("--trace", help="write per-iteration CSV here")
    o.add_argument("--strict", action="store_true", help="fail when the iteration cap is reached")
    o.add_argument("-o", "--output")
    o.set_defaults(func=cmd_optimize)

    z = sub.add_parser("lambda0", help="planning pipeline for instances without external attacks")
    z.add_argument("-i", "--input", required=True)
    z.add_argument("--eps-frac", type=float, default=0.01)
    z.add_argument("--sweep", help="write (C, f_L, f_U) rows here")
    z.add_argument("--sweep-points", type=int, default=10)
    z.add_argument("-o", "--output")
    z.set_defaults(func=cmd_lambda0)

    b = sub.add_parser("bench", help="run a benchmark configuration")
    b.add_argument("-c", "--config", required=True)
    b.add_argument("-o", "--output")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "tol", "unset") is None:
        args.tol = 1e-9 if args.method in ("pr1", "pr2") else 1e-6
    try:
        return args.func(args)
    except (NotConverged, MaxIters, SubproblemFailed) as exc:
        print(f"sisopt: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ParseError, GenerationFailed, DegenerateBudget, ValueError, OSError) as exc:
        print(f"sisopt: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

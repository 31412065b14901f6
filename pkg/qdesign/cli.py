from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path
from typing import Any, NoReturn

import numpy as np
import scipy
from joblib import Parallel, delayed

from . import __version__
from .core import dual_certificate, hat_w, hat_x, kkt_residual
from .data import (
    atomic_write_text,
    format_number,
    load_instance,
    load_instance_dir,
    random_instance,
    save_instance,
    synthetic_instance,
    write_csv_matrix,
    write_csv_rows,
    write_design_csv,
    write_mask_csv,
    write_path_csv,
    write_trace_csv,
)
from .errors import QDesignError, ZeroPrimalPoint
from .homotopy import lasso_path, path_solution, segment_weights, solve_homotopy
from .imse import gen_imse
from .models import (
    ALGORITHMS,
    PRIMAL_SIDE,
    SCREEN_RULES,
    Design,
    ImseSpec,
    InstanceFiles,
    ProblemInstance,
    ScreeningMask,
    SolverOptions,
    SolverTrace,
    TraceRecord,
)
from .oracle import oracle_qlasso_signs, verify_mappings, verify_optimal_pair
from .screening import bound_B, screen_d0, screen_d1, screen_d2
from .solvers import run_with_screening

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
THREADS_ENV = "QDESIGN_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_lambdas(value: str) -> list[float]:
    try:
        values = [float(item) for item in value.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Not a comma-separated list of numbers: {value}") from None
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError(f"lambdas must be positive: {value}")
    return values


def _parse_algos(value: str) -> list[str]:
    algos = [item.strip() for item in value.split(",") if item.strip()]
    unknown = [a for a in algos if a not in (*ALGORITHMS, "homotopy")]
    if unknown:
        raise argparse.ArgumentTypeError(f"Unknown algorithms: {', '.join(unknown)}")
    return algos


def _n_jobs() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return -1
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return -1 if threads <= 0 else threads


def _add_instance_args(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--instance", help="Instance directory (A.csv, c.csv or K.csv, instance.json)")
    source.add_argument("--A", dest="a_path", help="CSV of candidate columns, m rows by p columns")
    source.add_argument("--random", nargs=2, type=int, metavar=("M", "P"), help="Seeded Gaussian instance")
    target = parser.add_mutually_exclusive_group()
    target.add_argument("--c", dest="c_path", help="CSV with the target vector (one column)")
    target.add_argument("--K", dest="k_path", help="CSV with the target matrix (m×r)")
    parser.add_argument("--r", type=int, default=1, help="Target columns for --random")
    parser.add_argument("--lambda", dest="lam", type=float, help="Penalty λ (overrides instance.json)")
    parser.add_argument("--normalize", action="store_true", help="Scale columns of A to unit norm")
    parser.add_argument("--seed", type=int, default=0)


def _add_solver_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--screen", choices=("none", *SCREEN_RULES), default="none")
    parser.add_argument("--period", type=int, default=10, help="Screening period τ")
    parser.add_argument("--tol", type=float, default=1e-6)
    parser.add_argument("--max-iters", type=int, default=100_000)
    parser.add_argument("--mwu-power", type=float, default=0.5)
    parser.add_argument("--fista-restart", type=int, default=200)
    parser.add_argument("--no-away-steps", action="store_true", help="Plain vertex-direction steps for fw")
    parser.add_argument("--deterministic", action="store_true", help="Write zero elapsed times")


def _options(args: argparse.Namespace) -> SolverOptions:
    return SolverOptions(
        tol=args.tol,
        max_iters=args.max_iters,
        screen_rule=None if args.screen == "none" else args.screen,
        screen_period=args.period,
        seed=args.seed,
        mwu_power=args.mwu_power,
        fista_restart=args.fista_restart,
        fw_away_steps=not args.no_away_steps,
    )


def _load(args: argparse.Namespace) -> ProblemInstance:
    if args.instance:
        inst = load_instance_dir(args.instance, normalize=args.normalize)
        return inst if args.lam is None else ProblemInstance(inst.A, inst.target, args.lam)
    if args.a_path:
        if not (args.c_path or args.k_path):
            raise ValueError("--A needs --c or --K")
        if args.lam is None:
            raise ValueError("--A needs --lambda")
        files = InstanceFiles(
            a_path=args.a_path,
            target_path=args.c_path or args.k_path,
            lam=args.lam,
            target_kind="c" if args.c_path else "K",
            normalize=args.normalize,
        )
        return load_instance(files)
    m, p = args.random
    lam = 1.0 if args.lam is None else args.lam
    return random_instance(m, p, args.r, lam, args.seed, normalize=args.normalize)


def _versions() -> dict[str, str]:
    return {
        "qdesign": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _write_summary(path: str | None, args: argparse.Namespace, payload: dict[str, Any]) -> None:
    if not path:
        return
    params = {k: v for k, v in sorted(vars(args).items()) if k != "handler"}
    summary = {"parameters": params, "seed": args.seed, "versions": _versions(), **payload}
    atomic_write_text(path, json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")
    print(f"Wrote summary to: {path}")


def _design_of(inst: ProblemInstance, solution: np.ndarray | Design) -> Design:
    if isinstance(solution, Design):
        return solution
    try:
        return hat_w(solution)
    except ZeroPrimalPoint:
        LOGGER.warning("solution is x = 0; reporting the uniform design")
        return Design.uniform(inst.p)


def _cmd_solve(args: argparse.Namespace) -> int:
    inst = _load(args)
    opts = _options(args)

    def log_row(row: TraceRecord) -> None:
        LOGGER.debug("iter %d value %.17g gap %.3g surviving %d", row.iteration, row.value, row.gap, row.surviving)

    solution, mask, trace = run_with_screening(inst, args.algo, opts, callback=log_row)
    design = _design_of(inst, solution)
    print(f"Algorithm: {args.algo} (screen={args.screen}, period={args.period})")
    print(f"Status: {trace.status} after {trace.iterations} iterations")
    print(f"Final value: {format_number(trace.final_value)}")
    print(f"Final gap: {trace.final_gap:.3g} (full instance {trace.full_gap:.3g})")
    print(f"Eliminated candidates: {mask.n_eliminated} of {inst.p}")
    print(f"Support size: {design.support.size}")

    if args.out_design:
        print(f"Wrote design to: {write_design_csv(args.out_design, design)}")
    if args.out_trace:
        print(f"Wrote trace to: {write_trace_csv(args.out_trace, trace, args.deterministic)}")
    if args.out_x:
        x = hat_x(inst, solution) if isinstance(solution, Design) else solution
        print(f"Wrote primal point to: {write_csv_matrix(args.out_x, x)}")
    _write_summary(
        args.summary,
        args,
        {
            "instance": inst.to_dict(),
            "status": trace.status,
            "iterations": trace.iterations,
            "final_value": trace.final_value,
            "final_gap": trace.final_gap,
            "full_gap": trace.full_gap,
            "eliminated": mask.n_eliminated,
        },
    )
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


def _cmd_path(args: argparse.Namespace) -> int:
    inst = _load(args)
    if args.full:
        path = lasso_path(inst, full=True)
    else:
        path = lasso_path(inst, inst.lam)
    print(f"Breakpoints: {len(path.breakpoints)} ({path.status})")
    if args.out_path:
        print(f"Wrote path to: {write_path_csv(args.out_path, path)}")
    if path.status == "degenerate":
        LOGGER.warning("path ended on a degenerate face; no design written")
    elif args.out_design and not args.full:
        x = path_solution(path, inst.lam)
        print(f"KKT residual at lambda={format_number(inst.lam)}: {kkt_residual(inst, x):.3g}")
        print(f"Wrote design to: {write_design_csv(args.out_design, segment_weights(path, inst.lam))}")
    _write_summary(
        args.summary,
        args,
        {"instance": inst.to_dict(), "status": path.status, "breakpoints": len(path.breakpoints)},
    )
    return EXIT_NOT_CONVERGED if path.status == "degenerate" else EXIT_OK


def _screen_at(inst: ProblemInstance, point: np.ndarray | Design, rule: str) -> ScreeningMask:
    if isinstance(point, Design):
        if rule == "d0":
            return screen_d0(inst, dual_certificate(inst, point, "from_design"))
        if rule == "d1":
            return screen_d1(inst, hat_x(inst, point))
        if rule == "d2":
            return screen_d2(inst, point)
        return bound_B(inst, point)[1]
    if rule == "d0":
        return screen_d0(inst, dual_certificate(inst, point, "from_primal"))
    if rule == "d1":
        return screen_d1(inst, point)
    if rule == "d2":
        return screen_d2(inst, point)
    return bound_B(inst, hat_w(point))[1]


def _cmd_screen_report(args: argparse.Namespace) -> int:
    if args.algo in PRIMAL_SIDE and args.rule in ("d2", "b") and args.iters < 1:
        raise ValueError(f"--rule {args.rule} with --algo {args.algo} needs --iters >= 1 (x = 0 has no design)")
    inst = _load(args)
    opts = SolverOptions(tol=1e-300, max_iters=args.iters, seed=args.seed)
    point, _, _ = run_with_screening(inst, args.algo, opts)
    mask = _screen_at(inst, point, args.rule)
    print(f"Rule {args.rule} at {args.algo} iterate {args.iters}: eliminated {mask.n_eliminated} of {inst.p}")
    print(f"Certificate bound: {mask.eps_used:.6g}")
    if args.out:
        print(f"Wrote mask to: {write_mask_csv(args.out, mask)}")
    return EXIT_OK


def _cmd_gen_imse(args: argparse.Namespace) -> int:
    spec = ImseSpec(
        d=args.d,
        points=args.points,
        n_per_axis=args.n_per_axis,
        count=args.count,
        points_file=args.points_file,
        theta=args.theta,
        kernel=args.kernel,
        m=args.m,
        budget=args.budget,
    )
    imse = gen_imse(spec)
    out = Path(args.out_instance)
    save_instance(imse.instance, out, kernel=spec.kernel, theta=spec.theta, budget=spec.budget)
    write_csv_matrix(out / "points.csv", imse.points)
    write_csv_matrix(out / "eigenvalues.csv", imse.eigenvalues)
    write_csv_matrix(out / "sigma2.csv", imse.sigma2)
    print(f"Candidates: {imse.instance.p}, truncation m={spec.m}, lambda={format_number(imse.instance.lam)}")
    print(f"Wrote instance to: {out}")
    return EXIT_OK


def _cmd_gen_synthetic(args: argparse.Namespace) -> int:
    inst = synthetic_instance(args.m, args.p, args.lam, args.seed, classes=args.classes)
    save_instance(inst, args.out_instance, seed=args.seed, classes=args.classes)
    print(f"Synthetic instance m={inst.m}, p={inst.p}, lambda={format_number(inst.lam)}")
    print(f"Wrote instance to: {args.out_instance}")
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    inst = _load(args)
    mappings = verify_mappings(inst, args.tol, seed=args.seed)
    optimum = oracle_qlasso_signs(inst)
    report = verify_optimal_pair(inst, optimum.x, args.tol)
    for name, ok in mappings.checks.items():
        print(f"{name}: {'pass' if ok else 'fail'} ({mappings.residuals[name]:.3g})")
    print(f"optimal_pair: {'pass' if report.passed else 'fail'} (gap {report.gap:.3g}, kkt {report.kkt_residual:.3g})")
    if mappings.pathological:
        print("Pathological instance: A^T c = 0, every design is optimal")
    _write_summary(
        args.summary,
        args,
        {"instance": inst.to_dict(), "mappings": mappings.to_dict(), "optimal_pair": report.to_dict()},
    )
    return EXIT_OK if mappings.passed and report.passed else EXIT_NOT_CONVERGED


def _bench_entry(inst: ProblemInstance, algo: str, opts: SolverOptions) -> tuple[dict[str, Any], SolverTrace | None]:
    started = time.perf_counter()
    if algo == "homotopy":
        solution = solve_homotopy(inst, inst.lam)
        elapsed = time.perf_counter() - started
        iters = 0 if solution.path is None else len(solution.path.breakpoints)
        row = {"iters": iters, "final_gap": kkt_residual(inst, solution.x), "converged": True}
        trace = None
    else:
        _, _, trace = run_with_screening(inst, algo, opts)
        elapsed = time.perf_counter() - started
        row = {"iters": trace.iterations, "final_gap": trace.final_gap, "converged": trace.converged}
    return {"algo": algo, "lambda": inst.lam, "time_s": elapsed, **row}, trace


def _cmd_bench(args: argparse.Namespace) -> int:
    base = _load(args)
    opts = _options(args)
    lambdas = args.lambdas or [base.lam]
    algos = [a for a in args.algos if a != "homotopy" or base.r == 1]
    tasks = [(ProblemInstance(base.A, base.target, lam), algo) for lam in lambdas for algo in algos]
    results = Parallel(n_jobs=_n_jobs())(delayed(_bench_entry)(inst, algo, opts) for inst, algo in tasks)

    rows = []
    for row, trace in results:
        if args.deterministic:
            row["time_s"] = 0.0
        rows.append((row["algo"], float(row["lambda"]), float(row["time_s"]), row["iters"], float(row["final_gap"])))
        print(f"{row['algo']:>9} lambda={row['lambda']:.4g} time={row['time_s']:.3f}s iters={row['iters']} gap={row['final_gap']:.3g}")
        if args.trace_dir and trace is not None:
            name = f"trace_{row['algo']}_{format_number(row['lambda'])}.csv"
            write_trace_csv(Path(args.trace_dir) / name, trace, args.deterministic)
    if args.out:
        print(f"Wrote table to: {write_csv_rows(args.out, ('algo', 'lambda', 'time_s', 'iters', 'final_gap'), rows)}")
    converged = all(row["converged"] for row, _ in results)
    _write_summary(args.summary, args, {"instance": base.to_dict(), "runs": [row for row, _ in results]})
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="qdesign",
        description="Bayesian c- and L-optimal designs through the quadratic lasso, with safe screening",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logging")
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="Run one iterative solver")
    _add_instance_args(solve)
    _add_solver_args(solve)
    solve.add_argument("--algo", choices=ALGORITHMS, default="cd")
    solve.add_argument("--out-design", help="Design CSV (index,weight)")
    solve.add_argument("--out-trace", help="Trace CSV (iter,value,gap_or_delta,surviving,elapsed_s)")
    solve.add_argument("--out-x", help="Primal point CSV (x̂(w) for mwu and fw)")
    solve.add_argument("--summary", help="Run summary JSON")
    solve.set_defaults(handler=_cmd_solve)

    path = commands.add_parser("path", help="Exact homotopy path and design")
    _add_instance_args(path)
    path.add_argument("--full", action="store_true", help="Compute the path down to alpha = 0")
    path.add_argument("--out-path", help="Path CSV (k,alpha,lambda,nnz,active_indices)")
    path.add_argument("--out-design", help="Exact design CSV at the instance lambda")
    path.add_argument("--summary", help="Run summary JSON")
    path.set_defaults(handler=_cmd_path)

    report = commands.add_parser("screen-report", help="Per-candidate screening test values at one iterate")
    _add_instance_args(report)
    report.add_argument("--rule", choices=SCREEN_RULES, default="d2")
    report.add_argument("--algo", choices=ALGORITHMS, default="mwu")
    report.add_argument("--iters", type=int, default=0, help="Solver iterations before screening")
    report.add_argument("--out", help="Mask CSV (index,test_value,eliminated)")
    report.set_defaults(handler=_cmd_screen_report)

    imse = commands.add_parser("gen-imse", help="Build an IMSE-optimal design instance")
    imse.add_argument("--d", type=int, default=2)
    imse.add_argument("--points", choices=("grid", "sobol", "halton", "file"), default="grid")
    imse.add_argument("--n-per-axis", type=int, default=9)
    imse.add_argument("--count", type=int, default=256, help="Number of low-discrepancy points")
    imse.add_argument("--points-file", help="CSV of candidate points for --points file")
    imse.add_argument("--theta", type=float, default=10.0)
    imse.add_argument("--kernel", choices=("matern12", "matern32", "matern52", "sqexp"), default="matern32")
    imse.add_argument("--m", type=int, default=10, help="Truncation level")
    imse.add_argument("--budget", type=int, default=10, help="Budget n, lambda = 1/n")
    imse.add_argument("--out-instance", required=True)
    imse.set_defaults(handler=_cmd_gen_imse, seed=0)

    synthetic = commands.add_parser("gen-synthetic", help="Build a clustered nonnegative instance")
    synthetic.add_argument("--m", type=int, default=100)
    synthetic.add_argument("--p", type=int, default=2000)
    synthetic.add_argument("--lambda", dest="lam", type=float, default=0.4)
    synthetic.add_argument("--classes", type=int, default=10)
    synthetic.add_argument("--seed", type=int, default=0)
    synthetic.add_argument("--out-instance", required=True)
    synthetic.set_defaults(handler=_cmd_gen_synthetic)

    verify = commands.add_parser("verify", help="Oracle checks of the optimality mappings (p <= 7)")
    _add_instance_args(verify)
    verify.add_argument("--tol", type=float, default=1e-8)
    verify.add_argument("--summary", help="Run summary JSON")
    verify.set_defaults(handler=_cmd_verify)

    bench = commands.add_parser("bench", help="Run the algorithm roster and write a timing table")
    _add_instance_args(bench)
    _add_solver_args(bench)
    bench.add_argument("--algos", type=_parse_algos, default=[*ALGORITHMS, "homotopy"])
    bench.add_argument("--lambdas", type=_parse_lambdas, help="Comma-separated λ grid")
    bench.add_argument("--out", help="Table CSV (algo,lambda,time_s,iters,final_gap)")
    bench.add_argument("--trace-dir", help="Directory for per-run trace CSVs")
    bench.add_argument("--summary", help="Run summary JSON")
    bench.set_defaults(handler=_cmd_bench)
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose == 1 else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return args.handler(args)
    except (QDesignError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    raise SystemExit(run_cli())


if __name__ == "__main__":
    main()

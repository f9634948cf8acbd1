"""Command-line entry point: ``bench run|trace|mm|verify``."""

from __future__ import annotations

import argparse
import contextlib
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from ..quadprob import SpectrumSpec, generate_spectrum
from ..solver import SolverConfig
from ..stepsize import PsiSpec
from .plan import ExperimentPlan, known_methods, run_method, run_plan
from .report import TRACE_QUANTITIES, emit_csv, emit_markdown, emit_trace_series


def _single_thread(enabled: bool):
    if not enabled:
        return contextlib.nullcontext()
    return threadpool_limits(limits=1)


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write_table(table, out_dir: str, stem: str, timing: bool) -> None:
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    md_path = os.path.join(out_dir, f"{stem}.md")
    emit_csv(table, csv_path, timing=timing)
    emit_markdown(table, md_path, timing=timing)
    print(f"wrote {csv_path} and {md_path}")


def _finish(table, allow_failures: bool) -> int:
    bad = table.degenerate_runs
    unconverged = sum(r.failures for r in table.rows)
    if unconverged:
        _say(f"{unconverged} run(s) did not converge ({bad} degenerate)")
    return 1 if bad and not allow_failures else 0


def cmd_run(args) -> int:
    plan = ExperimentPlan.from_file(args.plan)
    with _single_thread(args.single_thread):
        table = run_plan(plan, jobs=args.jobs, progress=None if args.quiet else _say)
    stem = os.path.splitext(os.path.basename(args.plan))[0]
    _write_table(table, args.out_dir, stem, timing=not args.no_timing)
    return _finish(table, args.allow_failures)


def cmd_mm(args) -> int:
    params = {"tau": args.tau, "r": args.r, "max_iter": args.max_iter}
    plan = ExperimentPlan(
        methods=args.methods, matrices=args.matrix, epsilons=[args.epsilon],
        runs=args.runs, seed=args.seed, symmetrize=args.symmetrize, **params,
    )
    with _single_thread(args.single_thread):
        table = run_plan(plan, jobs=args.jobs, progress=None if args.quiet else _say)
    _write_table(table, args.out_dir, "matrices", timing=not args.no_timing)
    return _finish(table, args.allow_failures)


def cmd_trace(args) -> int:
    # Diagonal test problem with a_1 = 1, a_n = n, uniform interior and b = 0.
    problem = generate_spectrum(SpectrumSpec(1, float(args.n), args.n, seed=args.seed))
    psi = PsiSpec.parse(args.psi)
    # A vanishing tolerance so the run lasts exactly --iters steps.
    config = SolverConfig(epsilon=1e-300, max_iter=args.iters, psi=psi,
                          observe_tilde=args.quantity == "alpha_tilde_dev", observer_psi=psi)
    trace = run_method(args.method, problem, np.ones(args.n), config)
    series = emit_trace_series(trace, args.quantity, args.out, problem)
    print(f"wrote {args.out} ({len(series)} rows, final value {series[-1, 1]:.3e})")
    return 0


def cmd_verify(args) -> int:
    from ..verify import run_checks

    results = run_checks(seed=args.seed, names=args.only or None, report=print)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out-dir", default="results")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--single-thread", action="store_true",
                       help="limit BLAS to one thread for fair timings")
        p.add_argument("--no-timing", action="store_true",
                       help="omit wall times so outputs are byte-reproducible")
        p.add_argument("--allow-failures", action="store_true",
                       help="exit 0 even if a run broke down")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("run", help="run an experiment plan (YAML)")
    p.add_argument("--plan", required=True)
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("mm", help="benchmark methods on Matrix Market files")
    p.add_argument("--matrix", nargs="+", required=True)
    p.add_argument("--methods", type=lambda s: s.split(","), default=["alg1", "bb1"],
                   help=f"comma-separated; known: {','.join(known_methods())}")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--r", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--symmetrize", action="store_true",
                   help="accept 'general' files and use (A + A^T)/2")
    common(p)
    p.set_defaults(func=cmd_mm)

    p = sub.add_parser("trace", help="per-iteration series on the diagonal test problem")
    p.add_argument("--method", default="dai_yang", choices=known_methods())
    p.add_argument("--quantity", required=True, choices=TRACE_QUANTITIES)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--psi", default="I", help="weight polynomial: I, A, A^2 or coefficients c0,c1,...")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("verify", help="run the numerical acceptance checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--only", nargs="*", help="check function names to run")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        _say(f"bench: error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``rmplate {solve,study,check}``."""
from __future__ import annotations

import argparse
import contextlib
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence

from .study import BENCHMARK, StudyConfig, StudyError, dumps, run_solve, run_study


def rational(text: str) -> float:
    """Parse ``0.25``, ``1e-3`` or an exact ratio like ``1/1024``."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def level_list(text: str) -> List[int]:
    try:
        return [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"levels must be integers, got {text!r}") from exc


def load_spec(text: str):
    return BENCHMARK if text == BENCHMARK else rational(text)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t", type=rational, default=1.0 / 1024.0, help="plate thickness (default 1/1024)")
    p.add_argument("--lambda", dest="lam", type=rational, default=1.0)
    p.add_argument("--mu", type=rational, default=1.0)
    p.add_argument("--lambda-tilde", dest="lam_tilde", type=rational, default=1.0)
    p.add_argument("--quad-degree", type=int, default=6, help="quadrature degree for data integrals (1-10)")
    p.add_argument("--quad-refine", type=int, default=0, help="repeat that rule on 4**k sub-triangles (0-6)")
    p.add_argument("--cf", dest="c_f", type=rational, help="override the Poincare-Friedrichs constant")
    p.add_argument("--cr", dest="c_r", type=rational, help="override the inf-sup constant bound")
    p.add_argument("--kappa2", type=rational, help="override the interpolation constant")
    p.add_argument("--big-n", dest="big_n", type=rational, help="override the patch cardinality bound")
    p.add_argument(
        "--load",
        type=load_spec,
        default=BENCHMARK,
        help=f"'{BENCHMARK}' (default) or a constant load value such as 0 or 1/2",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmplate", description="Reissner-Mindlin plate solver and error estimator.")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one mesh level and print its reports as JSON")
    solve.add_argument("--n", type=int, default=4, help="mesh level (default 4)")
    _add_model_flags(solve)
    solve.add_argument("--out-json", help="write the report here instead of stdout")

    study = sub.add_parser("study", help="sweep mesh levels and tabulate the effectivity index")
    study.add_argument("--levels", type=level_list, default=[4, 8, 16, 32, 64], help="e.g. '4,8,16'")
    _add_model_flags(study)
    study.add_argument("--out-csv")
    study.add_argument("--out-json")
    study.add_argument("--out-plot", help="two-column (h, effectivity) file; '.svg' also draws a chart")
    study.add_argument("--quiet", action="store_true")

    sub.add_parser("check", help="run the invariant suite and print pass/fail lines")
    return parser


def _config(args, levels: Sequence[int]) -> StudyConfig:
    return StudyConfig(
        levels=tuple(levels),
        t=args.t,
        lam=args.lam,
        mu=args.mu,
        lam_tilde=args.lam_tilde,
        quad_degree=args.quad_degree,
        quad_refine=args.quad_refine,
        c_f=args.c_f,
        c_r=args.c_r,
        kappa2=args.kappa2,
        big_n=args.big_n,
        load=args.load,
        out_csv=getattr(args, "out_csv", None),
        out_json=getattr(args, "out_json", None) if args.command == "study" else None,
        out_plot=getattr(args, "out_plot", None),
    )


def thread_limit():
    """Cap BLAS/OpenMP pools when ``RMPLATE_THREADS`` is set."""
    raw = os.environ.get("RMPLATE_THREADS")
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"rmplate: RMPLATE_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise SystemExit("rmplate: RMPLATE_THREADS must be at least 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _cmd_solve(args) -> int:
    cfg = _config(args, [args.n])
    result = run_solve(cfg, args.n)
    text = dumps(result.report())
    if args.out_json:
        Path(args.out_json).write_text(text)
    else:
        sys.stdout.write(text)
    if result.estimator.constants.thickness_warning:
        print("rmplate: warning: t exceeds the thickness bound of the estimator constants", file=sys.stderr)
    return 0


def _cmd_study(args) -> int:
    cfg = _config(args, args.levels)

    def progress(row):
        if not args.quiet:
            print(f"n={row.n:4d}  h={row.h:.4e}  e={row.e_total:.4e}  eta={row.eta:.4e}  "
                  f"effectivity={row.effectivity:.4f}  ({row.seconds:.2f}s)")

    run_study(cfg, progress)
    return 0


def _cmd_check(_args) -> int:
    from .checks import run_checks

    results = run_checks()
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"solve": _cmd_solve, "study": _cmd_study, "check": _cmd_check}
    try:
        with thread_limit():
            return handlers[args.command](args)
    except (StudyError, ValueError) as exc:
        print(f"rmplate: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

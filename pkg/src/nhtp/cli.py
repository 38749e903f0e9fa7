"""Command-line interface: ``nhtp {solve,bench,check,trace}``.

Exit codes for ``solve``: 0 stationary, 2 iteration cap, 3 stalled,
1 bad input. The default worker count for ``bench`` comes from the
``NHTP_JOBS`` environment variable.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys

from . import bench, problems
from .checks import run_checks
from .solver import SolverConfig, Status, solve, write_trace_csv

EXIT_CODES = {Status.STATIONARY: 0, Status.MAX_ITERS: 2, Status.F_CHANGE_STALLED: 3}


class CliError(Exception):
    pass


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise CliError(f"{path}:{lineno}: expected key = value")
            out[key.strip()] = value.strip()
    return out


def _default_jobs() -> int:
    raw = os.environ.get("NHTP_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="nhtp", formatter_class=fmt,
                                description="Newton hard-thresholding pursuit for "
                                            "sparsity-constrained problems.")
    p.add_argument("-v", "--verbose", action="store_true", help="print extra detail")
    sub = p.add_subparsers(dest="command", metavar="{solve,bench,check,trace}")
    sub.required = True

    ps = sub.add_parser("solve", formatter_class=fmt, help="solve one instance")
    ps.add_argument("--kind", choices=bench.KINDS, default="gaussian",
                    help="synthetic problem generator")
    ps.add_argument("--data", default=None, help="LIBSVM file (overrides --kind)")
    ps.add_argument("--n", type=int, default=256, help="dimension")
    ps.add_argument("--m", type=int, default=64, help="number of samples")
    ps.add_argument("--s", type=int, default=None, help="sparsity level (required)")
    ps.add_argument("--s-true", type=int, default=None,
                    help="planted sparsity for logistic-ar (defaults to --s)")
    ps.add_argument("--theta", type=float, default=0.5, help="logistic-ar correlation")
    ps.add_argument("--seed", type=int, default=0, help="instance seed")
    ps.add_argument("--solver", choices=sorted(bench.SOLVERS), default="nhtp",
                    help="algorithm")
    ps.add_argument("--max-iters", type=int, default=None,
                    help="iteration cap (solver default when omitted)")
    ps.add_argument("--tol", type=float, default=None,
                    help="stationarity tolerance (solver default when omitted)")
    ps.add_argument("--config", default=None, help="flat key = value solver config file")
    ps.add_argument("--trace-out", default=None, help="write the iteration trace as CSV")

    pb = sub.add_parser("bench", formatter_class=fmt, help="run a benchmark sweep")
    pb.add_argument("--preset", choices=bench.PRESETS, default=None, help="named experiment")
    pb.add_argument("--full-scale", action="store_true",
                    help="use the full-size grids of a preset")
    pb.add_argument("--kind", choices=bench.KINDS, default="gaussian",
                    help="problem kind for a custom sweep")
    pb.add_argument("--n", type=int, default=256, help="dimension for a custom sweep")
    pb.add_argument("--m", type=int, default=64, help="samples for a custom sweep")
    pb.add_argument("--s-values", default="10", help="comma-separated sparsity levels")
    pb.add_argument("--trials", type=int, default=None,
                    help="trials per cell (preset default, else 10)")
    pb.add_argument("--solvers", default="nhtp,iht,htp", help="comma-separated solvers")
    pb.add_argument("--seed", type=int, default=2020, help="base seed")
    pb.add_argument("--jobs", type=int, default=_default_jobs(),
                    help="worker processes (env NHTP_JOBS)")
    pb.add_argument("--config", default=None, help="flat key = value NHTP config file")
    pb.add_argument("--out", default="bench.csv", help="CSV output path")
    pb.add_argument("--json-out", default=None, help="optional JSON output path")
    pb.add_argument("--plot-out", default=None, help="optional plot-data CSV path")
    pb.add_argument("--omit-timing", action="store_true",
                    help="write timing columns as nan for byte-reproducible output")

    pc = sub.add_parser("check", formatter_class=fmt, help="run installation self-checks")
    pc.add_argument("--quick", action="store_true", help="only the small-dimension oracles")
    pc.add_argument("--seed", type=int, default=0, help="check seed")

    pt = sub.add_parser("trace", formatter_class=fmt, help="summarise a trace CSV")
    pt.add_argument("path", help="trace CSV written by solve --trace-out")
    pt.add_argument("--rows", type=int, default=10, help="number of final rows to show")
    p.subcommand_parsers = {"solve": ps, "bench": pb, "check": pc, "trace": pt}
    return p


def _solver_options(args, config_path):
    opts = read_config_file(config_path) if config_path else {}
    if getattr(args, "max_iters", None) is not None:
        opts["max_iters"] = args.max_iters
    if getattr(args, "tol", None) is not None:
        opts["tol"] = args.tol
    return opts


def cmd_solve(args) -> int:
    if args.s is None:
        raise CliError("--s is required")
    if args.data:
        try:
            instance = problems.load_libsvm(args.data)
        except OSError as exc:
            raise CliError(f"cannot read {args.data}: {exc}") from exc
    else:
        cell = dict(n=args.n, m=args.m, s=args.s, theta=args.theta,
                    s_true=args.s_true or args.s)
        try:
            instance = bench.make_instance(args.kind, cell, args.seed)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
    opts = _solver_options(args, args.config)
    if args.solver == "nhtp":
        rep = solve(instance.objective, SolverConfig.from_mapping(dict(opts, s=args.s)))
    else:
        if "max_iters" in opts:
            opts["max_iters"] = int(opts["max_iters"])
        if "tol" in opts:
            opts["tol"] = float(opts["tol"])
        rep = bench.SOLVERS[args.solver](instance, args.s, opts)
    if args.verbose:
        for rec in rep.trace:
            kind = rec.direction_kind.value if rec.direction_kind else "-"
            alpha = "-" if rec.alpha is None else f"{rec.alpha:.3g}"
            print(f"k={rec.k:<4d} {kind:<8} alpha={alpha:<6} f={rec.f_val:.6e} "
                  f"tol={rec.tol_value:.3e}")
    last = rep.trace[-1]
    counts = rep.direction_counts()
    print(f"status      {rep.status.value}")
    print(f"f           {last.f_val:.6e}")
    print(f"tol         {last.tol_value:.6e}")
    print(f"iterations  {rep.iterations}")
    print(f"directions  newton={counts['newton']} gradient={counts['gradient']}")
    if instance.x_star is not None and args.kind in bench.CS_KINDS and not args.data:
        err = float(((rep.x_final - instance.x_star) ** 2).sum() ** 0.5)
        print(f"error       {err:.6e}")
    if rep.message:
        print(f"message     {rep.message}")
    if args.trace_out:
        try:
            write_trace_csv(rep.trace, args.trace_out)
        except OSError as exc:
            raise CliError(f"cannot write {args.trace_out}: {exc}") from exc
    return EXIT_CODES[rep.status]


def _int_list(text, flag):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"{flag}: expected comma-separated integers") from None
    if not vals:
        raise CliError(f"{flag}: empty list")
    return vals


def cmd_bench(args) -> int:
    if args.trials is not None and args.trials < 1:
        raise CliError("--trials must be >= 1")
    solvers = [t.strip() for t in args.solvers.split(",") if t.strip()]
    try:
        if args.preset:
            spec, x_axis, metric = bench.preset(args.preset, args.full_scale, args.trials,
                                                args.seed, args.jobs)
        else:
            grid = [dict(n=args.n, m=args.m, s=s) for s in _int_list(args.s_values, "--s-values")]
            spec = bench.SweepSpec(args.kind, grid, args.trials or 10, solvers, args.seed,
                                   args.jobs)
            x_axis, metric = "s", ("mean_loss" if args.kind.startswith("logistic")
                                   else "success_rate")
        if args.config:
            # Validate once with a placeholder s; each cell supplies its own.
            opts = read_config_file(args.config)
            checked = SolverConfig.from_mapping(dict(opts, s=1)).to_dict()
            spec.solver_options = {"nhtp": {k: checked[k] for k in opts}}
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    result = bench.run_sweep(spec)
    try:
        bench.export(result, "csv", args.out, omit_timing=args.omit_timing)
        if args.json_out:
            bench.export(result, "json", args.json_out, omit_timing=args.omit_timing)
        if args.plot_out:
            bench.export_plot_data(result, args.plot_out, x_axis, metric)
    except OSError as exc:
        raise CliError(str(exc)) from exc
    print(f"{'n':>6} {'m':>5} {'s':>4} {'solver':>6} {'success':>8} {'error':>10} "
          f"{'loss':>10} {'time':>9}")
    for c in result.cells:
        print(f"{c.n:>6} {c.m:>5} {c.s:>4} {c.solver:>6} {c.success_rate:>8.3f} "
              f"{c.mean_error:>10.3e} {c.mean_loss:>10.3e} {c.mean_time:>9.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_check(args) -> int:
    results = run_checks(quick=args.quick, seed=args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<26} {r.detail}")
    return 0 if all(r.passed for r in results) else 1


def cmd_trace(args) -> int:
    try:
        with open(args.path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CliError(f"cannot read {args.path}: {exc}") from exc
    if not rows or "residual" not in rows[0]:
        raise CliError(f"{args.path}: not a trace file")
    kinds = [r["kind"] for r in rows if r["kind"]]
    residuals = [float(r["residual"]) for r in rows]
    fit = bench.analyze_rate(residuals)
    print(f"records     {len(rows)}")
    print(f"directions  newton={kinds.count('newton')} gradient={kinds.count('gradient')}")
    print(f"final f     {float(rows[-1]['f']):.6e}")
    print(f"final tol   {float(rows[-1]['tol']):.6e}")
    p = "nan" if math.isnan(fit.exponent) else f"{fit.exponent:.3f}"
    print(f"rate        {fit.classification.value} (p = {p}, window = {len(fit.window)})")
    print("k,kind,alpha,f,residual,tol")
    for r in rows[-args.rows:]:
        print(",".join(r[c] for c in ("k", "kind", "alpha", "f", "residual", "tol")))
    return 0


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "check": cmd_check, "trace": cmd_trace}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the contract reserves 2 for MaxIters.
        return 0 if exc.code == 0 else 1
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        parser.subcommand_parsers[args.command].print_usage(sys.stderr)
        print(f"nhtp: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, problems.ParseError) as exc:
        print(f"nhtp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

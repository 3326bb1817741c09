"""Command line interface: ``flmchange {fit,test,critval,simulate,plot}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import limits
from .errors import FlmChangeError
from .estimator import SplineBasis, gcv_select, residuals
from .funcdata import load_dataset
from .seqproc import ResidualSample, StatisticKind, run_test, seq_process
from .simlab import ErrorFamily, ErrorSpec, RejectionRow, SimConfig, emit_figure_data, run_experiment

log = logging.getLogger("flmchange")

_ROW_FIELDS = (
    "family",
    "delta",
    "n",
    "repetitions",
    "level",
    "statistic_kind",
    "rejections",
    "failures",
    "rejection_rate",
    "mc_se",
    "theta_mean",
    "theta_median",
)


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("estimator")
    g.add_argument("--basis-size", type=int, default=40, help="number of B-spline functions")
    g.add_argument("--degree", type=int, default=5, help="spline degree")
    g.add_argument("--penalty-order", type=int, default=3, help="derivative order m")
    g.add_argument("--lambda-min", type=float, default=1e-10)
    g.add_argument("--lambda-max", type=float, default=1e2)
    g.add_argument("--lambda-count", type=int, default=50)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-o", "--outdir", type=Path, default=Path("."), help="output directory")

    parser = argparse.ArgumentParser(
        prog="flmchange",
        description="Change-point tests for the error distribution of functional linear models.",
    )
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")

    p = sub.add_parser("fit", parents=[common], help="fit the model by penalized splines + GCV")
    p.add_argument("data", type=Path, help="dataset CSV")
    _add_fit_flags(p)
    p.add_argument("--residuals-out", type=Path, default=None, help="also write residuals here")

    p = sub.add_parser("test", parents=[common], help="run the change-point test")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--residuals", type=Path, help="CSV with one residual per line")
    src.add_argument("--data", type=Path, help="dataset CSV; fitted first")
    _add_fit_flags(p)
    p.add_argument("--kind", default="ks", choices=[k.value for k in StatisticKind])
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--table", type=Path, default=None, help="quantile table (.qtab) for --kind")

    p = sub.add_parser("critval", parents=[common], help="simulate limit quantile tables")
    p.add_argument("--M", dest="grid", type=int, default=limits.DEFAULT_GRID)
    p.add_argument("--R", dest="reps", type=int, default=limits.DEFAULT_REPLICATIONS)
    p.add_argument("--levels", type=float, nargs="+", default=list(limits.STANDARD_LEVELS))

    p = sub.add_parser("simulate", parents=[common], help="rejection-rate experiments")
    p.add_argument("--family", required=True, choices=[f.value for f in ErrorFamily])
    p.add_argument("--delta", type=float, nargs="+", required=True)
    p.add_argument("--n", type=int, nargs="+", required=True)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--kind", default="ks", choices=[k.value for k in StatisticKind])
    p.add_argument("--grid-points", type=int, default=300)
    p.add_argument("--table", type=Path, default=None)
    _add_fit_flags(p)

    p = sub.add_parser("plot", parents=[common], help="redraw figures from a results CSV")
    p.add_argument("results", type=Path, help="results CSV written by simulate")
    return parser


def _basis(args) -> SplineBasis:
    return SplineBasis(args.basis_size, args.degree, args.penalty_order)


def _lambda_grid(args) -> np.ndarray:
    if args.lambda_count < 1 or not 0 < args.lambda_min <= args.lambda_max:
        raise FlmChangeError("invalid lambda grid bounds")
    return np.logspace(math.log10(args.lambda_min), math.log10(args.lambda_max), args.lambda_count)


def _fmt(x: float) -> str:
    return repr(float(x))


def _table_for(args, kind: StatisticKind):
    if args.table is None:
        return limits.default_tables()[kind]
    table = limits.load_table(args.table)
    if table.kind is not kind:
        raise FlmChangeError(f"table {args.table} is for {table.kind.value}, not {kind.value}")
    return table


def read_residuals(path: Path) -> np.ndarray:
    """One number per row (first column); a non-numeric first row is a header."""
    values = []
    header_allowed = True
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if not header_allowed:
                    raise FlmChangeError(f"{path}: non-numeric residual on line {i + 1}") from None
            header_allowed = False
    return np.array(values)


def _write_column(path: Path, name: str, values) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name])
        w.writerows([_fmt(v)] for v in values)


def cmd_fit(args) -> int:
    data = load_dataset(args.data)
    fit = gcv_select(data, _basis(args), _lambda_grid(args))
    args.outdir.mkdir(parents=True, exist_ok=True)
    beta_path = args.outdir / "beta.csv"
    with beta_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "beta"])
        for t, b in zip(data.grid, fit.beta_values(data.grid)):
            w.writerow([_fmt(t), _fmt(b)])
    report = {
        "n": data.n,
        "alpha_hat": fit.alpha_hat,
        "lambda": fit.lam,
        "gcv": fit.gcv_score,
        "edf": fit.edf,
        "basis_size": fit.basis.size,
        "degree": fit.basis.degree,
        "penalty_order": fit.basis.penalty_order,
        "beta_csv": str(beta_path),
    }
    if args.residuals_out is not None:
        _write_column(args.residuals_out, "residual", residuals(fit, data))
        report["residuals_csv"] = str(args.residuals_out)
    print(json.dumps(report, indent=2))
    return 0


def cmd_test(args) -> int:
    kind = StatisticKind(args.kind)
    if args.residuals is not None:
        res = read_residuals(args.residuals)
    else:
        data = load_dataset(args.data)
        fit = gcv_select(data, _basis(args), _lambda_grid(args))
        log.info("fitted lambda=%g edf=%.3f", fit.lam, fit.edf)
        res = residuals(fit, data)
    sample = ResidualSample.from_values(res)
    result = run_test(sample, kind, args.level, _table_for(args, kind))
    table = seq_process(sample)
    args.outdir.mkdir(parents=True, exist_ok=True)
    with (args.outdir / "process.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "sup_abs", "cvm"])
        for t, d, c in zip(table.t, table.sup_abs, table.cvm):
            w.writerow([_fmt(t), _fmt(d), _fmt(c)])
    print(result.verdict_line())
    return 0


def cmd_critval(args) -> int:
    seed = limits.DEFAULT_SEED if args.seed is None else args.seed
    if any(not 0 < a < 1 for a in args.levels):
        raise FlmChangeError("levels must lie in (0, 1)")
    tables = limits.simulate_tucked_sheet_functionals(
        args.grid, args.reps, seed, levels=tuple(args.levels)
    )
    args.outdir.mkdir(parents=True, exist_ok=True)
    with (args.outdir / "critical_values.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "level", "quantile", "M", "R", "seed"])
        for kind, table in tables.items():
            path = args.outdir / limits.table_filename(kind, args.grid, args.reps, seed)
            limits.save_table(table, path)
            log.info("wrote %s", path)
            for a, q in table.quantiles.items():
                w.writerow([kind.value, f"{a:g}", _fmt(q), args.grid, args.reps, seed])
                print(f"{kind.value} {a:g} {q:.6f}")
    return 0


def _write_rows(rows, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_ROW_FIELDS)
        for r in rows:
            w.writerow(
                [
                    r.family.value,
                    f"{r.delta:.6g}",
                    r.n,
                    r.repetitions,
                    f"{r.level:g}",
                    r.statistic_kind.value,
                    r.rejections,
                    r.failures,
                    f"{r.rate:.6f}",
                    f"{r.mc_se:.6f}",
                    f"{r.theta_mean:.6f}",
                    f"{r.theta_median:.6f}",
                ]
            )


def _read_rows(path: Path) -> list[RejectionRow]:
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            empty = np.empty(0)
            rows.append(
                RejectionRow(
                    family=ErrorFamily.parse(rec["family"]),
                    delta=float(rec["delta"]),
                    n=int(rec["n"]),
                    repetitions=int(rec["repetitions"]),
                    level=float(rec["level"]),
                    statistic_kind=StatisticKind.parse(rec["statistic_kind"]),
                    rejections=int(rec["rejections"]),
                    failures=int(rec["failures"]),
                    theta_mean=float(rec["theta_mean"]),
                    theta_median=float(rec["theta_median"]),
                    statistics=empty,
                    p_values=empty,
                    theta_hats=empty,
                )
            )
    return rows


def cmd_simulate(args) -> int:
    kind = StatisticKind(args.kind)
    table = _table_for(args, kind)
    seed = 0 if args.seed is None else args.seed
    basis = _basis(args)
    lam = tuple(_lambda_grid(args))
    rows = []
    for n in args.n:
        for delta in args.delta:
            cfg = SimConfig(
                n=n,
                error_spec=ErrorSpec(args.family, delta),
                seed=seed,
                grid_points=args.grid_points,
                repetitions=args.reps,
                level=args.level,
                statistic_kind=kind,
                basis=basis,
                lambda_grid=lam,
            )
            row = run_experiment(cfg, table)
            log.info("n=%d delta=%g rate=%.4f", n, delta, row.rate)
            rows.append(row)
    args.outdir.mkdir(parents=True, exist_ok=True)
    stem = args.outdir / f"rejection_{args.family}"
    _write_rows(rows, args.outdir / f"results_{args.family}.csv")
    csv_path, svg_path = emit_figure_data(rows, stem)
    for r in rows:
        print(f"{r.family.value} n={r.n} delta={r.delta:g} rate={r.rate:.4f} se={r.mc_se:.4f}")
    log.info("wrote %s and %s", csv_path, svg_path)
    return 0


def cmd_plot(args) -> int:
    rows = _read_rows(args.results)
    if not rows:
        raise FlmChangeError(f"{args.results}: no result rows")
    stem = args.outdir / f"rejection_{rows[0].family.value}"
    csv_path, svg_path = emit_figure_data(rows, stem)
    print(f"{csv_path}\n{svg_path}")
    return 0


_COMMANDS = {
    "fit": cmd_fit,
    "test": cmd_test,
    "critval": cmd_critval,
    "simulate": cmd_simulate,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    """Entry point; returns 0 on success, 1 on runtime failure, 2 on usage error."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _COMMANDS[args.verb](args)
    except (FlmChangeError, OSError, ValueError) as exc:
        print(f"flmchange {args.verb}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Batch command-line interface.

Subcommands: ``backtest`` (full pipeline), ``calibrate`` (split calibration
summary only), ``sequential`` (sequential conformal over the test stream),
``synth`` (emit a synthetic wide CSV), ``validate-data`` (ingestion checks).

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric or calibration
failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .backtest import BacktestConfig, BacktestReport, SplitSpec, WindowScheme, run_backtest
from .data_io import (
    SEXES,
    SynthSpec,
    load_hmd,
    load_wide_csv,
    synth_generate,
    to_functional_series,
    write_report,
    write_wide_csv,
)
from .exceptions import (
    AlignmentError,
    ConformalFtsError,
    ImputationError,
    InvalidInputError,
    ParseError,
    SchemaError,
)
from .series import FunctionalSeries
from .split_conformal import STAT_KINDS

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_DATA_ERRORS = (ParseError, SchemaError, ImputationError, AlignmentError, OSError)


def _parse_split(text: str) -> SplitSpec | None:
    if text == "auto":
        return None
    try:
        parts = [tuple(int(y) for y in rng.split(":")) for rng in text.split(",")]
        if len(parts) != 3 or any(len(p) != 2 for p in parts):
            raise ValueError
    except ValueError:
        raise InvalidInputError(f"bad --split value {text!r}; expected Y1:Y2,Y3:Y4,Y5:Y6 or auto")
    return SplitSpec(parts[0], parts[1], parts[2])


def _parse_k(text: str):
    if text == "evr":
        return "evr"
    try:
        return int(text)
    except ValueError:
        raise InvalidInputError(f"bad --k value {text!r}; expected 'evr' or an integer")


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="HMD 1x1 rates file or wide CSV")
    p.add_argument("--sex", choices=SEXES, default="total")
    p.add_argument("--log-input", action="store_true",
                   help="wide CSV values are already natural-log rates")
    p.add_argument("--top-age", type=int, default=100, help="closing age group (HMD input)")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stat", choices=STAT_KINDS, default="sd")
    p.add_argument("--alpha", type=float, action="append", default=None,
                   help="significance level; repeatable (default 0.2)")
    p.add_argument("--scheme", choices=("expanding", "rolling"), default="expanding")
    p.add_argument("--window-length", type=int, default=None,
                   help="rolling window length (default: initial train length)")
    p.add_argument("--k", type=str, default="evr", help="'evr' or a fixed component count")
    p.add_argument("--tau", type=float, default=1e-3, help="EVR threshold")
    p.add_argument("--split", type=str, default="auto",
                   help="'Y1:Y2,Y3:Y4,Y5:Y6' year ranges or 'auto' (60/20/20)")
    p.add_argument("--tuning", choices=("single", "double"), default="single")
    p.add_argument("--isotonic", action="store_true",
                   help="smooth calibrated multipliers to be nondecreasing in h")
    p.add_argument("--max-horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=0, help="echoed into the config")
    p.add_argument("--out", type=str, default="out", help="report output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conformal-fts",
                                     description="Conformal prediction intervals for "
                                                 "functional time series of log mortality rates")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, desc in (("backtest", "run the full pipeline and write report files"),
                       ("calibrate", "split-conformal calibration summary only"),
                       ("sequential", "sequential conformal prediction over the test stream")):
        p = sub.add_parser(name, help=desc)
        _add_data_args(p)
        _add_model_args(p)
        if name == "backtest":
            p.add_argument("--method", choices=("split", "sequential"), default="split")

    p = sub.add_parser("synth", help="emit a synthetic wide CSV of log rates")
    p.add_argument("--n-years", type=int, default=100)
    p.add_argument("--n-ages", type=int, default=50)
    p.add_argument("--k-true", type=int, default=3)
    p.add_argument("--noise-sd", type=float, default=SynthSpec().noise_sd)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True, help="output CSV path")

    p = sub.add_parser("validate-data", help="ingestion checks only")
    _add_data_args(p)
    return parser


def _load_series(args) -> FunctionalSeries:
    with open(args.input, "r", encoding="utf-8") as fh:
        first = fh.readline()
    if first.split(",")[0].strip().lower() == "year" and "," in first:
        return load_wide_csv(args.input, log_input=args.log_input)
    return to_functional_series(load_hmd(args.input), sex=args.sex, top_age=args.top_age)


def _config_from_args(args, method: str) -> BacktestConfig:
    return BacktestConfig(
        method=method,
        stat_kind=args.stat,
        alphas=tuple(args.alpha) if args.alpha else (0.2,),
        scheme=WindowScheme(args.scheme, args.window_length),
        k=_parse_k(args.k),
        tau=args.tau,
        split=_parse_split(args.split),
        tuning=args.tuning,
        isotonic=args.isotonic,
        max_horizon=args.max_horizon,
        sex=args.sex,
    )


def _print_calibration(report: BacktestReport) -> None:
    for alpha, cal in sorted(report.calibrations.items()):
        print(f"alpha={alpha:g} stat={cal.stat_kind} tuning={cal.tuning}")
        header = "  h   gamma_min  gamma_med  gamma_max"
        header += "   xi_lo      xi_hi" if cal.tuning == "double" else "   xi"
        print(header)
        for h in cal.horizons:
            g = cal.scales[h].gamma
            line = f"  {h:<3d} {g.min():<10.4g} {np.median(g):<10.4g} {g.max():<10.4g}"
            if cal.tuning == "double":
                line += f" {cal.xi_lo[h]:<10.4g} {cal.xi_hi[h]:<10.4g}"
            else:
                line += f" {cal.xi_hi[h]:<10.4g}"
            print(line)
        for h, msg in sorted(cal.failures.items()):
            print(f"  h={h}: not calibrable ({msg})")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.command == "synth":
            spec = SynthSpec(n_years=args.n_years, n_ages=args.n_ages,
                             k_true=args.k_true, noise_sd=args.noise_sd, seed=args.seed)
            write_wide_csv(synth_generate(spec), args.out)
            print(f"wrote {args.out}")
            return EXIT_OK

        if args.command == "validate-data":
            series = _load_series(args)
            print(f"ok: {series.n_years} years {series.first_year}-{series.last_year}, "
                  f"{series.n_ages} ages {series.grid.ages[0]:g}-{series.grid.ages[-1]:g}")
            return EXIT_OK

        series = _load_series(args)
        method = getattr(args, "method", "split")
        if args.command == "sequential":
            method = "sequential"
        cfg = _config_from_args(args, method if args.command != "calibrate" else "split")
        report = run_backtest(series, cfg)
        report.config["seed"] = args.seed
        report.config["input"] = args.input

        # a run where every horizon failed to calibrate is a numeric failure,
        # even though partial reports are still written for inspection
        all_failed = not report.rows

        if args.command == "calibrate":
            _print_calibration(report)
            return EXIT_NUMERIC if all_failed else EXIT_OK
        files = write_report(report, args.out)
        for f in files:
            print(f"wrote {f}")
        if report.failures:
            for msg in report.failures:
                print(f"warning: {msg}", file=sys.stderr)
        return EXIT_NUMERIC if all_failed else EXIT_OK

    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConformalFtsError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

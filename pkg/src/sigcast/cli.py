"""Command-line entry point: ``sigcast {sig,simulate,nowcast,baseline-ar1}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path as FsPath

import pandas as pd

from . import __version__
from .pathbuild import FILL_METHODS, TimeSeriesFrame, build_path, read_wide_csv
from .pipeline import (
    THREADS_ENV,
    evaluate,
    load_config,
    run_ar1_baseline,
    run_nowcast,
    split_periods,
    write_run,
    write_table,
)
from .sigcore import KEEP_MODES, filter_terms, signature, word_label
from .simlab import REGIMES, SimConfig, run_regime

logger = logging.getLogger("sigcast")


class CliError(Exception):
    pass


def _read_csv(path) -> pd.DataFrame:
    if not FsPath(path).is_file():
        raise CliError(f"input file not found: {path}")
    try:
        return read_wide_csv(path)
    except (ValueError, pd.errors.ParserError) as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc


def cmd_sig(args) -> int:
    df = _read_csv(args.input)
    if args.keep != "all" and not args.time_augment:
        raise CliError(f"--keep {args.keep} needs --time-augment (words are defined relative to time)")
    path = build_path(df, args.fill, time_augment=args.time_augment, basepoint=args.basepoint)
    sig = signature(path, args.level)
    t_level = args.t_level
    if t_level is not None and t_level > args.level:
        raise CliError(f"--t-level {t_level} exceeds --level {args.level}")
    values, retained = filter_terms(sig, args.keep, 0 if args.time_augment else None, t_level)
    table = pd.DataFrame({"word": [word_label(w, path.names) for w in retained],
                          "coefficient": values})
    if args.out:
        table.to_csv(args.out, index=False, float_format="%.12g")
    else:
        table.to_csv(sys.stdout, index=False, float_format="%.12g")
    return 0


def cmd_simulate(args) -> int:
    n = args.paths
    if n < 4:
        raise CliError("--paths must be at least 4")
    # keep at least 3 test paths so the residual regression is defined
    n_train = min(int(round(0.8 * n)), n - 3)
    config = SimConfig.for_regime(args.regime, seed=args.seed, n_paths=n, n_train=n_train)
    report = run_regime(config, args.regime)
    if args.out:
        report.write(args.out)
    line = report.headline()
    if report.low_sample:
        line += " [low-sample]"
    print(line)
    return 0


def _frame_for(config, data_path) -> TimeSeriesFrame:
    df = _read_csv(data_path)
    if config.target not in df.columns:
        raise CliError(f"target: column {config.target!r} not in {data_path}")
    return TimeSeriesFrame(df, config.target, config.target_lag)


def cmd_nowcast(args) -> int:
    config = load_config(args.config)
    frame = _frame_for(config, args.data)
    run = run_nowcast(frame, config, n_jobs=args.jobs)
    baseline = run_ar1_baseline(frame, pd.Index(run.table["time"]))
    report = write_run(run, args.out, baseline)
    write_table(baseline, FsPath(args.out) / "baseline_ar1.csv")
    ar1 = report["baseline_ar1"]["rmse"]
    print(f"nowcast: rmse={report['rmse']:.6g} mae={report['mae']:.6g} n={report['n']} "
          f"ar1_rmse={ar1:.6g} params={report['params_hash']}")
    return 0


def cmd_baseline(args) -> int:
    if args.config:
        config = load_config(args.config)
        frame = _frame_for(config, args.data)
        _, times = split_periods(frame, config)
    else:
        if not args.target:
            raise CliError("give --target (or --config)")
        df = _read_csv(args.data)
        if args.target not in df.columns:
            raise CliError(f"target: column {args.target!r} not in {args.data}")
        frame = TimeSeriesFrame(df, args.target, args.target_lag)
        n_tv = int(round(args.training_proportion * len(frame.index)))
        times = frame.index[n_tv:]
    table = run_ar1_baseline(frame, times)
    ev = evaluate(table)
    out = FsPath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table(table, out / "nowcasts.csv")
    ev["profile"].to_csv(out / "error_by_days.csv", index=False, float_format="%.10g")
    with open(out / "evaluation.json", "w", encoding="utf-8") as fh:
        json.dump({k: v for k, v in ev.items() if k != "profile"}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"baseline-ar1: rmse={ev['rmse']:.6g} mae={ev['mae']:.6g} n={ev['n']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sigcast", description="Signature-based nowcasting tools.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sig", help="signature terms of a CSV path")
    s.add_argument("--input", required=True)
    s.add_argument("--level", type=int, required=True)
    s.add_argument("--t-level", type=int, default=None)
    s.add_argument("--keep", choices=KEEP_MODES, default="all")
    s.add_argument("--time-augment", action="store_true")
    s.add_argument("--basepoint", action="store_true")
    s.add_argument("--fill", choices=FILL_METHODS, default="ffill")
    s.add_argument("--out", default=None, help="output CSV (default: stdout)")
    s.set_defaults(func=cmd_sig)

    s = sub.add_parser("simulate", help="run a simulation regime")
    s.add_argument("--regime", choices=REGIMES, default="regular")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--paths", type=int, default=1000)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("nowcast", help="run the nowcasting pipeline from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=None,
                   help=f"parallel grid points (default: ${THREADS_ENV} or 1)")
    s.set_defaults(func=cmd_nowcast)

    s = sub.add_parser("baseline-ar1", help="AR(1) baseline on the target series")
    s.add_argument("--data", required=True)
    s.add_argument("--target", default=None)
    s.add_argument("--target-lag", type=float, default=0.0)
    s.add_argument("--training-proportion", type=float, default=0.8)
    s.add_argument("--config", default=None, help="take target, lag and test period from a config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_baseline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, RuntimeError, KeyError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"sigcast {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

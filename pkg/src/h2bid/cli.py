"""Command line entry point: ``h2bid run | compare | synth``."""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .expost import DaySolveError, evaluate_days, variation_model
from .ingest import (ConfigError, DataError, load_archive, load_config, materialize_day, parse_variations)
from .lpformat import write_lp
from .model import ContractViolation, ModelOptions
from .report import (ReportMismatchError, build_report, compare_reports, file_digest, load_report,
                     write_outputs)
from .solver import SimplexStall, SolverUnavailableError, available_backends
from .synthetic import REGIMES, write_synthetic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4

log = logging.getLogger("h2bid")


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="h2bid", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="bid, replay and settle every day in the configured range")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--variation", action="append", choices=["noas", "oracle", "a0", "a1", "all"],
                     help="repeatable; default from the config file")
    run.add_argument("--from", dest="start", type=_date)
    run.add_argument("--to", dest="end", type=_date)
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--keep-going", action="store_true", help="continue past days whose solve fails")
    run.add_argument("--out-dir", type=Path)
    run.add_argument("--strict-paper", action="store_true",
                     help="drop the scheduled-demand and scheduled-storage rows")
    run.add_argument("--dump-lp", action="store_true", help="write every day model as an LP file")
    run.add_argument("--timestamp", help=argparse.SUPPRESS)

    cmp_ = sub.add_parser("compare", help="ratio and difference tables across run reports")
    cmp_.add_argument("reports", nargs="+", type=Path)
    cmp_.add_argument("--out", type=Path, help="also write the tables as CSV")

    syn = sub.add_parser("synth", help="write a synthetic archive and a matching config")
    syn.add_argument("out_dir", type=Path)
    syn.add_argument("--start", type=_date, default=dt.date(2022, 1, 1))
    syn.add_argument("--days", type=int, default=90)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--regime", choices=REGIMES, default="high-fcr")
    syn.add_argument("--backend", choices=available_backends(), default="highs")
    return parser


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.variation:
            cfg = replace(cfg, variations=parse_variations(args.variation))
        if args.start:
            cfg = replace(cfg, start=args.start)
        if args.end:
            cfg = replace(cfg, end=args.end)
        if args.out_dir:
            cfg = replace(cfg, out_dir=args.out_dir)
        if args.strict_paper:
            cfg = replace(cfg, model=replace(ModelOptions.strict_paper(),
                                             verbatim_upward_headroom=cfg.model.verbatim_upward_headroom))
        if cfg.start and cfg.end and cfg.start > cfg.end:
            raise ConfigError("empty date range: --from is after --to")
        if cfg.solver.backend not in available_backends():
            raise SolverUnavailableError(f"solver backend {cfg.solver.backend!r} is not available")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
    except (ConfigError, SolverUnavailableError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        archive = load_archive(cfg.prices_path, cfg.fcr_path, cfg.zone)
        dates = archive.between(cfg.start, cfg.end)
        if not dates:
            raise DataError("no usable dates in the selected range")
        days = [materialize_day(archive, cfg, d) for d in dates]
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA

    if args.dump_lp:
        lp_dir = Path(cfg.out_dir) / "lp"
        lp_dir.mkdir(parents=True, exist_ok=True)
        for inst, day in days:
            for v in cfg.variations:
                write_lp(variation_model(v, inst, day, cfg.model), lp_dir / f"{inst.label}_{v.value}.lp")

    log.info("solving %d days x %d variations", len(days), len(cfg.variations))
    try:
        outcomes = evaluate_days(days, list(cfg.variations), cfg.solver, cfg.model, args.threads, args.keep_going)
    except (DaySolveError, ContractViolation, SimplexStall) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    provenance = {
        "config_hash": cfg.config_hash(),
        "config": cfg.describe(),
        "data_files": [{"name": p.name, "sha256": file_digest(p)} for p in cfg.data_files()],
        "rejected_dates": {d.isoformat(): why for d, why in archive.rejected.items()},
        "warnings": list(archive.warnings),
    }
    report = build_report(outcomes, list(cfg.variations), provenance, cfg.market.fcr_block_hours, args.timestamp)
    paths = write_outputs(report, cfg.out_dir)
    failed = [o for o in outcomes if o.result is None]
    for o in failed:
        print(f"solver failure: {o.error}", file=sys.stderr)
    print(f"wrote {paths['report.json']}")
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_compare(args) -> int:
    if len(args.reports) < 2:
        print("compare needs at least two reports", file=sys.stderr)
        return EXIT_CONFIG
    try:
        reports = [load_report(p) for p in args.reports]
        tables = compare_reports(reports, [str(p) for p in args.reports])
    except (OSError, ValueError, KeyError) as exc:
        kind = "data error" if isinstance(exc, (ReportMismatchError, OSError)) else "bad report"
        print(f"{kind}: {exc}", file=sys.stderr)
        return EXIT_DATA
    for name, rows in tables.items():
        print(f"# {name}")
        if rows:
            fields = list(rows[0])
            print(",".join(fields))
            for r in rows:
                print(",".join("" if r[k] is None else (f"{r[k]:.6g}" if isinstance(r[k], float) else str(r[k]))
                               for k in fields))
    if args.out:
        fields = ["table"]
        for rows in tables.values():
            for r in rows:
                fields += [k for k in r if k not in fields]
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            for name, rows in tables.items():
                w.writerows({"table": name, **r} for r in rows)
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.days < 1:
        print("--days must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    path = write_synthetic(args.out_dir, args.start, args.days, args.seed, args.regime, args.backend)
    print(f"wrote {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "compare": cmd_compare, "synth": cmd_synth}[args.command]
    return handler(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

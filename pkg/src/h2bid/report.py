"""Run reports: JSON summary, per-day CSV and plot-ready series."""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
from pathlib import Path

from . import __version__
from .expost import DayOutcome, Variation

REPORT_SCHEMA_VERSION = 1
# the only field allowed to differ between identical runs
TIMESTAMP_FIELD = "generated_at"

COMPONENTS = ("hydrogen_revenue", "fcr_revenue", "mfrr_revenue", "da_cost", "activation_settlement")
DAY_FIELDS = ("date", "variation", "status", "total_profit") + COMPONENTS + (
    "hydrogen_kg", "unmet_demand_kg", "curtailed_kg", "activated_hours", "physical_violation_hours",
    "fcr_capacity_mwh", "mfrr_up_capacity_mwh", "mfrr_dn_capacity_mwh", "day_ahead_objective", "error")
SUMMED = ("total_profit",) + COMPONENTS + (
    "hydrogen_kg", "unmet_demand_kg", "curtailed_kg", "activated_hours", "physical_violation_hours",
    "fcr_capacity_mwh", "mfrr_up_capacity_mwh", "mfrr_dn_capacity_mwh")


class ReportMismatchError(ValueError):
    """Reports cover different dates and cannot be compared."""


def day_record(outcome: DayOutcome, fcr_block_hours: int = 4) -> dict:
    rec = {"date": outcome.label, "variation": outcome.variation.value}
    r = outcome.result
    if r is None:
        rec.update({"status": "failed", "error": outcome.error})
        return rec
    b = r.bids
    rec.update({
        "status": "ok",
        "total_profit": r.total,
        **r.components(),
        "hydrogen_kg": float(r.realized_hydrogen.sum()),
        "unmet_demand_kg": r.unmet_demand_kg,
        "curtailed_kg": r.curtailed_kg,
        "activated_hours": r.activated_hours,
        "physical_violation_hours": r.physical_violation_hours,
        "fcr_capacity_mwh": float(b.p_fcr.sum() * fcr_block_hours),
        "mfrr_up_capacity_mwh": float(b.p_mfrr_up.sum()),
        "mfrr_dn_capacity_mwh": float(b.p_mfrr_dn.sum()),
        "day_ahead_objective": r.day_ahead_objective,
        "error": None,
    })
    return rec


def totals(records: list[dict], variations: list[str]) -> dict:
    """Per-variation sums over successful days, accumulated in record order."""
    out = {}
    for v in variations:
        mine = [r for r in records if r["variation"] == v]
        ok = [r for r in mine if r["status"] == "ok"]
        entry = {k: sum(r[k] for r in ok) if ok else 0.0 for k in SUMMED}
        entry["days"] = len(ok)
        entry["failed_days"] = [r["date"] for r in mine if r["status"] != "ok"]
        out[v] = entry
    return out


def build_report(outcomes: list[DayOutcome], variations: list[Variation], provenance: dict,
                 fcr_block_hours: int = 4, timestamp: str | None = None) -> dict:
    records = [day_record(o, fcr_block_hours) for o in outcomes]
    names = [v.value for v in variations]
    dates = sorted({r["date"] for r in records})
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        TIMESTAMP_FIELD: timestamp or dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "h2bid_version": __version__,
        "provenance": provenance,
        "dates": dates,
        "variations": names,
        "totals": totals(records, names),
        "days": records,
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def cumulative_series(report: dict, key: str = "total_profit") -> list[dict]:
    """One row per date, running sum of ``key`` for each variation (failed days add 0)."""
    rows = []
    running = {v: 0.0 for v in report["variations"]}
    by_key = {(r["date"], r["variation"]): r for r in report["days"]}
    for date in report["dates"]:
        row = {"date": date}
        for v in report["variations"]:
            rec = by_key.get((date, v))
            if rec is not None and rec["status"] == "ok":
                running[v] += rec[key]
            row[v] = running[v]
        rows.append(row)
    return rows


def _write_csv(path: Path, fields: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else (repr(row[k]) if isinstance(row[k], float) else row[k]))
                        for k in fields})


def write_outputs(report: dict, out_dir: str | Path) -> dict[str, Path]:
    """report.json, days.csv, cumulative_profit.csv, reserve_capacity.csv, annual_profit.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in
             ("report.json", "days.csv", "cumulative_profit.csv", "reserve_capacity.csv", "annual_profit.csv")}
    paths["report.json"].write_text(dumps_report(report), encoding="utf-8")
    _write_csv(paths["days.csv"], list(DAY_FIELDS), report["days"])
    names = report["variations"]
    _write_csv(paths["cumulative_profit.csv"], ["date"] + names, cumulative_series(report))
    reserve_rows = []
    series = {k: cumulative_series(report, k) for k in
              ("fcr_capacity_mwh", "mfrr_up_capacity_mwh", "mfrr_dn_capacity_mwh")}
    for i, date in enumerate(report["dates"]):
        row = {"date": date}
        for k, rows in series.items():
            for v in names:
                row[f"{v}_{k}"] = rows[i][v]
        reserve_rows.append(row)
    reserve_fields = ["date"] + [f"{v}_{k}" for k in series for v in names]
    _write_csv(paths["reserve_capacity.csv"], reserve_fields, reserve_rows)
    annual = [{"variation": v, **{k: report["totals"][v][k] for k in ("total_profit",) + COMPONENTS}} for v in names]
    _write_csv(paths["annual_profit.csv"], ["variation", "total_profit", *COMPONENTS], annual)
    return paths


def load_report(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def compare_reports(reports: list[dict], labels: list[str]) -> dict[str, list[dict]]:
    """Cross-report ratios against the first report, and within-report ratios against NoAS."""
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    base_dates = reports[0]["dates"]
    for rep, label in zip(reports[1:], labels[1:]):
        if rep["dates"] != base_dates:
            raise ReportMismatchError(f"{label} covers different dates than {labels[0]}")
    across, within = [], []
    for v in reports[0]["variations"]:
        if not all(v in r["totals"] for r in reports):
            continue
        base = reports[0]["totals"][v]["total_profit"]
        for rep, label in zip(reports, labels):
            p = rep["totals"][v]["total_profit"]
            across.append({"variation": v, "report": label, "total_profit": p,
                           "ratio_to_first": _ratio(p, base), "difference_to_first": p - base})
    for rep, label in zip(reports, labels):
        ref = rep["totals"].get(Variation.NO_AS.value)
        if ref is None:
            continue
        for v in rep["variations"]:
            p = rep["totals"][v]["total_profit"]
            within.append({"report": label, "variation": v, "total_profit": p,
                           "ratio_to_NoAS": _ratio(p, ref["total_profit"]),
                           "difference_to_NoAS": p - ref["total_profit"]})
    return {"across": across, "within": within}


def _ratio(a: float, b: float) -> float | None:
    if a == b:
        return 1.0
    return a / b if b != 0 else None


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

"""Price archives from CSV, run configuration from TOML, and day materialization."""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .domain import (CurveSegment, DayInstance, ElectrolyzerSpec, HydrogenContract, MarketStructure,
                     ProductionCurve, TrailerSlot, ValidationError, load_default_curve, validate_instance)
from .expost import RealizedDay, Variation, realized_activation
from .model import ModelOptions
from .solver import Branching, SolverConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

log = logging.getLogger(__name__)

HOURS = 24
BLOCK_HOURS = 4
BLOCKS = HOURS // BLOCK_HOURS
MAX_REJECTED_SHARE = 0.10
CONFIG_SCHEMA_VERSION = 1
DATA_DIR_ENV = "H2BID_DATA_DIR"

HOURLY_REQUIRED = ("date", "hour", "da_price", "mfrr_up_price", "balancing_price", "imbalance")
HOURLY_OPTIONAL = ("mfrr_dn_price", "fcr_price")
FCR_COLUMNS = ("date", "block", "fcr_price")


class DataError(ValueError):
    """Input data cannot be used (malformed cells, too many rejected dates, missing dates)."""


class ConfigError(ValueError):
    """The run configuration is unreadable or inconsistent."""


@dataclass(frozen=True)
class DayPrices:
    da: np.ndarray
    mfrr_up: np.ndarray
    mfrr_dn: np.ndarray
    balancing: np.ndarray
    imbalance: np.ndarray
    fcr: np.ndarray  # one price per block

    def __post_init__(self):
        for name in ("da", "mfrr_up", "mfrr_dn", "balancing", "imbalance", "fcr"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class PriceArchive:
    days: dict[dt.date, DayPrices]
    rejected: dict[dt.date, str] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()
    zone: str = ""

    @property
    def dates(self) -> list[dt.date]:
        return sorted(self.days)

    def between(self, start: dt.date | None = None, end: dt.date | None = None) -> list[dt.date]:
        return [d for d in self.dates if (start is None or d >= start) and (end is None or d <= end)]

    def __getitem__(self, date: dt.date) -> DayPrices:
        try:
            return self.days[date]
        except KeyError:
            raise KeyError(f"date {date.isoformat()} not in archive") from None


def _parse_float(text: str, column: str, lineno: int, path: Path) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DataError(f"{path.name}:{lineno}: malformed number in column {column!r}: {text!r}") from None
    if not np.isfinite(value):
        raise DataError(f"{path.name}:{lineno}: non-finite value in column {column!r}")
    return value


def _parse_int(text: str, column: str, lineno: int, path: Path) -> int:
    value = _parse_float(text, column, lineno, path)
    if value != int(value):
        raise DataError(f"{path.name}:{lineno}: {column} must be an integer, got {text!r}")
    return int(value)


def _parse_date(text: str, lineno: int, path: Path) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"{path.name}:{lineno}: malformed date {text!r}") from None


def _read_csv(path: Path, required: tuple[str, ...]) -> tuple[list[str], list[tuple[int, dict]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path.name}: missing columns {', '.join(missing)}")
        reader.fieldnames = header
        rows = [(reader.line_num, {k: (v or "").strip() for k, v in row.items() if k is not None})
                for row in reader]
    return header, rows


def load_archive(path: str | Path, fcr_path: str | Path | None = None, zone: str = "",
                 max_rejected_share: float = MAX_REJECTED_SHARE) -> PriceArchive:
    """Read hourly prices (and optionally a block-level FCR file) into an archive.

    A date is kept only if it has every hour 0-23 exactly once and one FCR
    price per 4-hour block; otherwise it is rejected whole with a reason.
    """
    path = Path(path)
    header, rows = _read_csv(path, HOURLY_REQUIRED)
    warnings: list[str] = []
    has_dn = "mfrr_dn_price" in header
    if not has_dn:
        msg = f"{path.name}: no mfrr_dn_price column, downward mFRR prices set to 0"
        warnings.append(msg)
        log.warning(msg)
    hourly_fcr = "fcr_price" in header
    if not hourly_fcr and fcr_path is None:
        raise DataError(f"{path.name}: no fcr_price column and no FCR block file given")

    reasons: dict[dt.date, str] = {}
    by_date: dict[dt.date, dict[int, tuple]] = {}
    counts: dict[dt.date, int] = {}
    for lineno, row in rows:
        date = _parse_date(row["date"], lineno, path)
        counts[date] = counts.get(date, 0) + 1
        hour = _parse_int(row["hour"], "hour", lineno, path)
        values = tuple(_parse_float(row[c], c, lineno, path)
                       for c in ("da_price", "mfrr_up_price", "balancing_price", "imbalance"))
        dn = _parse_float(row["mfrr_dn_price"], "mfrr_dn_price", lineno, path) if has_dn else 0.0
        fcr = _parse_float(row["fcr_price"], "fcr_price", lineno, path) if hourly_fcr else np.nan
        day = by_date.setdefault(date, {})
        if not 0 <= hour < HOURS:
            reasons.setdefault(date, f"invalid hour {hour}")
            continue
        if hour in day:
            reasons.setdefault(date, f"duplicate hour {hour}")
            continue
        day[hour] = values + (dn, fcr)

    fcr_blocks: dict[dt.date, dict[int, float]] = {}
    if fcr_path is not None:
        fcr_path = Path(fcr_path)
        _, frows = _read_csv(fcr_path, FCR_COLUMNS)
        for lineno, row in frows:
            date = _parse_date(row["date"], lineno, fcr_path)
            block = _parse_int(row["block"], "block", lineno, fcr_path)
            price = _parse_float(row["fcr_price"], "fcr_price", lineno, fcr_path)
            blocks = fcr_blocks.setdefault(date, {})
            if not 0 <= block < BLOCKS:
                reasons.setdefault(date, f"invalid block {block}")
            elif block in blocks:
                reasons.setdefault(date, f"duplicate block {block}")
            else:
                blocks[block] = price

    for date, n in counts.items():
        if n in (HOURS - 1, HOURS + 1):
            reasons[date] = f"daylight-saving day: {n} hourly rows, expected {HOURS}"

    days: dict[dt.date, DayPrices] = {}
    for date in sorted(set(by_date) | set(fcr_blocks)):
        if date in reasons:
            continue
        hours = by_date.get(date, {})
        if len(hours) != HOURS:
            reasons[date] = f"incomplete day: {len(hours)} hourly rows, expected {HOURS}"
            continue
        table = np.array([hours[h] for h in range(HOURS)])
        if fcr_path is not None:
            blocks = fcr_blocks.get(date, {})
            if len(blocks) != BLOCKS:
                reasons[date] = f"missing FCR blocks: {len(blocks)} of {BLOCKS} present"
                continue
            fcr = np.array([blocks[b] for b in range(BLOCKS)])
        else:
            per_block = table[:, 5].reshape(BLOCKS, BLOCK_HOURS)
            if np.any(per_block != per_block[:, :1]):
                bad = int(np.flatnonzero(np.any(per_block != per_block[:, :1], axis=1))[0])
                reasons[date] = f"hourly FCR prices differ within block {bad}"
                continue
            fcr = per_block[:, 0]
        days[date] = DayPrices(table[:, 0], table[:, 1], table[:, 4], table[:, 2], table[:, 3], fcr)

    total = len(days) + len(reasons)
    for date, why in sorted(reasons.items()):
        log.warning("rejected %s: %s", date.isoformat(), why)
    if total and len(reasons) / total > max_rejected_share:
        raise DataError(f"{len(reasons)} of {total} dates rejected (limit {max_rejected_share:.0%}); "
                        f"first: {min(reasons).isoformat()} {reasons[min(reasons)]}")
    return PriceArchive(days, dict(sorted(reasons.items())), tuple(warnings), zone)


def write_archive(archive: PriceArchive, path: str | Path, fcr_path: str | Path) -> None:
    """Write an archive back as hourly and block CSV files (shortest round-trip floats)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "hour", "da_price", "mfrr_up_price", "mfrr_dn_price", "balancing_price", "imbalance"])
        for date in archive.dates:
            p = archive.days[date]
            for h in range(HOURS):
                w.writerow([date.isoformat(), h, repr(float(p.da[h])), repr(float(p.mfrr_up[h])),
                            repr(float(p.mfrr_dn[h])), repr(float(p.balancing[h])), repr(float(p.imbalance[h]))])
    with open(fcr_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FCR_COLUMNS)
        for date in archive.dates:
            for b, price in enumerate(archive.days[date].fcr):
                w.writerow([date.isoformat(), b, repr(float(price))])


# ----------------------------------------------------------------------------- configuration


@dataclass(frozen=True)
class RunConfig:
    prices_path: Path
    fcr_path: Path | None
    spec: ElectrolyzerSpec
    contract: HydrogenContract
    market: MarketStructure
    solver: SolverConfig
    model: ModelOptions
    variations: tuple[Variation, ...]
    start: dt.date | None = None
    end: dt.date | None = None
    out_dir: Path = Path("out")
    zone: str = ""
    source: Path | None = None

    def describe(self) -> dict:
        """Everything that can change reported numbers, as plain JSON-able data."""
        solver = {k: getattr(self.solver, k) for k in
                  ("gap_tol", "int_tol", "feas_tol", "node_limit", "time_limit", "backend")}
        solver["branching"] = self.solver.branching.value
        return {
            "spec": {
                "capacity_mw": self.spec.capacity_ce, "min_load_mw": self.spec.min_load_e,
                "standby_power_mw": self.spec.standby_power, "min_down_time_h": self.spec.min_down_time,
                "mean_efficiency_kg_per_mwh": self.spec.mean_efficiency,
                "curve": self.spec.curve.to_dict(),
            },
            "contract": {
                "hydrogen_price": self.contract.price_h, "min_daily_demand_kg": self.contract.min_daily_demand,
                "dispenser_capacity_kg_h": self.contract.dispenser_capacity,
                "trailers": [{"capacity_kg": t.capacity_sd, "availability": t.availability.astype(int).tolist()}
                             for t in self.contract.trailers],
            },
            "market": asdict(self.market),
            "solver": solver,
            "model": asdict(self.model),
            "variations": [v.value for v in self.variations],
            "start": self.start.isoformat() if self.start else None,
            "end": self.end.isoformat() if self.end else None,
            "zone": self.zone,
        }

    def data_files(self) -> list[Path]:
        return [p for p in (self.prices_path, self.fcr_path) if p is not None]

    def config_hash(self) -> str:
        """SHA-256 over the result-relevant settings and the bytes of every data file."""
        h = hashlib.sha256(json.dumps(self.describe(), sort_keys=True).encode())
        for p in self.data_files():
            h.update(p.name.encode())
            h.update(hashlib.sha256(p.read_bytes()).digest())
        return h.hexdigest()


def _table(doc: dict, key: str) -> dict:
    value = doc.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{key}] must be a table")
    return value


def _date(value, key: str) -> dt.date | None:
    if value is None:
        return None
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise ConfigError(f"{key}: not an ISO date: {value!r}") from None


def scaled_default_curve(capacity: float) -> ProductionCurve:
    """The bundled 10 MW curve stretched to ``capacity`` (same efficiency at every load fraction)."""
    base, _ = load_default_curve()
    k = capacity / base.p_max
    return ProductionCurve(tuple(CurveSegment(s.p_min * k, s.p_max * k, s.slope_a, s.intercept_b * k)
                                 for s in base.segments))


def _spec(table: dict) -> ElectrolyzerSpec:
    default = ElectrolyzerSpec.default()
    capacity = float(table.get("capacity_mw", default.capacity_ce))
    if "segments" in table:
        try:
            curve = ProductionCurve(tuple(CurveSegment(float(s["p_min"]), float(s["p_max"]), float(s["slope"]),
                                                       float(s["intercept"])) for s in table["segments"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"[electrolyzer] segments: {exc}") from exc
    elif capacity == default.capacity_ce:
        curve = default.curve
    else:
        curve = scaled_default_curve(capacity)
    spec = ElectrolyzerSpec(
        capacity_ce=capacity,
        min_load_e=float(table.get("min_load_mw", curve.p_min)),
        standby_power=float(table.get("standby_power_mw", default.standby_power * capacity / default.capacity_ce)),
        curve=curve,
        min_down_time=int(table.get("min_down_time_h", default.min_down_time)),
        mean_efficiency=float(table.get("mean_efficiency_kg_per_mwh", default.mean_efficiency)),
    )
    problems = spec.problems()
    if problems:
        raise ConfigError("[electrolyzer] " + "; ".join(problems))
    return spec


def _trailers(entries, hours: int) -> tuple[TrailerSlot, ...]:
    out = []
    for k, e in enumerate(entries):
        if not isinstance(e, dict) or "capacity_kg" not in e:
            raise ConfigError(f"[[contract.trailers]] entry {k} needs capacity_kg")
        start, stop = int(e.get("from_hour", 0)), int(e.get("to_hour", hours))
        if not 0 <= start < stop <= hours:
            raise ConfigError(f"[[contract.trailers]] entry {k}: window must satisfy 0 <= from_hour < to_hour <= {hours}")
        avail = np.zeros(hours, dtype=bool)
        avail[start:stop] = True
        out.append(TrailerSlot(float(e["capacity_kg"]), avail))
    return tuple(out)


def resolve_data_path(value: str, base: Path) -> Path:
    """Relative paths resolve against ``$H2BID_DATA_DIR`` when set, else against ``base``."""
    p = Path(os.path.expandvars(str(value))).expanduser()
    if p.is_absolute():
        return p
    root = os.environ.get(DATA_DIR_ENV)
    return (Path(root) if root else base) / p


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path.name}: {exc}") from None
    return config_from_dict(doc, path.parent, source=path)


def config_from_dict(doc: dict, base: Path, source: Path | None = None) -> RunConfig:
    version = doc.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {CONFIG_SCHEMA_VERSION}, got {version!r}")
    data, run = _table(doc, "data"), _table(doc, "run")
    if "prices" not in data:
        raise ConfigError("[data] prices is required")
    prices = resolve_data_path(data["prices"], base)
    fcr = resolve_data_path(data["fcr"], base) if data.get("fcr") else None
    for p in (prices, fcr):
        if p is not None and not p.is_file():
            raise ConfigError(f"data file not found: {p}")

    market_t = _table(doc, "market")
    market = MarketStructure(
        fcr_bid_min=float(market_t.get("fcr_bid_min_mw", 0.1)), fcr_bid_max=float(market_t.get("fcr_bid_max_mw", 10.0)),
        mfrr_bid_min=float(market_t.get("mfrr_bid_min_mw", 0.1)),
        mfrr_bid_max=float(market_t.get("mfrr_bid_max_mw", 10.0)),
    )
    if market.problems():
        raise ConfigError("[market] " + "; ".join(market.problems()))
    spec = _spec(_table(doc, "electrolyzer"))
    con_t = _table(doc, "contract")
    trailers = con_t.get("trailers")
    contract = HydrogenContract(
        price_h=float(con_t.get("hydrogen_price", 10.0)),
        min_daily_demand=float(con_t.get("min_daily_demand_kg", 2000.0)),
        dispenser_capacity=float(con_t.get("dispenser_capacity_kg_h", 100.0)),
        trailers=_trailers(trailers, HOURS) if trailers is not None
        else tuple(TrailerSlot.all_day(1100.0, HOURS) for _ in range(3)),
    )
    problems = contract.problems(spec.curve, HOURS)
    if problems:
        raise ConfigError("[contract] " + "; ".join(problems))

    sol_t = _table(doc, "solver")
    try:
        solver = SolverConfig(
            gap_tol=float(sol_t.get("gap_tol", 1e-6)), int_tol=float(sol_t.get("int_tol", 1e-6)),
            feas_tol=float(sol_t.get("feas_tol", 1e-7)), node_limit=int(sol_t.get("node_limit", 1_000_000)),
            time_limit=float(sol_t["time_limit"]) if sol_t.get("time_limit") is not None else None,
            branching=Branching(sol_t.get("branching", "MostFractional")),
            backend=str(sol_t.get("backend", "highs")),
        )
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from None

    model_t = _table(doc, "model")
    model = ModelOptions.strict_paper() if model_t.get("strict_paper") else ModelOptions()
    if "verbatim_upward_headroom" in model_t:
        model = replace(model, verbatim_upward_headroom=bool(model_t["verbatim_upward_headroom"]))

    names = run.get("variations", ["all"])
    try:
        variations = parse_variations(names if isinstance(names, list) else [names])
    except ValueError as exc:
        raise ConfigError(f"[run] {exc}") from None
    start, end = _date(run.get("from"), "run.from"), _date(run.get("to"), "run.to")
    if start and end and start > end:
        raise ConfigError("[run] empty date range: from is after to")
    out_dir = Path(run.get("out_dir", "out"))
    if not out_dir.is_absolute():
        out_dir = base / out_dir
    return RunConfig(prices, fcr, spec, contract, market, solver, model, variations, start, end, out_dir,
                     str(data.get("zone", "")), source)


def parse_variations(names) -> tuple[Variation, ...]:
    out: list[Variation] = []
    for name in names:
        chosen = list(Variation) if str(name).lower() == "all" else [Variation.parse(str(name))]
        out += [v for v in chosen if v not in out]
    if not out:
        raise ValueError("no variation selected")
    return tuple(sorted(out, key=list(Variation).index))


def materialize_day(archive: PriceArchive, config: RunConfig, date: dt.date,
                    variation: Variation | None = None) -> tuple[DayInstance, RealizedDay]:
    """Forecasts equal to the historical prices.

    α is all ones unless ``variation`` asks otherwise; NoAS keeps the template
    because its reserve fixing happens when the model is built.
    """
    p = archive[date]
    label = date.isoformat()
    realized = RealizedDay(p.balancing, p.imbalance < 0, p.da, p.fcr, p.mfrr_up, p.mfrr_dn, label)
    inst = DayInstance(config.spec, config.market, config.contract, p.da, p.fcr, p.mfrr_up, p.mfrr_dn,
                       np.ones(HOURS), np.ones(HOURS), label=label)
    if variation is Variation.ALPHA_ZERO:
        inst = inst.with_alpha(0.0, 0.0)
    elif variation is Variation.ORACLE:
        inst = inst.with_alpha(realized_activation(config.spec, config.contract, realized), 0.0)
    try:
        validate_instance(inst)
    except ValidationError as exc:
        raise DataError(f"{label}: {exc}") from None
    return inst, realized

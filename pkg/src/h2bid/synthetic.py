"""Synthetic market data in the archive CSV schema, for tests and demos.

Prices are rounded to cents so the files look like exchange data. The
``high-fcr`` regime prices FCR capacity well above the day-ahead margin of
hydrogen production; ``low-fcr`` keeps it marginal.
"""
from __future__ import annotations

import csv
import datetime as dt
from pathlib import Path

import numpy as np

REGIMES = ("high-fcr", "low-fcr")
# daily profile of day-ahead prices, morning and evening peaks
_SHAPE = np.array([0.80, 0.76, 0.74, 0.73, 0.75, 0.82, 0.95, 1.10, 1.18, 1.12, 1.05, 1.00,
                   0.97, 0.95, 0.96, 1.00, 1.08, 1.22, 1.28, 1.20, 1.08, 0.98, 0.90, 0.84])


def synthetic_rows(start: dt.date, days: int, seed: int = 0, regime: str = "high-fcr"):
    """Hourly rows and FCR block rows, as lists of dicts with string cells."""
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; choose from {', '.join(REGIMES)}")
    rng = np.random.default_rng(seed)
    high = regime == "high-fcr"
    hourly, blocks = [], []
    for k in range(days):
        date = (start + dt.timedelta(days=k)).isoformat()
        level = rng.normal(150.0 if high else 60.0, 35.0 if high else 15.0)
        da = np.maximum(level * _SHAPE + rng.normal(0.0, 12.0, 24), -20.0)
        up_cap = np.abs(rng.normal(45.0 if high else 6.0, 25.0 if high else 4.0, 24))
        dn_cap = np.abs(rng.normal(2.0, 1.5, 24))
        imbalance = rng.normal(0.0, 120.0, 24)
        deficit = imbalance < 0
        spread = np.abs(rng.normal(0.0, 70.0 if high else 40.0, 24))
        spike = rng.random(24) < 0.08
        balancing = np.where(deficit, da + spread + spike * rng.uniform(100.0, 400.0, 24), da - spread)
        fcr = np.abs(rng.normal(55.0 if high else 12.0, 25.0 if high else 5.0, 6))
        for h in range(24):
            hourly.append({
                "date": date, "hour": str(h),
                "da_price": f"{da[h]:.2f}", "mfrr_up_price": f"{up_cap[h]:.2f}",
                "mfrr_dn_price": f"{dn_cap[h]:.2f}", "balancing_price": f"{balancing[h]:.2f}",
                "imbalance": f"{imbalance[h]:.1f}",
            })
        for b in range(6):
            blocks.append({"date": date, "block": str(b), "fcr_price": f"{fcr[b]:.2f}"})
    return hourly, blocks


def write_synthetic(out_dir: str | Path, start: dt.date, days: int, seed: int = 0,
                    regime: str = "high-fcr", backend: str = "highs") -> Path:
    """Write prices.csv, fcr.csv and a matching config.toml; returns the config path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hourly, blocks = synthetic_rows(start, days, seed, regime)
    for name, rows in (("prices.csv", hourly), ("fcr.csv", blocks)):
        with open(out / name, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    end = start + dt.timedelta(days=days - 1)
    config = out / "config.toml"
    config.write_text(
        "schema_version = 1\n\n"
        "[data]\n"
        'prices = "prices.csv"\n'
        'fcr = "fcr.csv"\n'
        f'zone = "synthetic-{regime}"\n\n'
        "[run]\n"
        f'from = "{start.isoformat()}"\n'
        f'to = "{end.isoformat()}"\n'
        'variations = ["all"]\n'
        'out_dir = "out"\n\n'
        "[solver]\n"
        f'backend = "{backend}"\n',
        encoding="utf-8",
    )
    return config

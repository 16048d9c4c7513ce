"""Regenerate src/h2bid/data/default_curve_v1.json.

Reference model: specific yield peaks at 30 % load (19 kg/MWh) and decays
quadratically, giving ~167 kg/h at full load. Four segments with breakpoints
at 10/30/50/75/100 % of a 10 MW rating, fitted by continuous least squares.
"""
import json
import sys
from pathlib import Path

import numpy as np

from h2bid.domain import evaluate_curve, fit_production_curve, reference_efficiency

CAPACITY = 10.0
BREAKPOINTS = (0.1, 0.3, 0.5, 0.75, 1.0)


def build() -> dict:
    curve = fit_production_curve(CAPACITY, BREAKPOINTS, reference_efficiency())
    grid = np.linspace(curve.p_min, curve.p_max, 1001)
    mean_eff = float(np.mean([evaluate_curve(curve, p) / p for p in grid]))
    return {
        "version": 1,
        "capacity_mw": CAPACITY,
        "standby_power_mw": 0.01 * CAPACITY,
        "min_down_time_h": 2,
        "mean_efficiency_kg_per_mwh": round(mean_eff, 3),
        "fit": {
            "reference": "eta(u) = 19.0 * (1 - 0.25 * (u - 0.3)**2) kg/MWh, u = p / capacity",
            "breakpoint_fractions": list(BREAKPOINTS),
            "samples": 2001,
            "method": "continuous least squares, hinge basis",
        },
        **curve.to_dict(),
    }


if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src/h2bid/data/default_curve_v1.json"
    data = build()
    if "--check" in sys.argv:
        sys.exit(0 if json.loads(out.read_text()) == data else 1)
    out.write_text(json.dumps(data, indent=2) + "\n")
    print(out)

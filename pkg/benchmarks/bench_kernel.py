"""Compare the compiled and pure-Python simplex kernels.

    python3 benchmarks/bench_kernel.py [--hours 8] [--repeat 3]

Both kernels make identical pivot decisions, so node and iteration counts
must match; only wall time differs.
"""
import argparse
import statistics
import sys
import time
from dataclasses import replace

import numpy as np

from h2bid import domain as D
from h2bid.model import build_model
from h2bid.solver import KERNELS, SolverConfig, solve_lp, solve_milp


def instance(hours: int, seed: int) -> D.DayInstance:
    rng = np.random.default_rng(seed)
    blocks = hours // 4
    return D.DayInstance(
        D.ElectrolyzerSpec.default(), D.MarketStructure(hours_per_day=hours), D.default_contract(hours),
        da_prices=rng.uniform(20, 260, hours), fcr_prices=rng.uniform(0, 40, blocks),
        mfrr_up_prices=rng.uniform(0, 45, hours), mfrr_dn_prices=rng.uniform(0, 15, hours),
        alpha_up=np.ones(hours), alpha_dn=np.ones(hours), label=f"bench-{hours}h",
    )


def timed(fn, repeat: int):
    times, result = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), result


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hours", type=int, default=8, help="multiple of 4")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-milp", action="store_true")
    args = ap.parse_args(argv)
    if "compiled" not in KERNELS:
        print("compiled kernel not built; nothing to compare", file=sys.stderr)
        return 1
    inst = instance(args.hours, args.seed)
    # scale demand with the horizon so the instance stays feasible
    inst = replace(inst, contract=replace(inst.contract, min_daily_demand=2000.0 * args.hours / 24))
    model = build_model(inst)
    print(f"model: {model.num_vars} columns, {model.num_rows} rows, {len(model.binaries)} binaries")
    print(f"{'kernel':<10}{'task':<6}{'median s':>10}{'iters/nodes':>13}{'objective':>18}")
    rows = {}
    for name in ("python", "compiled"):
        cfg = SolverConfig(kernel=name)
        t, lp = timed(lambda: solve_lp(model, cfg), args.repeat)
        rows[name, "lp"] = t
        print(f"{name:<10}{'lp':<6}{t:>10.3f}{lp.iterations:>13}{lp.objective:>18.6f}")
        if not args.skip_milp:
            t, mip = timed(lambda: solve_milp(model, cfg), 1)
            rows[name, "milp"] = t
            print(f"{name:<10}{'milp':<6}{t:>10.3f}{mip.nodes:>13}{mip.objective:>18.6f}")
    for task in ("lp", "milp"):
        if ("python", task) in rows:
            print(f"speed-up {task}: {rows['python', task] / rows['compiled', task]:.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Instance builders shared by the test modules."""
from __future__ import annotations

import numpy as np

from h2bid import domain as D
from h2bid.expost import RealizedDay


def two_segment_curve(p_min=2.0, p_mid=6.0, p_max=10.0, a1=18.0, a2=14.0, b1=4.0) -> D.ProductionCurve:
    b2 = a1 * p_mid + b1 - a2 * p_mid  # continuous at p_mid
    return D.ProductionCurve((D.CurveSegment(p_min, p_mid, a1, b1), D.CurveSegment(p_mid, p_max, a2, b2)))


def micro_instance(hours=2, segments=1, seed=0, alpha=1.0, initial_off=False, demand=None,
                   trailer_capacity=None, dispenser=200.0) -> D.DayInstance:
    """Small day: 10 MW stack, one trailer, one FCR block spanning the whole horizon."""
    rng = np.random.default_rng(seed)
    if segments == 1:
        curve = D.ProductionCurve((D.CurveSegment(2.0, 10.0, 17.0, 6.0),))
    else:
        curve = two_segment_curve()
    spec = D.ElectrolyzerSpec(10.0, 2.0, 0.1, curve, 2, 17.6)
    market = D.MarketStructure(hours_per_day=hours, fcr_block_hours=hours)
    cap = trailer_capacity if trailer_capacity is not None else float(rng.uniform(60, 180) * hours)
    need = demand if demand is not None else float(rng.uniform(0.2, 0.8) * cap)
    contract = D.HydrogenContract(10.0, need, dispenser, (D.TrailerSlot.all_day(cap, hours),))
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (hours,))
    return D.DayInstance(
        spec, market, contract,
        da_prices=rng.uniform(20, 230, hours), fcr_prices=rng.uniform(0, 40, 1),
        mfrr_up_prices=rng.uniform(0, 50, hours), mfrr_dn_prices=rng.uniform(0, 20, hours),
        alpha_up=alpha, alpha_dn=alpha, initial_off_state=initial_off, label=f"micro-{seed}",
    )


def day_instance(seed=0, alpha=1.0, fcr_level=25.0, label=None) -> D.DayInstance:
    """Full 24-hour day with the bundled 10 MW stack and the default contract."""
    rng = np.random.default_rng(seed)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (24,))
    return D.DayInstance(
        D.ElectrolyzerSpec.default(), D.MarketStructure(), D.default_contract(),
        da_prices=np.round(rng.uniform(20, 260, 24), 2),
        fcr_prices=np.round(np.abs(rng.normal(fcr_level, 15, 6)), 2),
        mfrr_up_prices=np.round(rng.uniform(0, 45, 24), 2),
        mfrr_dn_prices=np.round(rng.uniform(0, 15, 24), 2),
        alpha_up=alpha, alpha_dn=alpha, label=label or f"day-{seed}",
    )


def realized_day(inst: D.DayInstance, seed=0, activation_share=0.4) -> RealizedDay:
    """Forecast prices realized; balancing prices push roughly ``activation_share`` of hours over the bid."""
    rng = np.random.default_rng(10_000 + seed)
    bid = inst.spec.mean_efficiency * inst.contract.price_h
    hot = rng.random(inst.hours) < activation_share
    balancing = np.where(hot, bid + rng.uniform(0, 200, inst.hours), rng.uniform(0, bid - 1, inst.hours))
    deficit = hot | (rng.random(inst.hours) < 0.3)
    return RealizedDay.from_forecast(inst, np.round(balancing, 2), deficit)


def _reference_point(model):
    """An optimal point from scipy's MILP interface, independent of the package solvers."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    A = model.A
    lo_r = np.where(model.sense == "<=", -np.inf, model.rhs)
    hi_r = np.where(model.sense == ">=", np.inf, model.rhs)
    res = milp(-model.objective, constraints=LinearConstraint(A, lo_r, hi_r),
               integrality=model.integrality.astype(int), bounds=Bounds(model.lo, model.hi))
    return res.x if res.status == 0 else None


def oracle_micro_model(seed, max_free=14):
    """Micro day model (2-4 hours, 1-2 segments, 1 trailer) with at most ``max_free`` free binaries.

    Downward mFRR gates are fixed at 0, then randomly chosen binaries are
    fixed to the values of a reference optimum until few enough remain free.
    """
    from h2bid.model import build_model

    rng = np.random.default_rng(seed)
    hours = int(rng.integers(2, 5))
    segments = int(rng.integers(1, 3))
    inst = micro_instance(hours=hours, segments=segments, seed=seed)
    model = build_model(inst)
    model = model.with_bounds(model.index.block("z_m_dn").ravel(), 0.0, 0.0)
    free = model.free_binaries()
    if len(free) > max_free:
        x = _reference_point(model)
        assert x is not None, "micro instance infeasible"
        pick = rng.choice(free, size=len(free) - max_free, replace=False)
        vals = np.round(x[pick])
        model = model.with_bounds(pick, vals, vals)
    return model


def lp_model(c, A, b, sense="<=", lo=0.0, hi=np.inf, binary=None):
    """Plain maximization model from dense data."""
    from h2bid.model import MilpModel

    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    integ = np.zeros(n, dtype=bool)
    if binary is not None:
        integ[list(binary)] = True
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,)).copy()
    hi[integ] = np.minimum(hi[integ], 1.0)
    sense = [sense] * m if isinstance(sense, str) else list(sense)
    return MilpModel(np.asarray(c, dtype=float), A, sense, np.asarray(b, dtype=float), lo, hi, integ,
                     ["row"] * m)


def random_small_lp(seed):
    """Integer data in [-5, 5], at most 8 columns and 8 rows, origin feasible, bounded by a sum row."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, 7))
    A = rng.integers(-5, 6, (m, n))
    b = rng.integers(0, 21, m)
    A = np.vstack([A, rng.integers(1, 6, n)])
    b = np.append(b, rng.integers(5, 21))
    c = rng.integers(-5, 6, n)
    return c, A, b


def heavy_activation_fixture():
    """A day with rich upward mFRR prices, activated in three of every four hours."""
    from dataclasses import replace

    inst = replace(day_instance(11), mfrr_up_prices=np.round(np.linspace(40, 90, 24), 2), label="heavy")
    deficit = np.arange(24) % 4 != 3
    return inst, RealizedDay.from_forecast(inst, np.full(24, 250.0), deficit)

"""Ex-post evaluation: fix the day-ahead bids, replay the realized activation
and balancing prices, and settle the day."""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .domain import (BidSchedule, DayInstance, DomainError, ElectrolyzerSpec, HydrogenContract, State,
                     ValidationError, evaluate_curve)
from .model import ContractViolation, MilpModel, ModelOptions, build_model, extract_bids
from .solver import LpStatus, MilpSolution, MilpStatus, SolverConfig, solve, solve_lp

# dispatch below this power counts as switched off (MW)
POWER_TOL = 1e-9
# hydrogen that the router cannot place is ignored below this amount (kg)
ROUTING_TOL_KG = 1e-6


class Variation(enum.Enum):
    NO_AS = "NoAS"
    ORACLE = "Oracle"
    ALPHA_ZERO = "AlphaZero"
    ALPHA_ONE = "AlphaOne"

    @classmethod
    def parse(cls, text: str) -> "Variation":
        aliases = {"noas": cls.NO_AS, "oracle": cls.ORACLE, "a0": cls.ALPHA_ZERO, "alphazero": cls.ALPHA_ZERO,
                   "alpha0": cls.ALPHA_ZERO, "a1": cls.ALPHA_ONE, "alphaone": cls.ALPHA_ONE, "alpha1": cls.ALPHA_ONE}
        try:
            return aliases[text.strip().lower().replace("_", "").replace("-", "")]
        except KeyError:
            raise ValueError(f"unknown variation {text!r}") from None


class DaySolveError(RuntimeError):
    """The day-ahead solve of one day did not reach an optimal solution."""

    def __init__(self, label: str, variation: Variation, status: MilpStatus):
        self.label, self.variation, self.status = label, variation, status
        super().__init__(f"day {label or '?'} ({variation.value}): solver status {status.value}")


@dataclass(frozen=True)
class RealizedDay:
    """What actually happened on the delivery day."""

    balancing_prices: np.ndarray
    system_deficit: np.ndarray  # True where the system imbalance was negative
    da_prices: np.ndarray
    fcr_prices: np.ndarray
    mfrr_up_prices: np.ndarray
    mfrr_dn_prices: np.ndarray
    label: str = ""

    def __post_init__(self):
        for name in ("balancing_prices", "da_prices", "fcr_prices", "mfrr_up_prices", "mfrr_dn_prices"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        flags = np.array(self.system_deficit, dtype=bool)
        flags.setflags(write=False)
        object.__setattr__(self, "system_deficit", flags)

    @classmethod
    def from_forecast(cls, inst: DayInstance, balancing_prices, system_deficit) -> "RealizedDay":
        """Realized market prices equal to the instance's forecasts."""
        return cls(balancing_prices, system_deficit, inst.da_prices, inst.fcr_prices,
                   inst.mfrr_up_prices, inst.mfrr_dn_prices, inst.label)

    @property
    def hours(self) -> int:
        return len(self.balancing_prices)

    def problems(self, hours: int = 24, n_blocks: int | None = None) -> list[str]:
        out = []
        for name in ("balancing_prices", "system_deficit", "da_prices", "mfrr_up_prices", "mfrr_dn_prices"):
            if len(getattr(self, name)) != hours:
                out.append(f"{name} must have {hours} entries")
        if n_blocks is not None and len(self.fcr_prices) != n_blocks:
            out.append(f"fcr_prices must have {n_blocks} entries")
        for name in ("balancing_prices", "da_prices", "fcr_prices", "mfrr_up_prices", "mfrr_dn_prices"):
            if not np.all(np.isfinite(getattr(self, name))):
                out.append(f"{name} must be finite")
        return out


@dataclass(frozen=True)
class Redispatch:
    power: np.ndarray  # electrolysis power per hour (MW)
    consumption: np.ndarray  # grid draw per hour, standby included (MW)
    hydrogen: np.ndarray  # produced per hour (kg)
    dispensed: np.ndarray  # (hours, trailers) kg
    delivered: np.ndarray  # per hour, kg
    curtailed_kg: float
    physical_violation_hours: int
    alpha_up: np.ndarray
    alpha_dn: np.ndarray

    @property
    def trailer_fill(self) -> np.ndarray:
        return self.dispensed.sum(axis=0)


@dataclass(frozen=True)
class ExPostResult:
    hydrogen_revenue: float
    fcr_revenue: float
    mfrr_revenue: float
    da_cost: float
    activation_settlement: float
    realized_consumption: np.ndarray
    realized_hydrogen: np.ndarray
    trailer_end_state: np.ndarray
    unmet_demand_kg: float
    activation: np.ndarray
    curtailed_kg: float = 0.0
    physical_violation_hours: int = 0
    label: str = ""
    variation: Variation | None = None
    day_ahead_objective: float | None = None
    bids: BidSchedule | None = field(default=None, repr=False)

    @property
    def total(self) -> float:
        return self.hydrogen_revenue + self.fcr_revenue + self.mfrr_revenue - self.da_cost + self.activation_settlement

    def components(self) -> dict[str, float]:
        return {
            "hydrogen_revenue": self.hydrogen_revenue,
            "fcr_revenue": self.fcr_revenue,
            "mfrr_revenue": self.mfrr_revenue,
            "da_cost": self.da_cost,
            "activation_settlement": self.activation_settlement,
        }

    @property
    def activated_hours(self) -> int:
        return int(np.count_nonzero(self.activation))


def regulation_bid(spec: ElectrolyzerSpec, contract: HydrogenContract) -> float:
    """Activation price (EUR/MWh) at which giving up production breaks even."""
    return spec.mean_efficiency * contract.price_h


def realized_activation(spec: ElectrolyzerSpec, contract: HydrogenContract, day: RealizedDay) -> np.ndarray:
    """Upward activation flag per hour: balancing price at or above the regulation bid in a deficit hour."""
    bid = regulation_bid(spec, contract)
    return ((day.balancing_prices >= bid) & day.system_deficit).astype(float)


def route_hydrogen(contract: HydrogenContract, production: np.ndarray) -> np.ndarray:
    """Maximum placement of hourly ``production`` into the trailers, as an (hours, trailers) array."""
    production = np.asarray(production, dtype=float)
    n_t, n_d = len(production), len(contract.trailers)
    if n_d == 0 or not np.any(production > 0):
        return np.zeros((n_t, n_d))
    col = lambda t, d: t * n_d + d  # noqa: E731
    n = n_t * n_d
    hi = np.array([contract.dispenser_capacity * float(tr.availability[t])
                   for t in range(n_t) for tr in contract.trailers])
    rows, cols, rhs = [], [], []
    for t in range(n_t):
        rows += [t] * n_d
        cols += [col(t, d) for d in range(n_d)]
        rhs.append(max(production[t], 0.0))
    for d, tr in enumerate(contract.trailers):
        rows += [n_t + d] * n_t
        cols += [col(t, d) for t in range(n_t)]
        rhs.append(tr.capacity_sd)
    A = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_t + n_d, n))
    lp = MilpModel(np.ones(n), A, ["<="] * (n_t + n_d), rhs, np.zeros(n), hi, np.zeros(n, bool),
                   ["routing"] * (n_t + n_d), name="routing")
    sol = solve_lp(lp)
    if sol.status is not LpStatus.OPTIMAL:  # pragma: no cover - zero is always feasible
        raise RuntimeError(f"trailer routing failed: {sol.status.value}")
    return np.clip(sol.x, 0.0, hi).reshape(n_t, n_d)


def delivered_per_hour(production: np.ndarray, dispensed: np.ndarray) -> np.ndarray:
    """Hourly delivery; an hour routed in full up to the tolerance counts its exact production."""
    routed = dispensed.sum(axis=1)
    return np.where(production - routed <= ROUTING_TOL_KG, production, routed)


def redispatch(bids: BidSchedule, inst: DayInstance, alpha_up, alpha_dn=None) -> Redispatch:
    """Operate the fixed schedule under realized full-hour activations."""
    problems = bids.problems(inst.market)
    if problems or bids.hours != inst.hours:
        raise ContractViolation("; ".join(problems) or "bid schedule length does not match the day")
    n_t = inst.hours
    a_up = np.broadcast_to(np.asarray(alpha_up, dtype=float), (n_t,)).copy()
    a_dn = np.zeros(n_t) if alpha_dn is None else np.broadcast_to(np.asarray(alpha_dn, dtype=float), (n_t,)).copy()
    curve = inst.spec.curve
    power = np.zeros(n_t)
    consumption = np.zeros(n_t)
    hydrogen = np.zeros(n_t)
    violations = 0
    for t in range(n_t):
        p = bids.p_tot[t] - a_up[t] * bids.p_mfrr_up[t] + a_dn[t] * bids.p_mfrr_dn[t]
        draw = bids.standby_draw[t]
        if p <= POWER_TOL:
            # nothing left to run; standby keeps drawing its scheduled power
            consumption[t] = draw
            continue
        if p < curve.p_min - POWER_TOL:
            # forbidden band: the stack cannot run this low, fall back to standby
            violations += 1
            consumption[t] = inst.spec.standby_power
            continue
        p = min(max(p, curve.p_min), curve.p_max)
        power[t] = p
        consumption[t] = p + (draw if bids.states[t] is State.STANDBY else 0.0)
        if p == bids.p_tot[t]:
            # no activation this hour: the schedule runs as planned
            hydrogen[t] = bids.h_sched[t]
            continue
        try:
            hydrogen[t] = evaluate_curve(curve, p) * inst.market.time_step
        except DomainError as exc:  # pragma: no cover - p was clamped into the curve domain
            raise ContractViolation(str(exc)) from exc
    dispensed = route_hydrogen(inst.contract, hydrogen)
    delivered = delivered_per_hour(hydrogen, dispensed)
    curtailed = math.fsum(hydrogen) - math.fsum(delivered)
    return Redispatch(power, consumption, hydrogen, dispensed, delivered, max(curtailed, 0.0), violations,
                      a_up, a_dn)


def settle(bids: BidSchedule, inst: DayInstance, day: RealizedDay, realized: Redispatch) -> ExPostResult:
    """Profit of the day from the fixed bids and what the plant actually did."""
    mkt, con = inst.market, inst.contract
    delivered = realized.delivered
    # correctly rounded totals, independent of summation order
    delivered_kg = math.fsum(delivered)
    hydrogen_revenue = float(con.price_h * delivered_kg)
    fcr_revenue = float(mkt.fcr_block_hours * (bids.p_fcr @ day.fcr_prices))
    mfrr_revenue = float(bids.p_mfrr_up @ day.mfrr_up_prices + bids.p_mfrr_dn @ day.mfrr_dn_prices)
    da_cost = float(bids.p_da @ day.da_prices)
    up = realized.alpha_up * bids.p_mfrr_up
    dn = realized.alpha_dn * bids.p_mfrr_dn
    activation_settlement = float((up - dn) @ day.balancing_prices)
    unmet = float(max(0.0, con.min_daily_demand - delivered_kg))
    if unmet <= ROUTING_TOL_KG:
        unmet = 0.0
    return ExPostResult(
        hydrogen_revenue=hydrogen_revenue, fcr_revenue=fcr_revenue, mfrr_revenue=mfrr_revenue,
        da_cost=da_cost, activation_settlement=activation_settlement,
        realized_consumption=realized.consumption, realized_hydrogen=delivered,
        trailer_end_state=realized.trailer_fill, unmet_demand_kg=unmet,
        activation=(realized.alpha_up > 0).astype(int), curtailed_kg=realized.curtailed_kg,
        physical_violation_hours=realized.physical_violation_hours, label=day.label or inst.label, bids=bids,
    )


def variation_model(variation: Variation, inst: DayInstance, day: RealizedDay,
                    options: ModelOptions | None = None) -> MilpModel:
    """Day-ahead model of one variation."""
    n = inst.hours
    if variation is Variation.NO_AS:
        return build_model(inst.with_alpha(0.0, 0.0), options).fix_reserves_to_zero()
    if variation is Variation.ORACLE:
        alpha = realized_activation(inst.spec, inst.contract, day)
        return build_model(inst.with_alpha(alpha, np.zeros(n)), options)
    if variation is Variation.ALPHA_ZERO:
        return build_model(inst.with_alpha(0.0, 0.0), options)
    return build_model(inst.with_alpha(1.0, 1.0), options)


def run_variation(variation: Variation, inst: DayInstance, day: RealizedDay,
                  config: SolverConfig | None = None, options: ModelOptions | None = None,
                  ) -> tuple[ExPostResult, MilpSolution]:
    """Bid with one variation, then replay and settle against ``day``."""
    problems = day.problems(inst.hours, inst.market.n_blocks)
    if problems:
        raise ValidationError(problems)
    config = config or SolverConfig()
    model = variation_model(variation, inst, day, options)
    sol = solve(model, config)
    if sol.status is not MilpStatus.OPTIMAL:
        raise DaySolveError(inst.label, variation, sol.status)
    bids = extract_bids(model, sol.x)
    alpha_up = realized_activation(inst.spec, inst.contract, day)
    realized = redispatch(bids, inst, alpha_up, np.zeros(inst.hours))
    result = settle(bids, inst, day, realized)
    return replace(result, variation=variation, day_ahead_objective=sol.objective), sol


@dataclass(frozen=True)
class DayOutcome:
    index: int
    label: str
    variation: Variation
    result: ExPostResult | None
    solution: MilpSolution | None
    error: str | None = None


def evaluate_days(days: list[tuple[DayInstance, RealizedDay]], variations: list[Variation],
                  config: SolverConfig | None = None, options: ModelOptions | None = None,
                  threads: int = 1, keep_going: bool = False) -> list[DayOutcome]:
    """All (day, variation) pairs, ordered by day index then variation order."""
    jobs = [(i, inst, day, v) for i, (inst, day) in enumerate(days) for v in variations]

    def work(job) -> DayOutcome:
        i, inst, day, v = job
        try:
            res, sol = run_variation(v, inst, day, config, options)
            return DayOutcome(i, inst.label, v, res, sol)
        except (DaySolveError, ContractViolation, ValidationError) as exc:
            if not keep_going:
                raise
            return DayOutcome(i, inst.label, v, None, None, str(exc))

    if threads <= 1:
        return [work(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, jobs))


def cumulative_profit(outcomes: list[DayOutcome], variation: Variation) -> np.ndarray:
    """Running sum of daily profit for one variation, failed days counted as zero."""
    daily = [o.result.total if o.result is not None else 0.0 for o in outcomes if o.variation is variation]
    return np.cumsum(daily)

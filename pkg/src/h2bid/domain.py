"""Physical and market types for a grid-connected electrolyzer bidding into
day-ahead, FCR and mFRR markets.

Units throughout: power in MW, energy in MWh, hydrogen in kg, money in EUR,
one hour per time step.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Sequence

import numpy as np

CONTINUITY_TOL = 1e-9


class DomainError(ValueError):
    """Raised for out-of-domain physical queries (e.g. power in the forbidden band)."""


class ValidationError(ValueError):
    """Carries every violated invariant of an instance, not just the first."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class State(enum.Enum):
    ONLINE = "Online"
    STANDBY = "Standby"
    OFF = "Off"


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CurveSegment:
    p_min: float
    p_max: float
    slope_a: float
    intercept_b: float

    def hydrogen(self, p: float) -> float:
        return self.slope_a * p + self.intercept_b

    def problems(self) -> list[str]:
        out = []
        if not self.p_min < self.p_max:
            out.append(f"segment bounds not increasing: [{self.p_min}, {self.p_max}]")
        if not self.slope_a > 0:
            out.append(f"segment slope must be positive, got {self.slope_a}")
        lowest = min(self.hydrogen(self.p_min), self.hydrogen(self.p_max))
        if lowest < -CONTINUITY_TOL:
            out.append(f"segment [{self.p_min}, {self.p_max}] yields negative hydrogen")
        return out


@dataclass(frozen=True)
class ProductionCurve:
    segments: tuple[CurveSegment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def p_min(self) -> float:
        return self.segments[0].p_min

    @property
    def p_max(self) -> float:
        return self.segments[-1].p_max

    @property
    def max_output(self) -> float:
        return max(seg.hydrogen(seg.p_max) for seg in self.segments)

    def problems(self) -> list[str]:
        out: list[str] = []
        if not self.segments:
            return ["production curve has no segments"]
        for k, seg in enumerate(self.segments):
            out += [f"segment {k}: {msg}" for msg in seg.problems()]
        for k, (lo, hi) in enumerate(zip(self.segments, self.segments[1:])):
            if lo.p_max != hi.p_min:
                out.append(f"segments {k} and {k + 1} are not contiguous")
                continue
            gap = abs(lo.hydrogen(lo.p_max) - hi.hydrogen(hi.p_min))
            if gap > CONTINUITY_TOL:
                out.append(f"curve discontinuous at {lo.p_max} MW (gap {gap:.3g} kg/h)")
        return out

    def to_dict(self) -> dict:
        return {"segments": [
            {"p_min": s.p_min, "p_max": s.p_max, "slope_a": s.slope_a, "intercept_b": s.intercept_b}
            for s in self.segments
        ]}

    @classmethod
    def from_dict(cls, data: dict) -> "ProductionCurve":
        return cls(tuple(CurveSegment(**seg) for seg in data["segments"]))


def evaluate_curve(curve: ProductionCurve, p: float) -> float:
    """Hydrogen rate (kg/h) at electrolysis power ``p`` (MW).

    A breakpoint belongs to the lower segment.
    """
    if p == 0:
        return 0.0
    if p < 0 or p < curve.p_min:
        raise DomainError(f"{p} MW is below minimum load {curve.p_min} MW")
    if p > curve.p_max:
        raise DomainError(f"{p} MW exceeds capacity {curve.p_max} MW")
    for seg in curve.segments:
        if p <= seg.p_max:
            return seg.hydrogen(p)
    raise AssertionError("unreachable")  # pragma: no cover


def fit_production_curve(
    capacity: float,
    breakpoint_fractions: Sequence[float],
    efficiency: Callable[[np.ndarray], np.ndarray],
    samples: int = 2001,
) -> ProductionCurve:
    """Continuous least-squares piecewise-linear fit of ``p * efficiency(p / capacity)``.

    Continuity holds by construction: the fit uses a hinge basis
    ``c0 + c1 (p - b0) + sum_k g_k max(0, p - b_k)`` and intercepts are then
    recovered segment by segment from the shared breakpoints.
    """
    bps = np.asarray(breakpoint_fractions, dtype=float) * capacity
    p = np.linspace(bps[0], bps[-1], samples)
    h = p * efficiency(p / capacity)
    cols = [np.ones_like(p), p - bps[0]] + [np.maximum(0.0, p - b) for b in bps[1:-1]]
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), h, rcond=None)
    slopes = np.cumsum(np.concatenate([[coef[1]], coef[2:]]))
    h0 = coef[0]
    segments = []
    h_left = h0
    for k, a in enumerate(slopes):
        lo, hi = float(bps[k]), float(bps[k + 1])
        b = h_left - a * lo
        segments.append(CurveSegment(lo, hi, float(a), float(b)))
        h_left = a * hi + b
    # re-anchor intercepts so adjacent segments agree exactly in float arithmetic
    fixed = [segments[0]]
    for seg in segments[1:]:
        prev = fixed[-1]
        b = prev.hydrogen(prev.p_max) - seg.slope_a * seg.p_min
        fixed.append(replace(seg, intercept_b=float(b)))
    return ProductionCurve(tuple(fixed))


def reference_efficiency(peak: float = 19.0, peak_load: float = 0.3, curvature: float = 0.25):
    """Specific yield (kg/MWh) vs. load fraction: maximal at ``peak_load``, quadratic decay."""
    def eta(u: np.ndarray) -> np.ndarray:
        return peak * (1.0 - curvature * (np.asarray(u) - peak_load) ** 2)
    return eta


def load_default_curve() -> tuple[ProductionCurve, dict]:
    """Shipped 4-segment curve for a 10 MW unit plus its fixture metadata."""
    text = resources.files("h2bid.data").joinpath("default_curve_v1.json").read_text()
    data = json.loads(text)
    return ProductionCurve.from_dict(data), data


@dataclass(frozen=True)
class ElectrolyzerSpec:
    capacity_ce: float
    min_load_e: float
    standby_power: float
    curve: ProductionCurve
    min_down_time: int
    mean_efficiency: float

    def problems(self) -> list[str]:
        out = []
        if not 0 < self.min_load_e < self.capacity_ce:
            out.append("minimum load must lie strictly between 0 and capacity")
        if not 0 <= self.standby_power < self.min_load_e:
            out.append("standby power must be in [0, minimum load)")
        if self.min_down_time < 1:
            out.append("minimum down-time must be at least 1 hour")
        if not self.mean_efficiency > 0:
            out.append("mean efficiency must be positive")
        out += self.curve.problems()
        if self.curve.segments:
            if self.curve.p_min != self.min_load_e:
                out.append("first curve segment must start at minimum load")
            if self.curve.p_max != self.capacity_ce:
                out.append("last curve segment must end at capacity")
        return out

    @classmethod
    def default(cls) -> "ElectrolyzerSpec":
        curve, meta = load_default_curve()
        return cls(
            capacity_ce=meta["capacity_mw"],
            min_load_e=curve.p_min,
            standby_power=meta["standby_power_mw"],
            curve=curve,
            min_down_time=meta["min_down_time_h"],
            mean_efficiency=meta["mean_efficiency_kg_per_mwh"],
        )


@dataclass(frozen=True)
class TrailerSlot:
    capacity_sd: float
    availability: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "availability", _frozen_array(self.availability, bool))

    @classmethod
    def all_day(cls, capacity_sd: float, hours: int = 24) -> "TrailerSlot":
        return cls(capacity_sd, np.ones(hours, dtype=bool))

    def problems(self) -> list[str]:
        out = []
        if not self.capacity_sd > 0:
            out.append("trailer capacity must be positive")
        flags = self.availability.astype(int)
        if not flags.all():
            # a single on-site window means at most one 0->1 and one 1->0 edge, in that order
            edges = np.diff(np.concatenate([[0], flags, [0]]))
            if (edges == 1).sum() != 1:
                out.append("trailer availability must be a single contiguous window")
        return out

    def __eq__(self, other):
        return (isinstance(other, TrailerSlot) and self.capacity_sd == other.capacity_sd
                and np.array_equal(self.availability, other.availability))

    __hash__ = None


@dataclass(frozen=True)
class HydrogenContract:
    price_h: float
    min_daily_demand: float
    dispenser_capacity: float
    trailers: tuple[TrailerSlot, ...]

    def __post_init__(self):
        object.__setattr__(self, "trailers", tuple(self.trailers))

    def problems(self, curve: ProductionCurve | None = None, hours: int = 24) -> list[str]:
        out = []
        if not self.price_h >= 0:
            out.append("hydrogen price must be non-negative")
        if not self.min_daily_demand >= 0:
            out.append("minimum daily demand must be non-negative")
        if not self.dispenser_capacity > 0:
            out.append("dispenser capacity must be positive")
        if not self.trailers:
            out.append("at least one trailer is required")
        for k, tr in enumerate(self.trailers):
            out += [f"trailer {k}: {msg}" for msg in tr.problems()]
            if len(tr.availability) != hours:
                out.append(f"trailer {k}: availability length {len(tr.availability)} != {hours}")
        if curve is not None and curve.segments and self.min_daily_demand > hours * curve.max_output:
            out.append("minimum daily demand exceeds the producible maximum")
        return out


@dataclass(frozen=True)
class MarketStructure:
    hours_per_day: int = 24
    fcr_block_hours: int = 4
    fcr_bid_min: float = 0.1
    fcr_bid_max: float = 10.0
    mfrr_bid_min: float = 0.1
    mfrr_bid_max: float = 10.0
    time_step: float = 1.0

    @property
    def n_blocks(self) -> int:
        return self.hours_per_day // self.fcr_block_hours

    def block_of(self, t: int) -> int:
        return t // self.fcr_block_hours

    def problems(self) -> list[str]:
        out = []
        if self.hours_per_day < 1 or self.fcr_block_hours < 1 or self.hours_per_day % self.fcr_block_hours:
            out.append("hours_per_day must be a positive multiple of fcr_block_hours")
        if not 0 <= self.fcr_bid_min <= self.fcr_bid_max:
            out.append("FCR bid limits must satisfy 0 <= min <= max")
        if not 0 <= self.mfrr_bid_min <= self.mfrr_bid_max:
            out.append("mFRR bid limits must satisfy 0 <= min <= max")
        if self.time_step != 1.0:
            out.append("only hourly time steps are supported")
        return out


_SERIES = ("da_prices", "fcr_prices", "mfrr_up_prices", "mfrr_dn_prices", "alpha_up", "alpha_dn")


@dataclass(frozen=True)
class DayInstance:
    spec: ElectrolyzerSpec
    market: MarketStructure
    contract: HydrogenContract
    da_prices: np.ndarray
    fcr_prices: np.ndarray
    mfrr_up_prices: np.ndarray
    mfrr_dn_prices: np.ndarray
    alpha_up: np.ndarray
    alpha_dn: np.ndarray
    initial_off_state: bool = False
    label: str = ""

    def __post_init__(self):
        for name in _SERIES:
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    @property
    def hours(self) -> int:
        return self.market.hours_per_day

    def with_alpha(self, alpha_up, alpha_dn) -> "DayInstance":
        n = self.hours
        up = np.broadcast_to(np.asarray(alpha_up, dtype=float), (n,))
        dn = np.broadcast_to(np.asarray(alpha_dn, dtype=float), (n,))
        return replace(self, alpha_up=up, alpha_dn=dn)


def instance_problems(inst: DayInstance) -> list[str]:
    """All violated invariants of ``inst`` (empty when valid)."""
    out = list(inst.spec.problems())
    out += inst.market.problems()
    n = inst.market.hours_per_day
    out += inst.contract.problems(inst.spec.curve, n)
    expected = {
        "da_prices": n, "mfrr_up_prices": n, "mfrr_dn_prices": n,
        "alpha_up": n, "alpha_dn": n,
        "fcr_prices": inst.market.n_blocks if inst.market.fcr_block_hours else -1,
    }
    for name, length in expected.items():
        arr = getattr(inst, name)
        if arr.ndim != 1 or len(arr) != length:
            out.append(f"price series length: {name} has {arr.size} entries, expected {length}")
        elif not np.all(np.isfinite(arr)):
            out.append(f"{name} contains non-finite values")
    for name in ("alpha_up", "alpha_dn"):
        arr = getattr(inst, name)
        if arr.size and np.any((arr < 0) | (arr > 1)):
            out.append(f"alpha out of range: {name} must lie in [0, 1]")
    total = sum(tr.capacity_sd for tr in inst.contract.trailers)
    if not total >= 0:
        out.append("total trailer capacity must be non-negative")
    return out


def validate_instance(inst: DayInstance) -> DayInstance:
    """Return ``inst`` unchanged, or raise :class:`ValidationError` listing every problem."""
    problems = instance_problems(inst)
    if problems:
        raise ValidationError(problems)
    return inst


@dataclass(frozen=True)
class BidSchedule:
    p_da: np.ndarray
    p_fcr: np.ndarray
    p_mfrr_up: np.ndarray
    p_mfrr_dn: np.ndarray
    states: tuple[State, ...]
    p_tot: np.ndarray
    h_sched: np.ndarray
    standby_draw: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("p_da", "p_fcr", "p_mfrr_up", "p_mfrr_dn", "p_tot", "h_sched"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        object.__setattr__(self, "states", tuple(State(s) for s in self.states))
        sb = self.standby_draw
        if sb is None:
            sb = np.zeros(len(self.p_da))
        object.__setattr__(self, "standby_draw", _frozen_array(sb))

    @property
    def hours(self) -> int:
        return len(self.p_da)

    def problems(self, market: MarketStructure, tol: float = 1e-9) -> list[str]:
        out = []
        n = self.hours
        if len(self.states) != n:
            out.append("exactly one state per hour required")
        gap = np.abs(self.p_da - self.p_tot - self.standby_draw)
        if np.any(gap > tol):
            out.append("day-ahead quantity differs from scheduled consumption plus standby draw")
        for name, arr, lo, hi in (
            ("FCR", self.p_fcr, market.fcr_bid_min, market.fcr_bid_max),
            ("mFRR up", self.p_mfrr_up, market.mfrr_bid_min, market.mfrr_bid_max),
            ("mFRR down", self.p_mfrr_dn, market.mfrr_bid_min, market.mfrr_bid_max),
        ):
            nz = arr[arr != 0]
            if np.any(nz < lo - tol) or np.any(nz > hi + tol) or np.any(arr < 0):
                out.append(f"{name} bid outside [{lo}, {hi}]")
        return out

    def to_dict(self) -> dict:
        return {
            "p_da": self.p_da.tolist(), "p_fcr": self.p_fcr.tolist(),
            "p_mfrr_up": self.p_mfrr_up.tolist(), "p_mfrr_dn": self.p_mfrr_dn.tolist(),
            "states": [s.value for s in self.states], "p_tot": self.p_tot.tolist(),
            "h_sched": self.h_sched.tolist(),
        }


def schedule_objective(bids: BidSchedule, inst: DayInstance) -> float:
    """Day-ahead profit of a fixed schedule at the instance's forecast prices."""
    m = inst.market
    return float(
        inst.contract.price_h * bids.h_sched.sum()
        + bids.p_mfrr_up @ inst.mfrr_up_prices
        + bids.p_mfrr_dn @ inst.mfrr_dn_prices
        - bids.p_da @ inst.da_prices
        + m.fcr_block_hours * (bids.p_fcr @ inst.fcr_prices)
    )


def default_contract(hours: int = 24) -> HydrogenContract:
    """Midnight-exchange trailers available all day, 10 EUR/kg, 2000 kg/day."""
    return HydrogenContract(
        price_h=10.0,
        min_daily_demand=2000.0,
        dispenser_capacity=100.0,
        trailers=tuple(TrailerSlot.all_day(1100.0, hours) for _ in range(3)),
    )

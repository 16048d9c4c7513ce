"""MILP construction for one delivery day.

Columns are laid out kind by kind (in ``KINDS`` order) and, inside a kind,
row-major over its index tuple. Every constraint row carries a family tag so
audits can attribute violations to a constraint family.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .domain import BidSchedule, DayInstance, State, validate_instance

# (kind, index dimensions); z_* kinds are binary
KINDS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("p_e", ("t", "s")),
    ("h_e", ("t",)),
    ("p_tot", ("t",)),
    ("p_sb", ("t",)),
    ("p_da", ("t",)),
    ("p_fcr", ("i",)),
    ("p_mfrr_up", ("t",)),
    ("p_mfrr_dn", ("t",)),
    ("p_act_up", ("t", "s")),
    ("p_act_dn", ("t", "s")),
    ("h_act_up", ("t",)),
    ("h_act_dn", ("t",)),
    ("h_disp", ("t", "d")),
    ("s_disp", ("t", "d")),
    ("z_e", ("t", "s")),
    ("z_on", ("t",)),
    ("z_sb", ("t",)),
    ("z_off", ("t",)),
    ("z_fcr", ("i",)),
    ("z_m_up", ("t",)),
    ("z_m_dn", ("t",)),
    ("z_act_up", ("t", "s")),
    ("z_act_dn", ("t", "s")),
)
# scheduled-flow trailer bookkeeping, only present with the storage extension
EXTENSION_KINDS = (("h_sched_disp", ("t", "d")), ("s_sched_disp", ("t", "d")))

FAMILIES = (
    "segment_bounds", "single_segment", "production_curve", "total_power",
    "online_state", "standby_power", "min_down_time", "single_state",
    "day_ahead_bid", "reserve_headroom_down", "reserve_headroom_up",
    "fcr_bid_size", "mfrr_dn_bid_size", "mfrr_up_bid_size",
    "act_up_power", "act_up_segment_bounds", "act_up_single_segment",
    "act_up_production", "act_up_min_demand",
    "act_dn_power", "act_dn_segment_bounds", "act_dn_single_segment",
    "act_dn_production", "act_dn_dispense", "dispenser_capacity",
    "trailer_state", "trailer_capacity",
)
EXTENSION_FAMILIES = (
    "scheduled_min_demand", "scheduled_dispense", "scheduled_dispenser_capacity",
    "scheduled_trailer_state", "scheduled_trailer_capacity",
)

RESERVE_KINDS = ("p_fcr", "p_mfrr_up", "p_mfrr_dn", "z_fcr", "z_m_up", "z_m_dn")


class ContractViolation(ValueError):
    """A solution handed to extraction is not a feasible integral point of the model."""


@dataclass(frozen=True)
class VarRef:
    kind: str
    index: tuple[int, ...]

    @property
    def name(self) -> str:
        return ".".join([self.kind, *map(str, self.index)])

    @property
    def is_binary(self) -> bool:
        return self.kind.startswith("z_")


class VarIndex:
    """Bijection between :class:`VarRef` and column numbers."""

    def __init__(self, n_t: int, n_s: int, n_i: int, n_d: int, extension: bool = False):
        self.sizes = {"t": n_t, "s": n_s, "i": n_i, "d": n_d}
        self.extension = extension
        kinds = KINDS + (EXTENSION_KINDS if extension else ())
        self.kinds = tuple(k for k, _ in kinds)
        self.dims = dict(kinds)
        self.shapes = {k: tuple(self.sizes[d] for d in dims) for k, dims in kinds}
        self.offsets: dict[str, int] = {}
        pos = 0
        for k in self.kinds:
            self.offsets[k] = pos
            pos += int(np.prod(self.shapes[k]))
        self.num_vars = pos

    def col(self, kind: str, *idx: int) -> int:
        return self.offsets[kind] + int(np.ravel_multi_index(idx, self.shapes[kind]))

    def block(self, kind: str) -> np.ndarray:
        """Column numbers of ``kind`` shaped by its index dimensions."""
        n = int(np.prod(self.shapes[kind]))
        return (self.offsets[kind] + np.arange(n)).reshape(self.shapes[kind])

    def ref(self, col: int) -> VarRef:
        if not 0 <= col < self.num_vars:
            raise IndexError(col)
        kind = max((k for k in self.kinds if self.offsets[k] <= col), key=self.offsets.get)
        idx = np.unravel_index(col - self.offsets[kind], self.shapes[kind])
        return VarRef(kind, tuple(int(v) for v in idx))

    def refs(self) -> Iterator[VarRef]:
        for kind in self.kinds:
            for idx in np.ndindex(*self.shapes[kind]):
                yield VarRef(kind, tuple(int(v) for v in idx))

    def names(self) -> list[str]:
        return [r.name for r in self.refs()]

    def binary_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_vars, dtype=bool)
        for k in self.kinds:
            if k.startswith("z_"):
                mask[self.block(k).ravel()] = True
        return mask


def count_columns(n_t: int, n_s: int, n_i: int, n_d: int, extension: bool = False) -> int:
    """Closed-form column count matching :class:`VarIndex` layout."""
    per_hour = 6 * n_s + 13  # p_e p_act_up p_act_dn z_e z_act_up z_act_dn per segment, 13 hourly kinds
    n = n_t * per_hour + 2 * n_i + 2 * n_t * n_d
    return n + (2 * n_t * n_d if extension else 0)


class Row(NamedTuple):
    cols: np.ndarray
    coefs: np.ndarray
    sense: str
    rhs: float
    tag: str


@dataclass(frozen=True)
class MilpModel:
    """Maximize ``objective @ x`` over sparse rows, bounds and binary flags."""

    objective: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray  # "<=", "==", ">=" per row
    rhs: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    integrality: np.ndarray
    tags: tuple[str, ...]
    index: VarIndex | None = None
    instance: DayInstance | None = None
    options: "ModelOptions | None" = None
    name: str = "model"

    def __post_init__(self):
        for attr in ("objective", "rhs", "lo", "hi"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        integ = np.array(self.integrality, dtype=bool)
        integ.setflags(write=False)
        object.__setattr__(self, "integrality", integ)
        sense = np.array(self.sense, dtype="<U2")
        sense.setflags(write=False)
        object.__setattr__(self, "sense", sense)
        object.__setattr__(self, "A", sp.csr_matrix(self.A, dtype=float))
        object.__setattr__(self, "tags", tuple(self.tags))
        if self.A.shape != (len(self.rhs), len(self.objective)):
            raise ValueError("constraint matrix shape does not match rhs/objective")
        bad = set(np.unique(self.sense)) - {"<=", "==", ">="}
        if bad:
            raise ValueError(f"unknown row relations {bad}")

    @property
    def num_vars(self) -> int:
        return len(self.objective)

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    @property
    def binaries(self) -> np.ndarray:
        return np.flatnonzero(self.integrality)

    def free_binaries(self) -> np.ndarray:
        b = self.binaries
        return b[self.lo[b] < self.hi[b]]

    def constraints(self) -> Iterator[Row]:
        A = self.A
        for r in range(self.num_rows):
            sl = slice(A.indptr[r], A.indptr[r + 1])
            yield Row(A.indices[sl], A.data[sl], str(self.sense[r]), float(self.rhs[r]), self.tags[r])

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective @ x)

    def row_violations(self, x: np.ndarray) -> np.ndarray:
        ax = self.A @ np.asarray(x, dtype=float)
        viol = np.zeros(self.num_rows)
        le, ge, eq = self.sense == "<=", self.sense == ">=", self.sense == "=="
        viol[le] = np.maximum(0.0, ax[le] - self.rhs[le])
        viol[ge] = np.maximum(0.0, self.rhs[ge] - ax[ge])
        viol[eq] = np.abs(ax[eq] - self.rhs[eq])
        return viol

    def bound_violations(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.maximum(0.0, np.maximum(self.lo - x, x - self.hi))

    def with_bounds(self, cols: Sequence[int] | np.ndarray, lo, hi) -> "MilpModel":
        new_lo, new_hi = self.lo.copy(), self.hi.copy()
        new_lo[np.asarray(cols, dtype=int)] = lo
        new_hi[np.asarray(cols, dtype=int)] = hi
        return replace(self, lo=new_lo, hi=new_hi)

    def fix_reserves_to_zero(self) -> "MilpModel":
        """All FCR/mFRR quantities and their gates fixed at zero (energy-only bidding)."""
        if self.index is None:
            raise ValueError("model has no variable index")
        cols = np.concatenate([self.index.block(k).ravel() for k in RESERVE_KINDS])
        return self.with_bounds(cols, 0.0, 0.0)

    def rows_with_tag(self, tag: str) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.tags) == tag)


@dataclass(frozen=True)
class ModelOptions:
    # storage rows mirrored onto scheduled production
    scheduled_storage: bool = True
    # minimum daily demand also enforced on scheduled production
    scheduled_min_demand: bool = True
    # upward headroom gated by z_on instead of (1 - z_off); the verbatim form
    # makes standby infeasible because p_tot = 0 there
    verbatim_upward_headroom: bool = False

    @classmethod
    def strict_paper(cls) -> "ModelOptions":
        return cls(scheduled_storage=False, scheduled_min_demand=False)


class _RowBuffer:
    def __init__(self):
        self.indptr = [0]
        self.indices: list[int] = []
        self.data: list[float] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []
        self.tags: list[str] = []

    def add(self, tag: str, terms: Sequence[tuple[int, float]], sense: str, rhs: float) -> None:
        merged: dict[int, float] = {}
        for c, v in terms:
            merged[int(c)] = merged.get(int(c), 0.0) + float(v)
        cols = sorted(c for c, v in merged.items() if v != 0.0)
        self.indices.extend(cols)
        self.data.extend(merged[c] for c in cols)
        self.indptr.append(len(self.indices))
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        self.tags.append(tag)

    def matrix(self, n_cols: int) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.array(self.data, dtype=float), np.array(self.indices, dtype=np.int64),
             np.array(self.indptr, dtype=np.int64)),
            shape=(len(self.rhs), n_cols),
        )


def build_model(inst: DayInstance, options: ModelOptions | None = None) -> MilpModel:
    """Day-ahead bidding MILP of ``inst`` (maximization)."""
    validate_instance(inst)
    opt = options or ModelOptions()
    spec, mkt, con = inst.spec, inst.market, inst.contract
    segs = spec.curve.segments
    n_t, n_s, n_i, n_d = mkt.hours_per_day, len(segs), mkt.n_blocks, len(con.trailers)
    vi = VarIndex(n_t, n_s, n_i, n_d, extension=opt.scheduled_storage)
    C = vi.col
    dt = mkt.time_step
    rows = _RowBuffer()
    add = rows.add

    obj = np.zeros(vi.num_vars)
    obj[vi.block("h_e")] = con.price_h * dt
    obj[vi.block("p_mfrr_up")] = inst.mfrr_up_prices
    obj[vi.block("p_mfrr_dn")] = inst.mfrr_dn_prices
    obj[vi.block("p_da")] = -inst.da_prices
    obj[vi.block("p_fcr")] = inst.fcr_prices * mkt.fcr_block_hours

    def piecewise(t: int, p_kind: str, z_kind: str, h_kind: str, prefix: str) -> None:
        for s, seg in enumerate(segs):
            add(prefix + "segment_bounds", [(C(p_kind, t, s), 1.0), (C(z_kind, t, s), -seg.p_max)], "<=", 0.0)
            add(prefix + "segment_bounds", [(C(p_kind, t, s), 1.0), (C(z_kind, t, s), -seg.p_min)], ">=", 0.0)
        add(prefix + "single_segment", [(C(z_kind, t, s), 1.0) for s in range(n_s)], "<=", 1.0)
        terms = [(C(h_kind, t), 1.0)]
        for s, seg in enumerate(segs):
            terms += [(C(p_kind, t, s), -seg.slope_a * dt), (C(z_kind, t, s), -seg.intercept_b * dt)]
        add(prefix + "production" if prefix else "production_curve", terms, "==", 0.0)

    def storage(flow_kind: str, disp_kind: str, state_kind: str, dispense_tag: str, prefix: str) -> None:
        for t in range(n_t):
            add(dispense_tag, [(C(flow_kind, t), 1.0)] + [(C(disp_kind, t, d), -1.0) for d in range(n_d)],
                "==", 0.0)
        for t in range(n_t):
            for d, tr in enumerate(con.trailers):
                cap = con.dispenser_capacity * float(tr.availability[t])
                add(prefix + "dispenser_capacity", [(C(disp_kind, t, d), 1.0)], "<=", cap)
        for t in range(n_t):
            for d in range(n_d):
                terms = [(C(state_kind, t, d), 1.0), (C(disp_kind, t, d), -1.0)]
                if t > 0:
                    terms.append((C(state_kind, t - 1, d), -1.0))
                add(prefix + "trailer_state", terms, "==", 0.0)
        for t in range(n_t):
            for d, tr in enumerate(con.trailers):
                add(prefix + "trailer_capacity", [(C(state_kind, t, d), 1.0)], "<=", tr.capacity_sd)

    # electrolyzer physics
    for t in range(n_t):
        piecewise(t, "p_e", "z_e", "h_e", "")
        add("total_power", [(C("p_tot", t), 1.0)] + [(C("p_e", t, s), -1.0) for s in range(n_s)], "==", 0.0)
        add("online_state", [(C("z_on", t), 1.0)] + [(C("z_e", t, s), -1.0) for s in range(n_s)], "==", 0.0)
        add("standby_power", [(C("p_sb", t), 1.0), (C("z_sb", t), -spec.standby_power)], "==", 0.0)

    init_off = 1.0 if inst.initial_off_state else 0.0
    for t in range(n_t):
        for n in range(t + 1, min(t + spec.min_down_time, n_t)):
            terms = [(C("z_off", t), 1.0), (C("z_off", n), -1.0)]
            if t > 0:
                add("min_down_time", terms + [(C("z_off", t - 1), -1.0)], "<=", 0.0)
            else:
                add("min_down_time", terms, "<=", init_off)
    if inst.initial_off_state:
        for t in range(min(spec.min_down_time - 1, n_t)):
            add("min_down_time", [(C("z_off", t), 1.0)], ">=", 1.0)

    for t in range(n_t):
        add("single_state", [(C("z_on", t), 1.0), (C("z_sb", t), 1.0), (C("z_off", t), 1.0)], "==", 1.0)

    # bidding
    for t in range(n_t):
        add("day_ahead_bid", [(C("p_da", t), 1.0), (C("p_tot", t), -1.0), (C("p_sb", t), -1.0)], "==", 0.0)
    for t in range(n_t):
        i = mkt.block_of(t)
        add("reserve_headroom_down",
            [(C("p_fcr", i), 1.0), (C("p_mfrr_dn", t), 1.0), (C("p_tot", t), 1.0), (C("z_off", t), spec.capacity_ce)],
            "<=", spec.capacity_ce)
        base = [(C("p_fcr", i), 1.0), (C("p_mfrr_up", t), 1.0), (C("p_tot", t), -1.0)]
        if opt.verbatim_upward_headroom:
            add("reserve_headroom_up", base + [(C("z_off", t), -spec.min_load_e)], "<=", -spec.min_load_e)
        else:
            add("reserve_headroom_up", base + [(C("z_on", t), spec.min_load_e)], "<=", 0.0)
    for i in range(n_i):
        add("fcr_bid_size", [(C("p_fcr", i), 1.0), (C("z_fcr", i), -mkt.fcr_bid_max)], "<=", 0.0)
        add("fcr_bid_size", [(C("p_fcr", i), 1.0), (C("z_fcr", i), -mkt.fcr_bid_min)], ">=", 0.0)
    for kind, gate, tag in (("p_mfrr_dn", "z_m_dn", "mfrr_dn_bid_size"), ("p_mfrr_up", "z_m_up", "mfrr_up_bid_size")):
        for t in range(n_t):
            add(tag, [(C(kind, t), 1.0), (C(gate, t), -mkt.mfrr_bid_max)], "<=", 0.0)
            add(tag, [(C(kind, t), 1.0), (C(gate, t), -mkt.mfrr_bid_min)], ">=", 0.0)

    # activation feasibility, upward then downward
    for t in range(n_t):
        add("act_up_power", [(C("p_act_up", t, s), 1.0) for s in range(n_s)]
            + [(C("p_tot", t), -1.0), (C("p_mfrr_up", t), float(inst.alpha_up[t]))], "==", 0.0)
        piecewise(t, "p_act_up", "z_act_up", "h_act_up", "act_up_")
    add("act_up_min_demand", [(C("h_act_up", t), 1.0) for t in range(n_t)], ">=", con.min_daily_demand)

    for t in range(n_t):
        add("act_dn_power", [(C("p_act_dn", t, s), 1.0) for s in range(n_s)]
            + [(C("p_tot", t), -1.0), (C("p_mfrr_dn", t), -float(inst.alpha_dn[t]))], "==", 0.0)
        piecewise(t, "p_act_dn", "z_act_dn", "h_act_dn", "act_dn_")
    storage("h_act_dn", "h_disp", "s_disp", "act_dn_dispense", "")

    if opt.scheduled_min_demand:
        add("scheduled_min_demand", [(C("h_e", t), 1.0) for t in range(n_t)], ">=", con.min_daily_demand)
    if opt.scheduled_storage:
        storage("h_e", "h_sched_disp", "s_sched_disp", "scheduled_dispense", "scheduled_")

    lo = np.zeros(vi.num_vars)
    hi = np.full(vi.num_vars, np.inf)
    integ = vi.binary_mask()
    hi[integ] = 1.0
    return MilpModel(
        objective=obj, A=rows.matrix(vi.num_vars), sense=np.array(rows.sense), rhs=np.array(rows.rhs),
        lo=lo, hi=hi, integrality=integ, tags=tuple(rows.tags), index=vi, instance=inst, options=opt,
        name=inst.label or "day",
    )


def extract_bids(model: MilpModel, x: np.ndarray, feas_tol: float = 1e-6, int_tol: float = 1e-6) -> BidSchedule:
    """Read the fixed day-ahead decisions out of a feasible integral point."""
    if model.instance is None or model.index is None:
        raise ValueError("model was not built from a day instance")
    x = np.asarray(x, dtype=float)
    if x.shape != (model.num_vars,):
        raise ContractViolation(f"solution has {x.size} entries, model has {model.num_vars} columns")
    b = model.binaries
    frac = np.abs(x[b] - np.round(x[b]))
    if frac.size and frac.max() > int_tol:
        raise ContractViolation(f"non-integral binary (max fractionality {frac.max():.3g})")
    worst = max(model.row_violations(x).max(initial=0.0), model.bound_violations(x).max(initial=0.0))
    if worst > feas_tol:
        raise ContractViolation(f"infeasible point (max violation {worst:.3g})")

    inst, vi = model.instance, model.index
    spec, mkt = inst.spec, inst.market
    segs = spec.curve.segments
    val = lambda kind: x[vi.block(kind)]  # noqa: E731
    on, sb, off = (val(k) > 0.5 for k in ("z_on", "z_sb", "z_off"))
    ze = val("z_e") > 0.5
    pe = val("p_e")
    n_t = mkt.hours_per_day

    p_tot = np.zeros(n_t)
    h = np.zeros(n_t)
    states = []
    for t in range(n_t):
        if on[t]:
            s = int(np.flatnonzero(ze[t])[0])
            p = min(max(pe[t, s], segs[s].p_min), segs[s].p_max)
            p_tot[t] = p
            h[t] = segs[s].hydrogen(p) * mkt.time_step
            states.append(State.ONLINE)
        elif sb[t]:
            states.append(State.STANDBY)
        else:
            states.append(State.OFF)
    standby = np.where(sb, spec.standby_power, 0.0)

    def gated(kind: str, gate: str, lo: float, hi: float) -> np.ndarray:
        q = np.clip(val(kind), lo, hi)
        return np.where(val(gate) > 0.5, q, 0.0)

    bids = BidSchedule(
        p_da=p_tot + standby,
        p_fcr=gated("p_fcr", "z_fcr", mkt.fcr_bid_min, mkt.fcr_bid_max),
        p_mfrr_up=gated("p_mfrr_up", "z_m_up", mkt.mfrr_bid_min, mkt.mfrr_bid_max),
        p_mfrr_dn=gated("p_mfrr_dn", "z_m_dn", mkt.mfrr_bid_min, mkt.mfrr_bid_max),
        states=tuple(states), p_tot=p_tot, h_sched=h, standby_draw=standby,
    )
    problems = bids.problems(mkt)
    if problems:
        raise ContractViolation("; ".join(problems))
    return bids

"""Depth-first branch-and-bound over the binary columns of a MilpModel."""
from __future__ import annotations

import heapq
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import Branching, MilpSolution, MilpStatus, SolverConfig, make_engine
from ._simplex import Basis, SimplexStall


class BoundSandwichError(RuntimeError):
    """A node relaxation exceeded its parent's bound, or the root bound fell below the incumbent."""


@dataclass(order=True)
class _Node:
    key: tuple
    id: int = field(compare=False)
    parent: int = field(compare=False)
    depth: int = field(compare=False)
    bound: float = field(compare=False)
    lo: np.ndarray = field(compare=False)
    hi: np.ndarray = field(compare=False)
    basis: Basis | None = field(compare=False)


def _emit(sink, record: dict) -> None:
    if sink is None:
        return
    if callable(sink):
        sink(record)
    else:
        sink.write(json.dumps(record) + "\n")


def _pick_branch(xb: np.ndarray, free: np.ndarray, rule: Branching, int_tol: float) -> int:
    frac = np.abs(xb - np.round(xb))
    frac[~free] = 0.0
    cand = frac > int_tol
    if not cand.any():
        return -1
    if rule is Branching.FIRST_FRACTIONAL:
        return int(np.argmax(cand))
    # distance from 0.5, smallest wins; argmin returns the lowest index on ties
    return int(np.argmin(np.where(cand, np.abs(frac - 0.5), np.inf)))


def _tol(value: float, rel: float) -> float:
    return rel * max(1.0, abs(value))


def solve_milp(model, config: SolverConfig | None = None) -> MilpSolution:
    """Maximize ``model`` with integrality enforced on its binary columns.

    Nodes are explored deepest first, ties broken by the larger parent bound
    and then by the 1-branch. Each child warm-starts from its parent's basis.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    bins = model.binaries
    engine = make_engine(model, config)
    base_lo, base_hi = model.lo.copy(), model.hi.copy()

    def finish(status, objective, bound, x, nodes):
        return MilpSolution(status, objective, bound, x, nodes, time.perf_counter() - t0, "bnb")

    def solved_x() -> np.ndarray:
        return np.minimum(np.maximum(engine.x(), engine.lo[: engine.n]), engine.hi[: engine.n])

    state = engine.solve()
    if state == "infeasible":
        return finish(MilpStatus.INFEASIBLE, float("nan"), float("nan"), None, 1)
    if state == "unbounded":
        return finish(MilpStatus.UNBOUNDED, float("inf"), float("inf"), None, 1)

    root_bound = model.objective_value(solved_x())
    incumbent = -np.inf
    best_x = None
    pruned_bound = -np.inf  # best bound among nodes cut off by the gap test
    nodes = 0
    counter = 0
    heap: list[_Node] = []
    engine_at = -1  # node id whose optimal basis sits in the engine, -1 if stale
    limit_status = None

    def bound_of_open() -> float:
        return max((n.bound for n in heap), default=-np.inf)

    def try_incumbent(x: np.ndarray, node_id: int) -> None:
        nonlocal incumbent, best_x, engine_at
        xr = x.copy()
        xr[bins] = np.round(xr[bins])
        if model.row_violations(xr).max(initial=0.0) > config.feas_tol:
            # polish: re-solve the continuous part with binaries fixed
            engine.set_bounds(bins, xr[bins], xr[bins])
            engine_at = -1
            if engine.reoptimize() != "optimal":
                return
            xr = solved_x()
            xr[bins] = np.round(xr[bins])
            if model.row_violations(xr).max(initial=0.0) > config.feas_tol:
                return
        xr = np.minimum(np.maximum(xr, model.lo), model.hi)
        value = model.objective_value(xr)
        if value > incumbent:
            incumbent, best_x = value, xr
            _emit(config.node_log, {"event": "incumbent", "node": node_id, "objective": value})

    # the root is processed like any other node, its relaxation already solved
    current = _Node((0,), 0, -1, 0, root_bound, base_lo[bins].copy(), base_hi[bins].copy(), None)
    engine_at = 0
    pending = [current]
    while pending or heap:
        if pending:
            node = pending.pop()
        else:
            node = heapq.heappop(heap)
        if nodes >= config.node_limit:
            limit_status = MilpStatus.NODE_LIMIT
            heap.append(node)
            break
        if config.time_limit is not None and time.perf_counter() - t0 > config.time_limit:
            limit_status = MilpStatus.TIME_LIMIT
            heap.append(node)
            break
        if node.bound <= incumbent + _tol(incumbent, config.gap_tol):
            pruned_bound = max(pruned_bound, node.bound)
            continue
        nodes += 1
        if node.id != 0:
            if engine_at == node.parent:
                changed = np.flatnonzero((engine.lo[bins] != node.lo) | (engine.hi[bins] != node.hi))
                engine.set_bounds(bins[changed], node.lo[changed], node.hi[changed])
            else:
                lo, hi = base_lo.copy(), base_hi.copy()
                lo[bins], hi[bins] = node.lo, node.hi
                engine.load(node.basis, lo, hi)
            try:
                state = engine.reoptimize()
            except SimplexStall:
                state = "stall"
            engine_at = node.id
            if state != "optimal":
                _emit(config.node_log, {"node": node.id, "depth": node.depth, "bound": None,
                                        "incumbent": _json_num(incumbent), "status": state})
                if state == "stall":
                    raise SimplexStall(f"simplex stall at node {node.id}")
                continue
        x = solved_x()
        bound = model.objective_value(x)
        if bound > node.bound + _tol(node.bound, 1e-6):
            raise BoundSandwichError(
                f"node {node.id} relaxation {bound:.9g} exceeds parent bound {node.bound:.9g}")
        bound = min(bound, node.bound)
        _emit(config.node_log, {"node": node.id, "depth": node.depth, "bound": bound,
                                "incumbent": _json_num(incumbent), "status": "solved"})
        if bound <= incumbent + _tol(incumbent, config.gap_tol):
            pruned_bound = max(pruned_bound, bound)
            continue
        free = engine.lo[bins] < engine.hi[bins]
        j = _pick_branch(x[bins], free, config.branching, config.int_tol)
        if j < 0:
            try_incumbent(x, node.id)
            if config.gap_limit is not None and best_x is not None:
                open_bound = max(pruned_bound, bound_of_open(), incumbent)
                if (open_bound - incumbent) / max(1.0, abs(incumbent)) <= config.gap_limit:
                    limit_status = MilpStatus.GAP_LIMIT
                    break
            continue
        snap = engine.snapshot()
        for value in (0.0, 1.0):  # the 1-branch is pushed last so it pops first
            lo, hi = node.lo.copy(), node.hi.copy()
            lo[j] = hi[j] = value
            counter += 1
            child = _Node((-(node.depth + 1), -bound, -value, counter), counter, node.id,
                          node.depth + 1, bound, lo, hi, snap)
            heapq.heappush(heap, child)

    if best_x is not None and root_bound < incumbent - _tol(incumbent, 1e-6):
        raise BoundSandwichError(f"root bound {root_bound:.9g} below incumbent {incumbent:.9g}")

    best_bound = max(pruned_bound, bound_of_open(), incumbent)
    if best_x is None:
        if limit_status is not None:
            return finish(limit_status, float("nan"), best_bound, None, nodes)
        return finish(MilpStatus.INFEASIBLE, float("nan"), float("nan"), None, nodes)
    best_bound = max(min(best_bound, root_bound), incumbent)
    gap = (best_bound - incumbent) / max(1.0, abs(incumbent))
    if limit_status is not None and gap > config.gap_tol:
        status = limit_status
    else:
        status = MilpStatus.OPTIMAL
    return finish(status, incumbent, best_bound, best_x, nodes)


def _json_num(v: float):
    return None if not np.isfinite(v) else float(v)

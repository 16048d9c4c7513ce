"""Adapters to external MILP solvers.

Only HiGHS (as bundled with scipy) is wired up. Asking for anything else
raises :class:`SolverUnavailableError`; there is no silent fallback.
"""
from __future__ import annotations

import time

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from . import MilpSolution, MilpStatus, SolverConfig


class SolverUnavailableError(RuntimeError):
    """The requested external backend is not installed or not supported."""


def available_backends() -> tuple[str, ...]:
    return ("bnb", "highs")


def _row_bounds(model) -> tuple[np.ndarray, np.ndarray]:
    lb = np.where(model.sense == "<=", -np.inf, model.rhs)
    ub = np.where(model.sense == ">=", np.inf, model.rhs)
    return lb, ub


def _polish(model, x: np.ndarray, feas_tol: float) -> np.ndarray | None:
    """Fix rounded binaries and re-solve the continuous part tightly."""
    bins = model.binaries
    lo, hi = model.lo.copy(), model.hi.copy()
    lo[bins] = hi[bins] = np.round(x[bins])
    A = model.A
    le, ge, eq = model.sense == "<=", model.sense == ">=", model.sense == "=="
    A_ub = A[le | ge].multiply(np.where(ge[le | ge], -1.0, 1.0)[:, None]).tocsr()
    b_ub = np.where(ge, -model.rhs, model.rhs)[le | ge]
    res = linprog(-model.objective, A_ub=A_ub, b_ub=b_ub, A_eq=A[eq], b_eq=model.rhs[eq],
                  bounds=np.column_stack([lo, hi]), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        return None
    xp = np.minimum(np.maximum(res.x, lo), hi)
    if model.row_violations(xp).max(initial=0.0) > feas_tol:
        return None
    return xp


def _solve_highs(model, config: SolverConfig) -> MilpSolution:
    t0 = time.perf_counter()
    lb, ub = _row_bounds(model)
    options = {"mip_rel_gap": config.gap_tol, "node_limit": int(min(config.node_limit, 2**31 - 1)),
               "presolve": True}
    if config.time_limit is not None:
        options["time_limit"] = float(config.time_limit)
    constraints = [LinearConstraint(model.A, lb, ub)] if model.num_rows else []
    res = milp(-model.objective, integrality=model.integrality.astype(int),
               bounds=Bounds(model.lo, model.hi), constraints=constraints, options=options)
    elapsed = time.perf_counter() - t0
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 2:
        return MilpSolution(MilpStatus.INFEASIBLE, float("nan"), float("nan"), None, nodes, elapsed, "highs")
    if res.status == 3:
        return MilpSolution(MilpStatus.UNBOUNDED, float("inf"), float("inf"), None, nodes, elapsed, "highs")
    if res.x is None:
        if res.status != 1:
            raise RuntimeError(f"external solver failed: {res.message}")
        status = MilpStatus.TIME_LIMIT if config.time_limit is not None else MilpStatus.NODE_LIMIT
        return MilpSolution(status, float("nan"), float("nan"), None, nodes, elapsed, "highs")
    x = _polish(model, np.asarray(res.x), config.feas_tol)
    if x is None:
        raise RuntimeError("external solver returned a point that fails the row check after polishing")
    objective = model.objective_value(x)
    dual_bound = getattr(res, "mip_dual_bound", None)
    bound = objective if dual_bound is None or not np.isfinite(dual_bound) else max(objective, -float(dual_bound))
    gap = (bound - objective) / max(1.0, abs(objective))
    if res.status == 0 or gap <= config.gap_tol:
        status = MilpStatus.OPTIMAL
        bound = min(bound, objective + config.gap_tol * max(1.0, abs(objective)))
    elif config.time_limit is not None and "time" in str(res.message).lower():
        status = MilpStatus.TIME_LIMIT
    else:
        status = MilpStatus.NODE_LIMIT
    return MilpSolution(status, objective, bound, x, nodes, time.perf_counter() - t0, "highs")


def external_solver_adapter(model, config: SolverConfig | None = None) -> MilpSolution:
    """Solve with the external backend named by ``config.backend`` (``"highs"``)."""
    config = config or SolverConfig(backend="highs")
    name = config.backend.lower()
    if name == "highs":
        return _solve_highs(model, config)
    raise SolverUnavailableError(
        f"external solver backend {config.backend!r} is not available; known: {', '.join(available_backends())}")

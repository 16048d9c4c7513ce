"""LP/MILP solving: in-house simplex + branch-and-bound, and external backends."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, TextIO

import numpy as np

from ._simplex import DEFAULT_KERNEL, KERNELS, Basis, SimplexEngine, SimplexStall


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


class MilpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    GAP_LIMIT = "GapLimit"
    NODE_LIMIT = "NodeLimit"
    TIME_LIMIT = "TimeLimit"


class Branching(enum.Enum):
    MOST_FRACTIONAL = "MostFractional"
    FIRST_FRACTIONAL = "FirstFractional"


@dataclass(frozen=True)
class SolverConfig:
    gap_tol: float = 1e-6
    # stop early once the relative gap is at most this (status GapLimit)
    gap_limit: float | None = None
    int_tol: float = 1e-6
    feas_tol: float = 1e-7
    node_limit: int = 1_000_000
    time_limit: float | None = None
    branching: Branching = Branching.MOST_FRACTIONAL
    backend: str = "bnb"
    kernel: str | None = None
    refactor_every: int = 50
    node_log: TextIO | Callable[[dict], None] | None = None

    def __post_init__(self):
        for name in ("gap_tol", "int_tol", "feas_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gap_limit is not None and not self.gap_limit > 0:
            raise ValueError("gap_limit must be positive")
        if self.node_limit < 1:
            raise ValueError("node_limit must be at least 1")
        if isinstance(self.branching, str):
            object.__setattr__(self, "branching", Branching(self.branching))


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    objective: float
    x: np.ndarray
    basis: Basis | None
    iterations: int = 0


@dataclass(frozen=True)
class MilpSolution:
    status: MilpStatus
    objective: float
    best_bound: float
    x: np.ndarray | None
    nodes: int
    wall_time: float
    backend: str = "bnb"

    @property
    def gap(self) -> float:
        if self.x is None:
            return float("inf")
        return (self.best_bound - self.objective) / max(1.0, abs(self.objective))

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None


def make_engine(model, config: SolverConfig) -> SimplexEngine:
    return SimplexEngine(
        model.A, model.sense, model.rhs, model.lo, model.hi, -np.asarray(model.objective),
        feas_tol=config.feas_tol, refactor_every=config.refactor_every, kernel=config.kernel,
    )


def _clip_to_bounds(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(x, lo), hi)


def solve_lp(model, config: SolverConfig | None = None) -> LpSolution:
    """LP relaxation of ``model`` (integrality ignored), maximization sense."""
    config = config or SolverConfig()
    engine = make_engine(model, config)
    state = engine.solve()
    if state == "infeasible":
        return LpSolution(LpStatus.INFEASIBLE, float("nan"), np.full(model.num_vars, np.nan), None,
                          engine.iterations)
    if state == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, float("inf"), np.full(model.num_vars, np.nan), None,
                          engine.iterations)
    x = _clip_to_bounds(engine.x(), model.lo, model.hi)
    return LpSolution(LpStatus.OPTIMAL, model.objective_value(x), x, engine.snapshot(), engine.iterations)


from .bnb import solve_milp  # noqa: E402
from .external import SolverUnavailableError, available_backends, external_solver_adapter  # noqa: E402


def solve(model, config: SolverConfig | None = None) -> MilpSolution:
    """Dispatch on ``config.backend``: ``"bnb"`` (in-house) or an external backend name."""
    config = config or SolverConfig()
    if config.backend == "bnb":
        return solve_milp(model, config)
    return external_solver_adapter(model, config)


__all__ = [
    "Basis", "Branching", "DEFAULT_KERNEL", "KERNELS", "LpSolution", "LpStatus", "MilpSolution",
    "MilpStatus", "SimplexStall", "SolverConfig", "SolverUnavailableError", "available_backends",
    "external_solver_adapter", "solve", "solve_lp", "solve_milp",
]

"""Bounded-variable dense-tableau simplex engine.

Rows ``a_i x {<=,==,>=} b_i`` become equalities with one slack per
inequality (``+s`` for ``<=``, ``-s`` for ``>=``) and one artificial column
per row. Artificials are free only during phase 1 and fixed at zero after
it, so a basis snapshot stays meaningful across bound changes, which is
what branch-and-bound warm starts rely on.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from . import _kernel_py

try:
    if os.environ.get("H2BID_KERNEL", "").lower() == "python":
        raise ImportError("python kernel forced")
    from . import _kernel as _compiled  # type: ignore[attr-defined]
except ImportError:
    _compiled = None

KERNELS = {"python": _kernel_py}
if _compiled is not None:
    KERNELS["compiled"] = _compiled
DEFAULT_KERNEL = "compiled" if _compiled is not None else "python"

OPTIMAL, UNBOUNDED, BUDGET = _kernel_py.OPTIMAL, _kernel_py.UNBOUNDED, _kernel_py.BUDGET


class SimplexStall(RuntimeError):
    """Iteration cap exceeded or the basis became numerically unusable."""


@dataclass(frozen=True)
class Basis:
    """Basic column per row and the bound status of every column (engine column space)."""

    basis: np.ndarray
    status: np.ndarray


class SimplexEngine:
    """Minimizes ``cost @ x`` subject to the given rows and bounds."""

    def __init__(self, A, sense, rhs, lo, hi, cost, *, feas_tol=1e-7, opt_tol=1e-9, piv_tol=1e-9,
                 refactor_every=50, kernel: str | None = None, max_iter: int | None = None):
        A = A.tocsr()
        nnz_per_row = np.diff(A.indptr)
        sense = np.asarray(sense)
        rhs = np.asarray(rhs, dtype=float)
        self.trivially_infeasible = False
        empty = nnz_per_row == 0
        for r in np.flatnonzero(empty):
            s, b = sense[r], rhs[r]
            if (s == "<=" and b < -feas_tol) or (s == ">=" and b > feas_tol) or (s == "==" and abs(b) > feas_tol):
                self.trivially_infeasible = True
        keep = ~empty
        A = A[keep]
        sense = sense[keep]
        self.b = rhs[keep].copy()
        self.n = A.shape[1]
        m = self.m = A.shape[0]
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(np.isinf(lo) & np.isinf(hi)):
            raise ValueError("free variables (no finite bound) are not supported")

        ineq = np.flatnonzero(sense != "==")
        self.k = len(ineq)
        N = self.N = self.n + self.k + m
        S = np.zeros((m, N))
        S[:, : self.n] = A.toarray()
        sigma = np.where(sense[ineq] == "<=", 1.0, -1.0)
        S[ineq, self.n + np.arange(self.k)] = sigma
        self.A = A.tocsc()
        self.ineq, self.sigma = ineq, sigma
        self.art_sign = np.ones(m)
        self.slack_of_row = np.full(m, -1, dtype=np.int64)
        self.slack_of_row[ineq] = self.n + np.arange(self.k)
        self.slack_sign = np.zeros(m)
        self.slack_sign[ineq] = sigma
        self.art0 = self.n + self.k
        S[np.arange(m), self.art0 + np.arange(m)] = 1.0
        self.S = S

        self.lo = np.zeros(N)
        self.hi = np.zeros(N)
        self.lo[: self.n] = lo
        self.hi[: self.n] = hi
        self.hi[self.n: self.art0] = np.inf
        self.cost = np.zeros(N)
        self.cost[: self.n] = cost

        self.feas_tol, self.opt_tol, self.piv_tol = feas_tol, opt_tol, piv_tol
        self.refactor_every = refactor_every
        self.kernel_name = kernel or DEFAULT_KERNEL
        self.kernel = KERNELS[self.kernel_name]
        self.max_iter = max_iter or 50 * (m + N) + 1000
        self.bland_after = 5 * (m + N)
        self.iterations = 0
        self.since_refactor = 0
        self.T = np.zeros((m, N))
        self.xB = np.zeros(m)
        self.d = np.zeros(N)
        self.basis = np.zeros(m, dtype=np.int64)
        self.status = np.ones(N, dtype=np.int8)
        self.state = "empty"

    # ------------------------------------------------------------------ state

    def _nonbasic_values(self) -> np.ndarray:
        x = np.where(self.status == 2, self.hi, self.lo)
        x[self.status == 0] = 0.0
        return x

    def values(self) -> np.ndarray:
        x = self._nonbasic_values()
        x[self.basis] = self.xB
        return x

    def x(self) -> np.ndarray:
        return self.values()[: self.n]

    def objective(self) -> float:
        return float(self.cost @ self.values())

    def snapshot(self) -> Basis:
        return Basis(self.basis.copy(), self.status.copy())

    def _refactor(self, cost: np.ndarray) -> None:
        B = self.S[:, self.basis]
        try:
            binv = la.inv(B, check_finite=False)
        except (la.LinAlgError, ValueError) as exc:
            raise SimplexStall(f"singular basis: {exc}") from exc
        if not np.all(np.isfinite(binv)):
            raise SimplexStall("singular basis")
        n, art0 = self.n, self.art0
        # B^-1 times the sparse structural part, then slack and artificial columns from B^-1 directly
        self.T[:, :n] = (self.A.T @ binv.T).T
        self.T[:, n:art0] = binv[:, self.ineq] * self.sigma
        self.T[:, art0:] = binv * self.art_sign
        rhs = self.b - self.S @ self._nonbasic_values()
        self.xB[:] = binv @ rhs
        if np.abs(B @ self.xB - rhs).max(initial=0.0) > 1e-6 * max(1.0, np.abs(rhs).max(initial=0.0)):
            raise SimplexStall("ill-conditioned basis")
        self.d[:] = cost - cost[self.basis] @ self.T
        self.d[self.basis] = 0.0
        self.since_refactor = 0

    # Both loops refactorize once ``refactor_every`` pivots have accumulated since
    # the last factorization; an optimal answer is trusted only below that count.

    def _primal(self, cost: np.ndarray) -> str:
        while True:
            bland = self.iterations >= self.bland_after
            budget = max(1, min(self.refactor_every - self.since_refactor, self.max_iter + 1 - self.iterations))
            code, it, _ = self.kernel.primal_iterate(
                self.T, self.xB, self.d, self.basis, self.status, self.lo, self.hi,
                budget, bland, self.opt_tol, self.piv_tol)
            self.iterations += it
            self.since_refactor += it
            if code == UNBOUNDED:
                if self.since_refactor == 0:
                    return "unbounded"
                self._refactor(cost)
                continue
            if code == OPTIMAL and self.since_refactor < self.refactor_every:
                return "optimal"
            if self.iterations > self.max_iter:
                raise SimplexStall("simplex stall")
            self._refactor(cost)

    def _dual(self, cost: np.ndarray) -> str:
        while True:
            budget = max(1, min(self.refactor_every - self.since_refactor, self.max_iter + 1 - self.iterations))
            code, it, _ = self.kernel.dual_iterate(
                self.T, self.xB, self.d, self.basis, self.status, self.lo, self.hi,
                budget, self.feas_tol, self.piv_tol)
            self.iterations += it
            self.since_refactor += it
            if code == UNBOUNDED:
                if self.since_refactor == 0:
                    return "infeasible"
                self._refactor(cost)
                continue
            if code == OPTIMAL and self.since_refactor < self.refactor_every:
                return "optimal"
            if self.iterations > self.max_iter:
                raise SimplexStall("simplex stall")
            self._refactor(cost)

    def _primal_infeasibility(self) -> float:
        lb, ub = self.lo[self.basis], self.hi[self.basis]
        return float(np.max(np.maximum(lb - self.xB, self.xB - ub), initial=0.0))

    def _dual_infeasibility(self) -> float:
        movable = self.hi > self.lo
        at_lo = (self.status == 1) & movable
        at_hi = (self.status == 2) & movable
        worst = np.max(-self.d[at_lo], initial=0.0)
        return float(max(worst, np.max(self.d[at_hi], initial=0.0)))

    # -------------------------------------------------------------- interface

    def solve(self) -> str:
        """Cold two-phase solve from the current bounds."""
        self.iterations = 0
        if self.trivially_infeasible:
            self.state = "infeasible"
            return self.state
        m = self.m
        art = self.art0 + np.arange(m)
        self.lo[art] = 0.0
        self.hi[art] = 0.0
        self.status[:] = np.where(np.isfinite(self.lo), 1, 2).astype(np.int8)
        r = self.b - self.S @ self._nonbasic_values()
        coef = np.ones(m)
        for i in range(m):
            s = self.slack_of_row[i]
            if s >= 0 and self.slack_sign[i] * r[i] >= 0:
                self.basis[i] = s
                coef[i] = self.slack_sign[i]
            else:
                sign = 1.0 if r[i] >= 0 else -1.0
                self.S[i, self.art0 + i] = sign
                self.art_sign[i] = sign
                self.basis[i] = self.art0 + i
                self.hi[self.art0 + i] = np.inf
                coef[i] = sign
        self.status[self.basis] = 0
        self.T[:] = self.S / coef[:, None]
        self.xB[:] = r / coef
        self.since_refactor = 0

        used = self.basis >= self.art0
        if used.any():
            c1 = np.zeros(self.N)
            c1[self.basis[used]] = 1.0
            self.d[:] = c1 - c1[self.basis] @ self.T
            self.d[self.basis] = 0.0
            self._primal(c1)
            infeas = float(c1 @ self.values())
            if infeas > self.feas_tol * max(1.0, float(np.abs(self.b).max(initial=0.0))):
                self.state = "infeasible"
                return self.state
            self.hi[art] = 0.0
        self._refactor(self.cost)
        self.state = self._primal(self.cost)
        if self.state == "optimal":
            self._certify()
        return self.state

    def residual(self) -> float:
        """Largest row or bound violation of the current point, computed from scratch."""
        x = self.values()
        rows = np.abs(self.S @ x - self.b).max(initial=0.0)
        return float(max(rows, np.max(self.lo - x, initial=0.0), np.max(x - self.hi, initial=0.0)))

    def _certify(self) -> None:
        """Confirm the final basis; refactorize and repair when the point has drifted."""
        if self.residual() <= self.feas_tol:
            return
        for _ in range(3):
            if self.since_refactor:
                self._refactor(self.cost)
            primal_ok = self._primal_infeasibility() <= self.feas_tol
            dual_ok = self._dual_infeasibility() <= self.opt_tol
            if primal_ok and dual_ok:
                return
            if not primal_ok and self._dual(self.cost) == "infeasible":
                self.state = "infeasible"
                return
            self.state = self._primal(self.cost)
            if self.state != "optimal":
                return
        raise SimplexStall("simplex stall: basis does not settle")

    def set_bounds(self, cols: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> None:
        """Change structural bounds in place, keeping the basis."""
        cols = np.asarray(cols, dtype=np.int64)
        lo = np.broadcast_to(np.asarray(lo, dtype=float), cols.shape)
        hi = np.broadcast_to(np.asarray(hi, dtype=float), cols.shape)
        for j, l, h in zip(cols, lo, hi):
            if self.status[j] == 0:
                self.lo[j], self.hi[j] = l, h
                continue
            old = self.hi[j] if self.status[j] == 2 else self.lo[j]
            self.lo[j], self.hi[j] = l, h
            if self.status[j] == 2 and not np.isfinite(h):
                self.status[j] = 1
            if self.status[j] == 1 and not np.isfinite(l):
                self.status[j] = 2
            new = self.hi[j] if self.status[j] == 2 else self.lo[j]
            if new != old:
                self.xB -= (new - old) * self.T[:, j]

    def load(self, snap: Basis, lo: np.ndarray, hi: np.ndarray) -> None:
        """Install a stored basis under new structural bounds (refactorizes)."""
        self.lo[: self.n] = lo
        self.hi[: self.n] = hi
        art = self.art0 + np.arange(self.m)
        self.lo[art] = 0.0
        self.hi[art] = 0.0
        self.basis[:] = snap.basis
        self.status[:] = snap.status
        fix = (self.status == 2) & ~np.isfinite(self.hi)
        self.status[fix] = 1
        self._refactor(self.cost)

    def reoptimize(self) -> str:
        """Restore optimality after bound changes, dual simplex first."""
        self.iterations = 0
        if self.trivially_infeasible:
            self.state = "infeasible"
            return self.state
        try:
            if self._dual_infeasibility() <= 1e3 * self.opt_tol:
                if self._primal_infeasibility() > self.feas_tol:
                    if self._dual(self.cost) == "infeasible":
                        self.state = "infeasible"
                        return self.state
                self.state = self._primal(self.cost)
            elif self._primal_infeasibility() <= self.feas_tol:
                self.state = self._primal(self.cost)
            else:
                return self.solve()
            if self.state == "optimal":
                self._certify()
            return self.state
        except SimplexStall:
            return self.solve()

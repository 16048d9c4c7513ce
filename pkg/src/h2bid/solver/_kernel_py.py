"""Pure numpy simplex kernels on a dense tableau.

Shared state layout (mirrored exactly by ``_kernel.pyx``):

``T``       (m, N) tableau ``B^-1 A``
``xB``      (m,)   basic values
``d``       (N,)   reduced costs of a minimization
``basis``   (m,)   int64 column of each basic row
``status``  (N,)   int8: 0 basic, 1 at lower bound, 2 at upper bound
``lo, hi``  (N,)   column bounds (``hi`` may be +inf)

Both kernels return ``(code, iterations, column)``; see ``OPTIMAL`` etc.
Pivot choices are deterministic: lowest index wins every tie.
"""
from __future__ import annotations

import numpy as np

OPTIMAL = 0
UNBOUNDED = 1  # primal: unbounded ray; dual: primal infeasible
BUDGET = 2

TIE_TOL = 1e-12


def _pivot(T, xB, d, basis, status, r, j, leave_status, enter_value):
    prow = T[r] / T[r, j]
    col = T[:, j].copy()
    T -= np.outer(col, prow)
    T[r] = prow
    d -= d[j] * prow
    status[basis[r]] = leave_status
    status[j] = 0
    basis[r] = j
    xB[r] = enter_value


def primal_iterate(T, xB, d, basis, status, lo, hi, max_iter, bland, opt_tol, piv_tol):
    movable = hi > lo
    for it in range(max_iter):
        cand = movable & (((status == 1) & (d < -opt_tol)) | ((status == 2) & (d > opt_tol)))
        if not cand.any():
            return OPTIMAL, it, -1
        if bland:
            j = int(np.argmax(cand))
        else:
            j = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
        delta = 1.0 if status[j] == 1 else -1.0
        rate = delta * T[:, j]
        lb, ub = lo[basis], hi[basis]
        ratio = np.full(len(xB), np.inf)
        dec = rate > piv_tol
        inc = (rate < -piv_tol) & np.isfinite(ub)
        ratio[dec] = np.maximum(0.0, xB[dec] - lb[dec]) / rate[dec]
        ratio[inc] = np.maximum(0.0, ub[inc] - xB[inc]) / -rate[inc]
        theta = ratio.min() if len(ratio) else np.inf
        span = hi[j] - lo[j]
        if span < np.inf and span <= theta:
            # bound flip, basis unchanged
            xB -= (delta * span) * T[:, j]
            status[j] = 3 - status[j]
            continue
        if theta == np.inf:
            return UNBOUNDED, it, j
        ties = np.flatnonzero(ratio <= theta + TIE_TOL)
        if bland:
            r = int(ties[np.argmin(basis[ties])])
        else:
            r = int(ties[np.argmax(np.abs(rate[ties]))])
        theta = ratio[r]
        leave_status = 1 if rate[r] > 0 else 2
        enter_value = lo[j] + theta if delta > 0 else hi[j] - theta
        xB -= (delta * theta) * T[:, j]
        _pivot(T, xB, d, basis, status, r, j, leave_status, enter_value)
    return BUDGET, max_iter, -1


def dual_iterate(T, xB, d, basis, status, lo, hi, max_iter, feas_tol, piv_tol):
    movable = hi > lo
    for it in range(max_iter):
        lb, ub = lo[basis], hi[basis]
        below = lb - xB
        above = xB - ub
        viol = np.maximum(below, above)
        r = int(np.argmax(viol)) if len(viol) else 0
        if not len(viol) or viol[r] <= feas_tol:
            return OPTIMAL, it, -1
        row = T[r]
        at_lo = status == 1
        at_hi = status == 2
        if below[r] > 0:
            elig = movable & ((at_lo & (row < -piv_tol)) | (at_hi & (row > piv_tol)))
            target = lb[r]
            leave_status = 1
        else:
            elig = movable & ((at_lo & (row > piv_tol)) | (at_hi & (row < -piv_tol)))
            target = ub[r]
            leave_status = 2
        if not elig.any():
            return UNBOUNDED, it, r
        ratio = np.full(len(d), np.inf)
        ratio[elig] = np.abs(d[elig]) / np.abs(row[elig])
        theta = ratio.min()
        ties = np.flatnonzero(ratio <= theta + TIE_TOL)
        j = int(ties[np.argmax(np.abs(row[ties]))])
        current = lo[j] if status[j] == 1 else hi[j]
        dx = (xB[r] - target) / row[j]
        xB -= dx * T[:, j]
        _pivot(T, xB, d, basis, status, r, j, leave_status, current + dx)
    return BUDGET, max_iter, -1

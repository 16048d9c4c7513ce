# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simplex kernels; same state layout and pivot rules as ``_kernel_py``."""

from libc.math cimport fabs, INFINITY

cdef double TIE_TOL = 1e-12


cdef void _pivot(double[:, ::1] T, double[::1] xB, double[::1] d, long long[::1] basis,
                 signed char[::1] status, Py_ssize_t r, Py_ssize_t j,
                 signed char leave_status, double enter_value) noexcept nogil:
    cdef Py_ssize_t m = T.shape[0], N = T.shape[1], i, k
    cdef double piv = T[r, j], f, dj
    for k in range(N):
        T[r, k] = T[r, k] / piv
    for i in range(m):
        if i == r:
            continue
        f = T[i, j]
        if f != 0.0:
            for k in range(N):
                T[i, k] = T[i, k] - f * T[r, k]
    dj = d[j]
    if dj != 0.0:
        for k in range(N):
            d[k] = d[k] - dj * T[r, k]
    status[basis[r]] = leave_status
    status[j] = 0
    basis[r] = j
    xB[r] = enter_value


cdef int _primal(double[:, ::1] T, double[::1] xB, double[::1] d, long long[::1] basis,
                 signed char[::1] status, double[::1] lo, double[::1] hi,
                 int max_iter, bint bland, double opt_tol, double piv_tol,
                 Py_ssize_t* out) noexcept nogil:
    cdef Py_ssize_t m = T.shape[0], N = T.shape[1]
    cdef Py_ssize_t it, i, j, k, r
    cdef double best, score, delta, rate, ratio, theta, span, lb, ub, step, bestrate
    cdef signed char leave_status
    cdef long long bestbasis
    for it in range(max_iter):
        j = -1
        best = -1.0
        for k in range(N):
            if hi[k] > lo[k] and ((status[k] == 1 and d[k] < -opt_tol) or (status[k] == 2 and d[k] > opt_tol)):
                if bland:
                    j = k
                    break
                score = fabs(d[k])
                if score > best:
                    best = score
                    j = k
        if j < 0:
            out[0] = it
            out[1] = -1
            return 0
        delta = 1.0 if status[j] == 1 else -1.0
        # pass 1: minimum ratio
        theta = INFINITY
        for i in range(m):
            rate = delta * T[i, j]
            lb = lo[basis[i]]
            ub = hi[basis[i]]
            if rate > piv_tol:
                ratio = (xB[i] - lb if xB[i] - lb > 0.0 else 0.0) / rate
            elif rate < -piv_tol and ub < INFINITY:
                ratio = (ub - xB[i] if ub - xB[i] > 0.0 else 0.0) / -rate
            else:
                continue
            if ratio < theta:
                theta = ratio
        span = hi[j] - lo[j]
        if span < INFINITY and span <= theta:
            step = delta * span
            for i in range(m):
                xB[i] = xB[i] - step * T[i, j]
            status[j] = 3 - status[j]
            continue
        if theta == INFINITY:
            out[0] = it
            out[1] = j
            return 1
        # pass 2: tie-break among near-minimal ratios
        r = -1
        bestrate = -1.0
        bestbasis = -1
        for i in range(m):
            rate = delta * T[i, j]
            lb = lo[basis[i]]
            ub = hi[basis[i]]
            if rate > piv_tol:
                ratio = (xB[i] - lb if xB[i] - lb > 0.0 else 0.0) / rate
            elif rate < -piv_tol and ub < INFINITY:
                ratio = (ub - xB[i] if ub - xB[i] > 0.0 else 0.0) / -rate
            else:
                continue
            if ratio <= theta + TIE_TOL:
                if bland:
                    if r < 0 or basis[i] < bestbasis:
                        r = i
                        bestbasis = basis[i]
                elif fabs(rate) > bestrate:
                    r = i
                    bestrate = fabs(rate)
        rate = delta * T[r, j]
        lb = lo[basis[r]]
        ub = hi[basis[r]]
        if rate > 0:
            theta = (xB[r] - lb if xB[r] - lb > 0.0 else 0.0) / rate
            leave_status = 1
        else:
            theta = (ub - xB[r] if ub - xB[r] > 0.0 else 0.0) / -rate
            leave_status = 2
        step = delta * theta
        for i in range(m):
            xB[i] = xB[i] - step * T[i, j]
        _pivot(T, xB, d, basis, status, r, j, leave_status,
               lo[j] + theta if delta > 0 else hi[j] - theta)
    out[0] = max_iter
    out[1] = -1
    return 2


def primal_iterate(double[:, ::1] T, double[::1] xB, double[::1] d, long long[::1] basis,
                   signed char[::1] status, double[::1] lo, double[::1] hi,
                   int max_iter, bint bland, double opt_tol, double piv_tol):
    cdef Py_ssize_t out[2]
    cdef int code
    with nogil:
        code = _primal(T, xB, d, basis, status, lo, hi, max_iter, bland, opt_tol, piv_tol, out)
    return code, out[0], out[1]


cdef int _dual(double[:, ::1] T, double[::1] xB, double[::1] d, long long[::1] basis,
               signed char[::1] status, double[::1] lo, double[::1] hi,
               int max_iter, double feas_tol, double piv_tol, Py_ssize_t* out) noexcept nogil:
    cdef Py_ssize_t m = T.shape[0], N = T.shape[1]
    cdef Py_ssize_t it, i, j, k, r
    cdef double v, worst, below_r, target, rowk, ratio, theta, bestrow, current, dx
    cdef bint below
    cdef signed char leave_status
    for it in range(max_iter):
        r = -1
        worst = -INFINITY
        below_r = 0.0
        for i in range(m):
            v = lo[basis[i]] - xB[i]
            if xB[i] - hi[basis[i]] > v:
                v = xB[i] - hi[basis[i]]
            if v > worst:
                worst = v
                r = i
        if r < 0 or worst <= feas_tol:
            out[0] = it
            out[1] = -1
            return 0
        below = lo[basis[r]] - xB[r] > 0
        if below:
            target = lo[basis[r]]
            leave_status = 1
        else:
            target = hi[basis[r]]
            leave_status = 2
        theta = INFINITY
        for k in range(N):
            if not hi[k] > lo[k]:
                continue
            rowk = T[r, k]
            if below:
                if not ((status[k] == 1 and rowk < -piv_tol) or (status[k] == 2 and rowk > piv_tol)):
                    continue
            else:
                if not ((status[k] == 1 and rowk > piv_tol) or (status[k] == 2 and rowk < -piv_tol)):
                    continue
            ratio = fabs(d[k]) / fabs(rowk)
            if ratio < theta:
                theta = ratio
        if theta == INFINITY:
            out[0] = it
            out[1] = r
            return 1
        j = -1
        bestrow = -1.0
        for k in range(N):
            if not hi[k] > lo[k]:
                continue
            rowk = T[r, k]
            if below:
                if not ((status[k] == 1 and rowk < -piv_tol) or (status[k] == 2 and rowk > piv_tol)):
                    continue
            else:
                if not ((status[k] == 1 and rowk > piv_tol) or (status[k] == 2 and rowk < -piv_tol)):
                    continue
            ratio = fabs(d[k]) / fabs(rowk)
            if ratio <= theta + TIE_TOL and fabs(rowk) > bestrow:
                bestrow = fabs(rowk)
                j = k
        current = lo[j] if status[j] == 1 else hi[j]
        dx = (xB[r] - target) / T[r, j]
        for i in range(m):
            xB[i] = xB[i] - dx * T[i, j]
        _pivot(T, xB, d, basis, status, r, j, leave_status, current + dx)
    out[0] = max_iter
    out[1] = -1
    return 2


def dual_iterate(double[:, ::1] T, double[::1] xB, double[::1] d, long long[::1] basis,
                 signed char[::1] status, double[::1] lo, double[::1] hi,
                 int max_iter, double feas_tol, double piv_tol):
    cdef Py_ssize_t out[2]
    cdef int code
    with nogil:
        code = _dual(T, xB, d, basis, status, lo, hi, max_iter, feas_tol, piv_tol, out)
    return code, out[0], out[1]

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 kernel for the projection flows on orthonormal-column
stacks.  Semantics are documented in gradsync._kernels_py, the pure
twin of this module; the whole stepping loop runs with the GIL
released so Monte Carlo trials parallelize across threads."""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite, sqrt

cnp.import_array()

BACKEND_NAME = "compiled"

cdef enum:
    _CONSENSUS = 0
    _STALL = 1
    _HORIZON = 2
    _BLOWUP = 3

OUTCOME_CONSENSUS = _CONSENSUS
OUTCOME_STALL = _STALL
OUTCOME_HORIZON = _HORIZON
OUTCOME_BLOWUP = _BLOWUP


cdef void _rhs(double[:, :, ::1] x, double[:, :, ::1] k, double[:, :, ::1] acc,
               double[:, ::1] b, long long[::1] ei, long long[::1] ej,
               double[::1] w, bint factor2) noexcept nogil:
    cdef Py_ssize_t n_agents = x.shape[0], n = x.shape[1], p = x.shape[2]
    cdef Py_ssize_t n_edges = ei.shape[0]
    cdef Py_ssize_t e, i, j, r, c, a
    cdef double d, s, fac
    fac = 2.0 if factor2 else 1.0

    for i in range(n_agents):
        for r in range(n):
            for c in range(p):
                acc[i, r, c] = 0.0
    for e in range(n_edges):
        i = <Py_ssize_t> ei[e]
        j = <Py_ssize_t> ej[e]
        for r in range(n):
            for c in range(p):
                d = w[e] * (x[j, r, c] - x[i, r, c])
                acc[i, r, c] += d
                acc[j, r, c] -= d
    for i in range(n_agents):
        # b = X_i^T A_i, then K_i = (A_i - X_i sym(b)) * fac
        for r in range(p):
            for c in range(p):
                s = 0.0
                for a in range(n):
                    s += x[i, a, r] * acc[i, a, c]
                b[r, c] = s
        for r in range(n):
            for c in range(p):
                s = 0.0
                for a in range(p):
                    s += x[i, r, a] * 0.5 * (b[a, c] + b[c, a])
                k[i, r, c] = fac * (acc[i, r, c] - s)


cdef void _stage(double[:, :, ::1] xs, double[:, :, ::1] x,
                 double[:, :, ::1] k, double coef) noexcept nogil:
    cdef Py_ssize_t n_agents = x.shape[0], n = x.shape[1], p = x.shape[2]
    cdef Py_ssize_t i, r, c
    for i in range(n_agents):
        for r in range(n):
            for c in range(p):
                xs[i, r, c] = x[i, r, c] + coef * k[i, r, c]


cdef void _combine(double[:, :, ::1] x, double[:, :, ::1] k1, double[:, :, ::1] k2,
                   double[:, :, ::1] k3, double[:, :, ::1] k4, double h6) noexcept nogil:
    cdef Py_ssize_t n_agents = x.shape[0], n = x.shape[1], p = x.shape[2]
    cdef Py_ssize_t i, r, c
    for i in range(n_agents):
        for r in range(n):
            for c in range(p):
                x[i, r, c] += h6 * (k1[i, r, c] + 2.0 * k2[i, r, c]
                                    + 2.0 * k3[i, r, c] + k4[i, r, c])


cdef void _retract_ns3(double[:, :, ::1] x, double[:, ::1] g,
                       double[::1] row) noexcept nogil:
    # three Newton-Schulz sweeps toward the polar factor per agent
    cdef Py_ssize_t n_agents = x.shape[0], n = x.shape[1], p = x.shape[2]
    cdef Py_ssize_t i, r, c, a, sweep
    cdef double s
    for i in range(n_agents):
        for sweep in range(3):
            for r in range(p):
                for c in range(p):
                    s = 0.0
                    for a in range(n):
                        s += x[i, a, r] * x[i, a, c]
                    g[r, c] = s
            for r in range(n):
                for c in range(p):
                    s = 0.0
                    for a in range(p):
                        s += x[i, r, a] * g[a, c]
                    row[c] = s
                for c in range(p):
                    x[i, r, c] = 1.5 * x[i, r, c] - 0.5 * row[c]


cdef double _half_max_edge(double[:, :, ::1] x, long long[::1] ei,
                           long long[::1] ej) noexcept nogil:
    cdef Py_ssize_t n_edges = ei.shape[0], n = x.shape[1], p = x.shape[2]
    cdef Py_ssize_t e, i, j, r, c
    cdef double best = 0.0, s, d
    for e in range(n_edges):
        i = <Py_ssize_t> ei[e]
        j = <Py_ssize_t> ej[e]
        s = 0.0
        for r in range(n):
            for c in range(p):
                d = x[i, r, c] - x[j, r, c]
                s += d * d
        if s > best or not isfinite(s):
            best = s
            if not isfinite(s):
                return s
    return 0.5 * sqrt(best)


cdef double _max_agent_norm(double[:, :, ::1] k) noexcept nogil:
    cdef Py_ssize_t n_agents = k.shape[0], n = k.shape[1], p = k.shape[2]
    cdef Py_ssize_t i, r, c
    cdef double best = 0.0, s
    for i in range(n_agents):
        s = 0.0
        for r in range(n):
            for c in range(p):
                s += k[i, r, c] * k[i, r, c]
        if s > best:
            best = s
    return sqrt(best)


def integrate_orthonormal(x0, ei, ej, w, double step, long long n_steps,
                          double eps, double stall_tol, bint factor2):
    """Fixed-step RK4 with polar retraction on orthonormal-column stacks.

    Returns (final stack, outcome code, steps taken); see the pure
    twin for the outcome encoding.
    """
    x_arr = np.array(x0, dtype=np.float64, order="C", copy=True)
    ei_arr = np.ascontiguousarray(ei, dtype=np.int64)
    ej_arr = np.ascontiguousarray(ej, dtype=np.int64)
    w_arr = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n_agents = x_arr.shape[0], n = x_arr.shape[1], p = x_arr.shape[2]

    k1_arr = np.empty_like(x_arr)
    k2_arr = np.empty_like(x_arr)
    k3_arr = np.empty_like(x_arr)
    k4_arr = np.empty_like(x_arr)
    xs_arr = np.empty_like(x_arr)
    acc_arr = np.empty_like(x_arr)
    b_arr = np.empty((p, p), dtype=np.float64)
    row_arr = np.empty(p, dtype=np.float64)

    cdef double[:, :, ::1] x = x_arr, k1 = k1_arr, k2 = k2_arr, k3 = k3_arr
    cdef double[:, :, ::1] k4 = k4_arr, xs = xs_arr, acc = acc_arr
    cdef double[:, ::1] b = b_arr
    cdef double[::1] row = row_arr
    cdef long long[::1] cei = ei_arr, cej = ej_arr
    cdef double[::1] cw = w_arr

    cdef int outcome = _HORIZON
    cdef long long steps = 0, it
    cdef double half

    with nogil:
        half = _half_max_edge(x, cei, cej)
        if half < eps:
            outcome = _CONSENSUS
        else:
            for it in range(n_steps):
                _rhs(x, k1, acc, b, cei, cej, cw, factor2)
                if _max_agent_norm(k1) < stall_tol:
                    outcome = _STALL
                    break
                _stage(xs, x, k1, 0.5 * step)
                _rhs(xs, k2, acc, b, cei, cej, cw, factor2)
                _stage(xs, x, k2, 0.5 * step)
                _rhs(xs, k3, acc, b, cei, cej, cw, factor2)
                _stage(xs, x, k3, step)
                _rhs(xs, k4, acc, b, cei, cej, cw, factor2)
                _combine(x, k1, k2, k3, k4, step / 6.0)
                _retract_ns3(x, b, row)
                steps = it + 1
                half = _half_max_edge(x, cei, cej)
                if not isfinite(half) or half > 1e100:
                    outcome = _BLOWUP
                    break
                if half < eps:
                    outcome = _CONSENSUS
                    break
    return x_arr, int(outcome), int(steps)

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled assignment kernel.

Same augmenting-path algorithm as _assign_py, element for element: the
scalar arithmetic and the ascending-index tie-breaks match the fallback
exactly, so both backends produce identical assignments and potentials.
"""

import numpy as np


cdef double INF = float("inf")


cdef void _solve_into(const double[:, :, ::1] costs, Py_ssize_t b,
                      double[::1] u, double[::1] v, double[::1] minv,
                      long long[::1] col_row, long long[::1] way,
                      unsigned char[::1] used,
                      long long[:, ::1] perms) noexcept nogil:
    cdef Py_ssize_t n = costs.shape[1]
    cdef Py_ssize_t i, j, i0, j0, j1
    cdef double cur, delta
    for j in range(n + 1):
        u[j] = 0.0
        v[j] = 0.0
        col_row[j] = n
    for i in range(n):
        col_row[n] = i
        j0 = n
        for j in range(n):
            minv[j] = INF
            way[j] = n
        for j in range(n + 1):
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = col_row[j0]
            delta = INF
            j1 = -1
            for j in range(n):
                if not used[j]:
                    cur = costs[b, i0, j] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            if j1 < 0:  # unreachable for finite costs; keep memory-safe
                break
            for j in range(n + 1):
                if used[j]:
                    u[col_row[j]] += delta
                    v[j] -= delta
                elif j < n:
                    minv[j] -= delta
            j0 = j1
            if col_row[j0] == n:
                break
        while j0 != n:
            j1 = way[j0]
            col_row[j0] = col_row[j1]
            j0 = j1
    for j in range(n):
        if col_row[j] < n:
            perms[b, col_row[j]] = j


def solve_batch(costs):
    """Solve a (b, n, n) stack of cost matrices; returns (b, n) permutations."""
    costs = np.ascontiguousarray(costs, dtype=np.float64)
    cdef Py_ssize_t nb = costs.shape[0]
    cdef Py_ssize_t n = costs.shape[1]
    perms = np.empty((nb, n), dtype=np.int64)
    u = np.empty(n + 1, dtype=np.float64)
    v = np.empty(n + 1, dtype=np.float64)
    minv = np.empty(n + 1, dtype=np.float64)
    col_row = np.empty(n + 1, dtype=np.int64)
    way = np.empty(n + 1, dtype=np.int64)
    used = np.empty(n + 1, dtype=np.uint8)
    cdef const double[:, :, ::1] costs_v = costs
    cdef long long[:, ::1] perms_v = perms
    cdef double[::1] u_v = u, v_v = v, minv_v = minv
    cdef long long[::1] col_row_v = col_row, way_v = way
    cdef unsigned char[::1] used_v = used
    cdef Py_ssize_t b
    with nogil:
        for b in range(nb):
            _solve_into(costs_v, b, u_v, v_v, minv_v, col_row_v, way_v, used_v, perms_v)
    return perms


def solve(cost):
    """Return perm with perm[i] = column assigned to row i, minimizing total cost."""
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    return solve_batch(cost[None])[0]

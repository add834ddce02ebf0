"""Pure-Python minimum-cost assignment solver.

Shortest augmenting path with row/column potentials, O(n^3) overall: rows
are inserted one at a time, each insertion growing an alternating tree of
tight edges until a free column is reached (Jonker-Volgenant style dual
updates). Column scans are vectorized but the arithmetic per element is
identical to the compiled kernel in _assign_cy, so the two backends
return bit-identical potentials and the same assignment, with ties broken
toward the lowest column index.

The cost matrix must be square and finite; callers validate.
"""

from __future__ import annotations

import numpy as np


def solve(cost: np.ndarray) -> np.ndarray:
    """Return perm with perm[i] = column assigned to row i, minimizing total cost."""
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    n = cost.shape[0]
    u = np.zeros(n + 1)  # row potentials, u[n] is the virtual row accumulator
    v = np.zeros(n + 1)  # column potentials, v[n] is the virtual start column
    col_row = np.full(n + 1, n, dtype=np.int64)  # assigned row per column, n = free
    for i in range(n):
        col_row[n] = i
        j0 = n
        minv = np.full(n, np.inf)  # cheapest reduced cost to reach each column
        way = np.full(n, n, dtype=np.int64)  # predecessor column on that path
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = col_row[j0]
            active = ~used[:n]
            cur = cost[i0] - u[i0] - v[:n]
            better = active & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            reach = np.where(active, minv, np.inf)
            j1 = int(np.argmin(reach))
            delta = reach[j1]
            u[col_row[used]] += delta
            v[used] -= delta
            minv[active] -= delta
            j0 = j1
            if col_row[j0] == n:
                break
        while j0 != n:  # flip matched edges back along the path
            j1 = way[j0]
            col_row[j0] = col_row[j1]
            j0 = j1
    perm = np.empty(n, dtype=np.int64)
    perm[col_row[:n]] = np.arange(n)
    return perm


def solve_batch(costs: np.ndarray) -> np.ndarray:
    """Solve a (b, n, n) stack of cost matrices; returns (b, n) permutations."""
    costs = np.ascontiguousarray(costs, dtype=np.float64)
    out = np.empty(costs.shape[:2], dtype=np.int64)
    for b in range(costs.shape[0]):
        out[b] = solve(costs[b])
    return out

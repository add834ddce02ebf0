"""Pixel-to-pixel matching between two flattened pooled maps.

The matching matrix holds pairwise cosine similarities. The optimal
bijective alignment minimizes total cost (1 - similarity) with an exact
O(n^3) solver; a greedy per-row argmax is kept as the non-bijective
comparison variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import assign
from .tensors import EPS_NORM


def matching_matrix(support_rows: np.ndarray, query_rows: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities, shape (n, n), entries clipped to [-1, 1].

    Rows with norm below 1e-12 contribute zeros. Computed as a dot product
    of normalized rows via einsum, so swapping the arguments transposes
    the result bit-exactly.
    """
    s = np.asarray(support_rows, dtype=np.float64)
    q = np.asarray(query_rows, dtype=np.float64)
    if s.ndim != 2 or q.ndim != 2:
        raise ValueError(f"expected 2-d row matrices, got shapes {s.shape} and {q.shape}")
    if s.shape != q.shape:
        raise ValueError(f"row matrices must match, got {s.shape} and {q.shape}")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(q))):
        raise ValueError("row matrices contain non-finite values")
    m = np.einsum("ic,jc->ij", _unit_rows(s), _unit_rows(q))
    return np.clip(m, -1.0, 1.0)


def _unit_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    out = np.divide(rows, norms, out=np.zeros_like(rows), where=norms >= EPS_NORM)
    return out


@dataclass(frozen=True)
class Assignment:
    """Row-to-column alignment; perm[i] is the column matched to row i.

    bijective is True for solver output (perm is a permutation) and False
    for the greedy variant, whose perm may repeat columns.
    """

    perm: np.ndarray
    bijective: bool

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        if perm.ndim != 1:
            raise ValueError("perm must be 1-d")
        n = perm.size
        if n and (perm.min() < 0 or perm.max() >= n):
            raise ValueError(f"perm entries must lie in [0, {n})")
        if self.bijective and len(np.unique(perm)) != n:
            raise ValueError("bijective assignment must visit every column exactly once")
        object.__setattr__(self, "perm", perm)


def hungarian_assign(m: np.ndarray) -> Assignment:
    """Exact minimum-cost bijection for cost 1 - m.

    Equivalently the maximum-similarity perfect matching. Ties between
    equally cheap augmenting columns break toward the lower column index.
    """
    m = _checked_square(m)
    return Assignment(perm=assign.solve(1.0 - m), bijective=True)


def nn_assign(m: np.ndarray) -> Assignment:
    """Greedy per-row argmax alignment; columns may repeat."""
    m = _checked_square(m)
    return Assignment(perm=np.argmax(m, axis=1), bijective=False)


def _checked_square(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matching matrix must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matching matrix contains non-finite values")
    return m


def rearrange(query_rows: np.ndarray, assignment: Assignment) -> np.ndarray:
    """Reorder query rows so row i aligns with support row i."""
    rows = np.asarray(query_rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError(f"expected a 2-d row matrix, got shape {rows.shape}")
    if assignment.perm.size != rows.shape[0]:
        raise ValueError(
            f"assignment covers {assignment.perm.size} rows, matrix has {rows.shape[0]}"
        )
    return rows[assignment.perm]

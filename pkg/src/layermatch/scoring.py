"""Similarity scores assembled from matched and weighted maps.

A pair of maps contributes two signals per layer: a critical score (sum
of the k best aligned pixel cosines after matching) and a global score
(cosine of the mean embeddings). Across layers the critical part is
maximized, the global part averaged, and the two are mixed by alpha.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .tensors import FeatureMap, cosine, mean_embedding


def _aligned_cosines(support_rows: np.ndarray, query_rows: np.ndarray) -> np.ndarray:
    s = np.asarray(support_rows, dtype=np.float64)
    q = np.asarray(query_rows, dtype=np.float64)
    if s.shape != q.shape or s.ndim != 2:
        raise ValueError(f"row matrices must match, got {s.shape} and {q.shape}")
    return np.array([cosine(s[i], q[i]) for i in range(s.shape[0])])


def critical_indices(support_rows: np.ndarray, query_rows: np.ndarray, k_top: int) -> np.ndarray:
    """Indices of the k_top best-aligned rows, best first, ties to lower index."""
    cos = _aligned_cosines(support_rows, query_rows)
    if not 1 <= k_top <= cos.size:
        raise ValueError(f"k_top must lie in [1, {cos.size}], got {k_top}")
    order = np.argsort(-cos, kind="stable")
    return order[:k_top]


def critical_score(support_rows: np.ndarray, query_rows: np.ndarray, k_top: int) -> float:
    """Sum of the k_top largest aligned-row cosines."""
    cos = _aligned_cosines(support_rows, query_rows)
    if not 1 <= k_top <= cos.size:
        raise ValueError(f"k_top must lie in [1, {cos.size}], got {k_top}")
    order = np.argsort(-cos, kind="stable")
    return float(np.sum(cos[order[:k_top]]))


def global_score(support: FeatureMap, query: FeatureMap) -> float:
    """Cosine similarity of the two maps' mean embeddings."""
    if (support.h, support.w, support.c) != (query.h, query.w, query.c):
        raise ValueError(
            f"map shapes must match, got {(support.h, support.w, support.c)} "
            f"and {(query.h, query.w, query.c)}"
        )
    return cosine(mean_embedding(support), mean_embedding(query))


def pair_score(per_layer: list[tuple[float, float]], alpha: float) -> float:
    """Combine per-layer (critical, global) pairs into one pair score.

    alpha scales the max over layers of the critical part; the global
    part enters as a plain mean over layers.
    """
    if not per_layer:
        raise ValueError("pair_score needs at least one layer")
    if not np.isfinite(alpha):
        raise ValueError(f"alpha must be finite, got {alpha}")
    crit = [float(c) for c, _ in per_layer]
    glob = [float(g) for _, g in per_layer]
    if not (np.all(np.isfinite(crit)) and np.all(np.isfinite(glob))):
        raise ValueError("per-layer scores contain non-finite values")
    return alpha * max(crit) + float(np.mean(glob))


def class_score(shot_scores: list[float], k_shot: int) -> float:
    """Mean pair score over a class's k_shot support images."""
    if k_shot < 1:
        raise ValueError(f"k_shot must be >= 1, got {k_shot}")
    if len(shot_scores) != k_shot:
        raise ValueError(f"expected {k_shot} shot scores, got {len(shot_scores)}")
    return float(np.mean(shot_scores))


@dataclass(frozen=True)
class ScoreBreakdown:
    """One support/query pair's per-layer scores plus the combined value."""

    layer_ids: tuple[int, ...]
    critical: tuple[float, ...]
    global_: tuple[float, ...]
    combined: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "layer_ids": list(self.layer_ids),
                "critical": list(self.critical),
                "global": list(self.global_),
                "combined": self.combined,
            }
        )

"""Correlation-driven attention over pooled pixel pairs.

A support/query map pair is pooled to a small grid, every pooled pixel of
one side is dotted against every pooled pixel of the other, and the
resulting correlation map is turned into one importance weight per pixel
by a temperature softmax. Weighting is bidirectional: the support side is
softmaxed across support pixels within each query column and summed over
columns, and symmetrically for the query side.
"""

from __future__ import annotations

import math

import numpy as np

from .tensors import FeatureMap, adaptive_avg_pool, flatten_spatial


def cross_correlation(support: FeatureMap, query: FeatureMap, pooled: int) -> np.ndarray:
    """Raw dot products between pooled support and query pixels.

    Both maps are pooled to (pooled, pooled) and flattened row-major;
    entry (i, j) is the unnormalized dot product of support pixel i with
    query pixel j. Shape (pooled^2, pooled^2).
    """
    if support.c != query.c:
        raise ValueError(f"channel mismatch: support has {support.c}, query has {query.c}")
    s = flatten_spatial(adaptive_avg_pool(support, pooled, pooled))
    q = flatten_spatial(adaptive_avg_pool(query, pooled, pooled))
    return np.einsum("ic,jc->ij", s, q)


def attention_weights(corr: np.ndarray, temperature: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel importance weights from a correlation map.

    support_w[i] sums, over query columns j, the softmax across support
    pixels of corr[:, j] / temperature; query_w[j] does the same across
    query pixels of corr[i, :]. Each vector is positive and sums to n.

    Column and row sums use math.fsum, so the result is bit-exact under
    any simultaneous permutation of both axes.
    """
    corr = np.asarray(corr, dtype=np.float64)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ValueError(f"correlation map must be square, got shape {corr.shape}")
    if not np.all(np.isfinite(corr)):
        raise ValueError("correlation map contains non-finite values")
    if not (np.isfinite(temperature) and temperature > 0):
        raise ValueError(f"temperature must be finite and > 0, got {temperature}")
    n = corr.shape[0]
    scaled = corr / temperature
    support_parts = [[0.0] * n for _ in range(n)]
    query_parts = [[0.0] * n for _ in range(n)]
    for j in range(n):
        col = scaled[:, j]
        e = np.exp(col - col.max())
        p = e / math.fsum(e)
        for i in range(n):
            support_parts[i][j] = p[i]
    for i in range(n):
        row = scaled[i, :]
        e = np.exp(row - row.max())
        p = e / math.fsum(e)
        for j in range(n):
            query_parts[j][i] = p[j]
    support_w = np.array([math.fsum(parts) for parts in support_parts])
    query_w = np.array([math.fsum(parts) for parts in query_parts])
    return support_w, query_w


def reweight(m: FeatureMap, weights: np.ndarray) -> FeatureMap:
    """Scale each pixel of a map by its weight (Hadamard over channels)."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (m.h * m.w,):
        raise ValueError(
            f"expected {m.h * m.w} weights for a {m.h}x{m.w} map, got shape {weights.shape}"
        )
    if not np.all(np.isfinite(weights)):
        raise ValueError("weights contain non-finite values")
    return FeatureMap(m.data * weights.reshape(m.h, m.w, 1))

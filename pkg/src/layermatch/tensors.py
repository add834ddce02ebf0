"""Core tensor types and operations.

All in-memory math runs in float64; float32 appears only at the disk
boundary. Maps are stored (h, w, c) row-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Norms below this are treated as zero when normalizing for cosine.
EPS_NORM = 1e-12


@dataclass(frozen=True)
class FeatureMap:
    """A single spatial feature map of shape (h, w, c), float64."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"feature map must be 3-d (h, w, c), got shape {data.shape}")
        if min(data.shape) < 1:
            raise ValueError(f"feature map dimensions must be >= 1, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature map contains non-finite values")
        object.__setattr__(self, "data", np.ascontiguousarray(data))

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    @property
    def c(self) -> int:
        return self.data.shape[2]


def pool_regions(size: int, out: int) -> list[tuple[int, int]]:
    """Half-open index ranges covering `size` cells with `out` regions.

    Region i spans [floor(i*size/out), ceil((i+1)*size/out)). Regions tile
    the axis completely and may overlap when out does not divide size.
    """
    if out < 1:
        raise ValueError(f"output size must be >= 1, got {out}")
    if out > size:
        raise ValueError(f"output size {out} exceeds input size {size}")
    return [(i * size // out, -((i + 1) * size // -out)) for i in range(out)]


def pool_array(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Adaptive average pooling over the trailing (h, w, c) axes.

    Accepts any number of leading batch axes. Each output cell is the mean
    of its floor/ceil input region.
    """
    h, w = arr.shape[-3], arr.shape[-2]
    rows = pool_regions(h, out_h)
    cols = pool_regions(w, out_w)
    out = np.empty(arr.shape[:-3] + (out_h, out_w, arr.shape[-1]), dtype=np.float64)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            out[..., i, j, :] = arr[..., r0:r1, c0:c1, :].mean(axis=(-3, -2))
    return out


def adaptive_avg_pool(m: FeatureMap, out_h: int, out_w: int) -> FeatureMap:
    """Pool a map down to (out_h, out_w) with adaptive average pooling."""
    return FeatureMap(pool_array(m.data, out_h, out_w))


def flatten_spatial(m: FeatureMap) -> np.ndarray:
    """Row-major (h*w, c) view of a map's pixels."""
    return m.data.reshape(m.h * m.w, m.c)


def unflatten_spatial(rows: np.ndarray, h: int, w: int) -> FeatureMap:
    """Inverse of flatten_spatial for a (h*w, c) row matrix."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError(f"expected a 2-d row matrix, got shape {rows.shape}")
    if rows.shape[0] != h * w:
        raise ValueError(f"cannot reshape {rows.shape[0]} rows into {h}x{w} pixels")
    return FeatureMap(rows.reshape(h, w, rows.shape[1]))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two vectors; 0.0 if either norm is < 1e-12."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"cosine needs equal-length vectors, got {a.shape} and {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < EPS_NORM or nb < EPS_NORM:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def mean_embedding(m: FeatureMap) -> np.ndarray:
    """Mean over all pixels, yielding a (c,) vector."""
    return flatten_spatial(m).mean(axis=0)

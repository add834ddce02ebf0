"""Learnable residual refinement applied to matched pixel rows.

Each layer gets a small bottleneck MLP: project to half width, ReLU,
project back, ReLU, add to the input. With all-zero parameters the
transform is the exact identity, so an untrained matcher never perturbs
scores.

Parameter files (MPAR, little-endian):

    magic   4 bytes  b"MPAR"
    version u32      1
    layer_count u32
    reserved u32     0
    then per layer (ascending layer_id):
        layer_id u32, c u32
        w1 (c x m), b1 (m), w2 (m x c), b2 (c)  contiguous float32

The bottleneck width m is always max(1, c // 2) and is not stored.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .bank import _Cursor
from .errors import BankFormatError

MAGIC = b"MPAR"
VERSION = 1

_HEADER = struct.Struct("<3I")  # version, layer_count, reserved
_LAYER_HEADER = struct.Struct("<2I")  # layer_id, c


def bottleneck_width(c: int) -> int:
    return max(1, c // 2)


@dataclass
class LayerMatcher:
    """Parameters of one layer's residual MLP."""

    w1: np.ndarray  # (c, m)
    b1: np.ndarray  # (m,)
    w2: np.ndarray  # (m, c)
    b2: np.ndarray  # (c,)

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        c = self.b2.shape[0] if self.b2.ndim == 1 else -1
        m = bottleneck_width(c)
        expected = {"w1": (c, m), "b1": (m,), "w2": (m, c), "b2": (c,)}
        for name, shape in expected.items():
            arr = getattr(self, name)
            if c < 1 or arr.shape != shape:
                raise ValueError(
                    f"matcher parameter {name} has shape {arr.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"matcher parameter {name} contains non-finite values")

    @property
    def c(self) -> int:
        return self.b2.shape[0]

    @property
    def m(self) -> int:
        return self.b1.shape[0]


MatcherParams = dict[int, LayerMatcher]


def init_matcher_params(layer_channels: dict[int, int], seed: int) -> MatcherParams:
    """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.

    Layers are initialized in ascending layer_id order so the result is a
    pure function of (layer_channels, seed).
    """
    rng = np.random.default_rng(seed)
    params: MatcherParams = {}
    for lid in sorted(layer_channels):
        c = int(layer_channels[lid])
        if c < 1:
            raise ValueError(f"layer {lid}: channel count must be >= 1, got {c}")
        m = bottleneck_width(c)
        bound1 = 1.0 / np.sqrt(c)
        bound2 = 1.0 / np.sqrt(m)
        params[lid] = LayerMatcher(
            w1=rng.uniform(-bound1, bound1, size=(c, m)),
            b1=np.zeros(m),
            w2=rng.uniform(-bound2, bound2, size=(m, c)),
            b2=np.zeros(c),
        )
    return params


def zero_matcher_params(layer_channels: dict[int, int]) -> MatcherParams:
    """All-zero parameters: the exact identity transform."""
    out: MatcherParams = {}
    for lid, c in layer_channels.items():
        m = bottleneck_width(c)
        out[lid] = LayerMatcher(np.zeros((c, m)), np.zeros(m), np.zeros((m, c)), np.zeros(c))
    return out


def matcher_parts(x: np.ndarray, p: LayerMatcher):
    """Forward pass returning (pre1, h1, pre2, h2, out) for rows x of shape (n, c)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.c:
        raise ValueError(f"expected rows of shape (n, {p.c}), got {x.shape}")
    pre1 = x @ p.w1 + p.b1
    h1 = np.maximum(pre1, 0.0)
    pre2 = h1 @ p.w2 + p.b2
    h2 = np.maximum(pre2, 0.0)
    return pre1, h1, pre2, h2, x + h2


def matcher_forward(x: np.ndarray, p: LayerMatcher) -> np.ndarray:
    """Apply the residual MLP to each row of x."""
    return matcher_parts(x, p)[4]


def save_matcher_params(params: MatcherParams, path) -> None:
    """Serialize; layers are written in ascending layer_id order."""
    if not params:
        raise BankFormatError("no matcher layers to write")
    chunks = [MAGIC, _HEADER.pack(VERSION, len(params), 0)]
    for lid in sorted(params):
        p = params[lid]
        if not 0 <= lid <= 2**32 - 1:
            raise BankFormatError(f"layer id {lid} does not fit in u32")
        chunks.append(_LAYER_HEADER.pack(lid, p.c))
        for arr in (p.w1, p.b1, p.w2, p.b2):
            chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_matcher_params(path) -> MatcherParams:
    """Parse a parameter file, rejecting malformed input."""
    with open(path, "rb") as fh:
        buf = fh.read()
    cur = _Cursor(buf)
    magic = cur.take(4, "magic")
    if magic != MAGIC:
        raise BankFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = cur.u32("version")
    if version != VERSION:
        raise BankFormatError(f"unsupported version {version}, expected {VERSION}")
    layer_count = cur.u32("layer_count")
    cur.u32("reserved")
    if layer_count < 1:
        raise BankFormatError("layer_count must be >= 1")
    params: MatcherParams = {}
    for k in range(layer_count):
        at = cur.pos
        lid = cur.u32(f"layer {k} id")
        c = cur.u32(f"layer {k} channels")
        if lid in params:
            raise BankFormatError(f"duplicate layer id {lid} at offset {at}")
        if c < 1:
            raise BankFormatError(f"layer {lid}: channel count must be >= 1")
        m = bottleneck_width(c)
        arrays = []
        for name, shape in (("w1", (c, m)), ("b1", (m,)), ("w2", (m, c)), ("b2", (c,))):
            count = int(np.prod(shape))
            raw = cur.take(4 * count, f"layer {lid} {name}")
            arr = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
            if not np.all(np.isfinite(arr)):
                raise BankFormatError(f"layer {lid}: non-finite values in {name}")
            arrays.append(arr)
        params[lid] = LayerMatcher(*arrays)
    if cur.pos != len(buf):
        raise BankFormatError(
            f"{len(buf) - cur.pos} trailing bytes after last layer at offset {cur.pos}"
        )
    return params

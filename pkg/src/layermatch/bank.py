"""Feature banks: the on-disk container for per-layer feature maps.

Binary layout (FBNK1, all integers little-endian u32):

    magic   4 bytes  b"FBNK"
    version u32      1
    layer_count, image_count, class_count   u32 each
    labels  image_count x u32
    then per layer:
        layer_id, h, w, c   u32 each
        payload: image_count*h*w*c float32, image-major, row-major
                 (row, col, channel)

Payloads are float32 on disk and float64 in memory.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BankFormatError

MAGIC = b"FBNK"
VERSION = 1

_U32 = struct.Struct("<I")
_HEADER = struct.Struct("<4I")  # version, layer_count, image_count, class_count
_LAYER_HEADER = struct.Struct("<4I")  # layer_id, h, w, c
_U32_MAX = 2**32 - 1
_U64_MAX = 2**64 - 1


@dataclass
class FeatureBank:
    """Labeled images as stacked per-layer feature maps.

    maps[layer_id] has shape (image_count, h, w, c); spatial dims may differ
    between layers but never within one.
    """

    layer_ids: tuple[int, ...]
    maps: dict[int, np.ndarray] = field(repr=False)
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        self.layer_ids = tuple(int(l) for l in self.layer_ids)
        if len(set(self.layer_ids)) != len(self.layer_ids):
            raise ValueError("duplicate layer ids")
        if set(self.maps) != set(self.layer_ids):
            raise ValueError("maps keys do not match layer_ids")
        if self.class_count < 1:
            raise ValueError(f"class_count must be >= 1, got {self.class_count}")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise ValueError("labels must be a 1-d array")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        for lid in self.layer_ids:
            arr = np.asarray(self.maps[lid], dtype=np.float64)
            if arr.ndim != 4:
                raise ValueError(f"layer {lid}: maps must be 4-d (images, h, w, c)")
            if arr.shape[0] != len(self.labels):
                raise ValueError(
                    f"layer {lid}: {arr.shape[0]} images but {len(self.labels)} labels"
                )
            if min(arr.shape[1:]) < 1:
                raise ValueError(f"layer {lid}: map dimensions must be >= 1, got {arr.shape[1:]}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"layer {lid}: non-finite feature values")
            self.maps[lid] = np.ascontiguousarray(arr)

    @property
    def image_count(self) -> int:
        return len(self.labels)

    def layer_shape(self, layer_id: int) -> tuple[int, int, int]:
        """(h, w, c) of one layer's maps."""
        return self.maps[layer_id].shape[1:]

    def class_indices(self, label: int) -> np.ndarray:
        """Indices of all images carrying `label`."""
        return np.flatnonzero(self.labels == label)

    def feature_map(self, layer_id: int, index: int):
        from .tensors import FeatureMap

        return FeatureMap(self.maps[layer_id][index])


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic bank: class prototypes plus i.i.d. noise."""

    class_count: int
    images_per_class: int
    layers: tuple[tuple[int, int, int, int], ...]  # (layer_id, h, w, c)
    prototype_scale: float
    noise_scale: float
    seed: int

    def __post_init__(self):
        if self.class_count < 1:
            raise ValueError(f"class_count must be >= 1, got {self.class_count}")
        if self.images_per_class < 1:
            raise ValueError(f"images_per_class must be >= 1, got {self.images_per_class}")
        if not self.layers:
            raise ValueError("at least one layer is required")
        ids = [l[0] for l in self.layers]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate layer ids")
        for lid, h, w, c in self.layers:
            if min(h, w, c) < 1:
                raise ValueError(f"layer {lid}: dimensions must be >= 1, got {(h, w, c)}")
        if not (np.isfinite(self.prototype_scale) and self.prototype_scale > 0):
            raise ValueError(f"prototype_scale must be finite and > 0, got {self.prototype_scale}")
        if not (np.isfinite(self.noise_scale) and self.noise_scale >= 0):
            raise ValueError(f"noise_scale must be finite and >= 0, got {self.noise_scale}")
        if not 0 <= int(self.seed) <= _U64_MAX:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


def gen_synthetic_bank(spec: SyntheticSpec) -> FeatureBank:
    """Generate a bank of noisy class prototypes.

    Per layer, each class gets a prototype of prototype_scale times a
    standard normal draw; each image is its class prototype plus
    noise_scale times a fresh standard normal draw. Fully determined by
    spec.seed.
    """
    rng = np.random.default_rng(spec.seed)
    image_count = spec.class_count * spec.images_per_class
    labels = np.repeat(np.arange(spec.class_count), spec.images_per_class)
    maps = {}
    for lid, h, w, c in spec.layers:
        protos = spec.prototype_scale * rng.standard_normal((spec.class_count, h, w, c))
        noise = spec.noise_scale * rng.standard_normal((image_count, h, w, c))
        maps[lid] = protos[labels] + noise
    return FeatureBank(
        layer_ids=tuple(l[0] for l in spec.layers),
        maps=maps,
        labels=labels,
        class_count=spec.class_count,
    )


def write_bank(bank: FeatureBank, path) -> None:
    """Serialize a bank; writing twice yields byte-identical files."""
    if not bank.layer_ids:
        raise BankFormatError("bank has no layers; refusing to write an empty bank")
    for value, name in ((bank.image_count, "image_count"), (bank.class_count, "class_count")):
        if value > _U32_MAX:
            raise BankFormatError(f"{name} {value} does not fit in u32")
    chunks = [MAGIC]
    chunks.append(_HEADER.pack(VERSION, len(bank.layer_ids), bank.image_count, bank.class_count))
    chunks.append(bank.labels.astype("<u4").tobytes())
    for lid in bank.layer_ids:
        arr = bank.maps[lid]
        h, w, c = arr.shape[1:]
        if max(lid, h, w, c) > _U32_MAX or lid < 0:
            raise BankFormatError(f"layer {lid}: header fields must fit in u32")
        chunks.append(_LAYER_HEADER.pack(lid, h, w, c))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Cursor:
    """Byte reader that reports the offset of any truncation."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        if self.pos + size > len(self.buf):
            raise BankFormatError(
                f"truncated file: needed {size} bytes for {what} at offset {self.pos}, "
                f"only {len(self.buf) - self.pos} remain"
            )
        out = self.buf[self.pos : self.pos + size]
        self.pos += size
        return out

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def read_bank(path) -> FeatureBank:
    """Parse a serialized bank, rejecting any malformed input."""
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
    image_count = cur.u32("image_count")
    class_count = cur.u32("class_count")
    if layer_count < 1:
        raise BankFormatError("layer_count must be >= 1")
    if class_count < 1:
        raise BankFormatError("class_count must be >= 1")
    labels = np.frombuffer(cur.take(4 * image_count, "labels"), dtype="<u4").astype(np.int64)
    if labels.size and labels.max() >= class_count:
        raise BankFormatError(
            f"label {labels.max()} out of range for class_count {class_count}"
        )
    layer_ids = []
    maps = {}
    for k in range(layer_count):
        at = cur.pos
        lid = cur.u32(f"layer {k} id")
        h = cur.u32(f"layer {k} height")
        w = cur.u32(f"layer {k} width")
        c = cur.u32(f"layer {k} channels")
        if lid in maps:
            raise BankFormatError(f"duplicate layer id {lid} at offset {at}")
        if min(h, w, c) < 1:
            raise BankFormatError(f"layer {lid}: zero dimension in header at offset {at}")
        payload = cur.take(4 * image_count * h * w * c, f"layer {lid} payload")
        arr = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise BankFormatError(f"layer {lid}: non-finite payload values")
        layer_ids.append(lid)
        maps[lid] = arr.reshape(image_count, h, w, c)
    if cur.pos != len(buf):
        raise BankFormatError(
            f"{len(buf) - cur.pos} trailing bytes after last layer at offset {cur.pos}"
        )
    return FeatureBank(
        layer_ids=tuple(layer_ids), maps=maps, labels=labels, class_count=class_count
    )

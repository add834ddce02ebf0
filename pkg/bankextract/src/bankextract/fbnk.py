"""Feature bank writer.

Layout (all integers little-endian u32, payload little-endian f32):

    "FBNK" | version=1 | layer_count | image_count | class_count
    labels u32 * image_count
    per layer: layer_id | h | w | c | f32 * (image_count * h * w * c)

Maps are stored row-major in (image, row, column, channel) order. The file
is written to a temporary sibling and renamed into place, so a crashed run
never leaves a half-written bank behind.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import BankFormatError

MAGIC = b"FBNK"
VERSION = 1

_HEADER = struct.Struct("<4I")  # version, layer_count, image_count, class_count
_LAYER_HEADER = struct.Struct("<4I")  # layer_id, h, w, c


def write_fbnk(layer_ids, maps, labels, class_count: int, path) -> None:
    """Serialize pooled maps to `path` atomically.

    `maps` is {layer_id: float array (N, h, w, c)}; `labels` is length N
    with values in [0, class_count).
    """
    if not layer_ids:
        raise BankFormatError("refusing to write a bank with no layers")
    labels = np.asarray(labels)
    count = len(labels)
    if class_count < 1:
        raise BankFormatError(f"class_count must be >= 1, got {class_count}")
    if labels.size and not (0 <= labels.min() and labels.max() < class_count):
        raise BankFormatError(f"labels must lie in [0, {class_count})")
    chunks = [MAGIC, _HEADER.pack(VERSION, len(layer_ids), count, class_count)]
    chunks.append(labels.astype("<u4").tobytes())
    for lid in layer_ids:
        arr = np.asarray(maps[lid])
        if arr.ndim != 4 or arr.shape[0] != count:
            raise BankFormatError(
                f"layer {lid} has shape {arr.shape}, expected ({count}, h, w, c)"
            )
        if not np.isfinite(arr).all():
            raise BankFormatError(f"layer {lid} carries non-finite values")
        h, w, c = arr.shape[1:]
        chunks.append(_LAYER_HEADER.pack(lid, h, w, c))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)

"""Stand-alone bank checker.

Parses the file with its own struct-level reader rather than the writer's
code, so a writer bug cannot vouch for itself. Prints dims, the label
histogram, the value range, and the NaN count.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BankFormatError


@dataclass
class BankReport:
    image_count: int
    class_count: int
    labels: np.ndarray
    layer_dims: dict[int, tuple[int, int, int]]
    value_min: float
    value_max: float
    nan_count: int

    def lines(self) -> list[str]:
        hist = np.bincount(self.labels, minlength=self.class_count)
        out = [
            f"images {self.image_count}",
            f"classes {self.class_count}",
            f"layers {len(self.layer_dims)}",
        ]
        for lid, (h, w, c) in self.layer_dims.items():
            out.append(f"layer {lid}: {h}x{w}x{c}")
        out.append("labels: " + " ".join(f"{i}:{n}" for i, n in enumerate(hist)))
        out.append(f"range [{self.value_min:.6g}, {self.value_max:.6g}]")
        out.append(f"nan {self.nan_count}")
        return out


def _need(buf: bytes, pos: int, size: int, what: str) -> int:
    if pos + size > len(buf):
        raise BankFormatError(
            f"truncated file: needed {size} bytes for {what} at offset {pos}"
        )
    return pos + size


def parse_bank(path) -> BankReport:
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = _need(buf, 0, 20, "header")
    magic, version, layer_count, image_count, class_count = struct.unpack_from(
        "<4s4I", buf, 0
    )
    if magic != b"FBNK":
        raise BankFormatError(f"bad magic {magic!r}")
    if version != 1:
        raise BankFormatError(f"unsupported version {version}")
    if layer_count < 1:
        raise BankFormatError("bank has no layers")
    if class_count < 1:
        raise BankFormatError(f"class_count must be >= 1, got {class_count}")
    end = _need(buf, pos, 4 * image_count, "labels")
    labels = np.frombuffer(buf, dtype="<u4", count=image_count, offset=pos)
    pos = end
    bad = labels[labels >= class_count]
    if bad.size:
        raise BankFormatError(f"label {bad[0]} out of range [0, {class_count})")

    dims: dict[int, tuple[int, int, int]] = {}
    vmin, vmax = np.inf, -np.inf
    nan_count = 0
    for _ in range(layer_count):
        end = _need(buf, pos, 16, "layer header")
        lid, h, w, c = struct.unpack_from("<4I", buf, pos)
        pos = end
        if lid in dims:
            raise BankFormatError(f"duplicate layer id {lid}")
        if min(h, w, c) < 1:
            raise BankFormatError(f"layer {lid}: zero dimension in header")
        size = 4 * image_count * h * w * c
        end = _need(buf, pos, size, f"layer {lid} payload")
        values = np.frombuffer(buf, dtype="<f4", count=size // 4, offset=pos)
        pos = end
        dims[lid] = (h, w, c)
        nan_count += int(np.isnan(values).sum())
        finite = values[np.isfinite(values)]
        if finite.size:
            vmin = min(vmin, float(finite.min()))
            vmax = max(vmax, float(finite.max()))
    if pos != len(buf):
        raise BankFormatError(f"{len(buf) - pos} trailing bytes after last layer")
    if not np.isfinite(vmin):
        vmin = vmax = 0.0
    return BankReport(
        image_count=image_count,
        class_count=class_count,
        labels=np.asarray(labels, dtype=np.int64),
        layer_dims=dims,
        value_min=vmin,
        value_max=vmax,
        nan_count=nan_count,
    )

"""Pooled block activations for a labeled image tree, written as a bank."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .backbone import build_backbone, capture_blocks
from .errors import ConfigurationError
from .fbnk import write_fbnk
from .images import decode_image, scan_classes


@dataclass(frozen=True)
class ExtractSpec:
    image_root: str
    out_path: str
    backbone: str = "resnet18"
    weights: str = "pretrained"
    blocks: tuple[int, ...] = (7, 8)
    pooled: int = 3
    device: str = "cpu"
    batch_size: int = 16

    def __post_init__(self):
        if not self.blocks:
            raise ConfigurationError("at least one block index is required")
        if len(set(self.blocks)) != len(self.blocks):
            raise ConfigurationError(f"duplicate block indices in {self.blocks}")
        if min(self.blocks) < 1:
            raise ConfigurationError(f"block indices must be >= 1, got {self.blocks}")
        if self.pooled < 1:
            raise ConfigurationError(f"pooled must be >= 1, got {self.pooled}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class ExtractReport:
    class_names: tuple[str, ...]
    image_count: int
    skipped: int
    layer_dims: dict[int, tuple[int, int, int]] = field(default_factory=dict)

    def lines(self) -> list[str]:
        out = [
            f"wrote {self.image_count} images across {len(self.class_names)} classes"
            + (f" (skipped {self.skipped} unreadable)" if self.skipped else "")
        ]
        for lid, (h, w, c) in self.layer_dims.items():
            out.append(f"layer {lid}: {h}x{w}x{c}")
        return out


def _decode_tree(classes) -> tuple[list[torch.Tensor], list[int], int]:
    tensors: list[torch.Tensor] = []
    labels: list[int] = []
    skipped = 0
    for label, (name, files) in enumerate(classes):
        kept_before = len(tensors)
        for path in files:
            try:
                tensors.append(decode_image(path))
            except Exception as exc:  # any undecodable file: skip, keep going
                skipped += 1
                print(f"warning: skipping {path}: {exc}", file=sys.stderr)
                continue
            labels.append(label)
        if len(tensors) == kept_before:
            raise ConfigurationError(f"class {name!r} has no usable images")
    return tensors, labels, skipped


def extract(spec: ExtractSpec) -> ExtractReport:
    """Forward every usable image, pool the requested blocks, write the bank.

    Pooling uses floor/ceil region boundaries, the same tiling the
    evaluation engine applies, so pooled banks agree exactly with what the
    engine would compute from the raw maps.
    """
    classes = scan_classes(spec.image_root)
    tensors, labels, skipped = _decode_tree(classes)

    model, blocks = build_backbone(spec.backbone, spec.weights, spec.device)
    for idx in spec.blocks:
        if idx > len(blocks):
            raise ConfigurationError(
                f"block {idx} outside 1..{len(blocks)} for {spec.backbone}"
            )

    pieces: dict[int, list[np.ndarray]] = {idx: [] for idx in spec.blocks}
    dims: dict[int, tuple[int, int, int]] = {}
    for lo in range(0, len(tensors), spec.batch_size):
        batch = torch.stack(tensors[lo : lo + spec.batch_size]).to(spec.device)
        grabbed = capture_blocks(model, blocks, spec.blocks, batch)
        for idx in spec.blocks:
            feat = grabbed[idx]
            h, w = feat.shape[2:]
            if spec.pooled > min(h, w):
                raise ConfigurationError(
                    f"pooled {spec.pooled} exceeds block {idx} output {h}x{w}"
                )
            pooled = F.adaptive_avg_pool2d(feat, spec.pooled)
            maps = pooled.permute(0, 2, 3, 1).contiguous().cpu().numpy()
            pieces[idx].append(maps)
            dims[idx] = maps.shape[1:]

    maps = {idx: np.concatenate(pieces[idx], axis=0) for idx in spec.blocks}
    write_fbnk(spec.blocks, maps, np.asarray(labels), len(classes), spec.out_path)
    return ExtractReport(
        class_names=tuple(name for name, _ in classes),
        image_count=len(labels),
        skipped=skipped,
        layer_dims=dims,
    )

"""Image folder scanning and the backbone's canonical input recipe."""

from __future__ import annotations

from pathlib import Path

import torch
from PIL import Image
from torchvision import transforms

from .errors import ConfigurationError

# the standard ImageNet inference recipe; the backbone was designed for it
CANONICAL = transforms.Compose(
    [
        transforms.Resize(256),
        transforms.CenterCrop(224),
        transforms.ToTensor(),
        transforms.Normalize(mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]),
    ]
)


def scan_classes(root) -> list[tuple[str, list[Path]]]:
    """Class directories sorted by name, each with its files sorted by name."""
    root = Path(root)
    if not root.is_dir():
        raise ConfigurationError(f"image root {str(root)!r} is not a directory")
    classes = []
    for entry in sorted(root.iterdir(), key=lambda p: p.name):
        if entry.is_dir():
            files = sorted((p for p in entry.iterdir() if p.is_file()), key=lambda p: p.name)
            classes.append((entry.name, files))
    if not classes:
        raise ConfigurationError(f"image root {str(root)!r} contains no class directories")
    return classes


def decode_image(path) -> torch.Tensor:
    """Load one image as a canonical (3, 224, 224) tensor."""
    with Image.open(path) as img:
        return CANONICAL(img.convert("RGB"))

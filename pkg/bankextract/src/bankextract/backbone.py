"""ResNet backbones exposed as an ordered list of tappable blocks."""

from __future__ import annotations

import torch
from torchvision import models

from .errors import ConfigurationError

# fixed so --weights random yields the same network on every run
_RANDOM_SEED = 24245


def build_backbone(name: str, weights: str, device: str):
    """Return (model, blocks) with the model in eval mode on `device`.

    `blocks` flattens the four residual stages in forward order, so block
    k (1-based) is the k-th basic block the input passes through.
    `weights` is "pretrained", "random", or a path to a state dict.
    """
    ctor = getattr(models, name, None)
    if ctor is None or not name.startswith("resnet"):
        raise ConfigurationError(f"unknown backbone {name!r}, expected a torchvision resnet")
    if weights == "pretrained":
        try:
            model = ctor(weights=models.get_model_weights(name).DEFAULT)
        except Exception as exc:
            raise ConfigurationError(
                f"could not obtain pretrained weights for {name} ({exc}); "
                "pass --weights random or a local state-dict path"
            ) from exc
    elif weights == "random":
        torch.manual_seed(_RANDOM_SEED)
        model = ctor(weights=None)
    else:
        model = ctor(weights=None)
        state = torch.load(weights, map_location="cpu", weights_only=True)
        try:
            model.load_state_dict(state)
        except RuntimeError as exc:
            raise ConfigurationError(f"state dict {weights!r} does not fit {name}: {exc}") from None
    model.eval()
    model.to(device)
    blocks = [
        block
        for stage in (model.layer1, model.layer2, model.layer3, model.layer4)
        for block in stage
    ]
    return model, blocks


def capture_blocks(model, blocks, indices, batch: torch.Tensor) -> dict[int, torch.Tensor]:
    """One no-grad forward pass; returns {block index: output (B, C, H, W)}."""
    grabbed: dict[int, torch.Tensor] = {}
    handles = [
        blocks[idx - 1].register_forward_hook(
            lambda module, inputs, output, idx=idx: grabbed.__setitem__(idx, output.detach())
        )
        for idx in indices
    ]
    try:
        with torch.no_grad():
            model(batch)
    finally:
        for handle in handles:
            handle.remove()
    return grabbed

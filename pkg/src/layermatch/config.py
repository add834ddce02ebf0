"""Run configuration types and the published per-dataset presets."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

_U64_MAX = 2**64 - 1

ASSIGN_METHODS = ("hungarian", "nn")


@dataclass(frozen=True)
class Hyperparams:
    """Everything an episodic evaluation run depends on."""

    n_way: int = 5
    k_shot: int = 1
    query_per_class: int = 15
    episode_count: int = 2000
    seed: int = 0
    layer_ids: tuple[int, ...] = (7, 8)
    pooled: int = 3
    temperature: float = 5.0
    alpha: float = 0.25
    beta: float = 0.25
    k_top: int = 5
    assign: str = "hungarian"

    def __post_init__(self):
        object.__setattr__(self, "layer_ids", tuple(int(l) for l in self.layer_ids))
        if self.n_way < 2:
            raise ValueError(f"n_way must be >= 2, got {self.n_way}")
        if self.k_shot < 1:
            raise ValueError(f"k_shot must be >= 1, got {self.k_shot}")
        if self.query_per_class < 1:
            raise ValueError(f"query_per_class must be >= 1, got {self.query_per_class}")
        if self.episode_count < 1:
            raise ValueError(f"episode_count must be >= 1, got {self.episode_count}")
        if not 0 <= int(self.seed) <= _U64_MAX:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not self.layer_ids:
            raise ValueError("layer_ids must not be empty")
        if len(set(self.layer_ids)) != len(self.layer_ids):
            raise ValueError("layer_ids must be unique")
        if self.pooled < 1:
            raise ValueError(f"pooled must be >= 1, got {self.pooled}")
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise ValueError(f"temperature must be finite and > 0, got {self.temperature}")
        if not np.isfinite(self.alpha):
            raise ValueError(f"alpha must be finite, got {self.alpha}")
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        if not 1 <= self.k_top <= self.pooled * self.pooled:
            raise ValueError(
                f"k_top must lie in [1, {self.pooled * self.pooled}] for a "
                f"{self.pooled}x{self.pooled} grid, got {self.k_top}"
            )
        if self.assign not in ASSIGN_METHODS:
            raise ValueError(f"assign must be one of {ASSIGN_METHODS}, got {self.assign!r}")


# Score mix and loss weight per benchmark family.
PRESETS: dict[str, dict[str, float]] = {
    "miniimagenet": {"alpha": 0.25, "beta": 0.25},
    "tieredimagenet": {"alpha": 0.25, "beta": 0.25},
    "cifarfs": {"alpha": 1.0, "beta": 0.5},
    "cub": {"alpha": 1.0, "beta": 1.5},
}


def apply_preset(hp: Hyperparams, name: str) -> Hyperparams:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}, choose from {sorted(PRESETS)}")
    return replace(hp, **PRESETS[name])


@dataclass(frozen=True)
class TrainConfig:
    """Schedule and loss mix for episodic training."""

    epochs: int = 10
    learning_rate: float = 0.01
    decay_factor: float = 0.05
    decay_epochs: tuple[int, ...] = (4, 6, 8)
    beta: float = 0.25
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "decay_epochs", tuple(int(e) for e in self.decay_epochs))
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError(f"learning_rate must be finite and > 0, got {self.learning_rate}")
        if not (np.isfinite(self.decay_factor) and 0 < self.decay_factor <= 1):
            raise ValueError(f"decay_factor must lie in (0, 1], got {self.decay_factor}")
        if any(e < 0 for e in self.decay_epochs):
            raise ValueError("decay_epochs must be non-negative")
        if len(set(self.decay_epochs)) != len(self.decay_epochs):
            raise ValueError("decay_epochs must be unique")
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")
        if not 0 <= int(self.seed) <= _U64_MAX:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

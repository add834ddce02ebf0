"""Episodic sampling and evaluation.

Episode e of a run draws its own generator from SeedSequence([seed, e]),
so any episode can be reproduced in isolation and results do not depend
on evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bank import FeatureBank
from .config import Hyperparams
from .errors import ConfigurationError
from .matcher import MatcherParams
from .pipeline import episode_score_matrix, precompute_pooled


@dataclass(frozen=True)
class Episode:
    """Image indices for one evaluation task.

    class_ids are bank labels in sampled order; support is (n_way, k_shot)
    and query (n_way, query_per_class), disjoint within each class.
    """

    class_ids: np.ndarray
    support: np.ndarray
    query: np.ndarray

    def __post_init__(self):
        class_ids = np.asarray(self.class_ids, dtype=np.int64)
        support = np.asarray(self.support, dtype=np.int64)
        query = np.asarray(self.query, dtype=np.int64)
        if class_ids.ndim != 1 or support.ndim != 2 or query.ndim != 2:
            raise ValueError("malformed episode arrays")
        if support.shape[0] != class_ids.size or query.shape[0] != class_ids.size:
            raise ValueError("support and query must have one row per class")
        for n in range(class_ids.size):
            if np.intersect1d(support[n], query[n]).size:
                raise ValueError(f"class {class_ids[n]}: support and query overlap")
        object.__setattr__(self, "class_ids", class_ids)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "query", query)


def sample_episode(bank: FeatureBank, hp: Hyperparams, rng: np.random.Generator) -> Episode:
    """Draw classes, then per class k_shot + query_per_class distinct images."""
    need = hp.k_shot + hp.query_per_class
    counts = np.bincount(bank.labels, minlength=bank.class_count)
    eligible = np.flatnonzero(counts >= need)
    if eligible.size < hp.n_way:
        raise ConfigurationError(
            f"need {hp.n_way} classes with at least {need} images each, "
            f"but only {eligible.size} of {bank.class_count} classes qualify"
        )
    class_ids = rng.choice(eligible, size=hp.n_way, replace=False)
    support = np.empty((hp.n_way, hp.k_shot), dtype=np.int64)
    query = np.empty((hp.n_way, hp.query_per_class), dtype=np.int64)
    for n, cls in enumerate(class_ids):
        picks = rng.choice(bank.class_indices(cls), size=need, replace=False)
        support[n] = picks[: hp.k_shot]
        query[n] = picks[hp.k_shot :]
    return Episode(class_ids=class_ids, support=support, query=query)


def episode_rng(seed: int, index: int) -> np.random.Generator:
    """The generator owning episode `index` of a run seeded with `seed`."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


@dataclass(frozen=True)
class EvalReport:
    """Per-episode accuracies with their mean and 95% interval half-width."""

    accuracies: np.ndarray
    mean_accuracy: float
    ci95: float
    score_matrices: list | None = None


def confidence_interval95(accuracies: np.ndarray) -> float:
    """1.96 * sample std / sqrt(episodes); 0 for a single episode."""
    accuracies = np.asarray(accuracies, dtype=np.float64)
    if accuracies.size < 2:
        return 0.0
    return float(1.96 * accuracies.std(ddof=1) / np.sqrt(accuracies.size))


def evaluate(
    bank: FeatureBank,
    matcher: MatcherParams | None,
    hp: Hyperparams,
    *,
    collect_scores: bool = False,
    score_matrix_fn=None,
) -> EvalReport:
    """Run hp.episode_count episodes and aggregate accuracy.

    score_matrix_fn replaces the scoring pipeline for tests; it receives
    (pooled, episode, matcher, hp) and returns a (queries, n_way) score
    matrix. Prediction is the argmax class, ties to the lowest index.
    """
    pooled = precompute_pooled(bank, hp)
    scorer = score_matrix_fn if score_matrix_fn is not None else (
        lambda p, ep, m, h: episode_score_matrix(p, ep, m, h)[0]
    )
    truth = np.repeat(np.arange(hp.n_way), hp.query_per_class)
    accuracies = np.empty(hp.episode_count)
    matrices = [] if collect_scores else None
    for e in range(hp.episode_count):
        episode = sample_episode(bank, hp, episode_rng(hp.seed, e))
        scores = np.asarray(scorer(pooled, episode, matcher, hp))
        if scores.shape != (truth.size, hp.n_way):
            raise ValueError(
                f"score matrix has shape {scores.shape}, expected {(truth.size, hp.n_way)}"
            )
        preds = np.argmax(scores, axis=1)
        accuracies[e] = float(np.mean(preds == truth))
        if matrices is not None:
            matrices.append(scores)
    return EvalReport(
        accuracies=accuracies,
        mean_accuracy=float(accuracies.mean()),
        ci95=confidence_interval95(accuracies),
        score_matrices=matrices,
    )

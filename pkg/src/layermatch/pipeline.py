"""End-to-end scoring of support/query pairs.

Two implementations of the same computation live here. The reference path
works on one pair at a time through the public ops and is what score-pair
and classify_query use. The batched path evaluates a whole episode with
stacked numpy calls and the batch assignment kernel; it exists purely for
throughput and is held to the reference path by equivalence tests.
"""

from __future__ import annotations

import numpy as np

from . import assign
from .attention import attention_weights
from .bank import FeatureBank
from .config import Hyperparams
from .errors import ConfigurationError
from .matcher import MatcherParams, matcher_forward
from .matching import hungarian_assign, matching_matrix, nn_assign, rearrange
from .scoring import ScoreBreakdown, class_score, critical_score, pair_score
from .tensors import EPS_NORM, FeatureMap, cosine, pool_array


def precompute_pooled(bank: FeatureBank, hp: Hyperparams) -> dict[int, np.ndarray]:
    """Pool and flatten every image once: layer_id -> (images, pooled^2, c)."""
    out = {}
    for lid in hp.layer_ids:
        if lid not in bank.maps:
            raise ConfigurationError(
                f"bank has layers {list(bank.layer_ids)} but the run needs layer {lid}"
            )
        h, w, c = bank.layer_shape(lid)
        if hp.pooled > min(h, w):
            raise ConfigurationError(
                f"layer {lid} maps are {h}x{w}, cannot pool to {hp.pooled}x{hp.pooled}"
            )
        arr = pool_array(bank.maps[lid], hp.pooled, hp.pooled)
        out[lid] = arr.reshape(bank.image_count, hp.pooled * hp.pooled, c)
    return out


def pair_layer_scores(
    s_rows: np.ndarray, q_rows: np.ndarray, lid: int, matcher: MatcherParams | None, hp: Hyperparams
) -> tuple[float, float]:
    """(critical, global) for one layer's pooled rows of one pair."""
    corr = np.einsum("ic,jc->ij", s_rows, q_rows)
    w_s, w_q = attention_weights(corr, hp.temperature)
    s1 = s_rows * w_s[:, None]
    q1 = q_rows * w_q[:, None]
    glob = cosine(s1.mean(axis=0), q1.mean(axis=0))
    m = matching_matrix(s1, q1)
    a = hungarian_assign(m) if hp.assign == "hungarian" else nn_assign(m)
    q2 = rearrange(q1, a)
    s2 = s1
    p = matcher.get(lid) if matcher else None
    if p is not None:
        s2 = matcher_forward(s2, p)
        q2 = matcher_forward(q2, p)
    return critical_score(s2, q2, hp.k_top), glob


def _pooled_rows(m: FeatureMap, hp: Hyperparams) -> np.ndarray:
    if hp.pooled > min(m.h, m.w):
        raise ConfigurationError(
            f"map is {m.h}x{m.w}, cannot pool to {hp.pooled}x{hp.pooled}"
        )
    return pool_array(m.data, hp.pooled, hp.pooled).reshape(hp.pooled * hp.pooled, m.c)


def score_pair(
    s_maps: dict[int, FeatureMap],
    q_maps: dict[int, FeatureMap],
    matcher: MatcherParams | None,
    hp: Hyperparams,
) -> ScoreBreakdown:
    """Full per-layer breakdown for one support/query pair of raw maps."""
    crits, globs = [], []
    for lid in hp.layer_ids:
        if lid not in s_maps or lid not in q_maps:
            raise ConfigurationError(f"both sides must provide layer {lid}")
        crit, glob = pair_layer_scores(
            _pooled_rows(s_maps[lid], hp), _pooled_rows(q_maps[lid], hp), lid, matcher, hp
        )
        crits.append(crit)
        globs.append(glob)
    combined = pair_score(list(zip(crits, globs)), hp.alpha)
    return ScoreBreakdown(
        layer_ids=hp.layer_ids, critical=tuple(crits), global_=tuple(globs), combined=combined
    )


def classify_query(
    q_maps: dict[int, FeatureMap],
    supports: list[list[dict[int, FeatureMap]]],
    matcher: MatcherParams | None,
    hp: Hyperparams,
) -> tuple[int, np.ndarray]:
    """Score a query against each class's supports; argmax wins, ties to
    the lowest class index."""
    if not supports:
        raise ValueError("supports must contain at least one class")
    scores = np.empty(len(supports))
    for n, shots in enumerate(supports):
        per_shot = [score_pair(s, q_maps, matcher, hp).combined for s in shots]
        scores[n] = class_score(per_shot, hp.k_shot)
    return int(np.argmax(scores)), scores


def _unit_last(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms >= EPS_NORM)


def _cos_last(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    dots = (a * b).sum(axis=-1)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    ok = (na >= EPS_NORM) & (nb >= EPS_NORM)
    return np.divide(dots, na * nb, out=np.zeros_like(dots), where=ok)


def _matcher_rows(x: np.ndarray, p) -> np.ndarray:
    flat = x.reshape(-1, x.shape[-1])
    return matcher_forward(flat, p).reshape(x.shape)


def episode_score_matrix(
    pooled: dict[int, np.ndarray], episode, matcher: MatcherParams | None, hp: Hyperparams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched class scores for every query of an episode.

    Returns (scores, critical_part, global_part), each (queries, n_way)
    with queries flattened class-major. The two parts are the per-class
    means of the layer-maxed critical and layer-averaged global scores,
    kept for diagnostics.
    """
    n_way, k_shot = episode.support.shape
    sup_idx = episode.support.reshape(-1)
    qry_idx = episode.query.reshape(-1)
    nq = qry_idx.size
    crit_layers, glob_layers = [], []
    for lid in hp.layer_ids:
        rows = pooled[lid]
        s = rows[sup_idx]  # (NK, n, c)
        q = rows[qry_idx]  # (nq, n, c)
        corr = np.matmul(s[None], q[:, None].transpose(0, 1, 3, 2))  # (nq, NK, n, n)
        z = corr / hp.temperature
        es = np.exp(z - z.max(axis=2, keepdims=True))
        w_s = (es / es.sum(axis=2, keepdims=True)).sum(axis=3)
        eq = np.exp(z - z.max(axis=3, keepdims=True))
        w_q = (eq / eq.sum(axis=3, keepdims=True)).sum(axis=2)
        s1 = s[None] * w_s[..., None]  # (nq, NK, n, c)
        q1 = q[:, None] * w_q[..., None]
        glob_layers.append(_cos_last(s1.mean(axis=2), q1.mean(axis=2)))
        m = np.clip(np.matmul(_unit_last(s1), _unit_last(q1).transpose(0, 1, 3, 2)), -1.0, 1.0)
        n_pix = m.shape[-1]
        if hp.assign == "hungarian":
            perms = assign.solve_batch((1.0 - m).reshape(-1, n_pix, n_pix))
            perms = perms.reshape(nq, s.shape[0], n_pix)
        else:
            perms = np.argmax(m, axis=3)
        q2 = np.take_along_axis(q1, perms[..., None], axis=2)
        s2 = s1
        p = matcher.get(lid) if matcher else None
        if p is not None:
            s2 = _matcher_rows(s1, p)
            q2 = _matcher_rows(q2, p)
        cos = _cos_last(s2, q2)  # (nq, NK, n)
        top = np.sort(cos, axis=2)[:, :, ::-1][:, :, : hp.k_top]
        crit_layers.append(top.sum(axis=2))
    crit = np.stack(crit_layers).max(axis=0)  # (nq, NK)
    glob = np.stack(glob_layers).mean(axis=0)
    pair = hp.alpha * crit + glob
    scores = pair.reshape(nq, n_way, k_shot).mean(axis=2)
    crit_part = crit.reshape(nq, n_way, k_shot).mean(axis=2)
    glob_part = glob.reshape(nq, n_way, k_shot).mean(axis=2)
    return scores, crit_part, glob_part

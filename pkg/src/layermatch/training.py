"""Episodic training of the matcher and the auxiliary classifier.

The loss is total = beta * L1 + L2, where L1 is cross-entropy over the
episode's class scores and L2 is cross-entropy of a linear classifier on
the query's mean embedding from the final configured layer (pooled, not
reweighted). Gradients are computed by a hand-written reverse pass over
the episode forward. Discrete choices made in the forward (assignment
permutations, top-k membership, the per-pair critical layer) are treated
as constants, so the gradient is exact wherever those choices are locally
stable.

Only the rows selected into a pair's critical top-k carry gradient, and
only through the layer that won the critical max; the forward therefore
stashes just those rows per pair and the backward recomputes the matcher
activations from them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import attention_weights
from .bank import FeatureBank
from .config import Hyperparams, TrainConfig
from .errors import ConfigurationError
from .matcher import LayerMatcher, MatcherParams, init_matcher_params, matcher_parts
from .matching import hungarian_assign, matching_matrix, nn_assign, rearrange
from .pipeline import precompute_pooled
from .scoring import class_score, pair_score
from .tensors import EPS_NORM, cosine
from .episodes import Episode, sample_episode


@dataclass
class ClassifierParams:
    """Linear softmax head over mean embeddings, one row per bank class."""

    w: np.ndarray  # (class_count, c)
    b: np.ndarray  # (class_count,)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise ValueError(
                f"classifier shapes inconsistent: w {self.w.shape}, b {self.b.shape}"
            )
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.b))):
            raise ValueError("classifier parameters contain non-finite values")


@dataclass
class TrainableParams:
    """Everything sgd updates: per-layer matchers plus the classifier."""

    matcher: MatcherParams
    classifier: ClassifierParams


def init_classifier_params(class_count: int, channels: int) -> ClassifierParams:
    if class_count < 1 or channels < 1:
        raise ValueError(f"invalid classifier dimensions ({class_count}, {channels})")
    return ClassifierParams(w=np.zeros((class_count, channels)), b=np.zeros(class_count))


def _log_softmax_nll(logits: np.ndarray, true_index: int) -> tuple[float, np.ndarray]:
    z = logits - logits.max()
    log_norm = np.log(np.sum(np.exp(z)))
    probs = np.exp(z - log_norm)
    return float(log_norm - z[true_index]), probs


def metric_loss(scores: np.ndarray, true_index: int) -> float:
    """Cross-entropy of the true class under a softmax over class scores."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or not np.all(np.isfinite(scores)):
        raise ValueError("scores must be a finite 1-d array")
    if scores.size < 2:
        raise ValueError(f"metric loss needs at least 2 classes, got {scores.size}")
    if not 0 <= true_index < scores.size:
        raise ValueError(f"true_index {true_index} out of range for {scores.size} classes")
    return _log_softmax_nll(scores, true_index)[0]


def classifier_loss(embedding: np.ndarray, params: ClassifierParams, label: int) -> float:
    """Cross-entropy of the bank label under the linear head."""
    embedding = np.asarray(embedding, dtype=np.float64)
    if embedding.shape != (params.w.shape[1],):
        raise ValueError(
            f"embedding has shape {embedding.shape}, classifier expects ({params.w.shape[1]},)"
        )
    if not 0 <= label < params.w.shape[0]:
        raise ValueError(f"label {label} out of range for {params.w.shape[0]} classes")
    return _log_softmax_nll(params.w @ embedding + params.b, label)[0]


def total_loss(l1: float, l2: float, beta: float) -> float:
    if not (np.isfinite(l1) and np.isfinite(l2) and np.isfinite(beta)):
        raise ValueError("loss terms must be finite")
    return beta * l1 + l2


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Learning rate in force at `epoch`: one decay per passed decay epoch."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    hits = sum(1 for e in cfg.decay_epochs if e <= epoch)
    return cfg.learning_rate * cfg.decay_factor**hits


@dataclass
class _PairStash:
    """Gradient-carrying state of one support/query pair."""

    class_pos: int
    layer_id: int  # the layer that won the critical max
    topk: np.ndarray  # (k,) aligned-row indices
    s_in: np.ndarray  # (k, c) matcher inputs, support side
    q_in: np.ndarray  # (k, c) matcher inputs, query side


@dataclass
class _QueryTrace:
    probs: np.ndarray  # (n_way,) softmax over class scores
    true_pos: int
    embedding: np.ndarray  # (c_final,)
    cls_probs: np.ndarray  # (class_count,)
    label: int
    pairs: list[_PairStash]


@dataclass
class EpisodeTrace:
    """Forward results plus everything backward() needs."""

    hp: Hyperparams
    beta: float
    params: TrainableParams
    queries: list[_QueryTrace]
    l1: float
    l2: float
    total: float
    accuracy: float


def _traced_pair(s_rows, q_rows, lid, params: TrainableParams, hp: Hyperparams):
    """Reference per-layer scoring that also returns the stash pieces."""
    corr = np.einsum("ic,jc->ij", s_rows, q_rows)
    w_s, w_q = attention_weights(corr, hp.temperature)
    s1 = s_rows * w_s[:, None]
    q1 = q_rows * w_q[:, None]
    glob = cosine(s1.mean(axis=0), q1.mean(axis=0))
    m = matching_matrix(s1, q1)
    a = hungarian_assign(m) if hp.assign == "hungarian" else nn_assign(m)
    q2 = rearrange(q1, a)
    p = params.matcher.get(lid)
    if p is None:
        raise ConfigurationError(f"training requires matcher parameters for layer {lid}")
    s_out = matcher_parts(s1, p)[4]
    q_out = matcher_parts(q2, p)[4]
    cos = np.array([cosine(s_out[i], q_out[i]) for i in range(s_out.shape[0])])
    order = np.argsort(-cos, kind="stable")
    topk = order[: hp.k_top]
    crit = float(np.sum(cos[topk]))
    return crit, glob, topk, s1, q2


def episode_forward(
    pooled: dict[int, np.ndarray],
    episode: Episode,
    params: TrainableParams,
    hp: Hyperparams,
    beta: float,
) -> EpisodeTrace:
    """Score every query of an episode, recording the gradient stash."""
    final_lid = hp.layer_ids[-1]
    n_way, k_shot = episode.support.shape
    queries: list[_QueryTrace] = []
    l1_sum = 0.0
    l2_sum = 0.0
    correct = 0
    for true_pos in range(n_way):
        for q_idx in episode.query[true_pos]:
            scores = np.empty(n_way)
            pair_stashes: list[_PairStash] = []
            for n_pos in range(n_way):
                shot_scores = []
                for s_idx in episode.support[n_pos]:
                    layer_scores = []
                    candidates = []
                    for lid in hp.layer_ids:
                        s_rows = pooled[lid][s_idx]
                        q_rows = pooled[lid][q_idx]
                        crit, glob, topk, s1, q2 = _traced_pair(s_rows, q_rows, lid, params, hp)
                        layer_scores.append((crit, glob))
                        candidates.append((lid, topk, s1, q2))
                    best = int(np.argmax([c for c, _ in layer_scores]))
                    lid, topk, s1, q2 = candidates[best]
                    pair_stashes.append(
                        _PairStash(
                            class_pos=n_pos,
                            layer_id=lid,
                            topk=topk,
                            s_in=s1[topk],
                            q_in=q2[topk],
                        )
                    )
                    shot_scores.append(pair_score(layer_scores, hp.alpha))
                scores[n_pos] = class_score(shot_scores, k_shot)
            l1_q, probs = _log_softmax_nll(scores, true_pos)
            if int(np.argmax(scores)) == true_pos:
                correct += 1
            embedding = pooled[final_lid][q_idx].mean(axis=0)
            label = int(episode.class_ids[true_pos])
            logits = params.classifier.w @ embedding + params.classifier.b
            l2_q, cls_probs = _log_softmax_nll(logits, label)
            l1_sum += l1_q
            l2_sum += l2_q
            queries.append(
                _QueryTrace(
                    probs=probs,
                    true_pos=true_pos,
                    embedding=embedding,
                    cls_probs=cls_probs,
                    label=label,
                    pairs=pair_stashes,
                )
            )
    nq = len(queries)
    l1 = l1_sum / nq
    l2 = l2_sum / nq
    return EpisodeTrace(
        hp=hp,
        beta=beta,
        params=params,
        queries=queries,
        l1=l1,
        l2=l2,
        total=total_loss(l1, l2, beta),
        accuracy=correct / nq,
    )


def _cosine_row_grads(a: np.ndarray, b: np.ndarray, upstream: float):
    """d upstream*cos(a_i, b_i) / d a_i and / d b_i, rows stacked."""
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    ok = (na >= EPS_NORM) & (nb >= EPS_NORM)  # degenerate rows scored 0, zero grad
    safe_a = np.where(ok, na, 1.0)
    safe_b = np.where(ok, nb, 1.0)
    cos = (a * b).sum(axis=1, keepdims=True) / (safe_a * safe_b)
    ga = upstream * (b / (safe_a * safe_b) - cos * a / (safe_a * safe_a))
    gb = upstream * (a / (safe_a * safe_b) - cos * b / (safe_b * safe_b))
    return np.where(ok, ga, 0.0), np.where(ok, gb, 0.0)


def _mlp_backward(x, p: LayerMatcher, g_out, acc):
    """Accumulate d loss/d params for out = x + relu(relu(x w1 + b1) w2 + b2)."""
    pre1, h1, pre2, _, _ = matcher_parts(x, p)
    g2 = g_out * (pre2 > 0)
    acc[2] += h1.T @ g2
    acc[3] += g2.sum(axis=0)
    g1 = (g2 @ p.w2.T) * (pre1 > 0)
    acc[0] += x.T @ g1
    acc[1] += g1.sum(axis=0)


def backward(trace: EpisodeTrace) -> TrainableParams:
    """Gradients of trace.total with respect to every trainable parameter."""
    hp = trace.hp
    params = trace.params
    if not trace.queries:
        raise RuntimeError("trace holds no queries")
    nq = len(trace.queries)
    acc = {
        lid: [np.zeros_like(p.w1), np.zeros_like(p.b1), np.zeros_like(p.w2), np.zeros_like(p.b2)]
        for lid, p in params.matcher.items()
    }
    g_w = np.zeros_like(params.classifier.w)
    g_b = np.zeros_like(params.classifier.b)
    for qt in trace.queries:
        if qt.probs is None or qt.pairs is None:
            raise RuntimeError("trace is missing forward intermediates")
        d_scores = qt.probs.copy()
        d_scores[qt.true_pos] -= 1.0
        d_scores *= trace.beta / nq  # total = beta * mean(l1) + mean(l2)
        for st in qt.pairs:
            upstream = d_scores[st.class_pos] * hp.alpha / hp.k_shot
            p = params.matcher[st.layer_id]
            a_out = matcher_parts(st.s_in, p)[4]
            b_out = matcher_parts(st.q_in, p)[4]
            ga, gb = _cosine_row_grads(a_out, b_out, upstream)
            _mlp_backward(st.s_in, p, ga, acc[st.layer_id])
            _mlp_backward(st.q_in, p, gb, acc[st.layer_id])
        d_logits = qt.cls_probs.copy()
        d_logits[qt.label] -= 1.0
        d_logits /= nq
        g_w += np.outer(d_logits, qt.embedding)
        g_b += d_logits
    matcher_grads = {lid: LayerMatcher(*arrays) for lid, arrays in acc.items()}
    return TrainableParams(
        matcher=matcher_grads, classifier=ClassifierParams(w=g_w, b=g_b)
    )


def sgd_step(params: TrainableParams, grads: TrainableParams, lr: float) -> TrainableParams:
    """One plain gradient step; shapes must match exactly."""
    if not (np.isfinite(lr) and lr >= 0):
        raise ValueError(f"learning rate must be finite and >= 0, got {lr}")
    if set(params.matcher) != set(grads.matcher):
        raise ValueError("parameter and gradient layer sets differ")
    new_matcher: MatcherParams = {}
    for lid, p in params.matcher.items():
        g = grads.matcher[lid]
        for name in ("w1", "b1", "w2", "b2"):
            if getattr(p, name).shape != getattr(g, name).shape:
                raise ValueError(f"layer {lid}: {name} shape mismatch")
        new_matcher[lid] = LayerMatcher(
            w1=p.w1 - lr * g.w1, b1=p.b1 - lr * g.b1, w2=p.w2 - lr * g.w2, b2=p.b2 - lr * g.b2
        )
    pc, gc = params.classifier, grads.classifier
    if pc.w.shape != gc.w.shape or pc.b.shape != gc.b.shape:
        raise ValueError("classifier shape mismatch")
    return TrainableParams(
        matcher=new_matcher,
        classifier=ClassifierParams(w=pc.w - lr * gc.w, b=pc.b - lr * gc.b),
    )


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    lr: float
    mean_l1: float
    mean_l2: float
    mean_total: float
    train_accuracy: float


def train(
    bank: FeatureBank, hp: Hyperparams, cfg: TrainConfig
) -> tuple[TrainableParams, list[EpochStats]]:
    """Episodic SGD; hp.episode_count episodes per epoch.

    Matcher weights start from the seeded uniform init, the classifier
    from zeros. Episode sampling is derived from (cfg.seed, epoch,
    episode), so runs are exactly repeatable.
    """
    pooled = precompute_pooled(bank, hp)
    channels = {lid: bank.layer_shape(lid)[2] for lid in hp.layer_ids}
    final_c = channels[hp.layer_ids[-1]]
    params = TrainableParams(
        matcher=init_matcher_params(channels, seed=cfg.seed),
        classifier=init_classifier_params(bank.class_count, final_c),
    )
    history: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        sums = np.zeros(4)  # l1, l2, total, accuracy
        for e in range(hp.episode_count):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch, e]))
            episode = sample_episode(bank, hp, rng)
            trace = episode_forward(pooled, episode, params, hp, cfg.beta)
            params = sgd_step(params, backward(trace), lr)
            sums += (trace.l1, trace.l2, trace.total, trace.accuracy)
        means = sums / hp.episode_count
        history.append(
            EpochStats(
                epoch=epoch,
                lr=lr,
                mean_l1=float(means[0]),
                mean_l2=float(means[1]),
                mean_total=float(means[2]),
                train_accuracy=float(means[3]),
            )
        )
    return params, history

"""Few-shot similarity over multi-layer feature banks.

The pipeline scores a query image against class supports in two stages
per configured backbone layer: correlation-driven attention reweighting
of both feature maps, then optimal one-to-one pixel matching before a
top-k cosine score. Banks of precomputed features move through the FBNK1
binary format; episodic evaluation and training live in the harness.
"""

from . import assign
from .attention import attention_weights, cross_correlation, reweight
from .bank import (
    FeatureBank,
    SyntheticSpec,
    gen_synthetic_bank,
    read_bank,
    write_bank,
)
from .config import PRESETS, Hyperparams, TrainConfig, apply_preset
from .episodes import (
    Episode,
    EvalReport,
    confidence_interval95,
    episode_rng,
    evaluate,
    sample_episode,
)
from .errors import BankFormatError, ConfigurationError
from .matcher import (
    LayerMatcher,
    MatcherParams,
    bottleneck_width,
    init_matcher_params,
    load_matcher_params,
    matcher_forward,
    save_matcher_params,
    zero_matcher_params,
)
from .matching import (
    Assignment,
    hungarian_assign,
    matching_matrix,
    nn_assign,
    rearrange,
)
from .pipeline import classify_query, episode_score_matrix, precompute_pooled, score_pair
from .scoring import ScoreBreakdown, class_score, critical_score, global_score, pair_score
from .tensors import (
    FeatureMap,
    adaptive_avg_pool,
    cosine,
    flatten_spatial,
    mean_embedding,
    unflatten_spatial,
)
from .training import (
    ClassifierParams,
    EpisodeTrace,
    EpochStats,
    TrainableParams,
    backward,
    classifier_loss,
    episode_forward,
    init_classifier_params,
    lr_at,
    metric_loss,
    sgd_step,
    total_loss,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "assign",
    "attention_weights",
    "cross_correlation",
    "reweight",
    "FeatureBank",
    "SyntheticSpec",
    "gen_synthetic_bank",
    "read_bank",
    "write_bank",
    "PRESETS",
    "Hyperparams",
    "TrainConfig",
    "apply_preset",
    "Episode",
    "EvalReport",
    "confidence_interval95",
    "episode_rng",
    "evaluate",
    "sample_episode",
    "BankFormatError",
    "ConfigurationError",
    "LayerMatcher",
    "MatcherParams",
    "bottleneck_width",
    "init_matcher_params",
    "load_matcher_params",
    "matcher_forward",
    "save_matcher_params",
    "zero_matcher_params",
    "Assignment",
    "hungarian_assign",
    "matching_matrix",
    "nn_assign",
    "rearrange",
    "classify_query",
    "episode_score_matrix",
    "precompute_pooled",
    "score_pair",
    "ScoreBreakdown",
    "class_score",
    "critical_score",
    "global_score",
    "pair_score",
    "FeatureMap",
    "adaptive_avg_pool",
    "cosine",
    "flatten_spatial",
    "mean_embedding",
    "unflatten_spatial",
    "ClassifierParams",
    "EpisodeTrace",
    "EpochStats",
    "TrainableParams",
    "backward",
    "classifier_loss",
    "episode_forward",
    "init_classifier_params",
    "lr_at",
    "metric_loss",
    "sgd_step",
    "total_loss",
    "train",
]

import numpy as np
import pytest
from dataclasses import replace

from layermatch import Hyperparams, evaluate
from layermatch.episodes import (
    Episode,
    confidence_interval95,
    episode_rng,
    sample_episode,
)
from layermatch.errors import ConfigurationError

from helpers import small_bank


HP5 = Hyperparams(n_way=5, k_shot=1, query_per_class=15, episode_count=4, seed=0)


class TestEpisodeType:
    def test_rejects_overlap(self):
        with pytest.raises(ValueError, match="overlap"):
            Episode(
                class_ids=np.array([0]),
                support=np.array([[3]]),
                query=np.array([[3, 4]]),
            )

    def test_rejects_row_mismatch(self):
        with pytest.raises(ValueError, match="one row per class"):
            Episode(
                class_ids=np.array([0, 1]),
                support=np.array([[1]]),
                query=np.array([[2], [3]]),
            )


class TestSampleEpisode:
    def test_shapes_five_way(self):
        bank = small_bank(classes=8, per_class=16, layers=((7, 3, 3, 4),))
        ep = sample_episode(bank, HP5, episode_rng(0, 0))
        assert ep.support.shape == (5, 1)
        assert ep.query.shape == (5, 15)
        assert ep.support.size == 5
        assert ep.query.size == 75

    def test_deterministic(self):
        bank = small_bank(classes=8, per_class=16, layers=((7, 3, 3, 4),))
        a = sample_episode(bank, HP5, episode_rng(7, 3))
        b = sample_episode(bank, HP5, episode_rng(7, 3))
        assert np.array_equal(a.class_ids, b.class_ids)
        assert np.array_equal(a.support, b.support)
        assert np.array_equal(a.query, b.query)

    def test_labels_match_class(self):
        bank = small_bank(classes=8, per_class=16, layers=((7, 3, 3, 4),))
        ep = sample_episode(bank, HP5, episode_rng(1, 5))
        for n, cls in enumerate(ep.class_ids):
            assert np.all(bank.labels[ep.support[n]] == cls)
            assert np.all(bank.labels[ep.query[n]] == cls)

    def test_too_few_classes(self):
        bank = small_bank(classes=4, per_class=16, layers=((7, 3, 3, 4),))
        with pytest.raises(ConfigurationError, match="4 of 4 classes qualify"):
            sample_episode(bank, HP5, episode_rng(0, 0))

    def test_too_few_images(self):
        bank = small_bank(classes=6, per_class=10, layers=((7, 3, 3, 4),))
        with pytest.raises(ConfigurationError, match="at least 16 images"):
            sample_episode(bank, HP5, episode_rng(0, 0))

    def test_distinct_rng_indices_differ(self):
        bank = small_bank(classes=8, per_class=16, layers=((7, 3, 3, 4),))
        a = sample_episode(bank, HP5, episode_rng(7, 0))
        b = sample_episode(bank, HP5, episode_rng(7, 1))
        assert not (
            np.array_equal(a.class_ids, b.class_ids)
            and np.array_equal(a.support, b.support)
            and np.array_equal(a.query, b.query)
        )


class TestConfidenceInterval:
    def test_single_episode_zero(self):
        assert confidence_interval95(np.array([0.8])) == 0.0

    def test_formula_oracle(self, rng):
        acc = rng.uniform(0.0, 1.0, 40)
        want = 1.96 * float(np.std(acc, ddof=1)) / np.sqrt(40)
        assert confidence_interval95(acc) == pytest.approx(want, abs=1e-15)

    def test_constant_accuracies_zero(self):
        assert confidence_interval95(np.full(10, 0.4)) == 0.0


class TestEvaluate:
    def test_noise_free_bank_perfect(self):
        bank = small_bank(classes=7, per_class=17, noise_scale=0.0)
        hp = replace(HP5, episode_count=8)
        report = evaluate(bank, None, hp)
        assert report.mean_accuracy == 1.0
        assert report.ci95 == 0.0
        assert np.all(report.accuracies == 1.0)

    def test_high_separation_bank(self):
        bank = small_bank(classes=7, per_class=17, prototype_scale=10.0, noise_scale=1.0)
        report = evaluate(bank, None, replace(HP5, episode_count=10))
        assert report.mean_accuracy >= 0.99

    def test_deterministic_reports(self):
        bank = small_bank(classes=7, per_class=17)
        hp = replace(HP5, episode_count=5)
        a = evaluate(bank, None, hp)
        b = evaluate(bank, None, hp)
        assert np.array_equal(a.accuracies, b.accuracies)
        assert a.mean_accuracy == b.mean_accuracy
        assert a.ci95 == b.ci95

    def test_coin_hook_matches_binomial(self):
        # scoring replaced by noise: accuracy must sit at chance level
        bank = small_bank(classes=7, per_class=17, layers=((7, 3, 3, 4),))
        hp = replace(HP5, episode_count=200, layer_ids=(7,))
        coin = np.random.default_rng(123)

        def coin_scores(pooled, episode, matcher, h):
            return coin.random((h.n_way * h.query_per_class, h.n_way))

        report = evaluate(bank, None, hp, score_matrix_fn=coin_scores)
        total = hp.episode_count * hp.n_way * hp.query_per_class
        sigma = np.sqrt(0.2 * 0.8 / total)
        assert abs(report.mean_accuracy - 0.2) < 3 * sigma

    def test_collect_scores_sanity(self):
        bank = small_bank(classes=7, per_class=17)
        hp = replace(HP5, episode_count=3)
        report = evaluate(bank, None, hp, collect_scores=True)
        assert len(report.score_matrices) == 3
        for scores in report.score_matrices:
            assert scores.shape == (75, 5)
            assert np.all(np.isfinite(scores))

    def test_monotone_noise_sweep(self):
        # more noise never helps beyond CI slack
        hp = replace(HP5, episode_count=15)
        results = []
        for noise in (1.0, 5.0, 20.0):
            bank = small_bank(
                seed=31, classes=7, per_class=17, prototype_scale=10.0, noise_scale=noise
            )
            report = evaluate(bank, None, hp)
            results.append((report.mean_accuracy, report.ci95))
        for (acc_lo, ci_lo), (acc_hi, ci_hi) in zip(results, results[1:]):
            assert acc_hi <= acc_lo + ci_lo + ci_hi + 1e-9

    def test_bad_hook_shape_rejected(self):
        bank = small_bank(classes=7, per_class=17)
        hp = replace(HP5, episode_count=1)

        def bad_scores(pooled, episode, matcher, h):
            return np.zeros((3, 3))

        with pytest.raises(ValueError, match="score matrix"):
            evaluate(bank, None, hp, score_matrix_fn=bad_scores)

import numpy as np
import pytest

from layermatch import Hyperparams, TrainConfig
from layermatch.bank import SyntheticSpec, gen_synthetic_bank
from layermatch.episodes import episode_rng, sample_episode
from layermatch.errors import ConfigurationError
from layermatch.matcher import init_matcher_params, zero_matcher_params
from layermatch.pipeline import precompute_pooled
from layermatch.training import (
    ClassifierParams,
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

from helpers import gradcheck, make_gradcheck_config, small_bank


def grad_norm(g):
    total = 0.0
    for p in g.matcher.values():
        for name in ("w1", "b1", "w2", "b2"):
            total += float(np.sum(getattr(p, name) ** 2))
    total += float(np.sum(g.classifier.w**2)) + float(np.sum(g.classifier.b**2))
    return float(np.sqrt(total))


class TestMetricLoss:
    def test_uniform_scores(self):
        assert metric_loss(np.zeros(5), 2) == pytest.approx(np.log(5), abs=1e-12)

    def test_dominant_true_score_vanishes(self):
        assert metric_loss(np.array([1000.0, 0.0, 0.0]), 0) == pytest.approx(0.0, abs=1e-12)

    def test_worked_example(self):
        # -log(e^2 / (e^2 + e^1 + e^0))
        assert metric_loss(np.array([2.0, 1.0, 0.0]), 0) == pytest.approx(0.40761, abs=1e-5)

    def test_nonnegative(self, rng):
        for _ in range(30):
            scores = rng.normal(0.0, 3.0, 5)
            assert metric_loss(scores, int(rng.integers(5))) >= 0.0

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError, match="at least 2"):
            metric_loss(np.array([1.0]), 0)
        with pytest.raises(ValueError, match="out of range"):
            metric_loss(np.zeros(3), 3)
        with pytest.raises(ValueError, match="finite"):
            metric_loss(np.array([1.0, np.nan]), 0)


class TestClassifierLoss:
    def test_single_class_is_free(self, rng):
        p = ClassifierParams(w=rng.standard_normal((1, 4)), b=rng.standard_normal(1))
        assert classifier_loss(rng.standard_normal(4), p, 0) == pytest.approx(0.0, abs=1e-12)

    def test_zero_params_uniform(self, rng):
        for c_count in (2, 5, 9):
            p = init_classifier_params(c_count, 6)
            got = classifier_loss(rng.standard_normal(6), p, 1 % c_count)
            assert got == pytest.approx(np.log(c_count), abs=1e-12)

    def test_softmax_oracle(self, rng):
        p = ClassifierParams(w=rng.standard_normal((4, 5)), b=rng.standard_normal(4))
        e = rng.standard_normal(5)
        logits = p.w @ e + p.b
        probs = np.exp(logits) / np.exp(logits).sum()
        for label in range(4):
            assert classifier_loss(e, p, label) == pytest.approx(-np.log(probs[label]), abs=1e-10)

    def test_rejects_mismatch(self, rng):
        p = init_classifier_params(3, 4)
        with pytest.raises(ValueError, match="shape"):
            classifier_loss(rng.standard_normal(5), p, 0)
        with pytest.raises(ValueError, match="out of range"):
            classifier_loss(rng.standard_normal(4), p, 3)


class TestTotalLoss:
    def test_default_mix(self):
        assert total_loss(2.0, 1.0, beta=0.25) == 1.5

    def test_beta_zero(self):
        assert total_loss(7.0, 3.25, beta=0.0) == 3.25

    def test_beta_only_first_term(self):
        assert total_loss(1.0, 0.0, beta=1.5) == 1.5

    def test_linear_in_beta(self, rng):
        l1, l2 = 1.7, 0.9
        betas = rng.uniform(0.0, 3.0, 10)
        for b1, b2 in zip(betas, betas[1:]):
            lhs = total_loss(l1, l2, b1) - total_loss(l1, l2, b2)
            assert lhs == pytest.approx((b1 - b2) * l1, abs=1e-12)


class TestLrSchedule:
    CFG = TrainConfig(epochs=10, learning_rate=0.01, decay_factor=0.05, decay_epochs=(4, 6, 8))

    def test_initial(self):
        assert lr_at(0, self.CFG) == 0.01

    def test_one_decay_applied(self):
        assert lr_at(5, self.CFG) == pytest.approx(5e-4, abs=1e-18)

    def test_boundary_epoch_counts(self):
        assert lr_at(4, self.CFG) == pytest.approx(5e-4, abs=1e-18)

    def test_all_decays(self):
        assert lr_at(9, self.CFG) == pytest.approx(0.01 * 0.05**3, abs=1e-20)

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="epoch"):
            lr_at(-1, self.CFG)


class TestSgdStep:
    def test_moves_against_gradient(self, rng):
        params = TrainableParams(
            matcher=init_matcher_params({7: 4}, seed=0),
            classifier=init_classifier_params(3, 4),
        )
        grads = TrainableParams(
            matcher=init_matcher_params({7: 4}, seed=1),
            classifier=ClassifierParams(
                w=rng.standard_normal((3, 4)), b=rng.standard_normal(3)
            ),
        )
        out = sgd_step(params, grads, lr=0.1)
        np.testing.assert_allclose(
            out.matcher[7].w1, params.matcher[7].w1 - 0.1 * grads.matcher[7].w1, atol=1e-15
        )
        np.testing.assert_allclose(
            out.classifier.b, params.classifier.b - 0.1 * grads.classifier.b, atol=1e-15
        )

    def test_zero_gradient_fixed_point(self):
        params = TrainableParams(
            matcher=init_matcher_params({7: 4}, seed=0),
            classifier=init_classifier_params(3, 4),
        )
        zeros = TrainableParams(
            matcher=zero_matcher_params({7: 4}),
            classifier=init_classifier_params(3, 4),
        )
        out = sgd_step(params, zeros, lr=0.5)
        assert np.array_equal(out.matcher[7].w1, params.matcher[7].w1)
        assert np.array_equal(out.classifier.w, params.classifier.w)

    def test_rejects_layer_mismatch(self):
        params = TrainableParams(
            matcher=init_matcher_params({7: 4}, seed=0),
            classifier=init_classifier_params(3, 4),
        )
        grads = TrainableParams(
            matcher=init_matcher_params({8: 4}, seed=0),
            classifier=init_classifier_params(3, 4),
        )
        with pytest.raises(ValueError, match="layer sets"):
            sgd_step(params, grads, lr=0.1)


class TestBackward:
    def test_classifier_bias_gradient_formula(self):
        # with a zero classifier every query contributes uniform softmax
        # minus its one-hot label, scaled by 1/nq
        bank = small_bank(seed=13, classes=4, per_class=6)
        hp = Hyperparams(
            n_way=3, k_shot=1, query_per_class=2, episode_count=1, seed=0,
            layer_ids=(7, 8), pooled=3, temperature=5.0, alpha=0.25, beta=0.25, k_top=5,
        )
        pooled = precompute_pooled(bank, hp)
        ep = sample_episode(bank, hp, episode_rng(5, 0))
        params = TrainableParams(
            matcher=init_matcher_params({7: 8, 8: 12}, seed=2),
            classifier=init_classifier_params(4, 12),
        )
        trace = episode_forward(pooled, ep, params, hp, beta=hp.beta)
        g = backward(trace)
        nq = hp.n_way * hp.query_per_class
        counts = np.zeros(4)
        for n, cls in enumerate(ep.class_ids):
            counts[cls] += hp.query_per_class
        want = (1.0 / 4.0) - counts / nq
        np.testing.assert_allclose(g.classifier.b, want, rtol=0, atol=1e-12)

    def test_missing_matcher_layer(self):
        bank = small_bank(seed=13, classes=4, per_class=6)
        hp = Hyperparams(
            n_way=3, k_shot=1, query_per_class=2, episode_count=1, seed=0,
            layer_ids=(7, 8), pooled=3, temperature=5.0, alpha=0.25, beta=0.25, k_top=5,
        )
        pooled = precompute_pooled(bank, hp)
        ep = sample_episode(bank, hp, episode_rng(5, 0))
        params = TrainableParams(
            matcher=init_matcher_params({7: 8}, seed=2),  # layer 8 missing
            classifier=init_classifier_params(4, 12),
        )
        with pytest.raises(ConfigurationError, match="layer 8"):
            episode_forward(pooled, ep, params, hp, beta=hp.beta)

    def test_finite_difference_spot_check(self):
        # two seeds here; the full 20-configuration sweep runs in the
        # acceptance suite
        for seed in (0, 1):
            pooled, episode, params, hp = make_gradcheck_config(seed)
            max_abs, max_rel, count = gradcheck(pooled, episode, params, hp)
            assert count > 60
            assert max_rel < 1e-4, f"seed {seed}: rel err {max_rel:.2e}"

    def test_beta_zero_freezes_matcher(self):
        pooled, episode, params, hp = make_gradcheck_config(3)
        from layermatch.training import episode_forward as fwd

        trace = fwd(pooled, episode, params, hp, beta=0.0)
        g = backward(trace)
        for lid, p in g.matcher.items():
            for name in ("w1", "b1", "w2", "b2"):
                assert np.all(getattr(p, name) == 0.0)
        assert np.any(g.classifier.w != 0.0)


class TestOverTraining:
    def test_converges_to_flat_gradient(self):
        # overlapping classes make the classifier problem non-separable,
        # so full-batch descent lands on an interior optimum
        bank = gen_synthetic_bank(
            SyntheticSpec(
                class_count=2,
                images_per_class=9,
                layers=((7, 1, 1, 2),),
                prototype_scale=0.3,
                noise_scale=1.5,
                seed=0,
            )
        )
        hp = Hyperparams(
            n_way=2, k_shot=1, query_per_class=8, episode_count=1, seed=0,
            layer_ids=(7,), pooled=1, temperature=5.0, alpha=0.25, beta=0.0, k_top=1,
        )
        pooled = precompute_pooled(bank, hp)
        ep = sample_episode(bank, hp, episode_rng(0, 0))
        params = TrainableParams(
            matcher=init_matcher_params({7: 2}, seed=0),
            classifier=init_classifier_params(2, 2),
        )
        norm = np.inf
        for _ in range(500):
            trace = episode_forward(pooled, ep, params, hp, beta=0.0)
            g = backward(trace)
            norm = grad_norm(g)
            if norm < 1e-6:
                break
            params = sgd_step(params, g, lr=0.8)
        assert norm < 1e-6
        assert trace.total > 0.1  # interior optimum, not a separable blow-up

    def test_first_ten_steps_strictly_decrease(self):
        bank = gen_synthetic_bank(
            SyntheticSpec(
                class_count=6,
                images_per_class=8,
                layers=((7, 3, 3, 8), (8, 3, 3, 12)),
                prototype_scale=10.0,
                noise_scale=1.0,
                seed=3,
            )
        )
        hp = Hyperparams(
            n_way=3, k_shot=1, query_per_class=4, episode_count=1, seed=0,
            layer_ids=(7, 8), pooled=3, temperature=5.0, alpha=0.25, beta=0.25, k_top=5,
        )
        pooled = precompute_pooled(bank, hp)
        ep = sample_episode(bank, hp, episode_rng(11, 0))
        params = TrainableParams(
            matcher=init_matcher_params({7: 8, 8: 12}, seed=0),
            classifier=init_classifier_params(6, 12),
        )
        losses = []
        for _ in range(11):
            trace = episode_forward(pooled, ep, params, hp, beta=hp.beta)
            losses.append(trace.total)
            params = sgd_step(params, backward(trace), lr=0.05)
        assert all(b < a for a, b in zip(losses, losses[1:])), losses


class TestTrainLoop:
    HP = Hyperparams(
        n_way=2, k_shot=1, query_per_class=2, episode_count=3, seed=0,
        layer_ids=(7, 8), pooled=3, temperature=5.0, alpha=0.25, beta=0.25, k_top=5,
    )
    CFG = TrainConfig(
        epochs=2, learning_rate=0.01, decay_factor=0.05, decay_epochs=(1,), beta=0.25, seed=4
    )

    def test_history_and_determinism(self):
        bank = small_bank(seed=17, classes=4, per_class=5)
        params_a, hist_a = train(bank, self.HP, self.CFG)
        params_b, hist_b = train(bank, self.HP, self.CFG)
        assert len(hist_a) == 2
        assert isinstance(hist_a[0], EpochStats)
        assert hist_a[0].lr == 0.01
        assert hist_a[1].lr == pytest.approx(5e-4)
        for row_a, row_b in zip(hist_a, hist_b):
            assert row_a == row_b
        for lid in (7, 8):
            assert np.array_equal(params_a.matcher[lid].w1, params_b.matcher[lid].w1)

    def test_parameters_move(self):
        bank = small_bank(seed=17, classes=4, per_class=5)
        params, _ = train(bank, self.HP, self.CFG)
        init = init_matcher_params({7: 8, 8: 12}, seed=self.CFG.seed)
        assert not np.array_equal(params.matcher[7].w1, init[7].w1)
        assert np.any(params.classifier.w != 0.0)

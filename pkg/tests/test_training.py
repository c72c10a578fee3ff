import numpy as np
import pytest

from tweenkit.features import FeatureDims
from tweenkit.losses import TrainingConfig
from tweenkit.network import ModelConfig, ModelParameters
from tweenkit.synth import default_styles, generate_synthetic_clip
from tweenkit.training import (AdamW, EmptyDataset, FeatureCache, SampleSet,
                               prepare_clip, train)

DIMS = FeatureDims(n_styles=4)
SMALL = ModelConfig(dims=DIMS, n_experts=2, expert_hidden=16,
                    gating_hidden=(16, 8))


@pytest.fixture(scope="module")
def walk_clip():
    clip = generate_synthetic_clip(default_styles()[1], 4.0, seed=21)
    return prepare_clip(clip)


class TestAdamW:
    def test_zero_lr_no_weight_decay_is_identity(self):
        rng = np.random.default_rng(0)
        params = {"w": rng.normal(size=(4, 4)), "b": rng.normal(size=4)}
        before = {k: v.copy() for k, v in params.items()}
        opt = AdamW(params, lr=0.0, weight_decay=0.0)
        grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
        for _ in range(5):
            opt.step(params, grads)
        for k in params:
            assert np.array_equal(params[k], before[k])

    def test_single_step_matches_hand_formula(self):
        p0 = 2.0
        g = 0.5
        lr, wd, b1, b2, eps = 1e-2, 1e-1, 0.9, 0.999, 1e-8
        params = {"p": np.array([p0])}
        opt = AdamW(params, lr=lr, weight_decay=wd, beta1=b1, beta2=b2, eps=eps)
        opt.step(params, {"p": np.array([g])})
        m_hat = g  # (1-b1)g / (1-b1)
        v_hat = g * g
        expected = p0 - lr * (m_hat / (np.sqrt(v_hat) + eps) + wd * p0)
        assert abs(params["p"][0] - expected) < 1e-12

    def test_decoupled_decay_shrinks_without_gradient(self):
        params = {"p": np.array([4.0])}
        opt = AdamW(params, lr=1e-2, weight_decay=0.5)
        opt.step(params, {"p": np.array([0.0])})
        assert params["p"][0] == pytest.approx(4.0 * (1 - 1e-2 * 0.5))


class TestSampleSet:
    def test_cache_matches_reference_assemble(self, walk_clip):
        from tweenkit import features as feat

        cache = FeatureCache(walk_clip, DIMS)
        rng = np.random.default_rng(1)
        for _ in range(10):
            f = int(rng.integers(0, walk_clip.n_frames - 1))
            t = int(rng.integers(f + 1, min(f + 91, walk_clip.n_frames)))
            mask = rng.random(22) >= 0.2
            mask[0] = True
            state, cond = feat.assemble(walk_clip, f, t, mask)
            assert np.array_equal(cache.state_vector(f, t, mask),
                                  state.to_vector())
            assert np.array_equal(cache.phase_vec[f], cond.phase_vector())
            assert np.array_equal(cache.truth[f],
                                  feat.assemble_output(walk_clip, f))

    def test_batch_shapes(self, walk_clip):
        samples = SampleSet.build([walk_clip], DIMS)
        cfg = TrainingConfig(batch_size=8)
        batch = samples.draw_batch(np.random.default_rng(0), cfg)
        assert batch.x.shape == (8, DIMS.input_dim)
        assert batch.truth.shape == (8, DIMS.output_dim)
        assert batch.tta.min() >= 1 and batch.tta.max() <= 90

    def test_mirror_augment_doubles(self, walk_clip):
        plain = SampleSet.build([walk_clip], DIMS, mirror_augment=False)
        doubled = SampleSet.build([walk_clip], DIMS, mirror_augment=True)
        assert len(doubled.index) == 2 * len(plain.index)

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            SampleSet.build([], DIMS)


class TestTrain:
    def test_deterministic_same_seed(self, walk_clip):
        cfg = TrainingConfig(steps=30, seed=5, mirror_augment=False,
                             batch_size=8)
        m1, c1 = train([walk_clip], cfg, SMALL)
        m2, c2 = train([walk_clip], cfg, SMALL)
        assert c1 == c2
        for k in m1.params:
            assert np.array_equal(m1.params[k], m2.params[k])

    def test_loss_decreases(self, walk_clip):
        cfg = TrainingConfig(steps=300, seed=6, mirror_augment=False,
                             batch_size=16, learning_rate=1e-3)
        _, curve = train([walk_clip], cfg, SMALL)
        assert np.mean(curve[-50:]) < 0.7 * np.mean(curve[:50])

    def test_normalizers_fitted(self, walk_clip):
        cfg = TrainingConfig(steps=5, seed=7, mirror_augment=False,
                             batch_size=8)
        model, _ = train([walk_clip], cfg, SMALL)
        # normalized training features should be near zero-mean unit-std
        samples = SampleSet.build([walk_clip], DIMS, mirror_augment=False)
        batch = samples.draw_batch(np.random.default_rng(8),
                                   TrainingConfig(batch_size=256))
        z = model.input_norm.normalize(batch.x)
        live = model.input_norm.std > 1e-3
        assert np.abs(z.mean(axis=0)[live]).max() < 0.6
        contacts_slice = DIMS.output_slices()["contacts"]
        assert np.all(model.output_norm.std[contacts_slice] == 1.0)
        assert np.all(model.output_norm.mean[contacts_slice] == 0.0)

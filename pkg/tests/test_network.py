import numpy as np
import pytest

from tweenkit.features import Condition, FeatureDims
from tweenkit.losses import TrainingConfig, compute_loss
from tweenkit.network import (ModelConfig, ModelParameters, OutputState,
                              ShapeMismatch, forward_batch, gating_forward,
                              load_model, save_model)


@pytest.fixture(scope="module")
def reduced_model():
    cfg = ModelConfig().reduced()
    return ModelParameters.init(cfg, seed=0)


def random_inputs(model, b, seed=0):
    dims = model.config.dims
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(b, dims.input_dim))
    phases = rng.normal(size=(b, dims.window * dims.phase_channels * 2))
    styles = rng.integers(0, dims.n_styles, b)
    tta = rng.integers(1, 91, b).astype(float)
    return x, phases, styles, tta


class TestGating:
    def test_weights_sum_to_one_1000_inputs(self, reduced_model):
        dims = reduced_model.config.dims
        rng = np.random.default_rng(1)
        for _ in range(50):
            cond = Condition(
                np.stack([np.stack([rng.uniform(0, 2, dims.phase_channels),
                                    rng.uniform(0, 1, dims.phase_channels)], axis=1)
                          for _ in range(13)]),
                int(rng.integers(dims.n_styles)), int(rng.integers(1, 90)))
            w = gating_forward(cond, reduced_model)
            assert w.shape == (reduced_model.config.n_experts,)
            assert abs(w.sum() - 1.0) < 1e-6
            assert (w >= 0).all()

    def test_batch_weights_simplex(self, reduced_model):
        x, phases, styles, tta = random_inputs(reduced_model, 1000, seed=2)
        _, cache = forward_batch(reduced_model, x, phases, styles, tta)
        assert np.abs(cache.weights.sum(axis=1) - 1.0).max() < 1e-6
        assert cache.weights.min() >= 0.0

    def test_zero_preactivations_uniform(self, reduced_model):
        model = reduced_model
        saved_w = model.params["gating.l3.W"].copy()
        saved_b = model.params["gating.l3.b"].copy()
        model.params["gating.l3.W"][:] = 0.0
        model.params["gating.l3.b"][:] = 0.0
        try:
            x, phases, styles, tta = random_inputs(model, 4, seed=3)
            _, cache = forward_batch(model, x, phases, styles, tta)
            k = model.config.n_experts
            assert np.abs(cache.weights - 1.0 / k).max() < 1e-12
        finally:
            model.params["gating.l3.W"][:] = saved_w
            model.params["gating.l3.b"][:] = saved_b


class TestBlending:
    def test_one_hot_equals_single_expert(self, reduced_model):
        model = reduced_model
        b = 16
        x, phases, styles, tta = random_inputs(model, b, seed=4)
        for k in range(model.config.n_experts):
            onehot = np.zeros((b, model.config.n_experts))
            onehot[:, k] = 1.0
            y, cache = forward_batch(model, x, phases, styles, tta,
                                     gate_override=onehot)
            yk = model.output_norm.denormalize(cache.e_out[k])
            assert np.abs(y - yk).max() < 1e-6

    def test_duplicate_experts_weight_independent(self):
        cfg = ModelConfig().reduced()
        model = ModelParameters.init(cfg, seed=5)
        for k in range(1, cfg.n_experts):
            for layer in ("l1", "l2", "l3"):
                model.params[f"expert{k}.{layer}.W"] = model.params[
                    f"expert0.{layer}.W"].copy()
                model.params[f"expert{k}.{layer}.b"] = model.params[
                    f"expert0.{layer}.b"].copy()
        b = 8
        x, phases, styles, tta = random_inputs(model, b, seed=6)
        rng = np.random.default_rng(7)
        w1 = rng.dirichlet(np.ones(cfg.n_experts), b)
        w2 = rng.dirichlet(np.ones(cfg.n_experts), b)
        y1, _ = forward_batch(model, x, phases, styles, tta, gate_override=w1)
        y2, _ = forward_batch(model, x, phases, styles, tta, gate_override=w2)
        assert np.abs(y1 - y2).max() < 1e-9

    def test_deterministic(self, reduced_model):
        x, phases, styles, tta = random_inputs(reduced_model, 4, seed=8)
        y1, _ = forward_batch(reduced_model, x, phases, styles, tta)
        y2, _ = forward_batch(reduced_model, x, phases, styles, tta)
        assert np.array_equal(y1, y2)

    def test_shape_mismatch(self, reduced_model):
        with pytest.raises(ShapeMismatch):
            forward_batch(reduced_model, np.zeros((2, 3)), np.zeros((2, 3)),
                          np.zeros(2, dtype=int), np.ones(2))


class TestOutputState:
    def test_from_vector_shapes(self, reduced_model):
        dims = reduced_model.config.dims
        rng = np.random.default_rng(9)
        out = OutputState.from_vector(rng.normal(size=dims.output_dim), dims)
        assert out.pos.shape == (dims.n_joints, 3)
        assert out.rot.shape == (dims.n_joints, 6)
        assert out.contacts.shape == (dims.future, dims.n_feet)
        assert out.contacts.min() >= 0.0 and out.contacts.max() <= 1.0
        assert out.traj.shape == (dims.future, 4)


class TestWeightsFile:
    def test_save_load_round_trip(self, tmp_path, reduced_model):
        path = tmp_path / "m.tkm"
        save_model(path, reduced_model, extra_meta={"note": "test"})
        back, meta = load_model(path)
        assert meta["note"] == "test"
        assert back.config.n_experts == reduced_model.config.n_experts
        assert back.config.dims == reduced_model.config.dims
        for k, v in reduced_model.params.items():
            assert np.abs(back.params[k] - v).max() < 1e-6
        x, phases, styles, tta = random_inputs(back, 4, seed=10)
        y1, _ = forward_batch(back, x, phases, styles, tta)
        assert np.all(np.isfinite(y1))

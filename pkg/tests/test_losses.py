import numpy as np
import pytest

from tweenkit.features import FeatureDims
from tweenkit.losses import TrainingConfig, compute_loss
from tweenkit.network import ModelConfig, ShapeMismatch


DIMS = ModelConfig().reduced().dims
TC = TrainingConfig()
FOOT = [1, 3]


def self_consistent_sample(rng):
    """Prediction equal to truth with p = x + v*dt and zero contact speed."""
    y = rng.normal(size=DIMS.output_dim)
    sl = DIMS.output_slices()
    c = rng.integers(0, 2, (DIMS.future, DIMS.n_feet)).astype(float)
    y[sl["contacts"]] = c.ravel()
    vel = y[sl["vel"]].reshape(DIMS.n_joints, 3)
    for col, ji in enumerate(FOOT):
        if c[0, col] > 0:
            vel[ji] = 0.0
    y[sl["vel"]] = vel.ravel()
    cur = rng.normal(size=(DIMS.n_joints, 3))
    y[sl["pos"]] = (cur + vel * TC.dt).ravel()
    return y, cur


def test_zero_loss_at_self_consistent_truth():
    rng = np.random.default_rng(0)
    ys, curs = zip(*(self_consistent_sample(rng) for _ in range(4)))
    pred = np.stack(ys)
    cur_pos = np.stack(curs)
    total, breakdown, grad = compute_loss(pred, pred.copy(), cur_pos, TC,
                                          DIMS, FOOT)
    assert total == 0.0
    assert all(v == 0.0 for v in breakdown.values())


def test_zero_contacts_kill_consistency_term():
    rng = np.random.default_rng(1)
    pred = rng.normal(size=(2, DIMS.output_dim))
    sl = DIMS.output_slices()
    pred[:, sl["contacts"]] = 0.0
    truth = pred.copy()
    cur = rng.normal(size=(2, DIMS.n_joints, 3))
    _, breakdown, _ = compute_loss(pred, truth, cur, TC, DIMS, FOOT)
    assert breakdown["contact_consist"] == 0.0


def test_velocity_consistency_scalar_case():
    # one joint moving at (3,0,0) m/s from the origin with p_hat = 0:
    # residual is (0.1, 0, 0) and the squared norm contributes 0.01
    pred = np.zeros((1, DIMS.output_dim))
    sl = DIMS.output_slices()
    vel = np.zeros((DIMS.n_joints, 3))
    vel[0] = [3.0, 0.0, 0.0]
    pred[0, sl["vel"]] = vel.ravel()
    truth = pred.copy()
    cur = np.zeros((1, DIMS.n_joints, 3))
    tc = TrainingConfig(dt=1.0 / 30.0)
    _, breakdown, _ = compute_loss(pred, truth, cur, tc, DIMS, FOOT)
    assert abs(breakdown["pos_consist"] - 0.01 / DIMS.n_joints) < 1e-12


def test_terms_non_negative():
    rng = np.random.default_rng(2)
    pred = rng.normal(size=(3, DIMS.output_dim))
    sl = DIMS.output_slices()
    pred[:, sl["contacts"]] = rng.uniform(0, 1, (3, DIMS.future * DIMS.n_feet))
    truth = rng.normal(size=(3, DIMS.output_dim))
    truth[:, sl["contacts"]] = rng.integers(0, 2, (3, DIMS.future * DIMS.n_feet))
    cur = rng.normal(size=(3, DIMS.n_joints, 3))
    total, breakdown, _ = compute_loss(pred, truth, cur, TC, DIMS, FOOT)
    assert total > 0.0
    assert all(v >= 0.0 for v in breakdown.values())


def test_weighted_sum_structure():
    rng = np.random.default_rng(3)
    pred = rng.normal(size=(2, DIMS.output_dim))
    truth = rng.normal(size=(2, DIMS.output_dim))
    cur = rng.normal(size=(2, DIMS.n_joints, 3))
    tc = TrainingConfig(lambda_recon=2.0, lambda_consist=5.0)
    total, bd, _ = compute_loss(pred, truth, cur, tc, DIMS, FOOT)
    assert abs(total - (2.0 * bd["recon"] + 5.0 * bd["consist"])) < 1e-12


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        compute_loss(np.zeros((2, 5)), np.zeros((2, 5)),
                     np.zeros((2, DIMS.n_joints, 3)), TC, DIMS, FOOT)


def test_lr_schedule():
    tc = TrainingConfig(learning_rate=1e-3, steps=1000, warmup_steps=100,
                        lr_schedule="cosine", lr_floor_ratio=0.1)
    assert tc.lr_at(0) == pytest.approx(1e-5)
    assert tc.lr_at(99) == pytest.approx(1e-3)
    assert tc.lr_at(100) == pytest.approx(1e-3)
    assert tc.lr_at(999) == pytest.approx(1e-4, rel=0.01)
    flat = TrainingConfig(learning_rate=5e-4)
    assert flat.lr_at(0) == flat.lr_at(500) == 5e-4

"""Finite-difference oracle for the full loss gradient.

This is the load-bearing correctness test for the training stack: every
parameter of a reduced model is checked against central differences of
the complete loss (reconstruction + consistency, sigmoid contacts,
normalizers in the path).
"""

import numpy as np
import pytest

from tweenkit.losses import (TrainingConfig, chain_contact_sigmoid,
                             compute_loss, predictions_from_output)
from tweenkit.network import (ModelConfig, ModelParameters, backward_batch,
                              forward_batch)

EPS = 1e-5
TOL = 1e-4


def make_problem(seed, batch=3):
    cfg = ModelConfig().reduced()
    dims = cfg.dims
    model = ModelParameters.init(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    model.input_norm.mean = rng.normal(0, 0.1, dims.input_dim)
    model.input_norm.std = rng.uniform(0.5, 2.0, dims.input_dim)
    model.output_norm.mean = rng.normal(0, 0.1, dims.output_dim)
    model.output_norm.std = rng.uniform(0.5, 2.0, dims.output_dim)
    model.output_norm.freeze_slice(dims.output_slices()["contacts"])

    x = rng.normal(size=(batch, dims.input_dim))
    phases = rng.normal(size=(batch, dims.window * dims.phase_channels * 2))
    styles = rng.integers(0, dims.n_styles, batch)
    tta = rng.integers(1, 91, batch).astype(float)
    truth = rng.normal(size=(batch, dims.output_dim))
    csl = dims.output_slices()["contacts"]
    truth[:, csl] = rng.integers(0, 2, (batch, csl.stop - csl.start))
    cur_pos = rng.normal(size=(batch, dims.n_joints, 3))
    foot_joints = [1, 3]
    tc = TrainingConfig()
    return model, (x, phases, styles, tta, truth, cur_pos, foot_joints, tc)


def loss_of(model, data):
    x, phases, styles, tta, truth, cur_pos, foot_joints, tc = data
    dims = model.config.dims
    y, _ = forward_batch(model, x, phases, styles, tta)
    pred = predictions_from_output(y, dims)
    total, _, _ = compute_loss(pred, truth, cur_pos, tc, dims, foot_joints)
    return total


def analytic_grads(model, data):
    x, phases, styles, tta, truth, cur_pos, foot_joints, tc = data
    dims = model.config.dims
    y, cache = forward_batch(model, x, phases, styles, tta)
    pred = predictions_from_output(y, dims)
    _, _, dpred = compute_loss(pred, truth, cur_pos, tc, dims, foot_joints)
    dy = chain_contact_sigmoid(dpred, pred, dims)
    return backward_batch(model, cache, dy)


def test_gradients_match_finite_differences():
    model, data = make_problem(seed=42)
    grads = analytic_grads(model, data)
    worst = 0.0
    for name, p in model.params.items():
        flat = p.ravel()
        gan = grads[name].ravel()
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + EPS
            lp = loss_of(model, data)
            flat[i] = old - EPS
            lm = loss_of(model, data)
            flat[i] = old
            fd = (lp - lm) / (2 * EPS)
            denom = max(abs(fd), abs(gan[i]), 1e-6)
            worst = max(worst, abs(fd - gan[i]) / denom)
    assert worst <= TOL, f"max relative FD error {worst:.2e}"


def test_zero_lambda_zero_gradients():
    model, data = make_problem(seed=7)
    x, phases, styles, tta, truth, cur_pos, foot_joints, _ = data
    tc = TrainingConfig(lambda_recon=0.0, lambda_consist=0.0)
    dims = model.config.dims
    y, cache = forward_batch(model, x, phases, styles, tta)
    pred = predictions_from_output(y, dims)
    total, _, dpred = compute_loss(pred, truth, cur_pos, tc, dims, foot_joints)
    assert total == 0.0
    dy = chain_contact_sigmoid(dpred, pred, dims)
    grads = backward_batch(model, cache, dy)
    for g in grads.values():
        assert np.abs(g).max() == 0.0


def test_unused_style_rows_zero_gradient():
    model, data = make_problem(seed=9)
    x, phases, styles, tta, truth, cur_pos, foot_joints, tc = data
    styles = np.zeros_like(styles)  # only style 0 in the batch
    dims = model.config.dims
    y, cache = forward_batch(model, x, phases, styles, tta)
    pred = predictions_from_output(y, dims)
    _, _, dpred = compute_loss(pred, truth, cur_pos, tc, dims, foot_joints)
    dy = chain_contact_sigmoid(dpred, pred, dims)
    grads = backward_batch(model, cache, dy)
    table = grads["style.table"]
    assert np.abs(table[1]).max() == 0.0
    assert np.abs(table[0]).max() > 0.0

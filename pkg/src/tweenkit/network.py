"""Expert bank + gating network: forward pass, exact backward pass.

The expert path sees the pose state only; the condition (phase window,
style embedding, time-to-arrive encoding) enters through the gating
network, whose softmax output blends the expert outputs. Everything is
plain numpy in float64 so gradients can be checked against central
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arrayfile import load_arrays, save_arrays
from .features import (Condition, FeatureDims, Normalizer, PoseState,
                       encode_tta, style_embed)

WEIGHTS_FORMAT_VERSION = 1


class ShapeMismatch(ValueError):
    pass


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    dims: FeatureDims = field(default_factory=FeatureDims)
    n_experts: int = 16
    expert_hidden: int = 512
    gating_hidden: tuple[int, int] = (512, 128)

    def reduced(self) -> "ModelConfig":
        """Tiny configuration for gradient checking."""
        dims = FeatureDims(n_joints=4, n_feet=2, phase_channels=3,
                           style_dim=8, tta_dim=16, n_styles=2)
        return ModelConfig(dims=dims, n_experts=2, expert_hidden=8,
                           gating_hidden=(16, 8))


@dataclass
class ModelParameters:
    """All trainable arrays plus the feature normalizers."""

    config: ModelConfig
    params: dict[str, np.ndarray]
    input_norm: Normalizer
    output_norm: Normalizer

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "ModelParameters":
        rng = np.random.default_rng(seed)
        dims = config.dims
        p: dict[str, np.ndarray] = {}

        def dense(name: str, n_in: int, n_out: int) -> None:
            limit = np.sqrt(6.0 / n_in)
            p[f"{name}.W"] = rng.uniform(-limit, limit, size=(n_in, n_out))
            p[f"{name}.b"] = np.zeros(n_out)

        h = config.expert_hidden
        for k in range(config.n_experts):
            dense(f"expert{k}.l1", dims.input_dim, h)
            dense(f"expert{k}.l2", h, h)
            dense(f"expert{k}.l3", h, dims.output_dim)
        g1, g2 = config.gating_hidden
        dense("gating.l1", dims.cond_dim, g1)
        dense("gating.l2", g1, g2)
        dense("gating.l3", g2, config.n_experts)
        p["style.table"] = rng.normal(0.0, 0.02, size=(dims.n_styles, dims.style_dim))

        return cls(config, p,
                   Normalizer.identity(dims.input_dim),
                   Normalizer.identity(dims.output_dim))

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def check_finite(self) -> None:
        for k, v in self.params.items():
            if not np.all(np.isfinite(v)):
                raise NonFiniteGradient(f"parameter {k} contains non-finite values")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * _sigmoid(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def encode_tta_batch(tta: np.ndarray, d: int) -> np.ndarray:
    i = np.arange(d // 2)
    angle = np.asarray(tta, dtype=float)[:, None] / np.power(10000.0, 2.0 * i / d)
    out = np.empty((len(tta), d))
    out[:, 0::2] = np.sin(angle)
    out[:, 1::2] = np.cos(angle)
    return out


@dataclass
class ForwardCache:
    """Intermediates recorded for the backward pass."""

    x_norm: np.ndarray
    style_ids: np.ndarray
    cond: np.ndarray
    g_pre: list[np.ndarray]
    g_act: list[np.ndarray]
    weights: np.ndarray            # (B, K) softmax output
    e_pre: list[list[np.ndarray]]  # per expert, per layer pre-activations
    e_act: list[list[np.ndarray]]
    e_out: list[np.ndarray]        # per expert (B, Dout), normalized scale
    y_norm: np.ndarray


def gating_forward(cond: Condition, model: ModelParameters) -> np.ndarray:
    """Blend weights (K,) for a single condition; they sum to 1."""
    phases = cond.phase_vector()[None, :]
    style = np.asarray([cond.style_id])
    tta = np.asarray([cond.tta], dtype=float)
    w, _, _ = _gating_batch(model, phases, style, tta)
    return w[0]


def _gating_batch(model: ModelParameters, phases: np.ndarray,
                  style_ids: np.ndarray, tta: np.ndarray):
    p = model.params
    dims = model.config.dims
    style_rows = p["style.table"][style_ids]
    tta_enc = encode_tta_batch(tta, dims.tta_dim)
    cond = np.concatenate([phases, style_rows, tta_enc], axis=1)
    if cond.shape[1] != dims.cond_dim:
        raise ShapeMismatch(
            f"condition width {cond.shape[1]} != expected {dims.cond_dim}")
    z1 = cond @ p["gating.l1.W"] + p["gating.l1.b"]
    a1 = silu(z1)
    z2 = a1 @ p["gating.l2.W"] + p["gating.l2.b"]
    a2 = silu(z2)
    z3 = a2 @ p["gating.l3.W"] + p["gating.l3.b"]
    weights = softmax(z3)
    cache = ([z1, z2, z3], [a1, a2], cond)
    return weights, cache, cond


def forward_batch(model: ModelParameters, x: np.ndarray, phases: np.ndarray,
                  style_ids: np.ndarray, tta: np.ndarray,
                  gate_override: np.ndarray | None = None,
                  ) -> tuple[np.ndarray, ForwardCache]:
    """Batched forward pass.

    x is in physical units and gets normalized internally; the returned
    output is denormalized. gate_override replaces the softmax weights
    (used by tests and ablations).
    """
    cfg = model.config
    dims = cfg.dims
    p = model.params
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != dims.input_dim:
        raise ShapeMismatch(f"input shape {x.shape} != (B, {dims.input_dim})")
    x_norm = model.input_norm.normalize(x)

    weights, (g_pre, g_act, _), cond = _gating_batch(model, phases, style_ids, tta)
    if gate_override is not None:
        weights = np.asarray(gate_override, dtype=float)
        if weights.shape != (x.shape[0], cfg.n_experts):
            raise ShapeMismatch("gate_override has wrong shape")

    e_pre, e_act, e_out = [], [], []
    y_norm = np.zeros((x.shape[0], dims.output_dim))
    for k in range(cfg.n_experts):
        z1 = x_norm @ p[f"expert{k}.l1.W"] + p[f"expert{k}.l1.b"]
        a1 = silu(z1)
        z2 = a1 @ p[f"expert{k}.l2.W"] + p[f"expert{k}.l2.b"]
        a2 = silu(z2)
        yk = a2 @ p[f"expert{k}.l3.W"] + p[f"expert{k}.l3.b"]
        e_pre.append([z1, z2])
        e_act.append([a1, a2])
        e_out.append(yk)
        y_norm += weights[:, k:k + 1] * yk

    y = model.output_norm.denormalize(y_norm)
    cache = ForwardCache(x_norm, np.asarray(style_ids), cond, g_pre, g_act,
                         weights, e_pre, e_act, e_out, y_norm)
    return y, cache


def backward_batch(model: ModelParameters, cache: ForwardCache,
                   dy: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of every parameter given dL/d(denormalized output)."""
    cfg = model.config
    dims = cfg.dims
    p = model.params
    grads = model.zeros_like()

    dy_norm = dy * model.output_norm.std   # chain through denormalization

    dweights = np.zeros_like(cache.weights)
    for k in range(cfg.n_experts):
        yk = cache.e_out[k]
        dweights[:, k] = np.sum(dy_norm * yk, axis=1)
        dyk = cache.weights[:, k:k + 1] * dy_norm
        a1, a2 = cache.e_act[k]
        z1, z2 = cache.e_pre[k]
        grads[f"expert{k}.l3.W"] = a2.T @ dyk
        grads[f"expert{k}.l3.b"] = dyk.sum(axis=0)
        da2 = dyk @ p[f"expert{k}.l3.W"].T
        dz2 = da2 * silu_grad(z2)
        grads[f"expert{k}.l2.W"] = a1.T @ dz2
        grads[f"expert{k}.l2.b"] = dz2.sum(axis=0)
        da1 = dz2 @ p[f"expert{k}.l2.W"].T
        dz1 = da1 * silu_grad(z1)
        grads[f"expert{k}.l1.W"] = cache.x_norm.T @ dz1
        grads[f"expert{k}.l1.b"] = dz1.sum(axis=0)

    # softmax backward
    w = cache.weights
    dz3 = w * (dweights - np.sum(dweights * w, axis=1, keepdims=True))
    z1, z2, _ = cache.g_pre
    a1, a2 = cache.g_act
    grads["gating.l3.W"] = a2.T @ dz3
    grads["gating.l3.b"] = dz3.sum(axis=0)
    da2 = dz3 @ p["gating.l3.W"].T
    dz2 = da2 * silu_grad(z2)
    grads["gating.l2.W"] = a1.T @ dz2
    grads["gating.l2.b"] = dz2.sum(axis=0)
    da1 = dz2 @ p["gating.l2.W"].T
    dz1 = da1 * silu_grad(z1)
    grads["gating.l1.W"] = cache.cond.T @ dz1
    grads["gating.l1.b"] = dz1.sum(axis=0)

    # style embedding rows: slice of the condition gradient
    dcond = dz1 @ p["gating.l1.W"].T
    phase_width = dims.window * dims.phase_channels * 2
    dstyle = dcond[:, phase_width:phase_width + dims.style_dim]
    np.add.at(grads["style.table"], cache.style_ids, dstyle)

    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient for {k} is non-finite")
    return grads


# --------------------------------------------------------------------- #
# Object-level API
# --------------------------------------------------------------------- #


@dataclass
class OutputState:
    """Decoded prediction for one step."""

    pos: np.ndarray        # (J, 3)
    rot: np.ndarray        # (J, 6)
    vel: np.ndarray        # (J, 3)
    contacts: np.ndarray   # (T, F) probabilities
    traj: np.ndarray       # (T, 4) ground position + facing dir
    phase: np.ndarray      # (T, 2C) encoded phase pairs

    @classmethod
    def from_vector(cls, y: np.ndarray, dims: FeatureDims) -> "OutputState":
        sl = dims.output_slices()
        j, t = dims.n_joints, dims.future
        contacts = _sigmoid(y[sl["contacts"]])
        return cls(
            pos=y[sl["pos"]].reshape(j, 3),
            rot=y[sl["rot"]].reshape(j, 6),
            vel=y[sl["vel"]].reshape(j, 3),
            contacts=contacts.reshape(t, dims.n_feet),
            traj=y[sl["traj"]].reshape(t, 4),
            phase=y[sl["phase"]].reshape(t, dims.phase_channels * 2),
        )


def moe_forward(state: PoseState, cond: Condition,
                model: ModelParameters) -> OutputState:
    """Single-sample prediction; deterministic for fixed parameters."""
    x = state.to_vector()[None, :]
    phases = cond.phase_vector()[None, :]
    y, _ = forward_batch(model, x, phases,
                         np.asarray([cond.style_id]),
                         np.asarray([cond.tta], dtype=float))
    return OutputState.from_vector(y[0], model.config.dims)


# --------------------------------------------------------------------- #
# Weights file
# --------------------------------------------------------------------- #


def save_model(path: str | Path, model: ModelParameters,
               extra_meta: dict | None = None) -> None:
    dims = model.config.dims
    arrays = {f"param.{k}": v for k, v in model.params.items()}
    arrays["norm.input_mean"] = model.input_norm.mean
    arrays["norm.input_std"] = model.input_norm.std
    arrays["norm.output_mean"] = model.output_norm.mean
    arrays["norm.output_std"] = model.output_norm.std
    meta = {
        "kind": "model",
        "version": WEIGHTS_FORMAT_VERSION,
        "n_experts": model.config.n_experts,
        "expert_hidden": model.config.expert_hidden,
        "gating_hidden": list(model.config.gating_hidden),
        "dims": {
            "n_joints": dims.n_joints, "n_feet": dims.n_feet,
            "phase_channels": dims.phase_channels, "window": dims.window,
            "future": dims.future, "style_dim": dims.style_dim,
            "tta_dim": dims.tta_dim, "n_styles": dims.n_styles,
        },
    }
    if extra_meta:
        meta.update(extra_meta)
    save_arrays(path, arrays, meta)


def load_model(path: str | Path) -> tuple[ModelParameters, dict]:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "model":
        raise ValueError(f"{path} is not a model weights file")
    dims = FeatureDims(**meta["dims"])
    config = ModelConfig(dims=dims, n_experts=int(meta["n_experts"]),
                         expert_hidden=int(meta["expert_hidden"]),
                         gating_hidden=tuple(meta["gating_hidden"]))
    params = {k[len("param."):]: v.astype(float)
              for k, v in arrays.items() if k.startswith("param.")}
    model = ModelParameters(
        config, params,
        Normalizer(arrays["norm.input_mean"].astype(float),
                   arrays["norm.input_std"].astype(float)),
        Normalizer(arrays["norm.output_mean"].astype(float),
                   arrays["norm.output_std"].astype(float)),
    )
    model.check_finite()
    return model, meta

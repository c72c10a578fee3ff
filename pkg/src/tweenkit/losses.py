"""Training losses and their exact gradients.

Six reconstruction terms (mean Euclidean norm per element group: joints
for pose terms, time samples for the future windows) plus two kinematic
consistency terms: contact-gated foot speed and the squared mismatch
between integrated velocity and the predicted position. Contact
predictions go through a sigmoid so the whole objective stays
differentiable; binary thresholding happens only in metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeatureDims
from .network import ShapeMismatch


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lambda_recon: float = 1.0
    lambda_consist: float = 2.5
    dt: float = 1.0 / 30.0
    mask_rate: float = 0.15
    min_horizon: int = 1
    max_horizon: int = 90
    mirror_augment: bool = True
    steps: int = 10000
    seed: int = 0
    lr_schedule: str = "constant"   # "constant" or "cosine"
    warmup_steps: int = 0
    lr_floor_ratio: float = 0.05    # cosine decays to this fraction of lr
    # stddev of Gaussian noise added to inputs during training, in
    # normalized units; keeps the autoregressive loop contractive
    input_noise: float = 0.0

    def validate(self) -> None:
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("rates must be non-negative")
        if self.lambda_recon < 0 or self.lambda_consist < 0:
            raise ValueError("loss weights must be non-negative")
        if self.batch_size < 1 or self.steps < 0:
            raise ValueError("bad batch size or step count")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")

    def lr_at(self, step: int) -> float:
        """Learning rate for a 0-based step index."""
        lr = self.learning_rate
        if self.warmup_steps and step < self.warmup_steps:
            return lr * (step + 1) / self.warmup_steps
        if self.lr_schedule == "cosine" and self.steps > self.warmup_steps:
            u = (step - self.warmup_steps) / (self.steps - self.warmup_steps)
            floor = self.lr_floor_ratio * lr
            return floor + 0.5 * (lr - floor) * (1.0 + np.cos(np.pi * u))
        return lr


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def predictions_from_output(y: np.ndarray, dims: FeatureDims) -> np.ndarray:
    """Network output -> prediction: contact logits become probabilities."""
    sl = dims.output_slices()["contacts"]
    out = np.array(y, dtype=float, copy=True)
    out[..., sl] = sigmoid(out[..., sl])
    return out


def chain_contact_sigmoid(dpred: np.ndarray, pred: np.ndarray,
                          dims: FeatureDims) -> np.ndarray:
    """Convert dL/dprediction into dL/d(network output)."""
    sl = dims.output_slices()["contacts"]
    out = np.array(dpred, dtype=float, copy=True)
    p = pred[..., sl]
    out[..., sl] *= p * (1.0 - p)
    return out


def _group_norm_term(diff: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean Euclidean norm over the last axis groups, with gradient.

    diff has shape (..., G, D); groups are the rows of the last-but-one
    axis. Returns (mean norm, d/d diff).
    """
    norms = np.linalg.norm(diff, axis=-1)
    count = norms.size
    total = norms.sum() / count
    safe = np.where(norms > 0.0, norms, 1.0)
    grad = diff / safe[..., None] / count
    grad = np.where(norms[..., None] > 0.0, grad, 0.0)
    return float(total), grad


def compute_loss(pred: np.ndarray, truth: np.ndarray, current_pos: np.ndarray,
                 cfg: TrainingConfig, dims: FeatureDims,
                 foot_joints: list[int] | None = None,
                 ) -> tuple[float, dict[str, float], np.ndarray]:
    """Weighted total loss, per-term breakdown and dL/dprediction.

    pred/truth: (B, output_dim) with contact entries as probabilities /
    binary labels. current_pos: (B, J, 3) root-frame positions of the
    input pose (needed by the velocity consistency term). foot_joints
    maps contact columns onto joint indices; defaults to the last
    n_feet joints being unsupported, so pass it for real skeletons.
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 2 or pred.shape[1] != dims.output_dim:
        raise ShapeMismatch(
            f"prediction {pred.shape} vs truth {truth.shape}, "
            f"expected (B, {dims.output_dim})")
    b = pred.shape[0]
    j, t, f = dims.n_joints, dims.future, dims.n_feet
    current_pos = np.asarray(current_pos, dtype=float).reshape(b, j, 3)
    sl = dims.output_slices()
    grad = np.zeros_like(pred)
    breakdown: dict[str, float] = {}

    def recon(name: str, key: str, group: int) -> None:
        d = (pred[:, sl[key]] - truth[:, sl[key]]).reshape(b, -1, group)
        val, g = _group_norm_term(d)
        breakdown[name] = val
        grad[:, sl[key]] += cfg.lambda_recon * g.reshape(b, -1)

    recon("pos", "pos", 3)
    recon("rot", "rot", 6)
    recon("vel", "vel", 3)
    recon("contacts", "contacts", f)
    recon("traj", "traj", 4)
    recon("phase", "phase", dims.phase_channels * 2)

    # contact consistency: predicted next-frame contact gates foot speed
    vel = pred[:, sl["vel"]].reshape(b, j, 3)
    dvel = np.zeros_like(vel)
    contacts0 = pred[:, sl["contacts"]].reshape(b, t, f)[:, 0, :]
    dcontacts0 = np.zeros_like(contacts0)
    if foot_joints is None:
        foot_joints = list(range(j - f, j))
    foot_v = vel[:, foot_joints, :]                       # (B, F, 3)
    speeds = np.linalg.norm(foot_v, axis=-1)              # (B, F)
    n_cf = b * f
    contact_consist = float((contacts0 * speeds).sum() / n_cf)
    breakdown["contact_consist"] = contact_consist
    dcontacts0 += speeds / n_cf
    safe = np.where(speeds > 0.0, speeds, 1.0)
    dfoot_v = contacts0[..., None] * foot_v / safe[..., None] / n_cf
    dfoot_v = np.where(speeds[..., None] > 0.0, dfoot_v, 0.0)
    for col, ji in enumerate(foot_joints):
        dvel[:, ji, :] += cfg.lambda_consist * dfoot_v[:, col, :]

    # velocity consistency: current pose + v*dt should land on the
    # predicted position (squared norm, as opposed to the linear
    # reconstruction terms)
    pos = pred[:, sl["pos"]].reshape(b, j, 3)
    resid = current_pos + vel * cfg.dt - pos
    n_pj = b * j
    pos_consist = float((resid * resid).sum() / n_pj)
    breakdown["pos_consist"] = pos_consist
    dresid = 2.0 * resid / n_pj
    dvel += cfg.lambda_consist * dresid * cfg.dt
    dpos_extra = -cfg.lambda_consist * dresid

    grad[:, sl["vel"]] += dvel.reshape(b, -1)
    grad[:, sl["pos"]] += dpos_extra.reshape(b, -1)
    c_grad = np.zeros((b, t, f))
    c_grad[:, 0, :] = cfg.lambda_consist * dcontacts0
    grad[:, sl["contacts"]] += c_grad.reshape(b, -1)

    recon_total = (breakdown["pos"] + breakdown["rot"] + breakdown["vel"]
                   + breakdown["contacts"] + breakdown["traj"]
                   + breakdown["phase"])
    consist_total = contact_consist + pos_consist
    total = cfg.lambda_recon * recon_total + cfg.lambda_consist * consist_total
    breakdown["recon"] = recon_total
    breakdown["consist"] = consist_total
    breakdown["total"] = total
    return total, breakdown, grad

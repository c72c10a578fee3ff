"""Dataset sampling, AdamW and the training loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import features as feat
from .clip import MotionClip, compute_velocities, detect_contacts, fk_all, mirror_clip
from .features import FeatureDims, Normalizer
from .losses import (TrainingConfig, chain_contact_sigmoid, compute_loss,
                     predictions_from_output)
from .network import ModelConfig, ModelParameters, backward_batch, forward_batch


class EmptyDataset(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


class FeatureCache:
    """Per-clip precomputed feature blocks for fast batch assembly.

    The current-pose block, trajectory window, phase window and ground
    truth depend only on the frame, so they are built once per clip with
    the same helpers `features.assemble` uses. Only the target block
    (which couples two frames and a random mask) is computed per sample.
    """

    def __init__(self, clip: MotionClip, dims: FeatureDims):
        prepare_clip(clip)
        from . import rotmath
        from .clip import facing_dirs, ground_positions, yaw_quat

        self.clip = clip
        self.dims = dims
        n = clip.n_frames
        j = dims.n_joints
        self.origin2 = ground_positions(clip)
        dirs = facing_dirs(clip)
        self.q_yaw_conj = np.stack(
            [rotmath.quat_conjugate(yaw_quat(d)) for d in dirs])

        xc = np.empty((n, j * 12))
        xr = np.empty((n, dims.window * 6))
        phase_vec = np.empty((n, dims.window * dims.phase_channels * 2))
        cur_pos = np.empty((n, j, 3))
        for f in range(n):
            origin2, direction, q_yaw = feat.root_frame_of(clip, f)
            q_inv = rotmath.quat_conjugate(q_yaw)
            pos = rotmath.quat_rotate(
                q_inv, clip.world_pos[f] - np.array([origin2[0], 0.0, origin2[1]]))
            vel = rotmath.quat_rotate(q_inv, clip.velocities[f])
            rot = feat.local_rotations_feature(clip, f, q_yaw)
            xc[f] = np.concatenate([pos, vel, rot], axis=1).ravel()
            tp, tv, td = feat.trajectory_window(clip, f, origin2, direction)
            xr[f] = np.concatenate([tp, tv, td], axis=1).ravel()
            phase_vec[f] = np.concatenate(
                [feat.encode_phase(p) for p in feat.phase_window(clip, f)])
            cur_pos[f] = pos
        self.xc = xc
        self.xr = xr
        self.phase_vec = phase_vec
        self.cur_pos = cur_pos
        self.rot6_local = rotmath.quat_to_sixd(clip.rotations)  # (N, J, 6)
        self.truth = np.stack(
            [feat.assemble_output(clip, f) for f in range(n - 1)])

    def target_block(self, frame: int, target: int, mask: np.ndarray) -> np.ndarray:
        from . import rotmath

        clip = self.clip
        o = self.origin2[frame]
        qc = self.q_yaw_conj[frame]
        pos = rotmath.quat_rotate(
            qc, clip.world_pos[target] - np.array([o[0], 0.0, o[1]]))
        rot = self.rot6_local[target].copy()
        rot[0] = rotmath.quat_to_sixd(rotmath.quat_mul(qc, clip.rotations[target, 0]))
        pos = np.where(mask[:, None], pos, 0.0)
        rot = np.where(mask[:, None], rot, 0.0)
        return np.concatenate([pos, rot], axis=1).ravel()

    def state_vector(self, frame: int, target: int, mask: np.ndarray) -> np.ndarray:
        return np.concatenate(
            [self.xc[frame], self.target_block(frame, target, mask), self.xr[frame]])


class AdamW:
    """Decoupled weight decay Adam with bias-corrected moments."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 weight_decay: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            p -= self.lr * (m_hat / (np.sqrt(v_hat) + self.eps)
                            + self.weight_decay * p)


def prepare_clip(clip: MotionClip) -> MotionClip:
    """Fill every cache a training sample needs."""
    if clip.world_pos is None:
        fk_all(clip)
    if clip.velocities is None:
        compute_velocities(clip)
    if clip.contacts is None:
        detect_contacts(clip)
    if clip.phases is None:
        feat.extract_phase_proxy(clip)
    return clip


@dataclass
class Batch:
    x: np.ndarray            # (B, input_dim)
    phases: np.ndarray       # (B, window * channels * 2)
    style_ids: np.ndarray    # (B,)
    tta: np.ndarray          # (B,)
    truth: np.ndarray        # (B, output_dim)
    current_pos: np.ndarray  # (B, J, 3)


@dataclass
class SampleSet:
    """Frame index over prepared clips, with batch assembly."""

    caches: list[FeatureCache]
    dims: FeatureDims
    index: list[tuple[int, int]] = field(default_factory=list)

    @classmethod
    def build(cls, clips: list[MotionClip], dims: FeatureDims,
              mirror_augment: bool = False) -> "SampleSet":
        if not clips:
            raise EmptyDataset("no clips")
        caches = []
        for c in clips:
            caches.append(FeatureCache(c, dims))
            if mirror_augment:
                caches.append(FeatureCache(mirror_clip(c), dims))
        index = []
        for ci, cache in enumerate(caches):
            for frame in range(cache.clip.n_frames - 1):
                index.append((ci, frame))
        if not index:
            raise EmptyDataset("clips too short to sample")
        return cls(caches, dims, index)

    def sample(self, rng: np.random.Generator, cfg: TrainingConfig,
               ) -> tuple[FeatureCache, int, int, np.ndarray]:
        ci, frame = self.index[int(rng.integers(len(self.index)))]
        cache = self.caches[ci]
        max_off = min(cfg.max_horizon, cache.clip.n_frames - 1 - frame)
        off = int(rng.integers(cfg.min_horizon, max_off + 1)) if max_off > cfg.min_horizon \
            else cfg.min_horizon
        mask = rng.random(self.dims.n_joints) >= cfg.mask_rate
        mask[0] = True
        return cache, frame, frame + off, mask

    def draw_batch(self, rng: np.random.Generator, cfg: TrainingConfig) -> Batch:
        xs, phs, sts, ttas, ys, cps = [], [], [], [], [], []
        for _ in range(cfg.batch_size):
            cache, frame, target, mask = self.sample(rng, cfg)
            xs.append(cache.state_vector(frame, target, mask))
            phs.append(cache.phase_vec[frame])
            sts.append(cache.clip.style_id)
            ttas.append(target - frame)
            ys.append(cache.truth[frame])
            cps.append(cache.cur_pos[frame])
        return Batch(np.stack(xs), np.stack(phs), np.asarray(sts),
                     np.asarray(ttas, dtype=float), np.stack(ys), np.stack(cps))


def fit_normalizers(samples: SampleSet, cfg: TrainingConfig,
                    model: ModelParameters, n_fit: int = 2000,
                    rng: np.random.Generator | None = None) -> None:
    """Fit input/output normalization from sampled training features."""
    rng = rng or np.random.default_rng(cfg.seed + 1)
    n_fit = min(n_fit, 4 * len(samples.index))
    xs, ys = [], []
    drawn = 0
    while drawn < n_fit:
        batch = samples.draw_batch(rng, cfg)
        xs.append(batch.x)
        ys.append(batch.truth)
        drawn += batch.x.shape[0]
    x = np.concatenate(xs)[:n_fit]
    y = np.concatenate(ys)[:n_fit]
    model.input_norm = Normalizer.fit(x)
    out_norm = Normalizer.fit(y)
    # contact logits bypass normalization (they live in sigmoid space)
    out_norm.freeze_slice(model.config.dims.output_slices()["contacts"])
    model.output_norm = out_norm


def train_step(model: ModelParameters, batch: Batch, cfg: TrainingConfig,
               optimizer: AdamW, foot_joints: list[int],
               noise_rng: np.random.Generator | None = None,
               ) -> tuple[float, dict[str, float]]:
    dims = model.config.dims
    x = batch.x
    if cfg.input_noise > 0.0 and noise_rng is not None:
        # noise only the fed-back block (current pose); target and
        # trajectory guidance stay clean so tracking stays sharp
        w = dims.x_current
        noise = noise_rng.normal(0.0, cfg.input_noise, (x.shape[0], w))
        x = x.copy()
        x[:, :w] += noise * model.input_norm.std[:w]
    y, cache = forward_batch(model, x, batch.phases, batch.style_ids,
                             batch.tta)
    pred = predictions_from_output(y, dims)
    loss, breakdown, dpred = compute_loss(pred, batch.truth, batch.current_pos,
                                          cfg, dims, foot_joints)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss diverged: {breakdown}")
    dy = chain_contact_sigmoid(dpred, pred, dims)
    grads = backward_batch(model, cache, dy)
    optimizer.step(model.params, grads)
    return loss, breakdown


def train(clips: list[MotionClip], cfg: TrainingConfig,
          model_config: ModelConfig | None = None,
          model: ModelParameters | None = None,
          log_every: int = 0,
          ) -> tuple[ModelParameters, list[float]]:
    """Train a model on prepared clips; returns (model, loss curve).

    Deterministic for a fixed config seed. Pass an existing model to
    continue training with its normalizers intact.
    """
    cfg.validate()
    if not clips:
        raise EmptyDataset("no training clips")
    model_config = model_config or ModelConfig()
    dims = model_config.dims
    samples = SampleSet.build(clips, dims, mirror_augment=cfg.mirror_augment)
    foot_joints = clips[0].skeleton.foot_indices()

    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = ModelParameters.init(model_config, seed=cfg.seed)
        fit_normalizers(samples, cfg, model)
    optimizer = AdamW(model.params, cfg.learning_rate, cfg.weight_decay,
                      cfg.beta1, cfg.beta2, cfg.adam_eps)
    curve: list[float] = []
    for step in range(cfg.steps):
        optimizer.lr = cfg.lr_at(step)
        batch = samples.draw_batch(rng, cfg)
        loss, breakdown = train_step(model, batch, cfg, optimizer, foot_joints,
                                     noise_rng=rng)
        curve.append(loss)
        if log_every and (step + 1) % log_every == 0:
            print(f"step {step + 1}/{cfg.steps} loss {loss:.5f} "
                  f"(recon {breakdown['recon']:.5f} consist {breakdown['consist']:.5f})")
    model.check_finite()
    return model, curve

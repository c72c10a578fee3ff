"""Network-facing feature assembly.

The expert input is built from three blocks, all expressed in the
current frame's root frame (root ground position at the origin, facing
+Z): the current pose, the (possibly masked) target pose, and a 13-
sample root trajectory window. The gating condition carries a 13-sample
phase window, a style id and the frames-to-arrive count.

Window sampling uses 13 samples 10 frames apart (6 past, current, 6
future), clamped at clip boundaries; the predicted future window uses 7
samples 5 frames apart covering the next second.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rotmath
from .clip import (IndexOutOfRange, MotionClip, facing_dirs, fk_all,
                   ground_positions, to_heading_frame, yaw_quat)

WINDOW_SAMPLES = 13
WINDOW_SPACING = 10          # frames between trajectory/phase window samples
FUTURE_SAMPLES = 7
FUTURE_SPACING = 5           # frames between predicted-window samples
PHASE_CHANNELS = 10
PHASE_WINDOW_RADIUS = 30     # 2 s sliding window for the phase proxy
MAX_TARGET_HORIZON = 90      # training pairs reach at most 3 s ahead

WINDOW_OFFSETS = np.arange(-6, 7) * WINDOW_SPACING
FUTURE_OFFSETS = np.arange(FUTURE_SAMPLES) * FUTURE_SPACING

PHASE_PROXY_JOINTS = ("LeftToe", "RightToe", "LeftHand", "RightHand", "Hips")


class TooShort(ValueError):
    pass


class OddDimension(ValueError):
    pass


class UnknownStyle(KeyError):
    pass


# --------------------------------------------------------------------- #
# Dimension bookkeeping
# --------------------------------------------------------------------- #


@dataclass(frozen=True)
class FeatureDims:
    """Every width the network and the losses need, in one place."""

    n_joints: int = 22
    n_feet: int = 4
    phase_channels: int = PHASE_CHANNELS
    window: int = WINDOW_SAMPLES
    future: int = FUTURE_SAMPLES
    style_dim: int = 256
    tta_dim: int = 128
    n_styles: int = 4

    @property
    def x_current(self) -> int:
        return self.n_joints * 12

    @property
    def x_target(self) -> int:
        return self.n_joints * 9

    @property
    def x_traj(self) -> int:
        return self.window * 6

    @property
    def input_dim(self) -> int:
        return self.x_current + self.x_target + self.x_traj

    @property
    def cond_dim(self) -> int:
        return self.window * self.phase_channels * 2 + self.style_dim + self.tta_dim

    # output block widths, in vector order
    @property
    def out_pos(self) -> int:
        return self.n_joints * 3

    @property
    def out_rot(self) -> int:
        return self.n_joints * 6

    @property
    def out_vel(self) -> int:
        return self.n_joints * 3

    @property
    def out_contacts(self) -> int:
        return self.future * self.n_feet

    @property
    def out_traj(self) -> int:
        return self.future * 4

    @property
    def out_phase(self) -> int:
        return self.future * self.phase_channels * 2

    @property
    def output_dim(self) -> int:
        return (self.out_pos + self.out_rot + self.out_vel
                + self.out_contacts + self.out_traj + self.out_phase)

    def output_slices(self) -> dict[str, slice]:
        names = ["pos", "rot", "vel", "contacts", "traj", "phase"]
        widths = [self.out_pos, self.out_rot, self.out_vel,
                  self.out_contacts, self.out_traj, self.out_phase]
        out, off = {}, 0
        for name, w in zip(names, widths):
            out[name] = slice(off, off + w)
            off += w
        return out


# --------------------------------------------------------------------- #
# Domain types
# --------------------------------------------------------------------- #


@dataclass
class PoseState:
    """Expert-network input blocks, current-root-frame quantities."""

    current_pos: np.ndarray     # (J, 3)
    current_vel: np.ndarray     # (J, 3)
    current_rot: np.ndarray     # (J, 6) local rotations, root yaw-removed
    target_pos: np.ndarray      # (J, 3) zeroed where masked
    target_rot: np.ndarray      # (J, 6)
    target_mask: np.ndarray     # (J,) bool, True = visible
    traj_pos: np.ndarray        # (13, 2)
    traj_vel: np.ndarray        # (13, 2)
    traj_dir: np.ndarray        # (13, 2)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            np.concatenate([self.current_pos, self.current_vel,
                            self.current_rot], axis=1).ravel(),
            np.concatenate([self.target_pos, self.target_rot], axis=1).ravel(),
            np.concatenate([self.traj_pos, self.traj_vel,
                            self.traj_dir], axis=1).ravel(),
        ])


@dataclass
class Condition:
    """Gating-network inputs: phase window, style id, frames-to-arrive."""

    phase_window: np.ndarray    # (13, C, 2) amplitude/phase pairs
    style_id: int
    tta: int

    def __post_init__(self) -> None:
        if self.phase_window.shape[0] != WINDOW_SAMPLES:
            raise ValueError("phase window must have 13 samples")
        if self.tta < 1:
            raise ValueError("tta must be at least 1 frame")

    def phase_vector(self) -> np.ndarray:
        return np.concatenate([encode_phase(f) for f in self.phase_window])


@dataclass
class Normalizer:
    """Per-feature mean/std; std floored so the mapping stays invertible."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> "Normalizer":
        mean = data.mean(axis=0)
        std = np.maximum(data.std(axis=0), 1e-6)
        return cls(mean, std)

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean

    def freeze_slice(self, sl: slice) -> None:
        """Make a block pass through unchanged (contact logits)."""
        self.mean[sl] = 0.0
        self.std[sl] = 1.0


# --------------------------------------------------------------------- #
# Encodings
# --------------------------------------------------------------------- #


def encode_phase(frame: np.ndarray) -> np.ndarray:
    """(C, 2) amplitude/phase rows -> (2C,) pairs (A sin 2piS, A cos 2piS)."""
    frame = np.asarray(frame, dtype=float)
    a = frame[..., 0]
    s = 2.0 * np.pi * frame[..., 1]
    return np.stack([a * np.sin(s), a * np.cos(s)], axis=-1).reshape(-1)


def decode_phase(pairs: np.ndarray, channels: int) -> np.ndarray:
    """Inverse of encode_phase: (2C,) pairs -> (C, 2) amplitude/phase."""
    p = np.asarray(pairs, dtype=float).reshape(channels, 2)
    amp = np.linalg.norm(p, axis=-1)
    phase = np.arctan2(p[:, 0], p[:, 1]) / (2.0 * np.pi) % 1.0
    return np.stack([amp, phase], axis=-1)


def encode_tta(tta: float, d: int) -> np.ndarray:
    """Sinusoidal positional encoding of the frames-to-arrive count."""
    if d % 2 != 0:
        raise OddDimension(f"tta embedding dimension must be even, got {d}")
    if tta < 0:
        raise ValueError("tta must be non-negative")
    i = np.arange(d // 2)
    angle = tta / np.power(10000.0, 2.0 * i / d)
    out = np.empty(d)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle)
    return out


def style_embed(style_id: int, table: np.ndarray) -> np.ndarray:
    """Row lookup into the trainable style embedding table."""
    if not 0 <= style_id < table.shape[0]:
        raise UnknownStyle(f"style id {style_id} outside [0, {table.shape[0]})")
    return table[style_id]


# --------------------------------------------------------------------- #
# Phase proxy
# --------------------------------------------------------------------- #


def _phase_signals(clip: MotionClip) -> np.ndarray:
    """(N, C) vertical + heading-forward velocities of the proxy joints."""
    if clip.velocities is None:
        raise ValueError("phase proxy needs the velocity cache")
    dirs = facing_dirs(clip)
    signals = []
    for name in PHASE_PROXY_JOINTS:
        ji = clip.skeleton.index(name)
        v = clip.velocities[:, ji]
        signals.append(v[:, 1])
        signals.append(v[:, 0] * dirs[:, 0] + v[:, 2] * dirs[:, 1])
    return np.stack(signals, axis=1)


def extract_phase_proxy(clip: MotionClip,
                        f_min: float = 0.25, f_max: float = 4.0,
                        f_step: float = 0.0125) -> np.ndarray:
    """Per-frame amplitude/phase of the dominant sinusoid per channel.

    For each channel a least-squares sinusoid fit over a sliding 2 s
    window picks the frequency (from a fixed grid) with the most
    explained energy; the phase is referenced to the window center so it
    advances by f*dt per frame on periodic motion. Frames closer than
    one radius to a clip edge reuse the nearest full window with the
    phase extrapolated at the fitted frequency. Result is cached on the
    clip, shape (N, C, 2).
    """
    n = clip.n_frames
    r = PHASE_WINDOW_RADIUS
    if n < 2 * r + 1:
        raise TooShort(f"phase proxy needs >= {2*r+1} frames, got {n}")
    dt = clip.frame_time
    signals = _phase_signals(clip)
    c = signals.shape[1]

    tau = (np.arange(-r, r + 1) * dt)[None, :]              # (1, 61)
    freqs = np.arange(f_min, f_max + 1e-9, f_step)           # (F,)
    w = 2.0 * np.pi * freqs[:, None]
    cos_b = np.cos(w * tau)                                  # (F, 61)
    sin_b = np.sin(w * tau)
    # per-frequency normal equations (window geometry is fixed)
    g00 = np.sum(cos_b * cos_b, axis=1)
    g01 = np.sum(cos_b * sin_b, axis=1)
    g11 = np.sum(sin_b * sin_b, axis=1)
    det = g00 * g11 - g01 * g01
    inv00 = g11 / det
    inv01 = -g01 / det
    inv11 = g00 / det

    centers = np.arange(r, n - r)
    windows = np.stack([signals[i - r:i + r + 1] for i in centers])  # (M, 61, C)
    windows = windows - windows.mean(axis=1, keepdims=True)

    rc = np.einsum("fw,mwc->mfc", cos_b, windows)
    rs = np.einsum("fw,mwc->mfc", sin_b, windows)
    a = inv00[None, :, None] * rc + inv01[None, :, None] * rs
    b = inv01[None, :, None] * rc + inv11[None, :, None] * rs
    energy = a * rc + b * rs                                  # explained energy
    best = np.argmax(energy, axis=1)                          # (M, C)

    m = centers.shape[0]
    mi = np.arange(m)[:, None]
    ci = np.arange(c)[None, :]
    a_best = a[mi, best, ci]
    b_best = b[mi, best, ci]
    f_best = freqs[best]
    amp = np.hypot(a_best, b_best)
    phase = (np.arctan2(a_best, b_best) / (2.0 * np.pi)) % 1.0

    out = np.empty((n, c, 2))
    out[centers, :, 0] = amp
    out[centers, :, 1] = phase
    # edge frames: nearest full window, phase extrapolated at f_best
    for i in range(r):
        out[i, :, 0] = amp[0]
        out[i, :, 1] = (phase[0] - f_best[0] * (r - i) * dt) % 1.0
    for i in range(n - r, n):
        out[i, :, 0] = amp[-1]
        out[i, :, 1] = (phase[-1] + f_best[-1] * (i - (n - r - 1)) * dt) % 1.0
    clip.phases = out
    return out


# --------------------------------------------------------------------- #
# Assembly
# --------------------------------------------------------------------- #


def root_frame_of(clip: MotionClip, frame: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(ground position (2,), facing dir (2,), yaw quaternion) at a frame."""
    if clip.world_rot is None:
        fk_all(clip)
    g = clip.root_pos[frame, [0, 2]]
    d = facing_dirs(clip)[frame]
    return g, d, yaw_quat(d)


def _to_root_positions(points: np.ndarray, origin2: np.ndarray,
                       q_yaw: np.ndarray) -> np.ndarray:
    shifted = points - np.array([origin2[0], 0.0, origin2[1]])
    return rotmath.quat_rotate(rotmath.quat_conjugate(q_yaw), shifted)


def local_rotations_feature(clip: MotionClip, frame: int,
                            q_yaw: np.ndarray) -> np.ndarray:
    """(J, 6) local rotations with the root's yaw removed."""
    rots = clip.rotations[frame].copy()
    rots[0] = rotmath.quat_mul(rotmath.quat_conjugate(q_yaw), rots[0])
    return rotmath.quat_to_sixd(rots)


def trajectory_window(clip: MotionClip, frame: int, origin2: np.ndarray,
                      direction: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Clamped 13-sample root trajectory window in the root frame."""
    n = clip.n_frames
    idx = np.clip(frame + WINDOW_OFFSETS, 0, n - 1)
    gp = ground_positions(clip)
    dirs = facing_dirs(clip)
    vel2 = clip.velocities[:, 0][:, [0, 2]]
    pos = to_heading_frame(gp[idx] - origin2, direction)
    vel = to_heading_frame(vel2[idx], direction)
    dr = to_heading_frame(dirs[idx], direction)
    return pos, vel, dr


def phase_window(clip: MotionClip, frame: int) -> np.ndarray:
    if clip.phases is None:
        raise ValueError("clip has no phase features; run extract_phase_proxy")
    idx = np.clip(frame + WINDOW_OFFSETS, 0, clip.n_frames - 1)
    return clip.phases[idx]


def assemble(clip: MotionClip, frame: int, target_frame: int,
             mask: np.ndarray | None = None,
             max_horizon: int | None = MAX_TARGET_HORIZON,
             ) -> tuple[PoseState, Condition]:
    """Build (PoseState, Condition) for one training/inference step.

    All spatial quantities are expressed in the current frame's root
    frame; masked target joints are zeroed. mask=None means every joint
    visible. The root (joint 0) is never masked.
    """
    clip.check_frame(frame)
    clip.check_frame(target_frame)
    if frame >= target_frame:
        raise IndexOutOfRange("target frame must come after the current frame")
    if max_horizon is not None and target_frame - frame > max_horizon:
        raise IndexOutOfRange(
            f"target {target_frame - frame} frames ahead exceeds {max_horizon}")
    if clip.world_pos is None:
        fk_all(clip)
    if clip.velocities is None:
        raise ValueError("clip has no velocity cache; run compute_velocities")

    j = clip.skeleton.n_joints
    origin2, direction, q_yaw = root_frame_of(clip, frame)
    q_inv = rotmath.quat_conjugate(q_yaw)

    current_pos = _to_root_positions(clip.world_pos[frame], origin2, q_yaw)
    current_vel = rotmath.quat_rotate(q_inv, clip.velocities[frame])
    current_rot = local_rotations_feature(clip, frame, q_yaw)

    target_pos = _to_root_positions(clip.world_pos[target_frame], origin2, q_yaw)
    target_rot = local_rotations_feature(clip, target_frame, q_yaw)
    if mask is None:
        mask = np.ones(j, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool).copy()
        mask[0] = True
    target_pos = np.where(mask[:, None], target_pos, 0.0)
    target_rot = np.where(mask[:, None], target_rot, 0.0)

    traj_pos, traj_vel, traj_dir = trajectory_window(clip, frame, origin2, direction)

    state = PoseState(current_pos, current_vel, current_rot,
                      target_pos, target_rot, mask,
                      traj_pos, traj_vel, traj_dir)
    cond = Condition(phase_window(clip, frame), clip.style_id,
                     target_frame - frame)
    return state, cond


def assemble_output(clip: MotionClip, frame: int) -> np.ndarray:
    """Ground-truth output vector for the step at `frame`.

    The next-frame pose (positions, local 6D rotations, velocities) plus
    the 7-sample future window (contacts, root trajectory, encoded
    phases), all in the current frame's root frame. Requires contact and
    phase caches.
    """
    clip.check_frame(frame + 1)
    if clip.contacts is None:
        raise ValueError("clip has no contact cache; run detect_contacts")
    origin2, direction, q_yaw = root_frame_of(clip, frame)
    q_inv = rotmath.quat_conjugate(q_yaw)

    nxt = frame + 1
    pos = _to_root_positions(clip.world_pos[nxt], origin2, q_yaw)
    rot = local_rotations_feature(clip, nxt, q_yaw)
    vel = rotmath.quat_rotate(q_inv, clip.velocities[nxt])

    idx = np.clip(nxt + FUTURE_OFFSETS, 0, clip.n_frames - 1)
    contacts = clip.contacts[idx].astype(float)
    gp = ground_positions(clip)
    dirs = facing_dirs(clip)
    traj_pos = to_heading_frame(gp[idx] - origin2, direction)
    traj_dir = to_heading_frame(dirs[idx], direction)
    traj = np.concatenate([traj_pos, traj_dir], axis=1)
    if clip.phases is None:
        raise ValueError("clip has no phase features; run extract_phase_proxy")
    phase = np.stack([encode_phase(clip.phases[i]) for i in idx])

    return np.concatenate([pos.ravel(), rot.ravel(), vel.ravel(),
                           contacts.ravel(), traj.ravel(), phase.ravel()])

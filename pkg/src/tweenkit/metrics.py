"""Evaluation metrics and the interpolation baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rotmath
from .clip import (CONTACT_HEIGHT_THRESH, MotionClip, compute_velocities,
                   fk_all)


class LengthMismatch(ValueError):
    pass


def _require_world(clip: MotionClip) -> None:
    if clip.world_pos is None or clip.world_rot is None:
        fk_all(clip)


def _check_pair(pred: MotionClip, truth: MotionClip) -> None:
    if pred.n_frames != truth.n_frames:
        raise LengthMismatch(
            f"clip lengths differ: {pred.n_frames} vs {truth.n_frames}")
    if pred.skeleton.n_joints != truth.skeleton.n_joints:
        raise LengthMismatch("clips use different skeletons")
    _require_world(pred)
    _require_world(truth)


def l2p(pred: MotionClip, truth: MotionClip) -> float:
    """Mean per-frame L2 distance between stacked global joint positions,
    meters."""
    _check_pair(pred, truth)
    diff = (pred.world_pos - truth.world_pos).reshape(pred.n_frames, -1)
    return float(np.linalg.norm(diff, axis=1).mean())


def l2q(pred: MotionClip, truth: MotionClip) -> float:
    """Mean per-frame L2 distance between stacked global joint rotations.

    Quaternions are hemisphere-aligned per joint (q and -q are the same
    rotation), so the metric is sign-invariant.
    """
    _check_pair(pred, truth)
    p = pred.world_rot
    t = truth.world_rot
    dots = np.sum(p * t, axis=-1, keepdims=True)
    p = np.where(dots < 0.0, -p, p)
    diff = (p - t).reshape(pred.n_frames, -1)
    return float(np.linalg.norm(diff, axis=1).mean())


def foot_slide(clip: MotionClip, height_limit: float = CONTACT_HEIGHT_THRESH,
               variant: str = "linear") -> float:
    """Height-gated horizontal foot speed, meters/second.

    Per foot and frame, when the foot height h is below the gate H the
    horizontal speed v is weighted by (2 - 2h/H) and accumulated; the
    result is the mean over frames and feet. variant="exponential"
    reports the 2 - 2^(h/H) weighting used by parts of the literature
    instead; both gates vanish at h = H.
    """
    if variant not in ("linear", "exponential"):
        raise ValueError(f"unknown foot-slide variant {variant!r}")
    feet = clip.skeleton.foot_indices()
    _require_world(clip)
    if clip.velocities is None:
        compute_velocities(clip)
    h = clip.world_pos[:, feet, 1]
    v = np.linalg.norm(clip.velocities[:, feet][:, :, [0, 2]], axis=-1)
    if variant == "linear":
        weight = 2.0 - 2.0 * h / height_limit
    else:
        weight = 2.0 - np.power(2.0, h / height_limit)
    s = np.where(h < height_limit, v * weight, 0.0)
    return float(s.mean())


def interpolate_baseline(start_clip: MotionClip, start_frame: int,
                         end_clip: MotionClip, end_frame: int,
                         n_frames: int) -> MotionClip:
    """Root lerp + joint slerp between two key frames, endpoints exact."""
    if n_frames < 2:
        raise ValueError("need at least 2 frames to interpolate")
    start_clip.check_frame(start_frame)
    end_clip.check_frame(end_frame)
    sk = start_clip.skeleton
    j = sk.n_joints
    root0 = start_clip.root_pos[start_frame]
    root1 = end_clip.root_pos[end_frame]
    rot0 = start_clip.rotations[start_frame]
    rot1 = end_clip.rotations[end_frame]
    root = np.empty((n_frames, 3))
    rots = np.empty((n_frames, j, 4))
    for i in range(n_frames):
        t = i / (n_frames - 1)
        if i == 0:
            root[i], rots[i] = root0, rot0
        elif i == n_frames - 1:
            root[i], rots[i] = root1, rot1
        else:
            root[i] = (1.0 - t) * root0 + t * root1
            for ji in range(j):
                rots[i, ji] = rotmath.slerp(rot0[ji], rot1[ji], t)
    out = MotionClip(sk, root, rots, start_clip.frame_time,
                     style_id=start_clip.style_id)
    fk_all(out)
    compute_velocities(out)
    return out


@dataclass
class EvalRow:
    method: str
    frames: int
    l2p: float
    l2q: float
    foot_slide: float


@dataclass
class EvalReport:
    """Per-method, per-transition-length metric table."""

    rows: list[EvalRow] = field(default_factory=list)

    def add(self, method: str, frames: int, l2p_val: float, l2q_val: float,
            slide_val: float) -> None:
        for v in (l2p_val, l2q_val, slide_val):
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"metric values must be finite and >= 0, got {v}")
        self.rows.append(EvalRow(method, frames, l2p_val, l2q_val, slide_val))

    def sorted_rows(self) -> list[EvalRow]:
        return sorted(self.rows, key=lambda r: (r.method, r.frames))

    def methods(self) -> list[str]:
        return sorted({r.method for r in self.rows})

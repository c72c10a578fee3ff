"""Autoregressive generation under trajectory guidance.

Each step re-expresses the world-state in the current root frame, reads
the future half of the trajectory window from the guidance path (closed
loop: guidance samples are always taken relative to the generated root,
so lag gets corrected), predicts the next pose and feeds it back. The
phase window's future half comes from the previous step's predicted
phase curve; time-to-arrive counts down to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rotmath
from .clip import (MotionClip, compute_velocities, facing_dirs, fk_all,
                   from_heading_frame, ground_positions, to_heading_frame,
                   yaw_quat)
from .features import (FUTURE_SPACING, WINDOW_OFFSETS, Condition, PoseState,
                       decode_phase)
from .gallery import ChainSegment, GalleryIndex, materialize
from .network import ModelParameters, OutputState, forward_batch

MIN_GUIDANCE_FRAMES = 15
MAX_GUIDANCE_FRAMES = 150

# feedback projections: fed-back features are clamped to the training
# feature range and fed-back phase amplitudes to a physical bound, the
# positional analogue of re-orthonormalizing fed-back rotations
FEATURE_CLAMP_SIGMA = 8.0
PHASE_AMP_LIMIT = 5.0


class GuidanceTooShort(ValueError):
    pass


@dataclass
class GuidanceTrajectory:
    """World-frame root path covering start (index 0) to target."""

    positions: np.ndarray   # (T+1, 2)
    dirs: np.ndarray        # (T+1, 2) unit facing per frame

    @property
    def tta0(self) -> int:
        return self.positions.shape[0] - 1

    def velocity(self, i: int, dt: float) -> np.ndarray:
        i = max(1, min(i, self.tta0))
        return (self.positions[i] - self.positions[i - 1]) / dt


def guidance_from_clip(clip: MotionClip, start: int, target: int) -> GuidanceTrajectory:
    """Ground-truth guidance: the clip's own root path."""
    clip.check_frame(start)
    clip.check_frame(target)
    if target <= start:
        raise GuidanceTooShort("target frame must come after start")
    gp = ground_positions(clip)
    dirs = facing_dirs(clip)
    return GuidanceTrajectory(gp[start:target + 1].copy(), dirs[start:target + 1].copy())


def guidance_from_chain(gallery: GalleryIndex, segments: list[ChainSegment],
                        start_pos: np.ndarray, start_dir: np.ndarray,
                        ) -> GuidanceTrajectory:
    """World placement of a search-result chain at an authoring pose."""
    rel_pos, rel_dir = materialize(gallery, segments)
    pos = np.asarray(start_pos, dtype=float) + from_heading_frame(rel_pos, start_dir)
    dirs = from_heading_frame(rel_dir, start_dir)
    return GuidanceTrajectory(pos, dirs)


@dataclass
class TargetPose:
    """World-frame target key pose."""

    world_pos: np.ndarray   # (J, 3)
    local_rot: np.ndarray   # (J, 4); row 0 is the world root rotation

    @classmethod
    def from_clip(cls, clip: MotionClip, frame: int) -> "TargetPose":
        clip.check_frame(frame)
        if clip.world_pos is None:
            fk_all(clip)
        return cls(clip.world_pos[frame].copy(), clip.rotations[frame].copy())


@dataclass
class RolloutStart:
    """World-frame start pose plus optional per-frame history context."""

    world_pos: np.ndarray        # (J, 3)
    local_rot: np.ndarray        # (J, 4); row 0 is the world root rotation
    world_vel: np.ndarray        # (J, 3)
    phase: np.ndarray            # (C, 2) amplitude/phase at the start frame
    history_ground: np.ndarray   # (H, 2) root ground track before start
    history_dir: np.ndarray      # (H, 2)
    history_vel2: np.ndarray     # (H, 2)
    history_phase: np.ndarray    # (H, C, 2)

    @classmethod
    def from_clip(cls, clip: MotionClip, frame: int,
                  history: int = 60) -> "RolloutStart":
        from .training import prepare_clip

        prepare_clip(clip)
        clip.check_frame(frame)
        h0 = max(0, frame - history)
        gp = ground_positions(clip)
        dirs = facing_dirs(clip)
        vel2 = clip.velocities[:, 0][:, [0, 2]]
        return cls(
            world_pos=clip.world_pos[frame].copy(),
            local_rot=clip.rotations[frame].copy(),
            world_vel=clip.velocities[frame].copy(),
            phase=clip.phases[frame].copy(),
            history_ground=gp[h0:frame].copy(),
            history_dir=dirs[h0:frame].copy(),
            history_vel2=vel2[h0:frame].copy(),
            history_phase=clip.phases[h0:frame].copy(),
        )

    @classmethod
    def from_pose(cls, world_pos: np.ndarray, local_rot: np.ndarray,
                  n_channels: int = 10) -> "RolloutStart":
        """Standing-start context: zero velocity, idle phases, no history."""
        j = world_pos.shape[0]
        return cls(
            world_pos=np.asarray(world_pos, dtype=float),
            local_rot=np.asarray(local_rot, dtype=float),
            world_vel=np.zeros((j, 3)),
            phase=np.zeros((n_channels, 2)),
            history_ground=np.zeros((0, 2)),
            history_dir=np.zeros((0, 2)),
            history_vel2=np.zeros((0, 2)),
            history_phase=np.zeros((0, n_channels, 2)),
        )


def rollout(model: ModelParameters, start: RolloutStart, target: TargetPose,
            guidance: GuidanceTrajectory, style_id: int,
            skeleton=None) -> MotionClip:
    """Generate exactly guidance.tta0 new frames toward the target.

    Deterministic for fixed inputs and parameters. The fed-back state is
    FK-projected: predicted rotations are re-orthonormalized, joint
    positions come from forward kinematics of those rotations plus the
    predicted root translation, and velocities are backward differences
    of those positions. This matches how training states are derived
    from clips and keeps the loop on the pose manifold (raw position and
    velocity predictions still drive the losses during training).
    """
    dims = model.config.dims
    t_total = guidance.tta0
    if t_total < MIN_GUIDANCE_FRAMES:
        raise GuidanceTooShort(
            f"guidance covers {t_total} frames, need >= {MIN_GUIDANCE_FRAMES}")
    if t_total > MAX_GUIDANCE_FRAMES:
        raise ValueError(
            f"guidance covers {t_total} frames, above {MAX_GUIDANCE_FRAMES}")

    sk = skeleton
    if sk is None:
        from .skeleton import standard_skeleton

        sk = standard_skeleton()
    j = dims.n_joints
    dt = 1.0 / 30.0

    ground = list(start.history_ground) + [start.world_pos[0, [0, 2]].copy()]
    dir_track = list(start.history_dir) + [_facing_of(start.local_rot[0])]
    vel2 = list(start.history_vel2) + [start.world_vel[0, [0, 2]].copy()]
    phase_track = list(start.history_phase) + [start.phase.copy()]

    pos_w = start.world_pos.copy()
    vel_w = start.world_vel.copy()
    rot_local = start.local_rot.copy()
    future_phase: np.ndarray | None = None

    out_root = np.empty((t_total, 3))
    out_rot = np.empty((t_total, j, 4))

    for s in range(t_total):
        cur = len(ground) - 1
        origin2 = ground[cur]
        direction = dir_track[cur]
        q_yaw = yaw_quat(direction)
        q_inv = rotmath.quat_conjugate(q_yaw)
        origin3 = np.array([origin2[0], 0.0, origin2[1]])

        cur_pos = rotmath.quat_rotate(q_inv, pos_w - origin3)
        cur_vel = rotmath.quat_rotate(q_inv, vel_w)
        rots = rot_local.copy()
        rots[0] = rotmath.quat_mul(q_inv, rots[0])
        cur_rot = rotmath.quat_to_sixd(rots)

        tgt_pos = rotmath.quat_rotate(q_inv, target.world_pos - origin3)
        tgt_rots = target.local_rot.copy()
        tgt_rots[0] = rotmath.quat_mul(q_inv, tgt_rots[0])
        tgt_rot = rotmath.quat_to_sixd(tgt_rots)

        traj_pos = np.empty((len(WINDOW_OFFSETS), 2))
        traj_vel = np.empty_like(traj_pos)
        traj_dir = np.empty_like(traj_pos)
        window_phase = np.empty((len(WINDOW_OFFSETS),) + start.phase.shape)
        for wi, off in enumerate(WINDOW_OFFSETS):
            if off <= 0:
                idx = max(0, cur + off)
                traj_pos[wi] = to_heading_frame(ground[idx] - origin2, direction)
                traj_vel[wi] = to_heading_frame(vel2[idx], direction)
                traj_dir[wi] = to_heading_frame(dir_track[idx], direction)
                window_phase[wi] = phase_track[idx]
            else:
                gi = min(s + off, guidance.tta0)
                traj_pos[wi] = to_heading_frame(
                    guidance.positions[gi] - origin2, direction)
                traj_vel[wi] = to_heading_frame(guidance.velocity(gi, dt), direction)
                traj_dir[wi] = to_heading_frame(guidance.dirs[gi], direction)
                if future_phase is None:
                    window_phase[wi] = phase_track[cur]
                else:
                    fi = min(off // FUTURE_SPACING, future_phase.shape[0] - 1)
                    window_phase[wi] = _clamp_phase(decode_phase(
                        future_phase[fi], dims.phase_channels))

        state = PoseState(cur_pos, cur_vel, cur_rot, tgt_pos, tgt_rot,
                          np.ones(j, dtype=bool), traj_pos, traj_vel, traj_dir)
        cond = Condition(window_phase, style_id, t_total - s)
        x = state.to_vector()
        lo = model.input_norm.mean - FEATURE_CLAMP_SIGMA * model.input_norm.std
        hi = model.input_norm.mean + FEATURE_CLAMP_SIGMA * model.input_norm.std
        x = np.clip(x, lo, hi)
        y, _ = forward_batch(model, x[None, :], cond.phase_vector()[None, :],
                             np.asarray([cond.style_id]),
                             np.asarray([cond.tta], dtype=float))
        pred = OutputState.from_vector(y[0], dims)

        rot_local = rotmath.sixd_to_quat(pred.rot, strict=False)
        rot_local[0] = rotmath.quat_mul(q_yaw, rot_local[0])
        root_w = rotmath.quat_rotate(q_yaw, pred.pos[0]) + origin3
        new_pos = _fk_pose(sk, root_w, rot_local)
        vel_w = (new_pos - pos_w) / dt
        pos_w = new_pos

        out_root[s] = root_w
        out_rot[s] = rot_local

        ground.append(root_w[[0, 2]].copy())
        dir_track.append(_facing_of(rot_local[0]))
        vel2.append(vel_w[0, [0, 2]].copy())
        phase_track.append(_clamp_phase(
            decode_phase(pred.phase[0], dims.phase_channels)))
        future_phase = pred.phase

    clip = MotionClip(sk, out_root, out_rot, dt, style_id=style_id)
    fk_all(clip)
    compute_velocities(clip)
    return clip


def _fk_pose(sk, root_pos: np.ndarray, local_rot: np.ndarray) -> np.ndarray:
    """World joint positions of a single pose."""
    j = sk.n_joints
    parents = sk.parents
    offsets = sk.offsets
    world_rot = np.empty((j, 4))
    world_pos = np.empty((j, 3))
    world_rot[0] = local_rot[0]
    world_pos[0] = root_pos
    for ji in range(1, j):
        p = parents[ji]
        world_rot[ji] = rotmath.quat_mul(world_rot[p], local_rot[ji])
        world_pos[ji] = world_pos[p] + rotmath.quat_rotate(world_rot[p], offsets[ji])
    return world_pos


def _clamp_phase(frames: np.ndarray) -> np.ndarray:
    out = frames.copy()
    out[..., 0] = np.minimum(out[..., 0], PHASE_AMP_LIMIT)
    return out


def _facing_of(q_root: np.ndarray) -> np.ndarray:
    fwd = rotmath.quat_rotate(q_root, np.array([0.0, 0.0, 1.0]))
    d = fwd[[0, 2]]
    n = np.linalg.norm(d)
    if n < 1e-8:
        return np.array([0.0, 1.0])
    return d / n

"""Motion clips: per-frame transforms, forward kinematics and derived data.

A clip stores the root world position and per-joint local rotations
(parent-relative unit quaternions). Everything else (world transforms,
velocities, contacts, phase features) is derived and cached on the clip.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rotmath
from .arrayfile import load_arrays, save_arrays
from .skeleton import Joint, Skeleton

DEFAULT_FRAME_TIME = 1.0 / 30.0
CONTACT_HEIGHT_THRESH = 0.025   # meters, reused as the foot-slide gate H
CONTACT_SPEED_THRESH = 0.15     # m/s

CLIP_FORMAT_VERSION = 1


class IndexOutOfRange(IndexError):
    pass


class TooShort(ValueError):
    """Clip has too few frames for the requested derivation."""


class MissingFootJoint(KeyError):
    pass


@dataclass
class MotionClip:
    skeleton: Skeleton
    root_pos: np.ndarray            # (N, 3) world, meters
    rotations: np.ndarray           # (N, J, 4) local unit quaternions, w first
    frame_time: float = DEFAULT_FRAME_TIME
    style_id: int = 0
    # derived caches, filled by the functions below
    world_pos: np.ndarray | None = None     # (N, J, 3)
    world_rot: np.ndarray | None = None     # (N, J, 4)
    velocities: np.ndarray | None = None    # (N, J, 3) world, m/s
    contacts: np.ndarray | None = None      # (N, F) uint8 per foot joint
    phases: np.ndarray | None = None        # (N, C, 2) amplitude/phase pairs
    ground_truth_contacts: np.ndarray | None = None  # (N, F), synthetic only

    @property
    def n_frames(self) -> int:
        return self.root_pos.shape[0]

    def check_frame(self, frame: int) -> None:
        if not 0 <= frame < self.n_frames:
            raise IndexOutOfRange(f"frame {frame} outside [0, {self.n_frames})")

    def copy(self) -> "MotionClip":
        out = MotionClip(
            skeleton=self.skeleton,
            root_pos=self.root_pos.copy(),
            rotations=self.rotations.copy(),
            frame_time=self.frame_time,
            style_id=self.style_id,
        )
        for name in ("world_pos", "world_rot", "velocities", "contacts",
                     "phases", "ground_truth_contacts"):
            val = getattr(self, name)
            if val is not None:
                setattr(out, name, val.copy())
        return out


# --------------------------------------------------------------------- #
# Forward kinematics
# --------------------------------------------------------------------- #


def fk_all(clip: MotionClip) -> MotionClip:
    """Fill the world transform caches for every frame, in place."""
    sk = clip.skeleton
    n, j = clip.n_frames, sk.n_joints
    world_rot = np.empty((n, j, 4))
    world_pos = np.empty((n, j, 3))
    world_rot[:, 0] = clip.rotations[:, 0]
    world_pos[:, 0] = clip.root_pos
    offsets = sk.offsets
    parents = sk.parents
    for ji in range(1, j):
        p = parents[ji]
        world_rot[:, ji] = rotmath.quat_mul(world_rot[:, p], clip.rotations[:, ji])
        world_pos[:, ji] = world_pos[:, p] + rotmath.quat_rotate(
            world_rot[:, p], offsets[ji])
    clip.world_rot = world_rot
    clip.world_pos = world_pos
    return clip


def forward_kinematics(clip: MotionClip, frame: int) -> tuple[np.ndarray, np.ndarray]:
    """World (positions, rotations) of one frame, shapes (J, 3) and (J, 4)."""
    clip.check_frame(frame)
    if clip.world_pos is None or clip.world_rot is None:
        fk_all(clip)
    return clip.world_pos[frame], clip.world_rot[frame]


# --------------------------------------------------------------------- #
# Derived quantities
# --------------------------------------------------------------------- #


def compute_velocities(clip: MotionClip) -> MotionClip:
    """Backward-difference joint velocities; frame 0 copies frame 1."""
    if clip.n_frames < 2:
        raise TooShort("velocities need at least 2 frames")
    if clip.world_pos is None:
        fk_all(clip)
    vel = np.empty_like(clip.world_pos)
    vel[1:] = (clip.world_pos[1:] - clip.world_pos[:-1]) / clip.frame_time
    vel[0] = vel[1]
    clip.velocities = vel
    return clip


def detect_contacts(clip: MotionClip,
                    height_thresh: float = CONTACT_HEIGHT_THRESH,
                    speed_thresh: float = CONTACT_SPEED_THRESH) -> np.ndarray:
    """Binary per-frame contact flags for each configured foot joint.

    A foot is in contact iff its height is below height_thresh AND its
    speed is below speed_thresh. The result is cached on the clip and
    returned, shape (N, F) uint8 in skeleton.foot_joints order.
    """
    feet = clip.skeleton.foot_indices()
    if clip.world_pos is None:
        fk_all(clip)
    if clip.velocities is None:
        compute_velocities(clip)
    heights = clip.world_pos[:, feet, 1]
    speeds = np.linalg.norm(clip.velocities[:, feet, :], axis=-1)
    flags = ((heights < height_thresh) & (speeds < speed_thresh)).astype(np.uint8)
    clip.contacts = flags
    return flags


def mirror_clip(clip: MotionClip) -> MotionClip:
    """Reflect the clip across the sagittal (x = 0) plane.

    Left/right joint data are swapped and rotations conjugated by the
    reflection; applying it twice returns the original motion.
    """
    perm = clip.skeleton.mirror_map()
    root_pos = clip.root_pos * np.array([-1.0, 1.0, 1.0])
    rotations = clip.rotations[:, perm, :] * np.array([1.0, 1.0, -1.0, -1.0])
    out = MotionClip(
        skeleton=clip.skeleton,
        root_pos=root_pos,
        rotations=rotations,
        frame_time=clip.frame_time,
        style_id=clip.style_id,
    )
    fk_all(out)
    compute_velocities(out)
    if clip.contacts is not None:
        out.contacts = _mirror_contacts(clip.skeleton, clip.contacts)
    if clip.ground_truth_contacts is not None:
        out.ground_truth_contacts = _mirror_contacts(
            clip.skeleton, clip.ground_truth_contacts)
    return out


def _mirror_contacts(sk: Skeleton, contacts: np.ndarray) -> np.ndarray:
    perm = sk.mirror_map()
    names = sk.names
    feet = sk.foot_indices()
    col = {ji: k for k, ji in enumerate(feet)}
    out = np.empty_like(contacts)
    for k, ji in enumerate(feet):
        partner = perm[ji]
        if partner not in col:
            raise MissingFootJoint(
                f"mirror partner of foot joint {names[ji]} is not a foot joint")
        out[:, k] = contacts[:, col[partner]]
    return out


# --------------------------------------------------------------------- #
# Root ground track (used by features, gallery and rollout)
# --------------------------------------------------------------------- #


def facing_dirs(clip: MotionClip) -> np.ndarray:
    """Unit ground-plane facing direction (x, z) per frame.

    Forward is the root rotation applied to +Z projected on the ground;
    a degenerate projection falls back to +Z.
    """
    if clip.world_rot is None:
        fk_all(clip)
    fwd = rotmath.quat_rotate(clip.world_rot[:, 0], np.array([0.0, 0.0, 1.0]))
    d = fwd[:, [0, 2]]
    norms = np.linalg.norm(d, axis=-1, keepdims=True)
    d = np.where(norms < 1e-8, np.array([0.0, 1.0]), d / np.maximum(norms, 1e-12))
    return d


def ground_positions(clip: MotionClip) -> np.ndarray:
    """Root position projected on the ground plane, shape (N, 2)."""
    return clip.root_pos[:, [0, 2]].copy()


def facing_angle(direction: np.ndarray) -> float:
    """Yaw angle of a ground direction: 0 along +Z, positive toward +X."""
    return float(np.arctan2(direction[0], direction[1]))


def yaw_quat(direction: np.ndarray) -> np.ndarray:
    """Quaternion rotating +Z onto the given ground direction (about Y)."""
    half = 0.5 * facing_angle(direction)
    return np.array([np.cos(half), 0.0, np.sin(half), 0.0])


def to_heading_frame(v: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Express ground vector(s) v in the frame whose +Z is `direction`."""
    return rotmath.rotate2d(v, facing_angle(direction))


def from_heading_frame(v: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Inverse of to_heading_frame."""
    return rotmath.rotate2d(v, -facing_angle(direction))


# --------------------------------------------------------------------- #
# Resampling and transforms
# --------------------------------------------------------------------- #


def resample(clip: MotionClip, frame_time: float = DEFAULT_FRAME_TIME) -> MotionClip:
    """Resample onto a fixed frame time (root lerp, joint slerp)."""
    if abs(clip.frame_time - frame_time) < 1e-9:
        return clip
    duration = (clip.n_frames - 1) * clip.frame_time
    n_out = int(np.floor(duration / frame_time)) + 1
    times = np.arange(n_out) * frame_time
    src = times / clip.frame_time
    idx = np.minimum(src.astype(int), clip.n_frames - 2)
    frac = src - idx
    root = (1.0 - frac[:, None]) * clip.root_pos[idx] + frac[:, None] * clip.root_pos[idx + 1]
    j = clip.skeleton.n_joints
    rots = np.empty((n_out, j, 4))
    for n in range(n_out):
        for ji in range(j):
            rots[n, ji] = rotmath.slerp(
                clip.rotations[idx[n], ji], clip.rotations[idx[n] + 1, ji], frac[n])
    return MotionClip(clip.skeleton, root, rots, frame_time, clip.style_id)


def transform_clip(clip: MotionClip, yaw: float, translation: np.ndarray) -> MotionClip:
    """Global yaw (about Y) then horizontal translation, new clip."""
    q = np.array([np.cos(yaw / 2.0), 0.0, np.sin(yaw / 2.0), 0.0])
    root_pos = rotmath.quat_rotate(q, clip.root_pos) + np.asarray(translation, dtype=float)
    rotations = clip.rotations.copy()
    rotations[:, 0] = rotmath.quat_mul(q, clip.rotations[:, 0])
    out = MotionClip(clip.skeleton, root_pos, rotations, clip.frame_time, clip.style_id)
    fk_all(out)
    compute_velocities(out)
    if clip.phases is not None:
        out.phases = clip.phases.copy()
    return out


def slice_clip(clip: MotionClip, start: int, stop: int) -> MotionClip:
    """Sub-clip [start, stop), derived caches recomputed lazily."""
    clip.check_frame(start)
    clip.check_frame(stop - 1)
    out = MotionClip(clip.skeleton, clip.root_pos[start:stop].copy(),
                     clip.rotations[start:stop].copy(), clip.frame_time,
                     clip.style_id)
    if clip.phases is not None:
        out.phases = clip.phases[start:stop].copy()
    return out


# --------------------------------------------------------------------- #
# Clip cache file
# --------------------------------------------------------------------- #


def _skeleton_meta(sk: Skeleton) -> dict:
    return {
        "joints": [
            {"name": j.name, "parent": j.parent, "offset": list(map(float, j.offset)),
             "channel_order": j.channel_order}
            for j in sk.joints
        ],
        "foot_joints": list(sk.foot_joints),
    }


def _skeleton_from_meta(meta: dict) -> Skeleton:
    joints = [
        Joint(j["name"], j["parent"], np.array(j["offset"], dtype=float),
              j.get("channel_order", "ZYX"))
        for j in meta["joints"]
    ]
    return Skeleton(joints, foot_joints=list(meta.get("foot_joints", [])))


def save_clip(path: str | Path, clip: MotionClip) -> None:
    arrays = {"root_pos": clip.root_pos, "rotations": clip.rotations}
    for name in ("world_pos", "world_rot", "velocities", "phases"):
        val = getattr(clip, name)
        if val is not None:
            arrays[name] = val
    for name in ("contacts", "ground_truth_contacts"):
        val = getattr(clip, name)
        if val is not None:
            arrays[name] = val.astype(np.uint8)
    meta = {
        "kind": "clip",
        "version": CLIP_FORMAT_VERSION,
        "frame_time": clip.frame_time,
        "style_id": clip.style_id,
        "skeleton": _skeleton_meta(clip.skeleton),
    }
    save_arrays(path, arrays, meta)


def load_clip(path: str | Path) -> MotionClip:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "clip":
        raise ValueError(f"{path} is not a clip cache file")
    sk = _skeleton_from_meta(meta["skeleton"])
    clip = MotionClip(
        skeleton=sk,
        root_pos=arrays["root_pos"].astype(float),
        rotations=arrays["rotations"].astype(float),
        frame_time=float(meta["frame_time"]),
        style_id=int(meta["style_id"]),
    )
    for name in ("world_pos", "world_rot", "velocities", "phases"):
        if name in arrays:
            setattr(clip, name, arrays[name].astype(float))
    for name in ("contacts", "ground_truth_contacts"):
        if name in arrays:
            setattr(clip, name, arrays[name].astype(np.uint8))
    return clip

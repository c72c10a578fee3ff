"""Joint hierarchy, mirror pairing and the standard 22-joint layout."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class IncompletePairing(ValueError):
    """Skeleton lacks a full left/right mirror pairing."""


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int          # -1 for the root
    offset: np.ndarray   # local offset from parent, meters, shape (3,)
    channel_order: str = "ZYX"  # BVH euler channel order, e.g. "ZYX"
    end_site: tuple[float, float, float] | None = None  # BVH End Site offset


@dataclass
class Skeleton:
    """Ordered joint list; parents precede children (topological order)."""

    joints: list[Joint]
    foot_joints: list[str] = field(default_factory=lambda: list(DEFAULT_FOOT_JOINTS))

    def __post_init__(self) -> None:
        roots = [i for i, j in enumerate(self.joints) if j.parent == -1]
        if len(roots) != 1 or roots[0] != 0:
            raise ValueError("skeleton must have exactly one root at index 0")
        for i, j in enumerate(self.joints):
            if j.parent >= i:
                raise ValueError(f"joint {j.name}: parent must precede child")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def parents(self) -> np.ndarray:
        return np.array([j.parent for j in self.joints], dtype=int)

    @property
    def offsets(self) -> np.ndarray:
        return np.stack([j.offset for j in self.joints])

    def index(self, name: str) -> int:
        return self.names.index(name)

    def foot_indices(self) -> list[int]:
        names = self.names
        missing = [f for f in self.foot_joints if f not in names]
        if missing:
            from .clip import MissingFootJoint

            raise MissingFootJoint(f"skeleton lacks foot joints {missing}")
        return [names.index(f) for f in self.foot_joints]

    def mirror_map(self) -> np.ndarray:
        """Index permutation swapping Left*/Right* joints.

        Center joints map to themselves. Raises IncompletePairing when a
        sided joint has no counterpart.
        """
        names = self.names
        mapping = np.arange(self.n_joints)
        for i, name in enumerate(names):
            if name.startswith("Left"):
                other = "Right" + name[len("Left"):]
            elif name.startswith("Right"):
                other = "Left" + name[len("Right"):]
            else:
                continue
            if other not in names:
                raise IncompletePairing(f"no mirror partner for joint {name}")
            mapping[i] = names.index(other)
        return mapping


# Standard 22-joint humanoid used by the synthetic generator; proportions
# are in meters for a ~1.7 m character, Y up, Z forward.
DEFAULT_FOOT_JOINTS = ("LeftFoot", "LeftToe", "RightFoot", "RightToe")

_STANDARD_JOINTS = [
    # name, parent name, offset (x, y, z)
    ("Hips", None, (0.0, 0.0, 0.0)),
    ("LeftUpLeg", "Hips", (0.1, -0.05, 0.0)),
    ("LeftLeg", "LeftUpLeg", (0.0, -0.42, 0.0)),
    ("LeftFoot", "LeftLeg", (0.0, -0.41, 0.0)),
    ("LeftToe", "LeftFoot", (0.0, -0.02, 0.15)),
    ("RightUpLeg", "Hips", (-0.1, -0.05, 0.0)),
    ("RightLeg", "RightUpLeg", (0.0, -0.42, 0.0)),
    ("RightFoot", "RightLeg", (0.0, -0.41, 0.0)),
    ("RightToe", "RightFoot", (0.0, -0.02, 0.15)),
    ("Spine", "Hips", (0.0, 0.12, 0.0)),
    ("Spine1", "Spine", (0.0, 0.13, 0.0)),
    ("Spine2", "Spine1", (0.0, 0.13, 0.0)),
    ("Neck", "Spine2", (0.0, 0.12, 0.0)),
    ("Head", "Neck", (0.0, 0.12, 0.0)),
    ("LeftShoulder", "Spine2", (0.08, 0.08, 0.0)),
    ("LeftArm", "LeftShoulder", (0.12, 0.0, 0.0)),
    ("LeftForeArm", "LeftArm", (0.0, -0.28, 0.0)),
    ("LeftHand", "LeftForeArm", (0.0, -0.26, 0.0)),
    ("RightShoulder", "Spine2", (-0.08, 0.08, 0.0)),
    ("RightArm", "RightShoulder", (-0.12, 0.0, 0.0)),
    ("RightForeArm", "RightArm", (0.0, -0.28, 0.0)),
    ("RightHand", "RightForeArm", (0.0, -0.26, 0.0)),
]


def standard_skeleton() -> Skeleton:
    """The 22-joint humanoid used for synthetic data and tests."""
    name_to_idx = {name: i for i, (name, _, _) in enumerate(_STANDARD_JOINTS)}
    joints = [
        Joint(name, -1 if parent is None else name_to_idx[parent],
              np.array(offset, dtype=float))
        for name, parent, offset in _STANDARD_JOINTS
    ]
    return Skeleton(joints)

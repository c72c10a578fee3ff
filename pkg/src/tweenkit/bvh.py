"""BVH text format: parsing and writing.

Supports the common channel layouts: 3 rotation channels per joint, or
3 position + 3 rotation. Root position channels become the clip's root
track; position channels on other joints are parsed and dropped (local
offsets win). Euler angles are converted to quaternions honoring each
joint's declared channel order.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from .clip import MotionClip
from .skeleton import Joint, Skeleton


class ParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnsupportedChannel(ValueError):
    pass


_ROT_CHANNELS = {"Xrotation": "X", "Yrotation": "Y", "Zrotation": "Z"}
_POS_CHANNELS = {"Xposition": 0, "Yposition": 1, "Zposition": 2}


class _Tokens:
    def __init__(self, text: str):
        self.items: list[tuple[str, int]] = []
        for ln, line in enumerate(text.splitlines(), start=1):
            for tok in line.split():
                self.items.append((tok, ln))
        self.pos = 0

    def peek(self) -> tuple[str, int]:
        if self.pos >= len(self.items):
            raise ParseError("unexpected end of file", self.items[-1][1] if self.items else 0)
        return self.items[self.pos]

    def next(self) -> tuple[str, int]:
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, expected: str) -> int:
        tok, ln = self.next()
        if tok != expected:
            raise ParseError(f"expected {expected!r}, got {tok!r}", ln)
        return ln


def _parse_floats(tokens: _Tokens, n: int) -> list[float]:
    out = []
    for _ in range(n):
        tok, ln = tokens.next()
        try:
            out.append(float(tok))
        except ValueError:
            raise ParseError(f"expected a number, got {tok!r}", ln) from None
    return out


def parse_bvh(text: str) -> tuple[Skeleton, MotionClip]:
    """Parse BVH text into (Skeleton, MotionClip).

    Raises ParseError (with line number) on malformed input and
    UnsupportedChannel for channel sets other than 3 rotations or
    3 positions + 3 rotations.
    """
    tokens = _Tokens(text)
    tokens.expect("HIERARCHY")

    joints: list[Joint] = []
    channels: list[list[str]] = []   # per joint, channel names in file order

    def parse_joint(parent: int) -> None:
        kw, ln = tokens.next()
        if kw not in ("ROOT", "JOINT"):
            raise ParseError(f"expected ROOT or JOINT, got {kw!r}", ln)
        name, _ = tokens.next()
        tokens.expect("{")
        tokens.expect("OFFSET")
        offset = np.array(_parse_floats(tokens, 3))
        ln = tokens.expect("CHANNELS")
        tok, ln = tokens.next()
        try:
            n_ch = int(tok)
        except ValueError:
            raise ParseError(f"channel count must be an integer, got {tok!r}", ln) from None
        ch_names = [tokens.next()[0] for _ in range(n_ch)]
        rot = [c for c in ch_names if c in _ROT_CHANNELS]
        pos = [c for c in ch_names if c in _POS_CHANNELS]
        unknown = [c for c in ch_names if c not in _ROT_CHANNELS and c not in _POS_CHANNELS]
        if unknown:
            raise UnsupportedChannel(f"joint {name}: unknown channels {unknown}")
        if not (len(rot) == 3 and len(pos) in (0, 3)):
            raise UnsupportedChannel(
                f"joint {name}: unsupported channel set {ch_names}; "
                "need 3 rotations, optionally with 3 positions")
        order = "".join(_ROT_CHANNELS[c] for c in rot)
        idx = len(joints)
        joints.append(Joint(name, parent, offset, channel_order=order))
        channels.append(ch_names)

        while True:
            tok, ln = tokens.peek()
            if tok == "}":
                tokens.next()
                return
            if tok in ("JOINT",):
                parse_joint(idx)
            elif tok == "End":
                tokens.next()
                site, ln2 = tokens.next()
                if site != "Site":
                    raise ParseError(f"expected 'Site' after 'End', got {site!r}", ln2)
                tokens.expect("{")
                tokens.expect("OFFSET")
                end_offset = _parse_floats(tokens, 3)
                tokens.expect("}")
                joints[idx] = Joint(name, parent, offset, order,
                                    end_site=tuple(end_offset))
            else:
                raise ParseError(f"unexpected token {tok!r} in joint body", ln)

    parse_joint(-1)
    skeleton = Skeleton(joints)

    tokens.expect("MOTION")
    ln = tokens.expect("Frames:")
    tok, ln = tokens.next()
    try:
        n_frames = int(tok)
    except ValueError:
        raise ParseError(f"frame count must be an integer, got {tok!r}", ln) from None
    tokens.expect("Frame")
    tokens.expect("Time:")
    tok, ln = tokens.next()
    try:
        frame_time = float(tok)
    except ValueError:
        raise ParseError(f"frame time must be a number, got {tok!r}", ln) from None
    if frame_time <= 0:
        raise ParseError(f"frame time must be positive, got {frame_time}", ln)

    n_channels = sum(len(c) for c in channels)
    values = np.array(_parse_floats(tokens, n_frames * n_channels)).reshape(
        n_frames, n_channels)

    root_pos = np.zeros((n_frames, 3))
    rotations = np.empty((n_frames, len(joints), 4))
    col = 0
    for ji, ch_names in enumerate(channels):
        rot_cols, rot_axes = [], []
        for c in ch_names:
            if c in _POS_CHANNELS:
                if ji == 0:
                    root_pos[:, _POS_CHANNELS[c]] = values[:, col]
            else:
                rot_cols.append(col)
                rot_axes.append(_ROT_CHANNELS[c])
            col += 1
        order = "".join(rot_axes)
        eulers = values[:, rot_cols]
        # uppercase = intrinsic rotations applied in channel order
        q_xyzw = Rotation.from_euler(order, eulers, degrees=True).as_quat()
        rotations[:, ji] = q_xyzw[:, [3, 0, 1, 2]]

    clip = MotionClip(skeleton, root_pos, rotations, frame_time)
    return skeleton, clip


def write_bvh(clip: MotionClip) -> str:
    """Serialize a clip as BVH text; the output re-parses equivalently.

    The root gets 3 position + 3 rotation channels, other joints get
    rotation channels in their stored order. Leaf joints emit their
    remembered End Site, or a zero one.
    """
    sk = clip.skeleton
    children: list[list[int]] = [[] for _ in sk.joints]
    for i, j in enumerate(sk.joints):
        if j.parent >= 0:
            children[j.parent].append(i)

    lines: list[str] = ["HIERARCHY"]

    def fmt(v: float) -> str:
        return f"{v:.6f}"

    def channel_names(ji: int) -> list[str]:
        j = sk.joints[ji]
        rot = [f"{axis}rotation" for axis in j.channel_order]
        if ji == 0:
            return ["Xposition", "Yposition", "Zposition"] + rot
        return rot

    def emit(ji: int, depth: int) -> None:
        j = sk.joints[ji]
        pad = "  " * depth
        lines.append(f"{pad}{'ROOT' if ji == 0 else 'JOINT'} {j.name}")
        lines.append(f"{pad}{{")
        inner = "  " * (depth + 1)
        lines.append(f"{inner}OFFSET {' '.join(fmt(v) for v in j.offset)}")
        names = channel_names(ji)
        lines.append(f"{inner}CHANNELS {len(names)} {' '.join(names)}")
        if children[ji]:
            for c in children[ji]:
                emit(c, depth + 1)
        else:
            end = j.end_site or (0.0, 0.0, 0.0)
            lines.append(f"{inner}End Site")
            lines.append(f"{inner}{{")
            lines.append(f"{inner}  OFFSET {' '.join(fmt(v) for v in end)}")
            lines.append(f"{inner}}}")
        lines.append(f"{pad}}}")

    emit(0, 0)

    lines.append("MOTION")
    lines.append(f"Frames: {clip.n_frames}")
    lines.append(f"Frame Time: {clip.frame_time:.8f}")

    # per-joint euler angles in the stored channel order
    eulers = []
    for ji, j in enumerate(sk.joints):
        q = clip.rotations[:, ji][:, [1, 2, 3, 0]]  # to scipy xyzw
        eulers.append(Rotation.from_quat(q).as_euler(j.channel_order, degrees=True))

    for n in range(clip.n_frames):
        row: list[str] = [fmt(v) for v in clip.root_pos[n]]
        row.extend(fmt(v) for v in eulers[0][n])
        for ji in range(1, sk.n_joints):
            row.extend(fmt(v) for v in eulers[ji][n])
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"

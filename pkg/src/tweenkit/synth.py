"""Procedural gait generator: the desk-scale stand-in for mocap data.

Clips are built from a closed-form root path (constant speed, constant
turn rate) plus an analytic stepping schedule. Feet are placed by exact
two-bone IK, so stance feet are world-fixed and the generator can emit
ground-truth contact labels alongside the motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import rotmath
from .clip import (CONTACT_HEIGHT_THRESH, CONTACT_SPEED_THRESH, MotionClip,
                   compute_velocities, fk_all)
from .skeleton import Skeleton, standard_skeleton


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticStyleSpec:
    """Tunable parameters of one gait style."""

    name: str = "walk"
    style_id: int = 1
    speed: float = 1.2              # m/s along the path; 0 means in place
    turn_rate: float = 0.0          # rad/s heading change
    stride_frequency: float = 1.0   # full gait cycles per second
    duty: float = 0.6               # stance fraction of a cycle
    hip_height: float = 0.78        # meters at mid-stance
    bob_amplitude: float = 0.015    # vertical hip oscillation, meters
    swing_lift: float = 0.09        # foot clearance during swing, meters
    arm_swing: float = 0.45         # radians about the shoulder X axis
    spine_pitch: float = 0.0        # radians, forward lean (crouch styles)

    def validate(self) -> None:
        fields = (self.speed, self.turn_rate, self.stride_frequency, self.duty,
                  self.hip_height, self.bob_amplitude, self.swing_lift,
                  self.arm_swing, self.spine_pitch)
        if not all(math.isfinite(v) for v in fields):
            raise InvalidSpec(f"style {self.name}: non-finite parameter")
        if self.stride_frequency <= 0 or not 0.05 < self.duty < 0.95:
            raise InvalidSpec(f"style {self.name}: bad gait timing")
        if self.hip_height <= 0.3:
            raise InvalidSpec(f"style {self.name}: hip height too low")


def default_styles() -> list[SyntheticStyleSpec]:
    """Four distinct styles so style conditioning is non-trivial."""
    return [
        SyntheticStyleSpec(name="idle", style_id=0, speed=0.0,
                           stride_frequency=0.5, arm_swing=0.04,
                           bob_amplitude=0.006, swing_lift=0.0),
        SyntheticStyleSpec(name="walk", style_id=1, speed=1.2,
                           stride_frequency=1.0, duty=0.6),
        SyntheticStyleSpec(name="run", style_id=2, speed=2.4,
                           stride_frequency=1.4, duty=0.38, hip_height=0.76,
                           bob_amplitude=0.025, swing_lift=0.12,
                           arm_swing=0.8),
        SyntheticStyleSpec(name="crouch", style_id=3, speed=0.7,
                           stride_frequency=0.9, duty=0.65, hip_height=0.6,
                           bob_amplitude=0.01, swing_lift=0.06,
                           arm_swing=0.2, spine_pitch=0.35),
    ]


_PLANT_ANKLE_Y = 0.02   # ankle height while planted; toe then rests on the ground
_LATERAL = 0.10         # hip pivot / foot lateral offset, matches skeleton
_UPLEG_LEN = 0.42
_LOWLEG_LEN = 0.41


def _smoothstep(u: np.ndarray | float):
    return u * u * (3.0 - 2.0 * u)


class _Path:
    """Constant-speed ground path with a piecewise-constant turn rate.

    A schedule of (duration seconds, turn rate rad/s) segments covers
    curved arcs, straights and turn transitions; the last segment is
    extended indefinitely. Positions integrate in closed form per
    segment, so path length per second equals the speed exactly.
    """

    def __init__(self, speed: float, schedule: list[tuple[float, float]],
                 heading0: float):
        self.speed = speed
        if not schedule:
            schedule = [(1.0, 0.0)]
        durations = np.array([max(s[0], 1e-6) for s in schedule])
        self.rates = np.array([s[1] for s in schedule])
        self.t_starts = np.concatenate([[0.0], np.cumsum(durations)[:-1]])
        # heading and position at each segment boundary
        self.h_starts = np.empty(len(schedule))
        self.p_starts = np.empty((len(schedule), 2))
        h, p = heading0, np.zeros(2)
        for i, (dur, rate) in enumerate(zip(durations, self.rates)):
            self.h_starts[i] = h
            self.p_starts[i] = p
            p = p + self._segment_disp(h, rate, dur)
            h = h + rate * dur
        self.durations = durations

    def _segment_disp(self, h0: float, rate: float, dt: float) -> np.ndarray:
        if abs(rate) < 1e-9:
            return self.speed * dt * np.array([math.sin(h0), math.cos(h0)])
        h1 = h0 + rate * dt
        return (self.speed / rate) * np.array(
            [math.cos(h0) - math.cos(h1), math.sin(h1) - math.sin(h0)])

    def _segment_of(self, t):
        # clamp so times before 0 extrapolate the first segment and
        # times past the end extrapolate the last
        return np.clip(
            np.searchsorted(self.t_starts, np.asarray(t, dtype=float),
                            side="right") - 1,
            0, len(self.rates) - 1)

    def heading(self, t):
        t = np.asarray(t, dtype=float)
        seg = self._segment_of(t)
        return self.h_starts[seg] + self.rates[seg] * (t - self.t_starts[seg])

    def forward(self, t):
        th = self.heading(t)
        return np.stack([np.sin(th), np.cos(th)], axis=-1)

    def position(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        seg = self._segment_of(t)
        out = np.empty(t.shape + (2,))
        for i, (ti, si) in enumerate(zip(t, seg)):
            dt = ti - self.t_starts[si]
            out[i] = self.p_starts[si] + self._segment_disp(
                self.h_starts[si], self.rates[si], dt)
        return out[0] if scalar else out


class _FootPlan:
    """Analytic ankle/toe world tracks for one foot."""

    def __init__(self, path: _Path, spec: SyntheticStyleSpec, side: float,
                 phase_offset: float):
        self.path = path
        self.spec = spec
        self.side = side            # +1 left, -1 right
        self.offset = phase_offset  # cycle phase offset of this foot

    def _plant(self, k: int) -> tuple[np.ndarray, float]:
        """World plant point and heading of stance cycle k."""
        f = self.spec.stride_frequency
        t_start = (k - self.offset) / f
        t_mid = t_start + 0.5 * self.spec.duty / f
        heading = float(self.path.heading(t_mid))
        lateral = rotmath.rotate2d(np.array([self.side * _LATERAL, 0.0]), -heading)
        point = self.path.position(np.array(t_mid)) + lateral
        return point, heading

    def ankle_state(self, t: float) -> tuple[np.ndarray, float, bool]:
        """(ankle world position (3,), foot heading, in_stance) at time t."""
        f = self.spec.stride_frequency
        duty = self.spec.duty
        u = f * t + self.offset
        k = math.floor(u)
        phase = u - k
        p_now, h_now = self._plant(k)
        if self.spec.speed == 0.0:
            pos = np.array([p_now[0], _PLANT_ANKLE_Y, p_now[1]])
            return pos, h_now, True
        if phase < duty:
            pos = np.array([p_now[0], _PLANT_ANKLE_Y, p_now[1]])
            return pos, h_now, True
        p_next, h_next = self._plant(k + 1)
        w = (phase - duty) / (1.0 - duty)
        s = _smoothstep(w)
        ground = (1.0 - s) * p_now + s * p_next
        lift = self.spec.swing_lift * math.sin(math.pi * w) ** 2
        heading = h_now + s * _wrap_angle(h_next - h_now)
        return np.array([ground[0], _PLANT_ANKLE_Y + lift, ground[1]]), heading, False


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _rodrigues(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return v * c + np.cross(axis, v) * s + axis * np.dot(axis, v) * (1.0 - c)


def _leg_ik(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Local rotations (upleg, knee) reaching root-frame ankle vector v.

    The knee hinge axis is perpendicular to the leg plane (pole +Z), and
    the solution is exact whenever |v| is within reach.
    """
    l1, l2 = _UPLEG_LEN, _LOWLEG_LEN
    d = float(np.linalg.norm(v))
    d = min(max(d, abs(l1 - l2) + 1e-6), l1 + l2 - 1e-6)
    vhat = v / np.linalg.norm(v)
    hinge = np.cross(np.array([0.0, 0.0, 1.0]), vhat)
    n = np.linalg.norm(hinge)
    if n < 1e-8:
        hinge = np.array([1.0, 0.0, 0.0])
    else:
        hinge = hinge / n
    cos_a = (l1 * l1 + d * d - l2 * l2) / (2.0 * l1 * d)
    alpha = math.acos(min(1.0, max(-1.0, cos_a)))
    cos_b = (l1 * l1 + l2 * l2 - d * d) / (2.0 * l1 * l2)
    kappa = math.pi - math.acos(min(1.0, max(-1.0, cos_b)))
    thigh = _rodrigues(vhat, hinge, -alpha)
    y_axis = -thigh
    z_axis = np.cross(hinge, y_axis)
    frame = np.stack([hinge, y_axis, z_axis], axis=-1)
    q_upleg = rotmath.matrix_to_quat(frame)
    q_knee = np.array([math.cos(kappa / 2.0), math.sin(kappa / 2.0), 0.0, 0.0])
    return q_upleg, q_knee


def generate_synthetic_clip(spec: SyntheticStyleSpec, duration: float,
                            seed: int,
                            skeleton: Skeleton | None = None,
                            turn_schedule: list[tuple[float, float]] | None = None,
                            ) -> MotionClip:
    """Deterministic procedural gait clip.

    The returned clip has FK, velocity and ground-truth contact tracks
    filled in. Root path length per second equals spec.speed to within
    discretization error (well under 2%). turn_schedule overrides the
    spec's constant turn rate with piecewise (seconds, rad/s) segments,
    which is what gives galleries asymmetric turn-in/turn-out windows.
    """
    spec.validate()
    if not math.isfinite(duration) or duration < 1.0:
        raise InvalidSpec("duration must be finite and at least 1 second")
    if turn_schedule is not None:
        for seg in turn_schedule:
            if not (math.isfinite(seg[0]) and math.isfinite(seg[1])):
                raise InvalidSpec("turn schedule must be finite")
    sk = skeleton or standard_skeleton()
    rng = np.random.default_rng(seed)
    heading0 = float(rng.uniform(0.0, 2.0 * math.pi))
    phase0 = float(rng.uniform(0.0, 1.0))
    bob_phase = float(rng.uniform(0.0, 2.0 * math.pi))

    dt = 1.0 / 30.0
    n = int(round(duration / dt)) + 1
    times = np.arange(n) * dt

    schedule = turn_schedule or [(duration, spec.turn_rate)]
    path = _Path(spec.speed, schedule, heading0)
    feet = {
        "LeftFoot": _FootPlan(path, spec, +1.0, phase0),
        "RightFoot": _FootPlan(path, spec, -1.0, phase0 + 0.5),
    }

    j = sk.n_joints
    idx = {name: sk.index(name) for name in sk.names}
    root_pos = np.empty((n, 3))
    rotations = np.tile(rotmath.QUAT_IDENTITY, (n, j, 1))

    ankle_tracks = {name: np.empty((n, 3)) for name in feet}
    toe_tracks = {name: np.empty((n, 3)) for name in feet}
    stance_flags = {name: np.zeros(n, dtype=bool) for name in feet}

    f = spec.stride_frequency
    toe_offset = sk.offsets[idx["LeftToe"]]  # same as right by symmetry

    for i, t in enumerate(times):
        heading = float(path.heading(t))
        ground = path.position(np.array(t))
        hip_y = spec.hip_height + spec.bob_amplitude * math.sin(
            4.0 * math.pi * f * t + bob_phase)
        root_pos[i] = [ground[0], hip_y, ground[1]]
        q_root = np.array([math.cos(heading / 2.0), 0.0,
                           math.sin(heading / 2.0), 0.0])
        rotations[i, 0] = q_root

        cycle = 2.0 * math.pi * (f * t + phase0)
        for side, arm, shoulder_sign in (("Left", "LeftArm", 1.0),
                                         ("Right", "RightArm", -1.0)):
            swing = spec.arm_swing * math.sin(cycle + (math.pi if side == "Left" else 0.0))
            rotations[i, idx[arm]] = np.array(
                [math.cos(swing / 2.0), math.sin(swing / 2.0), 0.0, 0.0])
        if spec.spine_pitch != 0.0:
            half = spec.spine_pitch / 2.0
            rotations[i, idx["Spine"]] = np.array(
                [math.cos(half), math.sin(half), 0.0, 0.0])

        for foot_name, plan in feet.items():
            side_prefix = foot_name[:-4]  # "Left" / "Right"
            upleg_i = idx[side_prefix + "UpLeg"]
            leg_i = idx[side_prefix + "Leg"]
            foot_i = idx[foot_name]

            ankle_world, foot_heading, in_stance = plan.ankle_state(float(t))
            pivot_world = root_pos[i] + rotmath.quat_rotate(q_root, sk.offsets[upleg_i])
            v_world = ankle_world - pivot_world
            v_root = rotmath.quat_rotate(rotmath.quat_conjugate(q_root), v_world)
            q_upleg, q_knee = _leg_ik(v_root)
            rotations[i, upleg_i] = q_upleg
            rotations[i, leg_i] = q_knee

            q_leg_world = rotmath.quat_mul(
                rotmath.quat_mul(q_root, q_upleg), q_knee)
            q_foot_world = np.array([math.cos(foot_heading / 2.0), 0.0,
                                     math.sin(foot_heading / 2.0), 0.0])
            rotations[i, foot_i] = rotmath.quat_mul(
                rotmath.quat_conjugate(q_leg_world), q_foot_world)

            ankle_tracks[foot_name][i] = ankle_world
            toe_tracks[foot_name][i] = ankle_world + rotmath.quat_rotate(
                q_foot_world, toe_offset)
            stance_flags[foot_name][i] = in_stance

    clip = MotionClip(sk, root_pos, rotations, dt, style_id=spec.style_id)
    fk_all(clip)
    compute_velocities(clip)

    clip.ground_truth_contacts = _analytic_contacts(
        sk, ankle_tracks, toe_tracks, dt)
    return clip


def _analytic_contacts(sk: Skeleton, ankle_tracks: dict, toe_tracks: dict,
                       dt: float) -> np.ndarray:
    """Contact labels from the closed-form foot tracks.

    Applies the same height/speed rule as clip.detect_contacts but on the
    generator's analytic positions, giving an independent ground truth
    for the FK/velocity/contact pipeline.
    """
    tracks = {}
    for side in ("Left", "Right"):
        tracks[side + "Foot"] = ankle_tracks[side + "Foot"]
        tracks[side + "Toe"] = toe_tracks[side + "Foot"]
    n = next(iter(tracks.values())).shape[0]
    out = np.zeros((n, len(sk.foot_joints)), dtype=np.uint8)
    for col, name in enumerate(sk.foot_joints):
        pos = tracks[name]
        vel = np.empty_like(pos)
        vel[1:] = (pos[1:] - pos[:-1]) / dt
        vel[0] = vel[1]
        speed = np.linalg.norm(vel, axis=-1)
        height = pos[:, 1]
        out[:, col] = ((height < CONTACT_HEIGHT_THRESH)
                       & (speed < CONTACT_SPEED_THRESH)).astype(np.uint8)
    return out


def synthetic_dataset(minutes: float, seed: int,
                      styles: list[SyntheticStyleSpec] | None = None,
                      clip_seconds: float = 10.0) -> list[MotionClip]:
    """A deterministic mix of styles, headings and turning behavior.

    Total duration is split into clip_seconds chunks cycling through the
    styles. Each moving clip gets a piecewise turn schedule (straights,
    arcs, turn transitions) drawn from the master seed, so galleries
    extracted from the mix contain asymmetric windows and not just
    circular arcs.
    """
    styles = styles or default_styles()
    rng = np.random.default_rng(seed)
    n_clips = max(1, int(round(minutes * 60.0 / clip_seconds)))
    clips = []
    for i in range(n_clips):
        spec = styles[i % len(styles)]
        schedule = None
        if spec.speed > 0.0:
            schedule = []
            remaining = clip_seconds
            while remaining > 0.0:
                seg = float(rng.uniform(1.5, 4.5))
                # half the segments go straight, the rest turn
                rate = 0.0 if rng.random() < 0.5 else float(rng.uniform(-0.95, 0.95))
                schedule.append((min(seg, remaining), rate))
                remaining -= seg
        clip_seed = int(rng.integers(0, 2**31 - 1))
        clip = generate_synthetic_clip(spec, clip_seconds, clip_seed,
                                       turn_schedule=schedule)
        clips.append(clip)
    return clips

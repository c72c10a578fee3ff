"""Rotation and planar-geometry primitives.

Conventions used throughout the package:

* Quaternions are scalar-first ``[w, x, y, z]``, right-handed, acting on
  column vectors (``v' = R(q) v``).
* The ground plane is XZ with Y up; planar vectors are ``[x, z]``.
* 6D rotations are the first two columns of the rotation matrix, stacked
  as a flat 6-vector ``[a, b]``.

All functions accept trailing-batched arrays (shape ``(..., 4)`` for
quaternions and so on) and are pure.
"""

from __future__ import annotations

import numpy as np


class DegenerateSixD(ValueError):
    """6D rotation whose columns cannot be orthonormalized."""


class ZeroVector(ValueError):
    """A direction argument had (near-)zero length."""


# --------------------------------------------------------------------- #
# Quaternions
# --------------------------------------------------------------------- #

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_mul(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 * q2."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    w1, x1, y1, z1 = (q1[..., i] for i in range(4))
    w2, x2, y2, z2 = (q2[..., i] for i in range(4))
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate 3-vector(s) v by quaternion(s) q.

    Uses the expanded sandwich product, which is cheaper than two
    quaternion multiplies.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    qv = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(qv, v)
    return v + w * t + np.cross(qv, t)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix (..., 3, 3) of unit quaternion(s)."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = (q[..., i] for i in range(4))
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    m = np.empty(q.shape[:-1] + (3, 3), dtype=float)
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Unit quaternion of rotation matrix/matrices, w >= 0 branch."""
    m = np.asarray(m, dtype=float)
    batch = m.shape[:-2]
    m = m.reshape((-1, 3, 3))
    out = np.empty((m.shape[0], 4), dtype=float)
    for i, r in enumerate(m):
        tr = r[0, 0] + r[1, 1] + r[2, 2]
        if tr > 0.0:
            s = np.sqrt(tr + 1.0) * 2.0
            out[i] = [0.25 * s, (r[2, 1] - r[1, 2]) / s,
                      (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
            s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
            out[i] = [(r[2, 1] - r[1, 2]) / s, 0.25 * s,
                      (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        elif r[1, 1] > r[2, 2]:
            s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
            out[i] = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s,
                      0.25 * s, (r[1, 2] + r[2, 1]) / s]
        else:
            s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
            out[i] = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s,
                      (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    out = np.where(out[:, :1] < 0.0, -out, out)
    return quat_normalize(out).reshape(batch + (4,))


def slerp(q0: np.ndarray, q1: np.ndarray, t: float) -> np.ndarray:
    """Great-circle interpolation between unit quaternions.

    Takes the shortest path (q1 is negated when the dot product is
    negative). t outside [0, 1] extrapolates along the same arc.
    """
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    dot = min(dot, 1.0)
    theta = np.arccos(dot)
    if theta < 1e-8:
        return quat_normalize(q0 + t * (q1 - q0))
    s = np.sin(theta)
    return quat_normalize(
        (np.sin((1.0 - t) * theta) / s) * q0 + (np.sin(t * theta) / s) * q1
    )


# --------------------------------------------------------------------- #
# 6D rotation representation
# --------------------------------------------------------------------- #


def quat_to_sixd(q: np.ndarray) -> np.ndarray:
    """First two rotation-matrix columns, flattened to (..., 6)."""
    m = quat_to_matrix(q)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def sixd_to_matrix(s: np.ndarray, *, strict: bool = True) -> np.ndarray:
    """Gram-Schmidt reconstruction of the rotation matrix from 6D.

    Normalizes the first column, orthogonalizes the second against it and
    takes their cross product as the third; result is orthonormal with
    determinant +1 regardless of the input scale.

    Raises DegenerateSixD when strict and a column collapses. With
    strict=False degenerate inputs fall back to the identity frame
    (needed when reconstructing from raw network output).
    """
    s = np.asarray(s, dtype=float)
    a = s[..., :3]
    b = s[..., 3:]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    if strict and np.any(na < 1e-8):
        raise DegenerateSixD("first 6D column has near-zero norm")
    c0 = a / np.maximum(na, 1e-12)
    proj = np.sum(c0 * b, axis=-1, keepdims=True)
    b_orth = b - proj * c0
    nb = np.linalg.norm(b_orth, axis=-1, keepdims=True)
    if strict and np.any(nb < 1e-8):
        raise DegenerateSixD("6D columns are parallel")
    if not strict:
        bad = (na < 1e-8) | (nb < 1e-8)
        if np.any(bad):
            c0 = np.where(bad, np.array([1.0, 0.0, 0.0]), c0)
            b_orth = np.where(bad, np.array([0.0, 1.0, 0.0]), b_orth)
            nb = np.linalg.norm(b_orth, axis=-1, keepdims=True)
    c1 = b_orth / np.maximum(nb, 1e-12)
    c2 = np.cross(c0, c1)
    return np.stack([c0, c1, c2], axis=-1)


def sixd_to_quat(s: np.ndarray, *, strict: bool = True) -> np.ndarray:
    return matrix_to_quat(sixd_to_matrix(s, strict=strict))


# --------------------------------------------------------------------- #
# Planar helpers
# --------------------------------------------------------------------- #


def angle2d(u: np.ndarray, v: np.ndarray) -> float:
    """Unsigned angle in [0, pi] between two planar directions.

    atan2 of (|cross|, dot) rather than acos, to stay accurate near 0
    and pi. Invariant under positive scaling of either argument.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(u) < 1e-12 or np.linalg.norm(v) < 1e-12:
        raise ZeroVector("angle2d needs nonzero vectors")
    cross = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1]
    return float(np.arctan2(abs(cross), dot))


def signed_angle2d(u: np.ndarray, v: np.ndarray) -> float:
    """Counterclockwise angle in (-pi, pi] taking direction u onto v."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(u) < 1e-12 or np.linalg.norm(v) < 1e-12:
        raise ZeroVector("signed_angle2d needs nonzero vectors")
    cross = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1]
    return float(np.arctan2(cross, dot))


def rotate2d(v: np.ndarray, theta: float) -> np.ndarray:
    """Counterclockwise rotation of planar vector(s) by theta radians."""
    v = np.asarray(v, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    x = v[..., 0]
    y = v[..., 1]
    return np.stack([c * x - s * y, s * x + c * y], axis=-1)


def normalize2d(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ZeroVector("cannot normalize zero-length direction")
    return v / n

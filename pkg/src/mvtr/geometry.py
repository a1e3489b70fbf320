"""Rigid-body algebra: vectors, unit quaternions, rigid transforms.

All types are immutable values; everything here is safe to share across
threads and to copy freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError("Vec3 components must be finite")

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(a) -> "Vec3":
        return Vec3(float(a[0]), float(a[1]), float(a[2]))

    @staticmethod
    def zero() -> "Vec3":
        return Vec3(0.0, 0.0, 0.0)


_QUAT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class UnitQuat:
    """Unit quaternion, sign-canonicalized so w >= 0.

    Construct through `UnitQuat.of` (which normalizes) or the named
    constructors; the bare constructor enforces the invariants.
    """

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if abs(n - 1.0) > _QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {n} deviates from 1 by more than {_QUAT_NORM_TOL}")
        if self.w < 0.0:
            raise ValueError("quaternion not canonical (w < 0); use UnitQuat.of")

    @staticmethod
    def of(w: float, x: float, y: float, z: float) -> "UnitQuat":
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if n == 0.0:
            raise ValueError("zero quaternion")
        if w < 0.0:
            n = -n
        return UnitQuat(w / n, x / n, y / n, z / n)

    @staticmethod
    def identity() -> "UnitQuat":
        return UnitQuat(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis: Vec3, angle: float) -> "UnitQuat":
        u = axis.normalized()
        h = 0.5 * angle
        s = math.sin(h)
        return UnitQuat.of(math.cos(h), u.x * s, u.y * s, u.z * s)

    def __mul__(self, other: "UnitQuat") -> "UnitQuat":
        a, b = self, other
        return UnitQuat.of(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )

    def conjugate(self) -> "UnitQuat":
        return UnitQuat.of(self.w, -self.x, -self.y, -self.z)

    inverse = conjugate

    def rotate(self, v: Vec3) -> Vec3:
        # q v q* expanded; avoids building a full quaternion product chain
        qw, qx, qy, qz = self.w, self.x, self.y, self.z
        tx = 2.0 * (qy * v.z - qz * v.y)
        ty = 2.0 * (qz * v.x - qx * v.z)
        tz = 2.0 * (qx * v.y - qy * v.x)
        return Vec3(
            v.x + qw * tx + (qy * tz - qz * ty),
            v.y + qw * ty + (qz * tx - qx * tz),
            v.z + qw * tz + (qx * ty - qy * tx),
        )

    def angle_to(self, other: "UnitQuat") -> float:
        """Geodesic angle (radians) between the two rotations."""
        r = self.conjugate() * other
        # atan2 keeps full precision near zero, unlike acos of the dot product
        return 2.0 * math.atan2(math.sqrt(r.x * r.x + r.y * r.y + r.z * r.z), abs(r.w))

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ],
            dtype=float,
        )

    @staticmethod
    def from_matrix(m: np.ndarray) -> "UnitQuat":
        """Rotation matrix -> quaternion (Shepperd's method)."""
        m = np.asarray(m, dtype=float)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = math.sqrt(tr + 1.0) * 2
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] > m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        return UnitQuat.of(w, x, y, z)


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element: rotate then translate (p' = R p + t)."""

    rotation: UnitQuat
    translation: Vec3

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(UnitQuat.identity(), Vec3.zero())

    def apply(self, p: Vec3) -> Vec3:
        return self.rotation.rotate(p) + self.translation

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.to_matrix()
        m[:3, 3] = self.translation.as_array()
        return m

    @staticmethod
    def from_matrix(m: np.ndarray) -> "RigidTransform":
        return RigidTransform(UnitQuat.from_matrix(m[:3, :3]), Vec3.from_array(m[:3, 3]))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """a ∘ b: apply b first, then a. Rotation is renormalized."""
    return RigidTransform(a.rotation * b.rotation, a.rotation.rotate(b.translation) + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rinv = t.rotation.conjugate()
    return RigidTransform(rinv, -rinv.rotate(t.translation))


def transform_close(a: RigidTransform, b: RigidTransform, pos_tol: float = 1e-9, rot_tol: float = 1e-9) -> bool:
    return (a.translation - b.translation).norm() <= pos_tol and a.rotation.angle_to(b.rotation) <= rot_tol

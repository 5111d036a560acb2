"""Frames, rotations and rigid transforms.

Conventions used throughout the package:

* every frame (base ``W``, target ``T``, body ``D``, camera ``C``) has Z pointing
  down toward the ground plane, so altitude above a frame is ``-z``;
* ``R_a_b`` is the orientation of frame ``b`` expressed in frame ``a`` and
  ``p_a_b`` the origin of ``b`` expressed in ``a``;
* Euler angles are Z-Y-X (yaw, pitch, roll).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

ORTHO_TOL = 1e-6
GIMBAL_LIMIT = 0.995

GRAVITY = np.array([0.0, 0.0, -9.81])


class GimbalLockError(ValueError):
    pass


def vec3(x, y=None, z=None) -> np.ndarray:
    if y is None:
        v = np.asarray(x, dtype=float).reshape(3)
    else:
        v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v}")
    return v


def rot3(m) -> np.ndarray:
    """Validate and return a rotation matrix (float copy)."""
    R = np.array(m, dtype=float).reshape(3, 3)
    if not np.all(np.isfinite(R)):
        raise ValueError("non-finite rotation matrix")
    err = np.max(np.abs(R.T @ R - np.eye(3)))
    if err > ORTHO_TOL:
        raise ValueError(f"matrix is not orthonormal (max |R^T R - I| = {err:.3g})")
    if np.linalg.det(R) < 0:
        raise ValueError("matrix is a reflection (det < 0)")
    return R


def orthonormalize(m) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(m, dtype=float))
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U[:, -1] *= -1
        R = U @ Vt
    return R


def hat(v) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def vee(m) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def expm_so3(phi) -> np.ndarray:
    """Rodrigues formula for exp(hat(phi))."""
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    K = hat(phi)
    if theta < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * K + b * K @ K


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class EulerAngles(NamedTuple):
    roll: float
    pitch: float
    yaw: float


def euler_to_rot(e: EulerAngles) -> np.ndarray:
    roll, pitch, yaw = e
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def rot_to_euler(R) -> EulerAngles:
    R = np.asarray(R, dtype=float)
    if abs(R[2, 0]) > GIMBAL_LIMIT:
        raise GimbalLockError(f"pitch too close to +-90 deg (R31 = {R[2, 0]:.4f})")
    pitch = -np.arcsin(R[2, 0])
    roll = np.arctan2(R[2, 1], R[2, 2])
    yaw = np.arctan2(R[1, 0], R[0, 0])
    return EulerAngles(float(roll), float(pitch), float(yaw))


def yaw_of(R) -> float:
    return float(np.arctan2(R[1, 0], R[0, 0]))


def vee_error(R_current, R_des) -> np.ndarray:
    """0.5 * (R_current^T R_des - R_des^T R_current)^vee."""
    M = R_current.T @ R_des - R_des.T @ R_current
    return 0.5 * vee(M)


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", rot3(self.rotation))
        object.__setattr__(self, "translation", vec3(self.translation))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T) -> "RigidTransform":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def translate(cls, x: float, y: float, z: float) -> "RigidTransform":
        return cls(np.eye(3), np.array([x, y, z], dtype=float))

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Map coordinates through ``b`` first, then ``a``."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def camera_to_body(p_C_i, p_D_C) -> np.ndarray:
    """Express a camera-frame position in the body frame (axes are parallel)."""
    return np.asarray(p_D_C, dtype=float) + np.asarray(p_C_i, dtype=float)

"""Simulated fiducial-marker perception and IMU velocity.

Noise draws are keyed on ``(seed, channel, time)`` rather than on a shared
stream, so any observation can be reproduced in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dynamics import VehicleState
from .geometry import RigidTransform, expm_so3, yaw_of

CAMERA_OFFSET = np.array([-0.1, 0.0, 0.1])  # camera origin in the body frame
DEFAULT_FOV = (np.deg2rad(45.0), np.deg2rad(32.5))  # 90 x 65 deg sensor

_CHANNELS = {"base": 1, "target": 2, "imu": 3}


class GatedMeasurementError(RuntimeError):
    pass


@dataclass(frozen=True)
class MarkerConfig:
    robot_id: str
    marker_to_robot: RigidTransform = field(default_factory=RigidTransform.identity)
    band: tuple[float, float] = (0.35, 1.75)
    fov: tuple[float, float] = DEFAULT_FOV
    gate_on_robot_origin: bool = False

    def __post_init__(self):
        lo, hi = self.band
        if not 0.0 < lo < hi:
            raise ValueError(f"detection band must satisfy 0 < min < max, got {self.band}")
        if not all(0.0 < a < np.pi / 2 for a in self.fov):
            raise ValueError("FOV half-angles must lie in (0, pi/2)")


@dataclass(frozen=True)
class NoiseModel:
    sigma_pos: float = 0.005
    sigma_rot: float = np.deg2rad(0.5)
    sigma_vel: float = 0.0
    velocity_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    seed: int = 0

    def __post_init__(self):
        if min(self.sigma_pos, self.sigma_rot, self.sigma_vel) < 0:
            raise ValueError("noise standard deviations must be non-negative")
        object.__setattr__(self, "velocity_bias", np.asarray(self.velocity_bias, dtype=float).reshape(3))

    @classmethod
    def exact(cls) -> "NoiseModel":
        return cls(sigma_pos=0.0, sigma_rot=0.0, sigma_vel=0.0)

    def rng(self, channel: str, t: float) -> np.random.Generator:
        return np.random.default_rng([self.seed, _CHANNELS.get(channel, 9), int(round(t * 1e6))])


@dataclass(frozen=True)
class RelativePoseEstimate:
    frame_id: str
    p_C_i: np.ndarray
    R_C_i: np.ndarray
    timestamp: float
    valid: bool
    altitude: float = float("nan")

    @classmethod
    def invalid(cls, frame_id: str, t: float) -> "RelativePoseEstimate":
        return cls(frame_id, np.full(3, np.nan), np.full((3, 3), np.nan), t, False)


class RelativeNav(NamedTuple):
    p_D_i: np.ndarray  # robot origin in the body frame
    l_body: float  # squared horizontal offset robot-vs-camera (visual-locking form)
    p_i_D: np.ndarray  # vehicle position in the robot frame
    l_frame: float  # squared horizontal distance in the robot frame
    R_i_D: np.ndarray  # body attitude in the robot frame
    yaw: float  # yaw of body X relative to robot X
    camera_altitude: float  # camera height above the robot frame's XY plane


def in_fov(p_cam, fov) -> bool:
    x, y, z = p_cam
    if z <= 0.0:
        return False
    return abs(np.arctan2(x, z)) < fov[0] and abs(np.arctan2(y, z)) < fov[1]


def observe(
    truth: VehicleState,
    robot_pose_world: RigidTransform,
    cfg: MarkerConfig,
    noise: NoiseModel,
    t: float,
    p_D_C=CAMERA_OFFSET,
) -> RelativePoseEstimate:
    R_cam = truth.R
    p_cam = truth.p + truth.R @ np.asarray(p_D_C, dtype=float)
    marker_world = robot_pose_world @ cfg.marker_to_robot.inverse()
    gate_point = robot_pose_world.translation if cfg.gate_on_robot_origin else marker_world.translation

    c = R_cam.T @ (gate_point - p_cam)
    # altitude of the camera above the marker plane (marker +Z points into the ground)
    altitude = float(marker_world.rotation[:, 2] @ (marker_world.translation - p_cam))
    lo, hi = cfg.band
    if not (in_fov(c, cfg.fov) and lo <= altitude <= hi):
        return RelativePoseEstimate.invalid(cfg.robot_id, t)

    p_C_i = R_cam.T @ (robot_pose_world.translation - p_cam)
    R_C_i = R_cam.T @ robot_pose_world.rotation
    if noise.sigma_pos > 0 or noise.sigma_rot > 0:
        rng = noise.rng(cfg.robot_id, t)
        p_C_i = p_C_i + rng.normal(0.0, noise.sigma_pos, 3)
        R_C_i = R_C_i @ expm_so3(rng.normal(0.0, noise.sigma_rot, 3))
    return RelativePoseEstimate(cfg.robot_id, p_C_i, R_C_i, t, True, altitude)


def estimate_velocity(truth: VehicleState, noise: NoiseModel) -> np.ndarray:
    """Body-frame velocity as an IMU-based estimator would report it."""
    v = truth.R.T @ truth.v + noise.velocity_bias
    if noise.sigma_vel > 0:
        v = v + noise.rng("imu", truth.t).normal(0.0, noise.sigma_vel, 3)
    return v


def relative_nav_state(est: RelativePoseEstimate, p_D_C=CAMERA_OFFSET) -> RelativeNav:
    if not est.valid:
        raise GatedMeasurementError(f"no valid detection of {est.frame_id!r} at t={est.timestamp:.3f}")
    p_D_C = np.asarray(p_D_C, dtype=float)
    p_D_i = p_D_C + est.p_C_i
    rel = p_D_i - p_D_C
    l_body = float(rel[0] ** 2 + rel[1] ** 2)
    R_i_D = est.R_C_i.T
    p_i_D = -R_i_D @ p_D_i
    l_frame = float(p_i_D[0] ** 2 + p_i_D[1] ** 2)
    camera_altitude = float(R_i_D[2] @ est.p_C_i)
    return RelativeNav(p_D_i, l_body, p_i_D, l_frame, R_i_D, yaw_of(R_i_D), camera_altitude)

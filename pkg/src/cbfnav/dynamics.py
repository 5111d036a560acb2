"""Ground-truth quadrotor rigid-body model with wind disturbance.

Translational dynamics in the (down-Z) world frame::

    m * p_ddot = R F - m G - d_p,      G = (0, 0, -9.81)

so hover needs a world force of ``m G`` (pointing up).  Rotational dynamics in
body coordinates::

    J * w_dot = tau_q - w x J w - d_q

Both are advanced together with a Runge-Kutta-Munthe-Kaas scheme: the attitude
increment over a step is carried as a rotation vector and mapped back with the
exponential map, so ``R`` never leaves SO(3).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import GRAVITY, expm_so3

G_ACCEL = 9.81


class IntegrationFault(RuntimeError):
    pass


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 0.15
    inertia: np.ndarray = field(default_factory=lambda: np.diag([2.25e-3, 2.25e-3, 3.5e-3]))
    drag_coeff: float = 0.001

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        object.__setattr__(self, "inertia", J)
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not np.allclose(J, J.T) or np.any(np.linalg.eigvalsh(J) <= 0):
            raise ValueError("inertia must be symmetric positive definite")
        if self.drag_coeff < 0:
            raise ValueError("drag coefficient must be non-negative")
        object.__setattr__(self, "_inertia_inv", np.linalg.inv(J))

    @property
    def thrust_ceiling(self) -> float:
        return 2.0 * self.mass * G_ACCEL

    @property
    def inertia_inv(self) -> np.ndarray:
        return self._inertia_inv


@dataclass(frozen=True)
class VehicleState:
    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    omega: np.ndarray
    t: float = 0.0

    @classmethod
    def at_rest(cls, p=(0.0, 0.0, 0.0), R=None, t: float = 0.0) -> "VehicleState":
        return cls(
            np.array(p, dtype=float),
            np.zeros(3),
            np.eye(3) if R is None else np.array(R, dtype=float),
            np.zeros(3),
            t,
        )


@dataclass(frozen=True)
class WindModel:
    mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gust_amplitude: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gust_frequency: float = 0.0
    seed: int = 0
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.gust_frequency < 0:
            raise ValueError("gust frequency must be non-negative")
        for name in ("mean", "gust_amplitude", "torque"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        phase = np.random.default_rng([self.seed, 0x57A7]).uniform(0.0, 2.0 * np.pi, size=3)
        object.__setattr__(self, "_phase", phase)

    @classmethod
    def calm(cls) -> "WindModel":
        return cls()

    def velocity(self, t: float) -> np.ndarray:
        if self.gust_frequency == 0.0:
            return self.mean + self.gust_amplitude * np.sin(self._phase)
        return self.mean + self.gust_amplitude * np.sin(2.0 * np.pi * self.gust_frequency * t + self._phase)


@dataclass(frozen=True)
class ControlWrench:
    tau_p: np.ndarray
    tau_q: np.ndarray
    F: np.ndarray

    @classmethod
    def from_force(cls, tau_p, tau_q, ceiling: float = np.inf) -> "ControlWrench":
        """Thrust magnitude ``|tau_p|`` along body -Z, saturated at ``ceiling``."""
        tau_p = np.asarray(tau_p, dtype=float)
        thrust = min(float(np.linalg.norm(tau_p)), ceiling)
        return cls(tau_p, np.asarray(tau_q, dtype=float), np.array([0.0, 0.0, -thrust]))


def wind_force(wind: WindModel, v, t: float, c_d: float) -> np.ndarray:
    """Disturbance term d_p; the force felt by the vehicle is -d_p."""
    return -c_d * (wind.velocity(t) - np.asarray(v, dtype=float))


def _dexpinv(phi, w):
    c = np.cross(phi, w)
    return w + 0.5 * c + np.cross(phi, c) / 12.0


def step(state: VehicleState, wrench: ControlWrench, wind: WindModel, params: VehicleParams, dt: float) -> VehicleState:
    if not 0.0 < dt <= 0.01:
        raise ValueError(f"dt must lie in (0, 0.01], got {dt}")
    m = params.mass
    J = params.inertia
    J_inv = params.inertia_inv
    R0 = state.R
    F = np.asarray(wrench.F, dtype=float)
    tau_q = np.asarray(wrench.tau_q, dtype=float) - wind.torque
    weight = -m * GRAVITY
    c_d = params.drag_coeff
    t0 = state.t

    def deriv(t, v, phi, w):
        R = R0 @ expm_so3(phi) if phi.any() else R0
        d_p = wind_force(wind, v, t, c_d) if c_d else 0.0
        a = (R @ F + weight - d_p) / m
        w_dot = J_inv @ (tau_q - np.cross(w, J @ w))
        return v, a, _dexpinv(phi, w), w_dot

    z = np.zeros(3)
    p, v, w = state.p, state.v, state.omega
    k1 = deriv(t0, v, z, w)
    h = 0.5 * dt
    k2 = deriv(t0 + h, v + h * k1[1], h * k1[2], w + h * k1[3])
    k3 = deriv(t0 + h, v + h * k2[1], h * k2[2], w + h * k2[3])
    k4 = deriv(t0 + dt, v + dt * k3[1], dt * k3[2], w + dt * k3[3])
    s = dt / 6.0
    p_new = p + s * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    v_new = v + s * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    phi = s * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    w_new = w + s * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
    R_new = R0 @ expm_so3(phi)
    # one Newton step of the polar decomposition keeps drift at round-off level
    R_new = 1.5 * R_new - 0.5 * R_new @ (R_new.T @ R_new)

    if not (np.all(np.isfinite(p_new)) and np.all(np.isfinite(v_new)) and np.all(np.isfinite(R_new)) and np.all(np.isfinite(w_new))):
        raise IntegrationFault(f"non-finite state at t={t0 + dt:.4f}")
    return VehicleState(p_new, v_new, R_new, w_new, t0 + dt)


def touchdown_ramp(thrust_scale_in: float, dt: float, ramp_time: float) -> float:
    if not 0.0 <= thrust_scale_in <= 1.0:
        raise ValueError("thrust scale must lie in [0, 1]")
    return float(np.clip(thrust_scale_in - dt / ramp_time, 0.0, 1.0))


def land(state: VehicleState, z_contact: float) -> VehicleState:
    """Pin the vehicle on a contact plane (down-Z world): no further motion."""
    p = state.p.copy()
    p[2] = z_contact
    return replace(state, p=p, v=np.zeros(3), omega=np.zeros(3))

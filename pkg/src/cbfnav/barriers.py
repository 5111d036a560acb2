"""Visual-locking and descending barrier functions.

The visual-locking barrier keeps the base inside a cone of half-angle
``theta_f / 2`` around the camera's optical axis::

    h_v = atan(dz / sqrt(l)) - pi/2 + theta_f/2

where ``dz`` and ``l`` are the vertical and squared horizontal offsets of the
base from the camera.  The descending barrier is a single surface whose
shape is switched by (K1, K2, K3)::

    h_d = -z - K1 K2 l exp(-K1 l) - K3

``h_d >= 0`` means the vehicle sits above the surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .perception import CAMERA_OFFSET

# Peak-matching constant used verbatim in place of e so that the published
# K2 values reproduce (relative difference from e is below 2e-4).
E_APPROX = 2.718
L_GUARD = 1e-9


@dataclass(frozen=True)
class VcbfParams:
    theta_f: float = np.deg2rad(50.0)
    p_D_C: np.ndarray = CAMERA_OFFSET
    alpha: float = 5.0

    def __post_init__(self):
        if not 0.0 < self.theta_f < np.pi:
            raise ValueError("theta_f must lie in (0, pi)")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "p_D_C", np.asarray(self.p_D_C, dtype=float).reshape(3))


@dataclass(frozen=True)
class DescentParams:
    K1: float
    K2: float
    K3: float
    alpha: float = 3.5
    z_star: float = float("nan")
    l_star: float = float("nan")

    def __post_init__(self):
        if self.K1 <= 0 or self.K3 <= 0 or self.K2 < 0:
            raise ValueError(f"need K1 > 0, K2 >= 0, K3 > 0 (got {self.K1}, {self.K2}, {self.K3})")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    @classmethod
    def plane(cls, K3: float, alpha: float = 3.5) -> "DescentParams":
        return cls(1.0, 0.0, K3, alpha)

    def boundary_z(self, l):
        """Surface height z(l) where h_d vanishes."""
        l = np.asarray(l, dtype=float)
        return -self.K1 * self.K2 * l * np.exp(-self.K1 * l) - self.K3


@dataclass(frozen=True)
class HalfspaceConstraint:
    """The set ``a . u >= b``."""

    a: np.ndarray
    b: float


def _cone_offsets(p_D_W, params: VcbfParams):
    rel = np.asarray(p_D_W, dtype=float) - params.p_D_C
    return rel, rel[0] ** 2 + rel[1] ** 2


def h_v(p_D_W, params: VcbfParams) -> float:
    rel, l = _cone_offsets(p_D_W, params)
    if l < L_GUARD:
        # directly below the camera: supremum of the barrier
        return 0.5 * params.theta_f
    return float(np.arctan(rel[2] / np.sqrt(l)) - 0.5 * np.pi + 0.5 * params.theta_f)


def grad_h_v(p_D_W, params: VcbfParams) -> np.ndarray:
    rel, l = _cone_offsets(p_D_W, params)
    if l < L_GUARD:
        return np.zeros(3)
    dx, dy, dz = rel
    s = np.sqrt(l)
    denom = dz * dz + l
    return np.array([-dx * dz / (denom * s), -dy * dz / (denom * s), s / denom])


def h_d(p_T, params: DescentParams) -> float:
    x, y, z = p_T
    l = x * x + y * y
    K1, K2 = params.K1, params.K2
    return float(-z - K1 * K2 * l * np.exp(-K1 * l) - params.K3)


def grad_h_d(p_T, params: DescentParams) -> np.ndarray:
    x, y, _ = p_T
    l = x * x + y * y
    K1, K2 = params.K1, params.K2
    g = 2.0 * K1 * K2 * (K1 * l - 1.0) * np.exp(-K1 * l)
    return np.array([g * x, g * y, -1.0])


def derive_descent_params(z_star: float, l_star: float, K3: float, alpha: float = 3.5) -> DescentParams:
    """Place the surface peak at the switching state (l*, z*).

    A vehicle already below the region altitude (``z* > -K3``) gets the flat
    plane ``K2 = 0`` instead.
    """
    if l_star <= 0:
        raise ValueError("l_star must be positive; clamp it before deriving parameters")
    if K3 <= 0:
        raise ValueError("K3 must be positive")
    K1 = 1.0 / l_star
    K2 = 0.0 if z_star > -K3 else -E_APPROX * (z_star + K3)
    return DescentParams(K1, K2, K3, alpha, z_star, l_star)


def build_constraint(h: float, grad, alpha: float) -> HalfspaceConstraint:
    """Linear class-K condition grad . u >= -alpha * h."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return HalfspaceConstraint(np.asarray(grad, dtype=float).copy(), -alpha * float(h))

"""Idealised kinematic closed loops for checking the barrier filters alone.

The vehicle is a single integrator ``p' = u(p)`` with perfect, noise-free
state knowledge and no disturbance.  Two loop models are available:

* continuous (default): the filter is evaluated at every stage of a classic
  RK4 step of length ``control_dt / substeps``, which approximates the
  continuous-time closed loop the barrier guarantees are stated for;
* sampled: the filtered velocity is computed every ``control_dt`` and held in
  between (zero-order hold), as on the real outer loop.  Riding the boundary
  then costs a small dip below zero that shrinks linearly with ``control_dt``.

The barrier is sampled on every substep either way.

The ascending loop works in the base frame with a level vehicle, so the base
origin seen from the body is simply ``-p``.  The descending loop works in the
target frame and reproduces the Approaching -> Landing switch of the phase
machine (heading is assumed aligned).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import barriers
from .barriers import DescentParams, VcbfParams, build_constraint, derive_descent_params
from .qp import VelocityBox, filter_velocity


@dataclass
class KinematicTrace:
    t: np.ndarray
    p: np.ndarray
    h: np.ndarray
    phase: np.ndarray  # phase name per sample
    params: list[DescentParams]  # descent parameters in the order they were derived

    def __len__(self) -> int:
        return len(self.t)


def _check_rates(control_dt: float, substeps: int):
    if control_dt <= 0:
        raise ValueError("control_dt must be positive")
    if substeps < 1:
        raise ValueError("substeps must be at least 1")


def _advance(p, field, control_dt: float, substeps: int, sampled: bool):
    """Positions after each substep across one control period."""
    h = control_dt / substeps
    out = []
    if sampled:
        u = field(p)
        for _ in range(substeps):
            p = p + h * u
            out.append(p)
        return out
    for _ in range(substeps):
        k1 = field(p)
        k2 = field(p + 0.5 * h * k1)
        k3 = field(p + 0.5 * h * k2)
        k4 = field(p + h * k3)
        p = p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out.append(p)
    return out


def ascend(
    p0,
    duration: float,
    vcbf: VcbfParams = VcbfParams(),
    box: VelocityBox = VelocityBox.uniform(0.1),
    direction=(1.0, 0.0, 0.0),
    control_dt: float = 1.0 / 30.0,
    substeps: int = 4,
    sampled: bool = False,
) -> KinematicTrace:
    """Fly the a-priori direction under the visual-locking filter; ``p0`` is in the base frame."""
    _check_rates(control_dt, substeps)
    d = np.asarray(direction, dtype=float)
    u_nom = d / np.linalg.norm(d)
    p = np.asarray(p0, dtype=float).copy()
    h_dt = control_dt / substeps

    def field(q):
        c = build_constraint(barriers.h_v(-q, vcbf), -barriers.grad_h_v(-q, vcbf), vcbf.alpha)
        return filter_velocity(u_nom, c, box).u

    ts, ps, hs = [0.0], [p.copy()], [barriers.h_v(-p, vcbf)]
    for k in range(int(round(duration / control_dt))):
        for j, p in enumerate(_advance(p, field, control_dt, substeps, sampled)):
            ts.append(k * control_dt + (j + 1) * h_dt)
            ps.append(p)
            hs.append(barriers.h_v(-p, vcbf))
    return KinematicTrace(np.array(ts), np.array(ps), np.array(hs), np.full(len(ts), "ascending"), [])


def descend(
    p0,
    duration: float,
    focus_altitude: float = 1.75,
    landing_altitude: float = 0.35,
    touchdown_margin: float = 0.02,
    ball_radius: float = 0.1,
    K: float = 1.2,
    alpha: float = 3.5,
    l_star_min: float = 0.08**2,
    box: VelocityBox = VelocityBox.uniform(0.1),
    control_dt: float = 1.0 / 30.0,
    substeps: int = 4,
    sampled: bool = False,
) -> KinematicTrace:
    """Approach the focus point and descend to the landing region; ``p0`` is in the target frame.

    The descent surface is derived from the starting state exactly as at a
    detection, then re-derived at the Approaching -> Landing switch.  The loop
    ends on reaching the landing region (altitude + margin) or after ``duration``.
    """
    _check_rates(control_dt, substeps)
    p = np.asarray(p0, dtype=float).copy()

    def derive(K3):
        l = max(p[0] ** 2 + p[1] ** 2, l_star_min)
        return derive_descent_params(float(p[2]), l, K3, alpha)

    params = derive(focus_altitude)
    derived = [params]
    phase = "approaching"
    goal = np.array([0.0, 0.0, -focus_altitude])
    h_dt = control_dt / substeps
    ts, ps, hs, phs = [0.0], [p.copy()], [barriers.h_d(p, params)], [phase]
    for k in range(int(round(duration / control_dt))):
        if phase == "approaching" and np.linalg.norm(p - goal) <= ball_radius:
            params = derive(landing_altitude)
            derived.append(params)
            phase = "landing"
            goal = np.zeros(3)
        elif phase == "landing" and -p[2] <= landing_altitude + touchdown_margin:
            break

        def field(q, params=params, goal=goal):
            c = build_constraint(barriers.h_d(q, params), barriers.grad_h_d(q, params), params.alpha)
            return filter_velocity(K * (goal - q), c, box).u

        for j, p in enumerate(_advance(p, field, control_dt, substeps, sampled)):
            ts.append(k * control_dt + (j + 1) * h_dt)
            ps.append(p)
            hs.append(barriers.h_d(p, params))
            phs.append(phase)
    return KinematicTrace(np.array(ts), np.array(ps), np.array(hs), np.array(phs), derived)

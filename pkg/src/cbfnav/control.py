"""Dual-loop flight controller and the hybrid phase machine.

Outer loop (camera rate): nominal velocity -> barrier-filtered velocity ->
adaptive velocity tracking -> desired attitude.  Inner loop (attitude rate):
PID on the rotation error.  The phase machine switches the active frame and
the descending-barrier parameters.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple

import numpy as np

from . import barriers
from .barriers import DescentParams, VcbfParams, build_constraint, derive_descent_params
from .dynamics import G_ACCEL, ControlWrench, touchdown_ramp
from .geometry import GRAVITY, vee_error
from .perception import CAMERA_OFFSET, RelativeNav, RelativePoseEstimate, relative_nav_state
from .qp import VelocityBox, filter_velocity


class Mode(enum.IntEnum):
    ASCENDING = 0
    APPROACHING = 1
    LANDING = 2
    TOUCHDOWN = 3


FRAME_OF = {Mode.ASCENDING: "base", Mode.APPROACHING: "target", Mode.LANDING: "target", Mode.TOUCHDOWN: "target"}


@dataclass(frozen=True)
class ControllerGains:
    K_v: np.ndarray = field(default_factory=lambda: np.array([0.45, 0.45, 4.5]))
    K: np.ndarray = field(default_factory=lambda: np.full(3, 1.2))
    eta_kappa: float = 2.5
    eta_m: float = 0.5
    K_p: np.ndarray = field(default_factory=lambda: np.full(3, 0.1))
    K_d: np.ndarray = field(default_factory=lambda: np.full(3, 0.03))
    K_i: np.ndarray = field(default_factory=lambda: np.full(3, 0.01))
    e_dz: float = 0.01

    def __post_init__(self):
        for name in ("K_v", "K", "K_p", "K_d", "K_i"):
            g = np.asarray(getattr(self, name), dtype=float)
            g = np.full(3, float(g)) if g.ndim == 0 else np.diag(g) if g.ndim == 2 else g.reshape(3)
            if np.any(g <= 0):
                raise ValueError(f"gain {name} must be positive definite")
            object.__setattr__(self, name, g)
        if self.eta_kappa <= 0 or self.eta_m <= 0 or self.e_dz <= 0:
            raise ValueError("eta_kappa, eta_m and e_dz must be positive")


@dataclass(frozen=True)
class PhaseConfig:
    focus_altitude: float = 1.75
    landing_altitude: float = 0.35
    ball_radius: float = 0.1
    yaw_tolerance: float = np.deg2rad(5.0)
    touchdown_margin: float = 0.02
    # smallest squared radius used when deriving the descent surface
    l_star_min: float = 0.08**2
    # slew limit on the heading reference (rad/s)
    yaw_rate: float = np.deg2rad(20.0)


@dataclass(frozen=True)
class PhaseState:
    mode: Mode = Mode.ASCENDING
    t_transition: float = 0.0
    descent: DescentParams | None = None

    @property
    def frame(self) -> str:
        return FRAME_OF[self.mode]

    def goal(self, cfg: PhaseConfig) -> np.ndarray:
        if self.mode == Mode.APPROACHING:
            return np.array([0.0, 0.0, -cfg.focus_altitude])
        return np.zeros(3)


@dataclass(frozen=True)
class AdaptiveState:
    kappa: float = 0.01
    m: float = 0.1
    e: np.ndarray = field(default_factory=lambda: np.zeros(3))


def nominal_velocity(phase: PhaseState, p_rel, a_priori_dir, gains: ControllerGains, cfg: PhaseConfig = PhaseConfig()) -> np.ndarray:
    """Pseudo virtual velocity: a fixed 1 m/s heading while ascending, goal-seeking otherwise."""
    if phase.mode == Mode.ASCENDING:
        d = np.asarray(a_priori_dir, dtype=float)
        return 1.0 * d / np.linalg.norm(d)
    return gains.K * (phase.goal(cfg) - np.asarray(p_rel, dtype=float))


def descent_switch(nav: RelativeNav, K3: float, alpha: float, l_star_min: float) -> DescentParams:
    l_star = max(nav.l_frame, l_star_min)
    return derive_descent_params(float(nav.p_i_D[2]), l_star, K3, alpha)


def phase_transition(
    phase: PhaseState,
    detections: Mapping[str, RelativePoseEstimate],
    nav: RelativeNav | None,
    yaw_err: float,
    t: float = 0.0,
    cfg: PhaseConfig = PhaseConfig(),
    alpha_d: float = 3.5,
) -> PhaseState:
    """Advance the phase machine one tick; transitions only move forward."""
    target = detections.get("target")
    if phase.mode == Mode.ASCENDING:
        if target is not None and target.valid:
            nav = nav if nav is not None else relative_nav_state(target)
            params = descent_switch(nav, cfg.focus_altitude, alpha_d, cfg.l_star_min)
            return PhaseState(Mode.APPROACHING, t, params)
        return phase
    if nav is None:
        return phase
    if phase.mode == Mode.APPROACHING:
        focus = np.array([0.0, 0.0, -cfg.focus_altitude])
        if np.linalg.norm(nav.p_i_D - focus) <= cfg.ball_radius and abs(yaw_err) <= cfg.yaw_tolerance:
            params = descent_switch(nav, cfg.landing_altitude, alpha_d, cfg.l_star_min)
            return PhaseState(Mode.LANDING, t, params)
        return phase
    if phase.mode == Mode.LANDING:
        # the altitude that matters here is the camera's: below the landing
        # region the marker can no longer be tracked
        if nav.camera_altitude <= cfg.landing_altitude + cfg.touchdown_margin:
            return PhaseState(Mode.TOUCHDOWN, t, phase.descent)
    return phase


def adaptive_velocity_control(e, adaptive: AdaptiveState, gains: ControllerGains, dt: float) -> tuple[np.ndarray, AdaptiveState]:
    """Force command -K_v e - kappa e/|e| + m G and one Euler step of the adaptive laws."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = np.asarray(e, dtype=float)
    n = float(np.linalg.norm(e))
    unit = e / n if n >= gains.e_dz else e / gains.e_dz
    tau_p = -gains.K_v * e - adaptive.kappa * unit + adaptive.m * GRAVITY
    kappa = adaptive.kappa + (n - gains.eta_kappa * adaptive.kappa) * dt
    m = adaptive.m + (-(e @ GRAVITY) - gains.eta_m * adaptive.m) * dt
    kappa, m = max(kappa, 1e-4), max(m, 1e-4)
    return tau_p, AdaptiveState(kappa, m, e)


class DegenerateThrust(ValueError):
    pass


def desired_rotation(tau_p, heading=(1.0, 0.0, 0.0)) -> np.ndarray:
    """Columns (X, Y, Z) with Z opposite the commanded force and X toward ``heading``."""
    tau_p = np.asarray(tau_p, dtype=float)
    n = float(np.linalg.norm(tau_p))
    if n <= 1e-6:
        raise DegenerateThrust("force command too small to define an attitude")
    z = -tau_p / n
    y = np.cross(z, np.asarray(heading, dtype=float))
    ny = float(np.linalg.norm(y))
    if ny <= 1e-6:
        raise DegenerateThrust("thrust axis parallel to the heading reference")
    y /= ny
    x = np.cross(y, z)
    return np.column_stack([x, y, z])


def shape_force(tau_p, up, max_tilt: float, min_up: float) -> np.ndarray:
    """Clip a force command to an upward component >= ``min_up`` and tilt <= ``max_tilt``."""
    tau_p = np.asarray(tau_p, dtype=float)
    up = np.asarray(up, dtype=float)
    f_up = max(float(tau_p @ up), min_up)
    horiz = tau_p - (tau_p @ up) * up
    nh = float(np.linalg.norm(horiz))
    cap = f_up * np.tan(max_tilt)
    if nh > cap:
        horiz *= cap / nh
    return f_up * up + horiz


def attitude_pid(eps, eps_dot, integral, gains: ControllerGains) -> np.ndarray:
    return -gains.K_p * np.asarray(eps) - gains.K_d * np.asarray(eps_dot) - gains.K_i * np.asarray(integral)


def accumulate_integral(integral, eps, dt: float, bound: float = 0.5) -> np.ndarray:
    return np.clip(np.asarray(integral) + np.asarray(eps) * dt, -bound, bound)


# ---------------------------------------------------------------------------
# closed-loop controller


@dataclass(frozen=True)
class ControllerConfig:
    gains: ControllerGains = field(default_factory=ControllerGains)
    phases: PhaseConfig = field(default_factory=PhaseConfig)
    vcbf: VcbfParams = field(default_factory=VcbfParams)
    alpha_d: float = 3.5
    box: VelocityBox = field(default_factory=lambda: VelocityBox.uniform(0.1))
    a_priori_dir: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    p_D_C: np.ndarray = CAMERA_OFFSET
    dt_outer: float = 1.0 / 30.0
    hold_time: float = 0.5
    fault_timeout: float = 5.0
    recovery_climb: float = 0.1
    ramp_time: float = 0.5
    thrust_ceiling: float = np.inf
    # force shaping: rotors only push along +body-up, so the command keeps a
    # minimum upward share and a bounded tilt
    max_tilt: float = np.deg2rad(35.0)
    min_lift: float = 0.3
    # projection floor for the mass estimate: a large upward velocity error can
    # otherwise drive m_hat (and with it the hover feedforward) to zero in one tick
    m_floor: float = 0.1
    # level the attitude command while waiting out a detection gap
    level_hold: bool = True
    initial: AdaptiveState = field(default_factory=AdaptiveState)


class Measurements(NamedTuple):
    t: float
    detections: Mapping[str, RelativePoseEstimate]
    v_body: np.ndarray  # IMU velocity in body axes
    R_imu: np.ndarray  # IMU attitude (gravity-aligned inertial frame)


@dataclass(frozen=True)
class ControllerState:
    phase: PhaseState = field(default_factory=PhaseState)
    adaptive: AdaptiveState = field(default_factory=AdaptiveState)
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R_des: np.ndarray = field(default_factory=lambda: np.eye(3))
    thrust: float = 0.0
    thrust_scale: float = 1.0
    last_valid_t: float = 0.0
    fault: str | None = None  # None, "hold", "climb", "lost"
    infeasible: bool = False
    heading: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))  # IMU frame, horizontal

    @classmethod
    def initial(cls, cfg: ControllerConfig, R_imu=None, t: float = 0.0) -> "ControllerState":
        ad = cfg.initial
        R0 = np.eye(3) if R_imu is None else np.array(R_imu, dtype=float)
        return cls(
            adaptive=ad,
            R_des=R0,
            thrust=ad.m * G_ACCEL,
            last_valid_t=t,
            heading=_horizontal(R0[:, 0]),
        )


class OuterDiagnostics(NamedTuple):
    h_v: float
    h_d: float
    u_nom: np.ndarray
    u_fil: np.ndarray
    tau_p: np.ndarray
    nav: RelativeNav | None


_NAN3 = np.full(3, np.nan)


def _horizontal(v) -> np.ndarray:
    """Unit vector along the horizontal part of ``v`` (x axis if ``v`` is vertical)."""
    x = np.array([v[0], v[1], 0.0])
    n = np.linalg.norm(x)
    return x / n if n > 1e-6 else np.array([1.0, 0.0, 0.0])


def slew_heading(current, goal, max_step: float) -> np.ndarray:
    """Rotate the horizontal unit vector ``current`` toward ``goal`` by at most ``max_step`` rad."""
    cur = np.array([current[0], current[1]])
    tgt = np.array([goal[0], goal[1]])
    ang = np.arctan2(cur[0] * tgt[1] - cur[1] * tgt[0], cur @ tgt)
    d = float(np.clip(ang, -max_step, max_step))
    c, s = np.cos(d), np.sin(d)
    out = np.array([c * cur[0] - s * cur[1], s * cur[0] + c * cur[1], 0.0])
    return out / np.linalg.norm(out)


def _adapt(e, adaptive: AdaptiveState, cfg: ControllerConfig):
    tau_p, adaptive = adaptive_velocity_control(e, adaptive, cfg.gains, cfg.dt_outer)
    if adaptive.m < cfg.m_floor:
        adaptive = replace(adaptive, m=cfg.m_floor)
    return tau_p, adaptive


def control_step(meas: Measurements, state: ControllerState, cfg: ControllerConfig) -> tuple[ControllerState, OuterDiagnostics]:
    """One outer-loop tick.  Returns the new state (holding R_des and thrust for the inner loop)."""
    t = meas.t
    phase = state.phase
    g = cfg.gains
    if phase.mode == Mode.TOUCHDOWN:
        return state, OuterDiagnostics(np.nan, np.nan, _NAN3, _NAN3, _NAN3, None)

    dets = meas.detections
    if phase.mode == Mode.ASCENDING:
        phase = phase_transition(phase, dets, None, 0.0, t, cfg.phases, cfg.alpha_d)
    est = dets.get(phase.frame)
    if est is None or not est.valid:
        return _without_fix(meas, replace(state, phase=phase), cfg)

    nav = relative_nav_state(est, cfg.p_D_C)
    if phase.mode != Mode.ASCENDING:
        phase = phase_transition(phase, dets, nav, nav.yaw, t, cfg.phases, cfg.alpha_d)
        if phase.mode == Mode.TOUCHDOWN:
            st = replace(state, phase=phase, fault=None, last_valid_t=t, thrust_scale=1.0)
            return st, OuterDiagnostics(np.nan, barriers.h_d(nav.p_i_D, phase.descent), _NAN3, _NAN3, _NAN3, nav)

    h_v = h_d = np.nan
    if phase.mode == Mode.ASCENDING:
        h_v = barriers.h_v(nav.p_D_i, cfg.vcbf)
        # the base moves opposite to the vehicle in body coordinates
        c = build_constraint(h_v, -barriers.grad_h_v(nav.p_D_i, cfg.vcbf), cfg.vcbf.alpha)
        u_nom = nominal_velocity(phase, nav.p_D_i, cfg.a_priori_dir, g, cfg.phases)
        res = filter_velocity(u_nom, c, cfg.box)
        v_des = nav.R_i_D @ res.u
    else:
        p = nav.p_i_D
        h_d = barriers.h_d(p, phase.descent)
        c = build_constraint(h_d, barriers.grad_h_d(p, phase.descent), phase.descent.alpha)
        u_nom = nominal_velocity(phase, p, cfg.a_priori_dir, g, cfg.phases)
        res = filter_velocity(u_nom, c, cfg.box)
        v_des = res.u

    v_i = nav.R_i_D @ meas.v_body
    e = v_i - v_des
    tau_p, adaptive = _adapt(e, state.adaptive, cfg)
    # desired attitude is built in the active frame and handed to the inner loop in IMU axes
    R_imu_i = meas.R_imu @ nav.R_i_D.T
    up_i = -R_imu_i[2]  # IMU up axis expressed in the active frame
    tau_p = shape_force(tau_p, up_i, cfg.max_tilt, cfg.min_lift * adaptive.m * G_ACCEL)
    heading = slew_heading(state.heading, _horizontal(R_imu_i[:, 0]), cfg.phases.yaw_rate * cfg.dt_outer)
    try:
        R_des = R_imu_i @ desired_rotation(tau_p, heading=_horizontal(R_imu_i.T @ heading))
    except DegenerateThrust:
        R_des = state.R_des
    thrust = min(float(np.linalg.norm(tau_p)), cfg.thrust_ceiling)
    new = replace(
        state,
        phase=phase,
        adaptive=adaptive,
        R_des=R_des,
        thrust=thrust,
        last_valid_t=t,
        fault=None,
        infeasible=res.infeasible,
        heading=heading,
    )
    return new, OuterDiagnostics(h_v, h_d, u_nom, res.u, tau_p, nav)


def _without_fix(meas: Measurements, state: ControllerState, cfg: ControllerConfig):
    """Detection of the active frame lost: hold, then climb to re-acquire, then give up."""
    lost_for = meas.t - state.last_valid_t
    nan = OuterDiagnostics(np.nan, np.nan, _NAN3, _NAN3, _NAN3, None)
    if lost_for > cfg.fault_timeout:
        return replace(state, fault="lost"), nan
    if lost_for <= cfg.hold_time:
        # hover thrust; either level out at the current heading or keep the
        # last attitude command
        R_des = desired_rotation(GRAVITY, heading=_horizontal(meas.R_imu[:, 0])) if cfg.level_hold else state.R_des
        return replace(state, fault="hold", R_des=R_des, thrust=state.adaptive.m * G_ACCEL), nan
    # climb straight up in the gravity-aligned IMU frame, keeping the current heading
    v_world = meas.R_imu @ meas.v_body
    v_des = np.array([0.0, 0.0, -cfg.recovery_climb])
    tau_p, adaptive = _adapt(v_world - v_des, state.adaptive, cfg)
    tau_p = shape_force(tau_p, GRAVITY / G_ACCEL, cfg.max_tilt, cfg.min_lift * adaptive.m * G_ACCEL)
    try:
        R_des = desired_rotation(tau_p, heading=_horizontal(meas.R_imu[:, 0]))
    except DegenerateThrust:
        R_des = state.R_des
    thrust = min(float(np.linalg.norm(tau_p)), cfg.thrust_ceiling)
    return replace(state, adaptive=adaptive, R_des=R_des, thrust=thrust, fault="climb"), nan


def attitude_step(state: ControllerState, R, omega, dt: float, cfg: ControllerConfig) -> tuple[ControllerState, ControlWrench]:
    """Inner loop: track ``state.R_des`` with the PID law.

    The errors fed to the law are the rotation error of the current attitude
    relative to the desired one and the body-rate error, so that the negative
    feedback gains drive both to zero.
    """
    eps = vee_error(state.R_des, R)
    eps_dot = np.asarray(omega, dtype=float)  # desired body rate is zero for step set-points
    integral = accumulate_integral(state.integral, eps, dt)
    tau_q = attitude_pid(eps, eps_dot, integral, cfg.gains)
    thrust_scale = state.thrust_scale
    if state.phase.mode == Mode.TOUCHDOWN:
        thrust_scale = touchdown_ramp(thrust_scale, dt, cfg.ramp_time)
    thrust = state.thrust * thrust_scale
    wrench = ControlWrench(np.full(3, np.nan), tau_q, np.array([0.0, 0.0, -thrust]))
    return replace(state, integral=integral, thrust_scale=thrust_scale), wrench

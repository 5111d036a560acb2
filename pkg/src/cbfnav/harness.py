"""Closed-loop scenario execution.

Loop interleave (integer step arithmetic, so every run is bit-reproducible):
physics runs every step (500 Hz by default); the attitude loop runs on every
``physics_hz // inner_hz``-th step; outer tick ``k`` fires on physics step
``(k * physics_hz) // outer_hz``.  Within a step the order is perception ->
outer control -> attitude control -> physics.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import barriers
from .config import ScenarioConfig
from .control import ControllerState, Measurements, Mode, attitude_step, control_step
from .dynamics import ControlWrench, VehicleState, land, step
from .geometry import RigidTransform, rot_z
from .perception import estimate_velocity, observe

log = logging.getLogger(__name__)

_NAN3 = np.full(3, np.nan)
BREACH_LEVEL = -0.05


@dataclass(frozen=True)
class TelemetryRecord:
    t: float
    phase: str
    p: np.ndarray
    v: np.ndarray
    h_v: float
    h_d: float
    u_nom: np.ndarray
    u_fil: np.ndarray
    e: np.ndarray
    kappa_hat: float
    m_hat: float
    tau_p: np.ndarray
    tau_q: np.ndarray
    # estimated relative positions: base origin in camera frame, vehicle in target frame
    p_C_W: np.ndarray = field(default_factory=lambda: _NAN3)
    p_T_D: np.ndarray = field(default_factory=lambda: _NAN3)
    # ground-truth barrier values for the active phase
    h_true: float = float("nan")
    infeasible: bool = False
    R: np.ndarray = field(default_factory=lambda: np.eye(3))  # true attitude


@dataclass
class RunMetrics:
    landing_error: float = float("nan")
    min_h_v: float = float("nan")
    min_h_d: dict = field(default_factory=lambda: {"approaching": float("nan"), "landing": float("nan")})
    flight_time: float = 0.0
    breach_duration: float = 0.0
    success: bool = False
    termination: str = "running"
    touchdown_reached: bool = False
    descent_params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    records: list[TelemetryRecord]
    metrics: RunMetrics
    config: ScenarioConfig
    switch_checks: list[dict] = field(default_factory=list)

    def telemetry_hash(self) -> str:
        from .export import telemetry_csv

        return hashlib.sha256(telemetry_csv(self.records).encode()).hexdigest()


def _nanmin(a: float, b: float) -> float:
    if np.isnan(a):
        return b
    return min(a, b)


def run_scenario(cfg: ScenarioConfig, stop_after: Mode | None = None) -> RunResult:
    """Run one closed-loop flight.

    ``stop_after`` ends the run as soon as the given mode is entered (useful
    for batch checks of the switching logic).
    """
    ccfg = cfg.controller_config()
    params = cfg.vehicle.params()
    wind = cfg.wind.model(cfg.seed)
    noise = cfg.noise.model(cfg.seed)
    markers = {"base": cfg.markers.base.marker("base"), "target": cfg.markers.target.marker("target")}

    base_world = cfg.base_pose.transform()
    target_world = base_world @ cfg.target_pose.transform()
    poses = {"base": base_world, "target": target_world}
    world_to_target = target_world.inverse()
    world_to_base = base_world.inverse()

    p0 = base_world.apply(cfg.initial.position)
    R0 = base_world.rotation @ rot_z(np.deg2rad(cfg.initial.yaw_deg))
    state = VehicleState.at_rest(p0, R0)
    ctrl = ControllerState.initial(ccfg, R_imu=R0)

    tm = cfg.timing
    dt = 1.0 / tm.physics_hz
    inner_every = tm.physics_hz // tm.inner_hz
    dt_inner = inner_every * dt
    n_max = int(round(cfg.max_duration * tm.physics_hz))
    ground_z = base_world.translation[2] + 0.5

    metrics = RunMetrics()
    records: list[TelemetryRecord] = []
    switch_checks: list[dict] = []
    wrench = ControlWrench(_NAN3, np.zeros(3), np.array([0.0, 0.0, -ctrl.thrust]))
    tau_q = np.zeros(3)
    entered = {Mode.ASCENDING: False, Mode.APPROACHING: False, Mode.LANDING: False}
    k = 0
    next_outer = 0
    n = 0
    last_mode = ctrl.phase.mode

    while True:
        t = n * dt
        if n == next_outer:
            dets = {name: observe(state, poses[name], markers[name], noise, t, ccfg.p_D_C) for name in ("base", "target")}
            meas = Measurements(t, dets, estimate_velocity(state, noise), state.R)
            prev_phase = ctrl.phase
            ctrl, diag = control_step(meas, ctrl, ccfg)
            mode = ctrl.phase.mode

            if mode != prev_phase.mode:
                log.debug("t=%.3f %s -> %s", t, prev_phase.mode.name, mode.name)
                if mode == Mode.LANDING:
                    p_true = world_to_target.apply(state.p)
                    switch_checks.append(
                        {
                            "t": t,
                            "h_d_new_estimated": barriers.h_d(diag.nav.p_i_D, ctrl.phase.descent),
                            "h_d_new_true": barriers.h_d(p_true, ctrl.phase.descent),
                        }
                    )
                if mode in (Mode.APPROACHING, Mode.LANDING):
                    d = ctrl.phase.descent
                    metrics.descent_params[mode.name.lower()] = {"K1": d.K1, "K2": d.K2, "K3": d.K3, "z_star": d.z_star, "l_star": d.l_star}

            # ground-truth barrier of the active phase
            h_true = np.nan
            if mode == Mode.ASCENDING:
                p_D_W = state.R.T @ (base_world.translation - state.p)
                h_true = barriers.h_v(p_D_W, ccfg.vcbf)
                metrics.min_h_v = _nanmin(metrics.min_h_v, h_true)
            elif mode in (Mode.APPROACHING, Mode.LANDING):
                h_true = barriers.h_d(world_to_target.apply(state.p), ctrl.phase.descent)
                key = mode.name.lower()
                metrics.min_h_d[key] = _nanmin(metrics.min_h_d[key], h_true)
            if mode in entered and not np.isnan(h_true):
                if h_true >= BREACH_LEVEL:
                    entered[mode] = True
                elif entered[mode]:
                    # a breach is leaving the safe set after having reached it
                    metrics.breach_duration += ccfg.dt_outer

            nav = diag.nav
            p_C_W = p_T_D = _NAN3
            if nav is not None:
                if ctrl.phase.frame == "base":
                    p_C_W = nav.p_D_i - ccfg.p_D_C
                else:
                    p_T_D = nav.p_i_D
            records.append(
                TelemetryRecord(
                    t,
                    mode.name.lower(),
                    state.p.copy(),
                    state.v.copy(),
                    diag.h_v,
                    diag.h_d,
                    diag.u_nom,
                    diag.u_fil,
                    ctrl.adaptive.e.copy(),
                    ctrl.adaptive.kappa,
                    ctrl.adaptive.m,
                    diag.tau_p,
                    tau_q.copy(),
                    p_C_W,
                    p_T_D,
                    float(h_true),
                    ctrl.infeasible,
                    state.R.copy(),
                )
            )
            if mode == Mode.TOUCHDOWN:
                metrics.touchdown_reached = True
            if ctrl.fault == "lost":
                metrics.termination = "fault:detection_lost"
                break
            if stop_after is not None and mode >= stop_after and last_mode < stop_after:
                metrics.termination = f"stopped:{mode.name.lower()}"
                break
            last_mode = mode
            k += 1
            next_outer = (k * tm.physics_hz) // tm.outer_hz

        if n % inner_every == 0:
            ctrl, wrench = attitude_step(ctrl, state.R, state.omega, dt_inner, ccfg)
            tau_q = wrench.tau_q
        state = step(state, wrench, wind, params, dt)
        n += 1

        p_T = world_to_target.apply(state.p)
        if p_T[2] >= 0.0 and np.hypot(p_T[0], p_T[1]) <= cfg.landing.platform_radius:
            state = land(state, target_world.apply(np.array([p_T[0], p_T[1], 0.0]))[2])
            metrics.landing_error = float(np.hypot(p_T[0], p_T[1]))
            metrics.termination = "landed" if ctrl.phase.mode == Mode.TOUCHDOWN else "contact_before_touchdown"
            break
        if state.p[2] > ground_z or world_to_base.apply(state.p)[2] > 0.5:
            metrics.termination = "crash"
            break
        if n >= n_max:
            metrics.termination = "timeout"
            break

    metrics.flight_time = n * dt
    log.debug("%s seed %d ended: %s after %.2f s", cfg.name, cfg.seed, metrics.termination, metrics.flight_time)
    metrics.success = bool(
        metrics.termination == "landed" and metrics.touchdown_reached and metrics.landing_error <= cfg.landing.margin
    )
    return RunResult(records, metrics, cfg, switch_checks)

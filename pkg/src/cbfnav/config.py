"""Scenario configuration (JSON) and the two built-in presets.

All angles in the file format are degrees; everything else is SI.  Rotation
matrices are row-major 3x3 lists and must be orthonormal to 1e-6.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import geometry
from .barriers import VcbfParams
from .control import AdaptiveState, ControllerConfig, ControllerGains, PhaseConfig
from .dynamics import VehicleParams, WindModel
from .geometry import RigidTransform
from .perception import MarkerConfig, NoiseModel
from .qp import VelocityBox

Vec = tuple[float, float, float]
Mat = tuple[Vec, Vec, Vec]

# marker-frame poses from the experimental rig (robot frame expressed in marker frame)
T_6_W = ((0.0, -1.0, 0.0, 0.23), (1.0, 0.0, 0.0, 0.33), (0.0, 0.0, 1.0, 0.0), (0.0, 0.0, 0.0, 1.0))
T_4_T = ((0.0, 1.0, 0.0, 0.06), (-1.0, 0.0, 0.0, -0.07), (0.0, 0.0, 1.0, 0.0), (0.0, 0.0, 0.0, 1.0))

R_W_T1 = ((0.0, 1.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 0.0, 1.0))
# as published the columns have norm 0.954; the preset stores the nearest rotation
R_W_T2_PUBLISHED = ((-0.76, -0.65, 0.0), (0.65, -0.76, 0.0), (0.0, 0.0, 1.0))


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _check_rotation(m):
    geometry.rot3(m)
    return m


class Pose(_Model):
    rotation: Mat = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    translation: Vec = (0.0, 0.0, 0.0)

    @field_validator("rotation")
    @classmethod
    def _rot(cls, v):
        return _check_rotation(v)

    def transform(self) -> RigidTransform:
        return RigidTransform(np.array(self.rotation), np.array(self.translation))


class InitialState(_Model):
    position: Vec = (0.0, 0.0, -0.8)  # in the base frame
    yaw_deg: float = 0.0


class VehicleConfig(_Model):
    mass: float = Field(0.15, gt=0)
    inertia_diag: Vec = (2.25e-3, 2.25e-3, 3.5e-3)
    drag_coeff: float = Field(0.001, ge=0)

    @field_validator("inertia_diag")
    @classmethod
    def _pd(cls, v):
        if min(v) <= 0:
            raise ValueError("inertia entries must be positive")
        return v

    def params(self) -> VehicleParams:
        return VehicleParams(self.mass, np.diag(self.inertia_diag), self.drag_coeff)


class WindConfig(_Model):
    mean: Vec = (0.0, 0.0, 0.0)
    gust_fraction: float = Field(0.0, ge=0)
    gust_frequency: float = Field(0.0, ge=0)
    torque: Vec = (0.0, 0.0, 0.0)

    def model(self, seed: int) -> WindModel:
        mean = np.array(self.mean)
        return WindModel(mean, self.gust_fraction * np.abs(mean), self.gust_frequency, seed, np.array(self.torque))


class NoiseConfig(_Model):
    sigma_pos: float = Field(0.005, ge=0)
    sigma_rot_deg: float = Field(0.5, ge=0)
    sigma_vel: float = Field(0.0, ge=0)
    velocity_bias: Vec = (0.0, 0.0, 0.0)

    def model(self, seed: int) -> NoiseModel:
        return NoiseModel(self.sigma_pos, np.deg2rad(self.sigma_rot_deg), self.sigma_vel, np.array(self.velocity_bias), seed)


class GainsConfig(_Model):
    K_v: Vec = (0.45, 0.45, 4.5)
    K: Vec = (1.2, 1.2, 1.2)
    eta_kappa: float = Field(2.5, gt=0)
    eta_m: float = Field(0.5, gt=0)
    K_p: Vec = (0.1, 0.1, 0.1)
    K_d: Vec = (0.03, 0.03, 0.03)
    K_i: Vec = (0.01, 0.01, 0.01)
    e_dz: float = Field(0.01, gt=0)
    kappa0: float = Field(0.01, gt=0)
    m0: float = Field(0.1, gt=0)
    m_floor: float = Field(0.1, ge=0)

    @field_validator("K_v", "K", "K_p", "K_d", "K_i")
    @classmethod
    def _positive(cls, v):
        if min(v) <= 0:
            raise ValueError("gain entries must be positive")
        return v


class CbfConfig(_Model):
    theta_f_deg: float = Field(50.0, gt=0, lt=180)
    alpha_v: float = Field(5.0, gt=0)
    alpha_d: float = Field(3.5, gt=0)
    v_max: Vec = (0.1, 0.1, 0.1)
    camera_offset: Vec = (-0.1, 0.0, 0.1)

    @field_validator("v_max")
    @classmethod
    def _box(cls, v):
        if min(v) <= 0:
            raise ValueError("velocity bounds must be positive")
        return v


class PhasesConfig(_Model):
    focus_altitude: float = Field(1.75, gt=0)
    landing_altitude: float = Field(0.35, gt=0)
    ball_radius: float = Field(0.1, gt=0)
    yaw_tolerance_deg: float = Field(5.0, gt=0)
    touchdown_margin: float = Field(0.02, ge=0)
    l_star_min: float = Field(0.08**2, gt=0)
    yaw_rate_deg: float = Field(20.0, gt=0)

    @model_validator(mode="after")
    def _order(self):
        if self.landing_altitude >= self.focus_altitude:
            raise ValueError("landing_altitude must be below focus_altitude")
        return self


class MarkerSpec(_Model):
    marker_to_robot: tuple[tuple[float, float, float, float], ...] = tuple(
        tuple(float(i == j) for j in range(4)) for i in range(4)
    )
    band: tuple[float, float] = (0.35, 1.75)
    fov_deg: tuple[float, float] = (45.0, 32.5)
    gate_on_robot_origin: bool = False

    @field_validator("marker_to_robot")
    @classmethod
    def _transform(cls, v):
        if len(v) != 4:
            raise ValueError("marker_to_robot must be a 4x4 homogeneous matrix")
        geometry.rot3(np.array(v)[:3, :3])
        return v

    @field_validator("band")
    @classmethod
    def _band(cls, v):
        if not 0 < v[0] < v[1]:
            raise ValueError("band must satisfy 0 < min < max")
        return v

    def marker(self, robot_id: str) -> MarkerConfig:
        return MarkerConfig(
            robot_id,
            RigidTransform.from_matrix(np.array(self.marker_to_robot)),
            tuple(self.band),
            tuple(np.deg2rad(self.fov_deg)),
            self.gate_on_robot_origin,
        )


class MarkersConfig(_Model):
    base: MarkerSpec = MarkerSpec(marker_to_robot=T_6_W, gate_on_robot_origin=True)
    target: MarkerSpec = MarkerSpec(marker_to_robot=T_4_T)


class TimingConfig(_Model):
    physics_hz: int = Field(500, gt=0)
    inner_hz: int = Field(250, gt=0)
    outer_hz: int = Field(30, gt=0)

    @model_validator(mode="after")
    def _rates(self):
        if self.physics_hz % self.inner_hz:
            raise ValueError("physics_hz must be a multiple of inner_hz")
        if self.outer_hz > self.inner_hz:
            raise ValueError("outer_hz must not exceed inner_hz")
        if 1.0 / self.physics_hz > 0.01:
            raise ValueError("physics step must be at most 10 ms")
        return self


class LandingConfig(_Model):
    ramp_time: float = Field(0.5, gt=0)
    margin: float = Field(0.02, gt=0)
    platform_radius: float = Field(0.3, gt=0)


class FaultConfig(_Model):
    hold_time: float = Field(0.5, ge=0)
    level_hold: bool = True
    timeout: float = Field(5.0, gt=0)
    recovery_climb: float = Field(0.1, gt=0)


class ScenarioConfig(_Model):
    name: str = "custom"
    seed: int = 0
    max_duration: float = Field(120.0, gt=0)
    base_pose: Pose = Pose()
    target_pose: Pose = Pose(rotation=R_W_T1, translation=(1.1, -0.1, -0.07))
    a_priori_dir: Vec = (1.0, 0.0, 0.0)
    initial: InitialState = InitialState()
    vehicle: VehicleConfig = VehicleConfig()
    wind: WindConfig = WindConfig()
    noise: NoiseConfig = NoiseConfig()
    gains: GainsConfig = GainsConfig()
    cbf: CbfConfig = CbfConfig()
    phases: PhasesConfig = PhasesConfig()
    markers: MarkersConfig = MarkersConfig()
    timing: TimingConfig = TimingConfig()
    landing: LandingConfig = LandingConfig()
    fault: FaultConfig = FaultConfig()

    @field_validator("a_priori_dir")
    @classmethod
    def _dir(cls, v):
        if np.linalg.norm(v) < 1e-9:
            raise ValueError("a_priori_dir must be non-zero")
        return v

    # -- conversions to the runtime objects -------------------------------

    def controller_config(self) -> ControllerConfig:
        g = self.gains
        gains = ControllerGains(
            np.array(g.K_v), np.array(g.K), g.eta_kappa, g.eta_m, np.array(g.K_p), np.array(g.K_d), np.array(g.K_i), g.e_dz
        )
        ph = self.phases
        phases = PhaseConfig(
            ph.focus_altitude,
            ph.landing_altitude,
            ph.ball_radius,
            np.deg2rad(ph.yaw_tolerance_deg),
            ph.touchdown_margin,
            ph.l_star_min,
            np.deg2rad(ph.yaw_rate_deg),
        )
        cam = np.array(self.cbf.camera_offset)
        return ControllerConfig(
            gains=gains,
            phases=phases,
            vcbf=VcbfParams(np.deg2rad(self.cbf.theta_f_deg), cam, self.cbf.alpha_v),
            alpha_d=self.cbf.alpha_d,
            box=VelocityBox(np.array(self.cbf.v_max)),
            a_priori_dir=np.array(self.a_priori_dir) / np.linalg.norm(self.a_priori_dir),
            p_D_C=cam,
            dt_outer=1.0 / self.timing.outer_hz,
            hold_time=self.fault.hold_time,
            level_hold=self.fault.level_hold,
            m_floor=g.m_floor,
            fault_timeout=self.fault.timeout,
            recovery_climb=self.fault.recovery_climb,
            ramp_time=self.landing.ramp_time,
            thrust_ceiling=self.vehicle.params().thrust_ceiling,
            initial=AdaptiveState(g.kappa0, g.m0),
        )

    def with_seed(self, seed: int | None) -> "ScenarioConfig":
        return self if seed is None else self.model_copy(update={"seed": int(seed)})


class ConfigError(ValueError):
    """Raised with a field path for any invalid scenario file."""


def _format_validation(exc) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict[str, Any]) -> ScenarioConfig:
    from pydantic import ValidationError

    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"<file>: cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<json>: {exc.msg} at line {exc.lineno} column {exc.colno}") from None
    if not isinstance(data, dict):
        raise ConfigError("<root>: top level must be a JSON object")
    return parse_config(data)


def dump_config(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2)


def set_field(cfg: ScenarioConfig, path: str, value: Any) -> ScenarioConfig:
    """Return a copy with the dotted ``path`` replaced (e.g. ``wind.mean``)."""
    data = copy.deepcopy(cfg.model_dump(mode="json"))
    node = data
    keys = path.split(".")
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"{path}: unknown field {k!r}")
        node = node[k]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError(f"{path}: unknown field {keys[-1]!r}")
    node[keys[-1]] = value
    return parse_config(data)


PRESET_WIND = WindConfig(mean=(4.0, 3.0, 0.0), gust_fraction=0.2, gust_frequency=0.5)

PRESETS: dict[str, ScenarioConfig] = {
    "run1": ScenarioConfig(
        name="run1",
        target_pose=Pose(rotation=R_W_T1, translation=(1.1, -0.1, -0.07)),
        a_priori_dir=(1.0, 0.0, 0.0),
        wind=PRESET_WIND,
    ),
    "run2": ScenarioConfig(
        name="run2",
        target_pose=Pose(
            rotation=tuple(map(tuple, geometry.orthonormalize(np.array(R_W_T2_PUBLISHED)).tolist())),
            translation=(-1.0, -0.5, -0.07),
        ),
        a_priori_dir=(-1.0, 0.0, 0.0),
        wind=PRESET_WIND,
    ),
}


def preset(name: Literal["run1", "run2"] | str) -> ScenarioConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"preset: unknown preset {name!r} (choose from {', '.join(PRESETS)})") from None

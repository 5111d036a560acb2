import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbfnav.dynamics import VehicleState
from cbfnav.geometry import RigidTransform, expm_so3, rot_z
from cbfnav.perception import (
    CAMERA_OFFSET,
    GatedMeasurementError,
    MarkerConfig,
    NoiseModel,
    RelativePoseEstimate,
    estimate_velocity,
    observe,
    relative_nav_state,
)

TARGET = MarkerConfig("target")
ORIGIN = RigidTransform.identity()


def hovering_camera(altitude, dx=0.0, dy=0.0, R=np.eye(3)):
    """Vehicle placed so that its camera sits ``altitude`` above (dx, dy)."""
    p_cam = np.array([dx, dy, -altitude])
    return VehicleState(p_cam - R @ CAMERA_OFFSET, np.zeros(3), R, np.zeros(3))


def test_marker_one_metre_below_is_seen():
    est = observe(hovering_camera(1.0), ORIGIN, TARGET, NoiseModel(seed=4), 0.5)
    assert est.valid
    assert est.p_C_i == pytest.approx([0.0, 0.0, 1.0], abs=0.03)
    assert est.altitude == pytest.approx(1.0)


def test_exact_observation_without_noise():
    est = observe(hovering_camera(1.0), ORIGIN, TARGET, NoiseModel.exact(), 0.5)
    assert np.allclose(est.p_C_i, [0.0, 0.0, 1.0], atol=1e-15)
    assert np.allclose(est.R_C_i, np.eye(3))


def test_below_detection_band_is_invalid():
    est = observe(hovering_camera(0.2), ORIGIN, TARGET, NoiseModel.exact(), 0.0)
    assert not est.valid
    assert np.isnan(est.p_C_i).all()


def test_above_detection_band_is_invalid():
    assert not observe(hovering_camera(1.8), ORIGIN, TARGET, NoiseModel.exact(), 0.0).valid


def test_marker_outside_horizontal_fov_is_invalid():
    # 50 degrees off the optical axis against a 45 degree half-angle
    veh = hovering_camera(1.0, dx=-np.tan(np.deg2rad(50.0)))
    assert not observe(veh, ORIGIN, TARGET, NoiseModel.exact(), 0.0).valid
    veh = hovering_camera(1.0, dx=-np.tan(np.deg2rad(40.0)))
    assert observe(veh, ORIGIN, TARGET, NoiseModel.exact(), 0.0).valid


def test_noise_is_reproducible():
    veh = hovering_camera(1.0)
    a = observe(veh, ORIGIN, TARGET, NoiseModel(seed=9), 1.25)
    b = observe(veh, ORIGIN, TARGET, NoiseModel(seed=9), 1.25)
    c = observe(veh, ORIGIN, TARGET, NoiseModel(seed=9), 1.30)
    assert np.array_equal(a.p_C_i, b.p_C_i) and np.array_equal(a.R_C_i, b.R_C_i)
    assert not np.array_equal(a.p_C_i, c.p_C_i)


def test_marker_config_validation():
    with pytest.raises(ValueError):
        MarkerConfig("target", band=(1.0, 0.5))
    with pytest.raises(ValueError):
        MarkerConfig("target", fov=(np.pi / 2, 0.3))
    with pytest.raises(ValueError):
        NoiseModel(sigma_pos=-1.0)


@settings(max_examples=200)
@given(
    st.floats(-1.5, 1.5),
    st.floats(-1.5, 1.5),
    st.floats(0.3, 1.9),
    st.tuples(*[st.floats(-0.3, 0.3)] * 3),
)
def test_gating_is_conservative(dx, dy, alt, tilt):
    veh = hovering_camera(alt, dx, dy, expm_so3(np.array(tilt)))
    est = observe(veh, ORIGIN, TARGET, NoiseModel.exact(), 0.0)
    if est.valid:
        x, y, z = est.p_C_i  # noiseless marker centre in the camera frame
        h, v = TARGET.fov
        assert z > 0 and abs(x / z) < np.tan(h) and abs(y / z) < np.tan(v)


def test_velocity_estimate():
    veh = VehicleState(np.zeros(3), np.array([0.3, -0.1, 0.2]), np.eye(3), np.zeros(3))
    assert np.array_equal(estimate_velocity(veh, NoiseModel.exact()), veh.v)
    biased = NoiseModel(sigma_vel=0.0, velocity_bias=[0.01, 0.0, 0.0])
    assert estimate_velocity(veh, biased) == pytest.approx(veh.v + [0.01, 0.0, 0.0])
    noisy = NoiseModel(sigma_vel=0.02, seed=3)
    assert np.array_equal(estimate_velocity(veh, noisy), estimate_velocity(veh, noisy))


def test_velocity_estimate_is_in_body_frame():
    veh = VehicleState(np.zeros(3), np.array([1.0, 0.0, 0.0]), rot_z(np.pi / 2), np.zeros(3))
    assert estimate_velocity(veh, NoiseModel.exact()) == pytest.approx([0.0, -1.0, 0.0])


def _estimate(p_C_i, R=np.eye(3)):
    return RelativePoseEstimate("target", np.asarray(p_C_i, dtype=float), R, 0.0, True)


def test_relative_nav_examples():
    nav = relative_nav_state(_estimate([0.0, 0.0, 1.0]), CAMERA_OFFSET)
    assert nav.p_D_i == pytest.approx([-0.1, 0.0, 1.1])
    assert nav.l_body == 0.0
    # identity rotation, vehicle 1 m above the target centre
    nav = relative_nav_state(_estimate([0.0, 0.0, 1.0]), np.zeros(3))
    assert nav.p_i_D == pytest.approx([0.0, 0.0, -1.0])
    assert nav.l_frame == 0.0


def test_yaw_leaves_horizontal_distance_unchanged():
    est = _estimate([0.3, -0.2, 1.0])
    base = relative_nav_state(est).l_frame
    for yaw in (0.3, 1.2, -2.0):
        yawed = _estimate(est.p_C_i, rot_z(yaw))
        assert relative_nav_state(yawed).l_frame == pytest.approx(base, abs=1e-15)


def test_invalid_estimate_is_gated():
    with pytest.raises(GatedMeasurementError):
        relative_nav_state(RelativePoseEstimate.invalid("base", 1.0))


@settings(max_examples=100)
@given(
    st.floats(-0.4, 0.4),
    st.floats(-0.4, 0.4),
    st.floats(0.5, 1.6),
    st.tuples(*[st.floats(-0.2, 0.2)] * 3),
    st.floats(-np.pi, np.pi),
)
def test_zero_noise_recovers_true_relative_position(dx, dy, alt, tilt, robot_yaw):
    robot = RigidTransform(rot_z(robot_yaw), np.array([0.7, -0.4, 0.0]))
    R = expm_so3(np.array(tilt))
    p_cam = robot.translation + np.array([dx, dy, -alt])
    veh = VehicleState(p_cam - R @ CAMERA_OFFSET, np.zeros(3), R, np.zeros(3))
    est = observe(veh, robot, TARGET, NoiseModel.exact(), 0.0)
    if not est.valid:
        return
    nav = relative_nav_state(est)
    truth = robot.rotation.T @ (veh.p - robot.translation)
    assert np.allclose(nav.p_i_D, truth, atol=1e-12)
    assert nav.l_frame >= 0.0

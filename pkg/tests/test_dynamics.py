import numpy as np
import pytest

from cbfnav.dynamics import (
    G_ACCEL,
    ControlWrench,
    IntegrationFault,
    VehicleParams,
    VehicleState,
    WindModel,
    land,
    step,
    touchdown_ramp,
    wind_force,
)
from cbfnav.geometry import GRAVITY, expm_so3

PARAMS = VehicleParams(mass=0.5, inertia=np.diag([2e-3, 3e-3, 5e-3]), drag_coeff=0.0)
CALM = WindModel.calm()


def thrust(f):
    return ControlWrench(np.full(3, np.nan), np.zeros(3), np.array([0.0, 0.0, -f]))


def simulate(state, wrench, n, dt=0.002, params=PARAMS, wind=CALM):
    for _ in range(n):
        state = step(state, wrench, wind, params, dt)
    return state


def test_hover_is_equilibrium():
    s = simulate(VehicleState.at_rest((0, 0, -1.0)), thrust(PARAMS.mass * G_ACCEL), 500)
    assert np.linalg.norm(s.v) < 1e-9
    assert s.t == pytest.approx(1.0)


def test_hover_force_is_mass_times_gravity_vector():
    # the force command for hover is m G, which points up in a down-Z frame
    w = ControlWrench.from_force(PARAMS.mass * GRAVITY, np.zeros(3))
    assert w.F == pytest.approx([0.0, 0.0, -PARAMS.mass * G_ACCEL])


def test_free_fall_distance():
    s0 = VehicleState.at_rest((0, 0, -10.0))
    s = simulate(s0, thrust(0.0), 500)
    assert s.p[2] - s0.p[2] == pytest.approx(0.5 * G_ACCEL, abs=1e-6)  # +Z is down


def test_torque_free_spin_about_principal_axis():
    s = VehicleState(np.zeros(3), np.zeros(3), np.eye(3), np.array([0.0, 0.0, 3.0]))
    L0 = np.linalg.norm(PARAMS.inertia @ s.omega)
    s = simulate(s, thrust(PARAMS.mass * G_ACCEL), 500)
    assert np.linalg.norm(PARAMS.inertia @ s.omega) == pytest.approx(L0, abs=1e-6)


def test_energy_conserved_without_thrust():
    rng = np.random.default_rng(3)
    s = VehicleState(np.zeros(3), rng.normal(size=3), np.eye(3), rng.normal(size=3))
    m = PARAMS.mass

    def energy(st):
        rot = 0.5 * st.omega @ PARAMS.inertia @ st.omega
        return 0.5 * m * st.v @ st.v - m * G_ACCEL * st.p[2] + rot

    E0 = energy(s)
    s = simulate(s, thrust(0.0), 1000)
    assert abs(energy(s) - E0) <= 1e-5 * abs(E0)


def _tumbling(dt, T=1.0):
    s = VehicleState(np.zeros(3), np.array([0.5, 0.0, 0.0]), np.eye(3), np.array([1.0, 2.0, 3.0]))
    return simulate(s, thrust(6.0), int(round(T / dt)), dt=dt)


def test_rk4_convergence_order():
    ref = _tumbling(0.01 / 16).p
    e1 = np.linalg.norm(_tumbling(0.01).p - ref)
    e2 = np.linalg.norm(_tumbling(0.005).p - ref)
    assert e1 / e2 >= 8.0


def test_attitude_stays_orthonormal():
    s = VehicleState(np.zeros(3), np.zeros(3), expm_so3([0.3, -0.2, 0.1]), np.array([4.0, -3.0, 5.0]))
    s = simulate(s, thrust(PARAMS.mass * G_ACCEL), 100_000)
    assert np.abs(s.R.T @ s.R - np.eye(3)).max() < 1e-8


def test_step_rejects_bad_dt_and_nonfinite_state():
    s = VehicleState.at_rest()
    with pytest.raises(ValueError):
        step(s, thrust(1.0), CALM, PARAMS, 0.02)
    with pytest.raises(IntegrationFault), np.errstate(invalid="ignore"):
        step(s, thrust(np.inf), CALM, PARAMS, 0.002)


def test_params_validation():
    with pytest.raises(ValueError):
        VehicleParams(mass=0.0)
    with pytest.raises(ValueError):
        VehicleParams(inertia=np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        VehicleParams(drag_coeff=-0.1)
    assert VehicleParams(mass=0.2).thrust_ceiling == pytest.approx(2 * 0.2 * G_ACCEL)


def test_thrust_saturates_at_ceiling():
    w = ControlWrench.from_force([0.0, 0.0, -100.0], np.zeros(3), ceiling=3.0)
    assert w.F[2] == -3.0


def test_wind_force_formula():
    assert np.allclose(wind_force(CALM, np.zeros(3), 0.3, 0.2), 0.0)
    wind = WindModel(mean=[5.0, 0.0, 0.0])
    assert np.linalg.norm(wind_force(wind, np.zeros(3), 1.7, 0.2)) == pytest.approx(1.0)
    # moving with the air removes the drag
    assert np.allclose(wind_force(wind, [5.0, 0.0, 0.0], 0.0, 0.2), 0.0)


def test_wind_deterministic_per_seed():
    a = WindModel([4.0, 3.0, 0.0], [0.8, 0.6, 0.0], 0.5, seed=11)
    b = WindModel([4.0, 3.0, 0.0], [0.8, 0.6, 0.0], 0.5, seed=11)
    c = WindModel([4.0, 3.0, 0.0], [0.8, 0.6, 0.0], 0.5, seed=12)
    ts = np.linspace(0, 5, 7)
    assert all(np.array_equal(a.velocity(t), b.velocity(t)) for t in ts)
    assert any(not np.array_equal(a.velocity(t), c.velocity(t)) for t in ts)
    with pytest.raises(ValueError):
        WindModel(gust_frequency=-1.0)


def test_drag_pushes_vehicle_downwind():
    params = VehicleParams(mass=0.5, drag_coeff=0.1)
    s = simulate(VehicleState.at_rest(), thrust(0.5 * G_ACCEL), 500, params=params, wind=WindModel(mean=[2.0, 0.0, 0.0]))
    assert s.v[0] > 0.0


@pytest.mark.parametrize(
    "scale, dt, ramp, expected",
    [(1.0, 1.0, 1.0, 0.0), (1.0, 0.5, 1.0, 0.5), (0.0, 0.1, 1.0, 0.0), (0.3, 0.5, 1.0, 0.0)],
)
def test_touchdown_ramp(scale, dt, ramp, expected):
    assert touchdown_ramp(scale, dt, ramp) == pytest.approx(expected)


def test_touchdown_ramp_rejects_out_of_range():
    with pytest.raises(ValueError):
        touchdown_ramp(1.5, 0.1, 1.0)


def test_land_pins_vehicle():
    s = VehicleState(np.array([1.0, 2.0, -0.01]), np.ones(3), np.eye(3), np.ones(3))
    out = land(s, -0.07)
    assert out.p == pytest.approx([1.0, 2.0, -0.07])
    assert not out.v.any() and not out.omega.any()

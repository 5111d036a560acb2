import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbfnav.barriers import HalfspaceConstraint
from cbfnav.qp import VelocityBox, best_effort_vertex, brute_force_filter, filter_velocity, naive_grid_filter
from cbfnav.verify import kkt_residual, random_qp_instance

BOX = VelocityBox.uniform(0.1)
vec = st.tuples(*[st.floats(-0.5, 0.5)] * 3).map(np.array)
unit = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda a: np.linalg.norm(a) > 0.1).map(lambda a: np.array(a) / np.linalg.norm(a))


def hs(a, b):
    return HalfspaceConstraint(np.asarray(a, dtype=float), float(b))


def test_feasible_nominal_is_unchanged():
    res = filter_velocity([0.05, 0.0, 0.0], hs([1, 0, 0], -1.0), BOX)
    assert np.array_equal(res.u, [0.05, 0.0, 0.0])
    assert not res.active and not res.infeasible


def test_box_clamp():
    res = filter_velocity([1.0, 0.0, 0.0], hs([0, 0, 1], -1.0), BOX)
    assert res.u == pytest.approx([0.1, 0.0, 0.0])


def test_push_up():
    res = filter_velocity([0.0, 0.0, 0.0], hs([0, 0, -1], 0.05), BOX)
    assert res.u == pytest.approx([0.0, 0.0, -0.05], abs=1e-15)
    assert res.active


def test_infeasible_returns_best_vertex():
    c = hs([1.0, 1.0, 0.0], 0.5)
    res = filter_velocity([0.0, 0.0, 0.03], c, BOX)
    assert res.infeasible
    assert res.u == pytest.approx([0.1, 0.1, 0.03])
    assert np.array_equal(res.u, best_effort_vertex([0.0, 0.0, 0.03], c, BOX))


def test_box_validation():
    with pytest.raises(ValueError):
        VelocityBox([0.1, 0.0, 0.1])


@settings(max_examples=300)
@given(vec, unit, st.floats(-0.2, 0.2))
def test_output_in_box_and_optimal(u_nom, a, b):
    c = hs(a, b)
    res = filter_velocity(u_nom, c, BOX)
    assert np.all(np.abs(res.u) <= BOX.limits)
    if res.infeasible:
        assert np.abs(a) @ BOX.limits < b
        return
    assert a @ res.u >= b - 1e-12
    assert kkt_residual(u_nom, c, BOX, res.u) <= 1e-9


@settings(max_examples=100)
@given(vec, unit, st.floats(-0.15, 0.15), st.integers(0, 2**32 - 1))
def test_no_feasible_point_is_closer(u_nom, a, b, seed):
    c = hs(a, b)
    res = filter_velocity(u_nom, c, BOX)
    if res.infeasible:
        return
    pts = np.random.default_rng(seed).uniform(-0.1, 0.1, (2000, 3))
    pts = pts[pts @ a >= b]
    d_best = np.linalg.norm(res.u - u_nom)
    if len(pts):
        assert np.min(np.linalg.norm(pts - u_nom, axis=1)) >= d_best - 1e-12


def test_column_search_matches_full_grid():
    rng = np.random.default_rng(5)
    for i in range(30):
        u_nom, c = random_qp_instance(rng, ("inactive", "active", "infeasible")[i % 3], BOX)
        fast = brute_force_filter(u_nom, c, BOX, 0.01)
        full = naive_grid_filter(u_nom, c, BOX, 0.01)
        if full is None:
            assert fast.infeasible
            continue
        assert np.linalg.norm(fast.u - u_nom) == pytest.approx(np.linalg.norm(full - u_nom), abs=1e-12)


def test_brute_force_snaps_feasible_nominal_to_grid():
    res = brute_force_filter([0.0123, -0.0456, 0.0789], hs([1, 0, 0], -1.0), BOX, 1e-3)
    assert res.u == pytest.approx([0.012, -0.046, 0.079], abs=1e-12)


def test_brute_force_rejects_bad_step():
    with pytest.raises(ValueError):
        brute_force_filter(np.zeros(3), hs([1, 0, 0], 0.0), BOX, 0.0)


def test_exact_objective_never_loses_to_grid():
    """Objective sandwich against the 1e-3 grid, with matching infeasibility flags."""
    rng = np.random.default_rng(2024)
    for i in range(60):
        u_nom, c = random_qp_instance(rng, ("inactive", "active", "infeasible")[i % 3], BOX)
        res = filter_velocity(u_nom, c, BOX)
        grid = brute_force_filter(u_nom, c, BOX, 1e-3)
        assert res.infeasible == grid.infeasible
        if res.infeasible:
            continue
        d_exact = np.linalg.norm(res.u - u_nom)
        d_grid = np.linalg.norm(grid.u - u_nom)
        assert d_exact <= d_grid + 1e-12
        assert d_grid <= d_exact + 2 * np.sqrt(3) * 1e-3

import numpy as np
import pytest

from conftest import tiny_scenario_dict
from reach.dynamics import DubinsParams, RelativeParams, SingleIntegrator
from reach.gridfield import FAR, dilate_ball, make_grid, max_norm_of_subzero, sdf_ball
from reach.reachops import ObstacleSchedule
from stpplanner.scenario import parse_scenario_dict
from stpplanner.avoid import (
    buffer_region,
    compute_avoid_region,
    hull_radius,
    mirror_buffer_region,
    position_envelope,
    relative_buffer,
    separation_region,
    static_avoid_brs,
)

PARAMS = DubinsParams(v_min=0.0, v_max=25.0, w_max=2.0, d_r=0.0)
R_C = 50.0


@pytest.fixture(scope="module")
def artifacts():
    return compute_avoid_region(PARAMS, PARAMS, t_bar=2.0, r_c=R_C, half_width=200.0, counts=(21, 21, 12))


@pytest.fixture
def wide_grid():
    return make_grid([-600.0, -600.0], [600.0, 600.0], [61, 61])


def _rel_spacing(art):
    return float(art.avoid.grid.spacing[0])


def test_sensing_distance_covers_capture_radius(artifacts):
    assert artifacts.d_sen >= R_C - _rel_spacing(artifacts)
    assert artifacts.avoid_radius == artifacts.d_sen


def test_avoid_region_shrinks_with_elapsed_time(artifacts):
    times = artifacts.avoid.times
    assert times[0] == pytest.approx(0.0)
    assert times[-1] == pytest.approx(artifacts.t_bar)
    full = artifacts.avoid.at(0.0).subzero().sum()
    last = artifacts.avoid.at(artifacts.t_bar).subzero().sum()
    assert full >= last
    assert artifacts.avoid_trd_radius <= artifacts.avoid_radius + _rel_spacing(artifacts)


def test_longer_horizon_needs_more_room(artifacts):
    short = compute_avoid_region(PARAMS, PARAMS, t_bar=1.0, r_c=R_C, half_width=200.0, counts=(21, 21, 12))
    assert short.d_sen <= artifacts.d_sen + _rel_spacing(artifacts)


def test_avoid_value_inside_and_outside(artifacts):
    assert artifacts.avoid_value(np.array([0.0, 0.0, 0.0])) < 0
    assert artifacts.avoid_value(np.array([1e4, 0.0, 0.0])) == FAR
    assert artifacts.collide_control(np.array([1e4, 0.0, 0.0])) is None


def test_avoidance_control_is_admissible(artifacts):
    x_rel = np.array([artifacts.d_sen - _rel_spacing(artifacts), 0.0, np.pi])
    ctrl = artifacts.avoidance_control(x_rel, 0.0)
    assert ctrl.mode == "avoid"
    v, w = ctrl.u
    assert PARAMS.v_min - 1e-9 <= v <= PARAMS.v_max + 1e-9
    assert abs(w) <= PARAMS.w_max + 1e-9


def test_buffer_is_built_over_breathing_time(artifacts):
    assert artifacts.t_brd == pytest.approx(artifacts.t_bar / 3.0)
    assert artifacts.buffer_radius >= R_C - _rel_spacing(artifacts)


def test_buffer_shrinks_as_budget_grows():
    rel = RelativeParams(vehicle=PARAMS, intruder=PARAMS)
    buffers = {}
    for n_va in (2, 3, 4):
        t_brd = parse_scenario_dict(tiny_scenario_dict(n_va=n_va)).t_brd
        buffers[n_va] = relative_buffer(rel, t_brd, R_C, half_width=200.0, counts=(21, 21, 12)).at(0.0)
    assert buffers[2].grid == buffers[3].grid == buffers[4].grid
    h = float(buffers[2].grid.spacing[0])
    for larger, smaller in ((buffers[2], buffers[3]), (buffers[3], buffers[4])):
        inside = smaller.subzero()
        # 离散误差只允许在零水平集一格以内
        assert np.all(larger.values[inside] <= h)
        assert hull_radius(smaller) <= hull_radius(larger) + h


def test_separation_and_buffer_regions_nest(artifacts, wide_grid):
    h = float(wide_grid.spacing[0])
    base = ObstacleSchedule.static(sdf_ball(wide_grid, [0.0, 0.0], 40.0))
    sep = separation_region(base, artifacts.avoid_full)
    sep_r = max_norm_of_subzero(sep.fields[0])
    assert sep_r == pytest.approx(40.0 + hull_radius(artifacts.avoid_full), abs=1.5 * h)

    buf = buffer_region(sep, artifacts.buffer_full, None)
    buf_r = max_norm_of_subzero(buf.fields[0])
    assert buf_r >= sep_r
    assert buf_r == pytest.approx(sep_r + artifacts.buffer_radius, abs=1.5 * h)
    assert buffer_region(sep, None, None) is sep


def test_mirror_buffer_sums_radii(artifacts, wide_grid):
    h = float(wide_grid.spacing[0])
    base = ObstacleSchedule.static(sdf_ball(wide_grid, [0.0, 0.0], 40.0))
    mirror = mirror_buffer_region(base, artifacts, artifacts.avoid_full)
    expected = 40.0 + artifacts.avoid_trd_radius + artifacts.buffer_radius + artifacts.d_sen
    assert max_norm_of_subzero(mirror.fields[0]) == pytest.approx(expected, abs=2 * h)


def test_position_envelope_speed():
    env = position_envelope(DubinsParams(v_max=30.0, d_r=4.0))
    assert isinstance(env, SingleIntegrator)
    assert env.params.speed == 30.0
    assert env.params.d_r == 4.0


def test_static_brs_of_stationary_vehicle(position_grid):
    still = DubinsParams(v_min=0.0, v_max=0.0, w_max=1.0, d_r=0.0)
    static = sdf_ball(position_grid, [0.0, 0.0], 50.0)
    sched = static_avoid_brs([static], still, t_bar=2.0, r_c=30.0, t_anchor=5.0, grid=position_grid)
    assert len(sched) == 1
    assert sched.times[0] == 5.0
    np.testing.assert_allclose(sched.fields[0].values, dilate_ball(static, 30.0).values, atol=1e-9)


def test_static_brs_without_obstacles(position_grid):
    sched = static_avoid_brs([], PARAMS, t_bar=2.0, r_c=30.0, t_anchor=0.0, grid=position_grid)
    assert sched.is_empty()

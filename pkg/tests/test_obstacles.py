import numpy as np
import pytest

from reach.dynamics import ROLES, SingleIntegrator, SingleIntegratorParams
from reach.gridfield import sdf_ball
from reach.reachops import ObstacleSchedule, augment_capture
from stpplanner.obstacles import CASE_CLASSES, InducedContext, compute_cases, induced_obstacles
from utils.errors import SpanTooShort


def _moving_ball(grid):
    times = np.arange(7, dtype=float)
    stack = np.stack([sdf_ball(grid, [-150.0 + 25.0 * t, 0.0], 20.0).values for t in times])
    return ObstacleSchedule.from_stack(grid, times, stack)


def _context(grid, t_bar=2.0):
    speed = SingleIntegratorParams(25.0, 0.0)
    return InducedContext(
        base=_moving_ball(grid), static_dilated=None,
        frs_dynspec=SingleIntegrator(speed, ROLES["frs"]),
        obstacle_dynspec=SingleIntegrator(speed, ROLES["obstacle"]),
        t_bar=t_bar, t_brd=1.0, r_c=30.0, reinit_iterations=4)


def test_case_registry():
    assert sorted(CASE_CLASSES) == [1, 2, 3, 4, 5]
    assert all(cls.case_id == k for k, cls in CASE_CLASSES.items())


def test_case_one_is_captured_base(position_grid):
    ctx = _context(position_grid)
    one = induced_obstacles(ctx, 1)
    expected = augment_capture(ctx.base, 30.0, 4)
    np.testing.assert_allclose(one.stack(), expected.stack())


def test_rolling_case_trails_the_base(position_grid):
    ctx = _context(position_grid)
    one, two = induced_obstacles(ctx, 1), induced_obstacles(ctx, 2)
    assert two.sample(4.0).interpolate([-50.0, 0.0]) < 0
    assert two.sample(4.0).interpolate([-150.0, 0.0]) < 0
    assert one.sample(4.0).interpolate([-150.0, 0.0]) > 0


def test_lookahead_case_reaches_out(position_grid):
    ctx = _context(position_grid)
    one, three = induced_obstacles(ctx, 1), induced_obstacles(ctx, 3)
    assert one.sample(3.0).interpolate([-75.0, 80.0]) > 0
    assert three.sample(3.0).interpolate([-75.0, 80.0]) < 0
    assert three.sample(3.0).interpolate([-75.0, 200.0]) > 0


def test_compute_cases_runs_all(position_grid):
    results = compute_cases(_context(position_grid))
    assert sorted(results) == [1, 2, 3, 4, 5]
    for sched in results.values():
        np.testing.assert_allclose(sched.times, np.arange(7, dtype=float))
        assert not sched.is_empty()


def test_unknown_case(position_grid):
    with pytest.raises(ValueError):
        induced_obstacles(_context(position_grid), 6)


def test_short_schedule_fails_fast(position_grid):
    with pytest.raises(SpanTooShort):
        compute_cases(_context(position_grid, t_bar=10.0))

import math

import numpy as np
import pytest

from reach.dynamics import ROLES, SingleIntegrator, SingleIntegratorParams
from reach.gridfield import FAR, ScalarField, make_grid, max_norm_of_subzero, sdf_ball
from reach.reachops import (
    ObstacleSchedule,
    augment_capture,
    rolling_frs,
    schedule_shift,
    schedule_union,
    schedule_union_all,
    sensing_distance,
    window_leads,
    windowed_brs,
)
from utils.errors import GridMismatch, NegativeRadius, SpanTooShort


def _ball(grid, r):
    return sdf_ball(grid, [0.0, 0.0], r)


def _empty(grid):
    return ScalarField(grid, np.full(grid.shape, FAR))


def _integrator(role, speed=50.0):
    return SingleIntegrator(SingleIntegratorParams(speed, 0.0), ROLES[role])


def test_schedule_holds_previous_snapshot(position_grid):
    fields = (_ball(position_grid, 50.0), _ball(position_grid, 100.0), _ball(position_grid, 150.0))
    sched = ObstacleSchedule(np.array([0.0, 2.0, 4.0]), fields)
    assert sched.sample(1.0) is fields[0]
    assert sched.sample(2.0) is fields[1]
    assert sched.sample(-3.0) is fields[0]
    assert sched.sample(99.0) is fields[2]
    win = sched.window(1.0, 3.0)
    assert win.times[0] == 0.0
    assert win.times[-1] >= 3.0


def test_schedule_rejects_bad_times(position_grid):
    f = _ball(position_grid, 50.0)
    with pytest.raises(ValueError):
        ObstacleSchedule(np.array([1.0, 1.0]), (f, f))
    with pytest.raises(ValueError):
        ObstacleSchedule(np.array([0.0, 1.0]), (f,))


def test_union_on_merged_lattice(position_grid):
    a = ObstacleSchedule(np.array([0.0, 2.0]), (_ball(position_grid, 50.0), _empty(position_grid)))
    b = ObstacleSchedule.static(_ball(position_grid, 100.0), 1.0)
    u = schedule_union(a, b)
    np.testing.assert_allclose(u.times, [0.0, 1.0, 2.0])
    # b 在 t=0 之前保持首快照
    assert u.sample(0.0).interpolate([90.0, 0.0]) < 0
    assert u.sample(2.0).interpolate([90.0, 0.0]) < 0
    assert u.sample(2.0).interpolate([0.0, 0.0]) == pytest.approx(-100.0, abs=1e-6)


def test_union_lifts_position_schedule(position_grid):
    grid3 = make_grid([-300.0, -300.0, -math.pi], [300.0, 300.0, math.pi], [41, 41, 8], [False, False, True])
    a = ObstacleSchedule.static(_ball(position_grid, 50.0))
    b = ObstacleSchedule.static(ScalarField(grid3, np.full(grid3.shape, FAR)))
    u = schedule_union(a, b)
    assert u.grid == grid3
    assert u.sample(0.0).subzero().any(axis=(0, 1)).all()


def test_union_rejects_unrelated_grids(position_grid, grid2d):
    with pytest.raises(GridMismatch):
        schedule_union(ObstacleSchedule.empty(position_grid), ObstacleSchedule.empty(grid2d))


def test_union_all_and_shift(position_grid):
    assert schedule_union_all([]) is None
    s = ObstacleSchedule.static(_ball(position_grid, 50.0), 1.0)
    np.testing.assert_allclose(schedule_shift(s, 2.5).times, [3.5])
    assert schedule_union_all([s]) is s


def test_augment_capture_grows_by_radius(position_grid):
    h = position_grid.spacing[0]
    s = ObstacleSchedule.static(_ball(position_grid, 50.0))
    grown = augment_capture(s, 60.0)
    assert max_norm_of_subzero(grown.fields[0]) == pytest.approx(110.0, abs=h)
    assert augment_capture(s, 0.0) is s
    with pytest.raises(NegativeRadius):
        augment_capture(s, -1.0)


def test_empty_schedule(position_grid):
    assert ObstacleSchedule.empty(position_grid).is_empty()
    assert not ObstacleSchedule.static(_ball(position_grid, 50.0)).is_empty()


def test_rolling_frs_truncates_early_leads(position_grid):
    h = position_grid.spacing[0]
    times = np.arange(5, dtype=float)
    stack = np.stack([_ball(position_grid, 50.0).values] * len(times))
    base = ObstacleSchedule.from_stack(position_grid, times, stack)
    frs = rolling_frs(base, 2.0, _integrator("frs"))
    radii = [max_norm_of_subzero(f) for f in frs.fields]
    assert radii[0] == pytest.approx(50.0, abs=2 * h)
    assert radii[1] == pytest.approx(100.0, abs=2 * h)
    for r in radii[2:]:
        assert r == pytest.approx(150.0, abs=2 * h)


def test_rolling_frs_needs_span(position_grid):
    base = ObstacleSchedule.from_stack(position_grid, [0.0, 1.0],
                                       np.stack([_ball(position_grid, 50.0).values] * 2))
    with pytest.raises(SpanTooShort):
        rolling_frs(base, 3.0, _integrator("frs"))
    assert rolling_frs(base, 0.0, _integrator("frs")) is base


def test_windowed_brs_static_target(position_grid):
    h = position_grid.spacing[0]
    times = np.arange(4, dtype=float)
    base = ObstacleSchedule.from_stack(position_grid, times,
                                       np.stack([_ball(position_grid, 50.0).values] * len(times)))
    out = windowed_brs(base, 0.0, 2.0, _integrator("obstacle"))
    for f in out.fields:
        assert max_norm_of_subzero(f) == pytest.approx(150.0, abs=2 * h)


def test_windowed_brs_looks_ahead(position_grid):
    h = position_grid.spacing[0]
    times = np.arange(5, dtype=float)
    empty = _empty(position_grid).values
    ball = _ball(position_grid, 50.0).values
    base = ObstacleSchedule.from_stack(position_grid, times, np.stack([empty, empty, empty, ball, ball]))
    out = windowed_brs(base, 1.0, 1.0, _integrator("obstacle"))
    assert not out.fields[0].subzero().any()
    assert not out.fields[1].subzero().any()
    assert max_norm_of_subzero(out.fields[2]) == pytest.approx(100.0, abs=2 * h)
    # 末快照之后保持末快照
    assert max_norm_of_subzero(out.fields[4]) == pytest.approx(100.0, abs=2 * h)


def test_window_leads_stay_inside_window():
    assert window_leads(0.5, 2.5, 1.0) == pytest.approx([0.5, 1.0, 2.0, 2.5])
    assert window_leads(1.0, 1.0, 1.0) == [1.0]
    lo = 10.0 - 20.0 / 3.0
    leads = window_leads(lo, 10.0, 0.0)
    assert leads[0] == pytest.approx(lo)
    assert leads[-1] == pytest.approx(10.0)
    assert all(lo - 1e-9 <= lead <= 10.0 + 1e-9 for lead in leads)
    assert leads == sorted(leads)


def test_windowed_brs_off_lattice_window(position_grid):
    h = position_grid.spacing[0]
    times = np.arange(4, dtype=float)
    base = ObstacleSchedule.from_stack(position_grid, times,
                                       np.stack([_ball(position_grid, 50.0).values] * len(times)))
    out = windowed_brs(base, 0.5, 2.5, _integrator("obstacle"))
    for f in out.fields:
        assert max_norm_of_subzero(f) == pytest.approx(175.0, abs=2 * h)


def test_windowed_brs_rejects_empty_window(position_grid):
    with pytest.raises(ValueError):
        windowed_brs(ObstacleSchedule.empty(position_grid), 2.0, 1.0, _integrator("obstacle"))


def test_sensing_distance_projects_heading(grid3d):
    h = grid3d.spacing[0]
    region = sdf_ball(grid3d, [0.0, 0.0], 0.5, dims=(0, 1))
    assert sensing_distance(region) == pytest.approx(0.5, abs=h)

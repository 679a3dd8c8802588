import math

import numpy as np
import pytest

from reach.dynamics import ROLES, SingleIntegrator, SingleIntegratorParams
from reach.gridfield import ScalarField, max_norm_of_subzero, sdf_ball, sdf_rect
from reach.hjsolver import (
    ReachProblem,
    SchemeState,
    dissipation_bounds,
    lf_step,
    propagate_chain,
    save_lattice,
    signed_hamiltonian,
    solve_brs,
    solve_frs,
)
from reach.reachops import ObstacleSchedule
from utils.errors import CflViolation, GridMismatch, UnboundedSpeed


def _integrator(role="basic", speed=25.0):
    return SingleIntegrator(SingleIntegratorParams(speed, 0.0), ROLES[role])


def _norms(grid):
    return np.linalg.norm(grid.node_coordinates((0, 1)), axis=-1)


def test_analytic_ball_brs(position_grid):
    target = sdf_ball(position_grid, [0.0, 0.0], 100.0)
    tf = solve_brs(ReachProblem(position_grid, target, _integrator(), horizon=4.0, save_dt=1.0))
    h = position_grid.spacing[0]
    assert tf.times == pytest.approx([-4.0, -3.0, -2.0, -1.0, 0.0])
    brs = tf.fields[0]
    assert max_norm_of_subzero(brs) == pytest.approx(200.0, abs=2 * h)
    assert brs.interpolate([200.0 - 2 * h, 0.0]) < 0
    assert brs.interpolate([0.0, 200.0 + 2 * h]) > 0
    # 越往前的快照集合越大
    for later, earlier in zip(tf.fields[1:], tf.fields[:-1]):
        assert np.all(earlier.subzero() | ~later.subzero())


def test_matches_semi_lagrangian_oracle(position_grid):
    target = sdf_ball(position_grid, [0.0, 0.0], 100.0)
    tf = solve_brs(ReachProblem(position_grid, target, _integrator(), horizon=4.0))

    dt, steps = 0.5, 8
    angles = np.linspace(0.0, 2 * math.pi, 32, endpoint=False)
    moves = np.concatenate([[[0.0, 0.0]], 25.0 * dt * np.column_stack([np.cos(angles), np.sin(angles)])])
    nodes = position_grid.node_coordinates((0, 1)).reshape(-1, 2)
    lo, hi = np.array(position_grid.mins), np.array(position_grid.maxs)
    value = target
    for _ in range(steps):
        best = np.min([value.interpolate(np.clip(nodes + m, lo, hi)) for m in moves], axis=0)
        value = ScalarField(position_grid, np.minimum(best.reshape(position_grid.shape), target.values))

    mismatch = value.subzero() != tf.fields[0].subzero()
    band = np.abs(_norms(position_grid) - 200.0) <= 2 * position_grid.spacing[0]
    assert not np.any(mismatch & ~band)


def test_forward_reachable_ball(position_grid):
    start = sdf_ball(position_grid, [0.0, 0.0], 50.0)
    tf = solve_frs(ReachProblem(position_grid, start, _integrator("frs"), horizon=4.0,
                                direction="forward", save_dt=2.0))
    assert tf.times == pytest.approx([0.0, 2.0, 4.0])
    assert max_norm_of_subzero(tf.fields[-1]) == pytest.approx(150.0, abs=2 * position_grid.spacing[0])


def test_obstacle_interior_is_never_reached(position_grid):
    target = sdf_ball(position_grid, [0.0, 0.0], 60.0)
    wall = sdf_rect(position_grid, [90.0, -150.0], [150.0, 150.0])
    tf = solve_brs(ReachProblem(position_grid, target, _integrator(), horizon=8.0,
                                obstacles=ObstacleSchedule.static(wall)))
    brs = tf.fields[0]
    assert not np.any(brs.subzero() & (wall.values < 0))
    # 墙后的点需要绕行，比自由空间更难到达
    free = solve_brs(ReachProblem(position_grid, target, _integrator(), horizon=8.0)).fields[0]
    assert brs.interpolate([240.0, 0.0]) > free.interpolate([240.0, 0.0])


def test_propagate_chain_matches_exact_time_solve(position_grid):
    start = sdf_ball(position_grid, [0.0, 0.0], 50.0)
    dyn = _integrator("frs")
    tf = solve_frs(ReachProblem(position_grid, start, dyn, horizon=2.0, direction="forward",
                                mode="exact-time", save_dt=1.0))
    seen = {}
    batch = np.stack([start.values, start.values])
    propagate_chain(batch, position_grid, dyn, [1.0, 2.0], "forward",
                    on_lead=lambda k, v: seen.__setitem__(k, v.copy()))
    assert seen[0].shape == (2,) + position_grid.shape
    assert np.allclose(seen[0][1], tf.fields[1].values)
    assert np.allclose(seen[1][0], tf.fields[2].values)


def test_cfl_guard(position_grid):
    dyn = _integrator()
    alphas = dissipation_bounds(dyn, position_grid)
    state = SchemeState(position_grid, sdf_ball(position_grid, [0, 0], 100.0).values, 0.0, alphas)
    ham = signed_hamiltonian(dyn, "backward")
    lf_step(state, ham, state.max_dt)
    with pytest.raises(CflViolation):
        lf_step(state, ham, 2 * state.max_dt)


def test_unbounded_speed(position_grid):
    with pytest.raises(UnboundedSpeed):
        dissipation_bounds(_integrator(speed=math.inf), position_grid)


def test_problem_validation(position_grid, grid2d):
    target = sdf_ball(position_grid, [0, 0], 100.0)
    with pytest.raises(ValueError):
        ReachProblem(position_grid, target, _integrator(), horizon=0.0)
    with pytest.raises(GridMismatch):
        ReachProblem(position_grid, sdf_ball(grid2d, [0, 0], 0.5), _integrator(), horizon=1.0)


def test_save_lattice_modes():
    assert save_lattice(3.0, 0.1, save_dt=1.0) == pytest.approx([0, 1, 2, 3])
    assert save_lattice(2.5, 0.1, save_dt=1.0) == pytest.approx([0, 1, 2, 2.5])
    auto = save_lattice(1.0, 0.1)
    assert len(auto) == 11 and auto[-1] == pytest.approx(1.0)
    assert len(save_lattice(100.0, 0.01)) <= 202

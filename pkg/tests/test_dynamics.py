import math

import numpy as np
import pytest

from reach.dynamics import (
    ROLES,
    DubinsAbsolute,
    DubinsParams,
    DubinsRelative,
    RelativeParams,
    SingleIntegrator,
    SingleIntegratorParams,
    controller_from_value,
    flow,
    opt_inputs,
    to_relative,
    wrap_angle,
)
from reach.gridfield import TimeField, make_grid, sdf_ball
from utils.errors import InputOutOfBounds

PARAMS = DubinsParams(0.0, 25.0, 2.0, 6.0)
REL = RelativeParams(PARAMS, PARAMS)

_SPEEDS = np.linspace(0.0, 25.0, 9)
_TURNS = np.linspace(-2.0, 2.0, 9)
_ANGLES = np.linspace(0.0, 2 * math.pi, 144, endpoint=False)


def _ext(values, direction):
    return float(np.min(values) if direction == "min" else np.max(values))


def _disk_term(px, py, radius, direction):
    return _ext(radius * (px * np.cos(_ANGLES) + py * np.sin(_ANGLES)), direction)


def _brute_absolute(x, p, role):
    c, s = math.cos(x[2]), math.sin(x[2])
    return (_ext(_SPEEDS * (p[0] * c + p[1] * s), role.control_dir)
            + _ext(_TURNS * p[2], role.control_dir)
            + _disk_term(p[0], p[1], PARAMS.d_r, role.disturbance_dir))


def _brute_relative(x, p, role):
    own, other = role.control_dir, role.second_player_dir
    c, s = math.cos(x[2]), math.sin(x[2])
    return (_ext(-_SPEEDS * p[0], own)
            + _ext(_TURNS * (p[0] * x[1] - p[1] * x[0] - p[2]), own)
            + _ext(_SPEEDS * (p[0] * c + p[1] * s), other)
            + _ext(_TURNS * p[2], other)
            + 2 * _disk_term(p[0], p[1], PARAMS.d_r, other))


def _samples(n, seed):
    rng = np.random.default_rng(seed)
    xs = np.column_stack([rng.uniform(-300, 300, n), rng.uniform(-300, 300, n), rng.uniform(-math.pi, math.pi, n)])
    ps = rng.normal(size=(n, 3))
    ps /= np.linalg.norm(ps, axis=1, keepdims=True)
    return xs, ps


@pytest.mark.parametrize("role", [r for r in ROLES.values() if r.second_player_dir is None], ids=lambda r: r.name)
def test_absolute_optimizer_matches_brute_force(role):
    dyn = DubinsAbsolute(PARAMS, role)
    xs, ps = _samples(1000, 1)
    for x, p in zip(xs, ps):
        assert opt_inputs(dyn, x, p).hamiltonian == pytest.approx(_brute_absolute(x, p, role), abs=1e-2)


@pytest.mark.parametrize("role", [r for r in ROLES.values() if r.second_player_dir is not None], ids=lambda r: r.name)
def test_relative_optimizer_matches_brute_force(role):
    dyn = DubinsRelative(REL, role)
    xs, ps = _samples(1000, 2)
    for x, p in zip(xs, ps):
        assert opt_inputs(dyn, x, p).hamiltonian == pytest.approx(_brute_relative(x, p, role), abs=1e-2)


@pytest.mark.parametrize("role", [r for r in ROLES.values() if r.second_player_dir is None], ids=lambda r: r.name)
def test_single_integrator_optimizer(role):
    dyn = SingleIntegrator(SingleIntegratorParams(25.0, 6.0), role)
    xs, ps = _samples(200, 3)
    for p in ps[:, :2]:
        expected = _disk_term(p[0], p[1], 25.0, role.control_dir) + _disk_term(p[0], p[1], 6.0, role.disturbance_dir)
        assert opt_inputs(dyn, [0.0, 0.0], p).hamiltonian == pytest.approx(expected, abs=1e-2)


def test_vectorised_hamiltonian_matches_pointwise():
    dyn = DubinsRelative(REL, ROLES["avoid"])
    xs, ps = _samples(50, 4)
    ham = dyn.hamiltonian(list(xs.T), list(ps.T))
    for k in range(len(xs)):
        assert ham[k] == pytest.approx(opt_inputs(dyn, xs[k], ps[k]).hamiltonian)


def test_relative_flow_example():
    dyn = DubinsRelative(REL, ROLES["avoid"])
    out = flow(dyn, [0.0, 100.0, 0.0], u=(25.0, 2.0), d=(0.0, 0.0), u_other=(25.0, 0.0))
    assert out == pytest.approx([200.0, 0.0, -2.0])


def test_absolute_flow_and_bounds():
    dyn = DubinsAbsolute(PARAMS, ROLES["basic"])
    assert flow(dyn, [0.0, 0.0, math.pi / 2], (10.0, 1.0), (0.0, 3.0)) == pytest.approx([0.0, 13.0, 1.0])
    with pytest.raises(InputOutOfBounds):
        flow(dyn, [0.0, 0.0, 0.0], (30.0, 0.0), (0.0, 0.0))
    with pytest.raises(InputOutOfBounds):
        flow(dyn, [0.0, 0.0, 0.0], (10.0, 0.0), (6.0, 6.0))


def test_role_must_fit_dynamics():
    with pytest.raises(ValueError):
        DubinsAbsolute(PARAMS, ROLES["avoid"])
    with pytest.raises(ValueError):
        DubinsRelative(REL, ROLES["basic"])


def test_speed_bounds_relative():
    grid = make_grid([-300, -200, -math.pi], [300, 200, math.pi], [5, 5, 4], [False, False, True])
    alphas = DubinsRelative(REL, ROLES["avoid"]).speed_bounds(grid)
    assert alphas == pytest.approx([25 + 25 + 2 * 200 + 12, 25 + 2 * 300 + 12, 4])


def test_params_validation():
    with pytest.raises(ValueError):
        DubinsParams(10.0, 5.0, 2.0, 0.0)
    with pytest.raises(ValueError):
        DubinsParams(0.0, 5.0, 0.0, 0.0)


def test_to_relative_frame():
    rel = to_relative([100.0, 100.0, math.pi / 2], [100.0, 200.0, math.pi / 2])
    assert rel == pytest.approx([100.0, 0.0, 0.0], abs=1e-9)
    assert float(wrap_angle(math.pi)) == pytest.approx(-math.pi)


def test_controller_steers_towards_target():
    grid = make_grid([-100, -100, -math.pi], [100, 100, math.pi], [21, 21, 8], [False, False, True])
    target = sdf_ball(grid, [50.0, 0.0], 10.0, dims=(0, 1))
    tf = TimeField(np.array([0.0]), (target,))
    dyn = DubinsAbsolute(PARAMS, ROLES["planning"])
    ctrl = controller_from_value(tf, dyn, 0.0, [0.0, 0.0, 0.0])
    assert ctrl.u[0] == pytest.approx(25.0)
    assert ctrl.value == pytest.approx(40.0, abs=1.0)
    away = controller_from_value(tf, dyn, 0.0, [0.0, 0.0, math.pi])
    assert away.u[0] == pytest.approx(0.0)

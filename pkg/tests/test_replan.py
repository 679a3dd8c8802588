import math
from dataclasses import replace

import numpy as np
import pytest

from intrudersim.config import IntruderPlan
from intrudersim.replan import earliest_arrival, initial_set, replan
from intrudersim.simulator import simulate
from reach.gridfield import ScalarField, TimeField, sdf_ball


@pytest.fixture(scope="module")
def attacked(tiny_scenario, intruder_planset):
    t_sa = intruder_planset.plans["A"].departure_time + 2.0
    plan = IntruderPlan(strategy="pursuit", victims=("A",), t_sa=t_sa, injection_rule="boundary")
    scenario = replace(tiny_scenario, sim=replace(tiny_scenario.sim, intruder=plan))
    return scenario, simulate(scenario, intruder_planset)


@pytest.fixture(scope="module")
def replanned(attacked, intruder_planset):
    scenario, log = attacked
    return replan(scenario, intruder_planset, log)


def test_initial_set_contains_state(grid3d):
    x0 = np.array([0.1, -0.2, 0.5])
    init = initial_set(grid3d, x0, float(grid3d.spacing[2]))
    assert init.interpolate(x0) <= 0.0
    assert init.interpolate([0.1, -0.2, 0.5 + math.pi]) > 0.0
    assert init.interpolate([0.8, 0.8, 0.5]) > 0.0


def test_earliest_arrival_picks_first_hit(grid2d):
    target = sdf_ball(grid2d, [0.5, 0.0], 0.1)
    fields = tuple(sdf_ball(grid2d, [0.0, 0.0], r) for r in (0.1, 0.3, 0.45, 0.7))
    frs = TimeField(np.array([2.0, 3.0, 4.0, 5.0]), fields, "forward")
    assert earliest_arrival(frs, target) == pytest.approx(4.0)
    never = TimeField(np.array([2.0]), (ScalarField(grid2d, fields[0].values),), "forward")
    with pytest.raises(ValueError):
        earliest_arrival(never, target)


def test_no_avoidance_means_no_replan(tiny_scenario, intruder_planset):
    log = simulate(tiny_scenario, intruder_planset)
    assert replan(tiny_scenario, intruder_planset, log) is intruder_planset


def test_replan_only_touches_forced_vehicles(replanned, intruder_planset, attacked):
    scenario, log = attacked
    t_resume = log.t_sa + scenario.t_bar
    new_a = replanned.plans["A"]
    assert new_a.replanned_at == pytest.approx(t_resume)
    assert new_a.departure_time >= t_resume - 1e-9
    np.testing.assert_allclose(new_a.vehicle.x0, log.states_at(t_resume)["A"])
    assert new_a.sta > t_resume
    assert replanned.plans["B"] is intruder_planset.plans["B"]
    assert replanned.artifacts is intruder_planset.artifacts


def test_resumed_simulation_completes(replanned, attacked):
    scenario, log = attacked
    t_resume = log.t_sa + scenario.t_bar
    resumed = simulate(scenario, replanned, resume_from=log.prefix(t_resume))
    assert set(resumed.arrivals) == {"A", "B"}
    modes = set(resumed.records.loc[resumed.records["vehicle_id"] == "A", "mode"])
    assert {"avoid", "replanned"} <= modes
    assert any(e["kind"] == "replanned" for e in resumed.events)
    t_end = log.prefix(t_resume).end_time
    before = log.records[log.records["t"] < t_end - 1e-9]
    kept = resumed.records[resumed.records["t"] < t_end - 1e-9]
    assert len(kept) == len(before)
    assert not [e for e in resumed.violations if e["detail"]["other"] != "intruder"]

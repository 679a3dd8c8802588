import json
import logging
import math

import pytest

from conftest import tiny_scenario_dict
from stpplanner.scenario import (
    DEFAULT_N_VA,
    parse_scenario,
    parse_scenario_dict,
    scenario_to_dict,
)
from utils.errors import SchemaError, UnitsError


def test_parse_sorts_by_priority(scenario_dict):
    scenario_dict["vehicles"][0]["priority"] = 5
    scenario = parse_scenario_dict(scenario_dict)
    assert [v.id for v in scenario.vehicles] == ["B", "A"]
    assert scenario.vehicle("A").priority == 5
    with pytest.raises(KeyError):
        scenario.vehicle("Z")


def test_derived_times(scenario_dict):
    scenario = parse_scenario_dict(scenario_dict)
    assert scenario.t_bar == 4.0
    assert scenario.t_brd == pytest.approx(2.0)
    assert scenario.t_rd == pytest.approx(2.0)
    assert scenario.position_grid.ndim == 2


def test_defaults_are_filled(scenario_dict):
    scenario = parse_scenario_dict(scenario_dict)
    p = scenario.planner
    assert p.cfl == 0.5
    assert p.obstacle_space == "position"
    assert p.relative_half_width == pytest.approx(3.0 * p.r_c)
    assert p.departure_slack == p.snapshot_stride
    assert scenario.sim.intruder.strategy == "none"
    assert scenario.sim.avoidance is True


def test_missing_n_va_warns(scenario_dict, caplog):
    del scenario_dict["planner"]["n_va"]
    with caplog.at_level(logging.WARNING, logger="stp"):
        scenario = parse_scenario_dict(scenario_dict)
    assert scenario.planner.n_va == DEFAULT_N_VA == 3
    assert "n_va" in caplog.text


def test_negative_radius_is_schema_error(scenario_dict):
    scenario_dict["vehicles"][1]["target"]["radius"] = -5.0
    with pytest.raises(SchemaError) as exc:
        parse_scenario_dict(scenario_dict)
    assert exc.value.key_path.startswith("vehicles.1.target")


def test_missing_section_is_schema_error(scenario_dict):
    del scenario_dict["grid"]
    with pytest.raises(SchemaError):
        parse_scenario_dict(scenario_dict)


def test_duplicate_priority_rejected(scenario_dict):
    scenario_dict["vehicles"][1]["priority"] = 1
    with pytest.raises(SchemaError, match="priorities"):
        parse_scenario_dict(scenario_dict)


def test_unknown_victim_rejected(scenario_dict):
    scenario_dict["sim"]["intruder"] = {"strategy": "pursuit", "victims": ["Q"]}
    with pytest.raises(SchemaError):
        parse_scenario_dict(scenario_dict)


def test_degrees_are_caught(scenario_dict):
    scenario_dict["vehicles"][0]["x0"][2] = 90.0
    with pytest.raises(UnitsError):
        parse_scenario_dict(scenario_dict)
    data = tiny_scenario_dict()
    data["grid"]["mins"][2], data["grid"]["maxs"][2] = -180.0, 180.0
    with pytest.raises(UnitsError):
        parse_scenario_dict(data)


def test_grid_must_have_periodic_heading(scenario_dict):
    scenario_dict["grid"]["periodic"] = [False, False, False]
    with pytest.raises(SchemaError):
        parse_scenario_dict(scenario_dict)


def test_round_trip_through_dict(scenario_dict):
    scenario_dict["static_obstacles"] = [{"circle": {"center": [400.0, 200.0], "radius": 30.0}},
                                         {"rect": {"min": [300.0, 0.0], "max": [320.0, 50.0]}}]
    scenario_dict["sim"]["intruder"] = {"strategy": "chain", "victims": ["A", "B"], "t_sa": 12.0,
                                        "injection": {"rule": "boundary", "victim": "A"}}
    scenario = parse_scenario_dict(scenario_dict)
    again = parse_scenario_dict(json.loads(json.dumps(scenario_to_dict(scenario))))
    assert again == scenario


def test_parse_from_file(tmp_path, scenario_dict):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(scenario_dict), encoding="utf-8")
    assert parse_scenario(path).name == "tiny"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(SchemaError):
        parse_scenario(path)


def test_overrides(scenario_dict):
    scenario = parse_scenario_dict(scenario_dict)
    assert scenario.with_overrides() == scenario
    half = scenario.with_overrides(grid_scale=0.5)
    assert half.grid.counts == (16, 8, 6)
    tiny = scenario.with_overrides(grid_scale=0.05)
    assert min(tiny.grid.counts) == 3
    other = scenario.with_overrides(n_va=4, snapshot_stride=0.5, seed=9)
    assert other.planner.n_va == 4
    assert other.t_brd == pytest.approx(1.0)
    assert other.planner.snapshot_stride == 0.5
    assert other.sim.seed == 9
    assert math.isclose(other.t_bar, scenario.t_bar)

import math
import os
import sys
import tempfile
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
os.environ.setdefault("STP_LOG_DIR", os.path.join(tempfile.gettempdir(), "stp-test-logs"))

from reach.gridfield import make_grid  # noqa: E402
from stpplanner.planner import basic_stp, plan_all  # noqa: E402
from stpplanner.scenario import parse_scenario_dict  # noqa: E402


@pytest.fixture
def grid2d():
    return make_grid([-1.0, -1.0], [1.0, 1.0], [41, 41])


@pytest.fixture
def grid3d():
    return make_grid([-1.0, -1.0, -math.pi], [1.0, 1.0, math.pi], [21, 21, 12], [False, False, True])


@pytest.fixture
def position_grid():
    return make_grid([-300.0, -300.0], [300.0, 300.0], [41, 41])


def tiny_scenario_dict(**planner):
    """两架飞行器、小网格、短航程的场景，供规划与仿真测试使用。B 在 A 的障碍消失后才出发。"""
    return {
        "name": "tiny",
        "grid": {"mins": [0.0, 0.0, -math.pi], "maxs": [800.0, 400.0, math.pi],
                 "counts": [33, 17, 12], "periodic": [False, False, True]},
        "dynamics": {"v_min": 0.0, "v_max": 25.0, "w_max": 2.0, "d_r": 0.0},
        "intruder": {"v_min": 0.0, "v_max": 25.0, "w_max": 2.0, "d_r": 0.0, "iat": 4.0},
        "planner": {"n_va": 2, "r_c": 50.0, "eps_track": 5.0, "control_dt": 0.5,
                    "snapshot_stride": 1.0, "relative_counts": [21, 21, 12],
                    "reinit_iterations": 2, "replan_max_horizon": 60.0, **planner},
        "vehicles": [
            {"id": "A", "priority": 1, "x0": [100.0, 100.0, 0.0],
             "target": {"center": [650.0, 100.0], "radius": 60.0}, "sta": 30.0},
            {"id": "B", "priority": 2, "x0": [100.0, 300.0, 0.0],
             "target": {"center": [650.0, 300.0], "radius": 60.0}, "sta": 70.0},
        ],
        "sim": {"dt": 0.5, "disturbance": "none", "seed": 1},
    }


@pytest.fixture
def scenario_dict():
    return tiny_scenario_dict()


@pytest.fixture(scope="session")
def tiny_scenario():
    return parse_scenario_dict(tiny_scenario_dict())


@pytest.fixture(scope="session")
def basic_planset(tiny_scenario):
    return basic_stp(tiny_scenario)


@pytest.fixture(scope="session")
def intruder_planset(tiny_scenario):
    return plan_all(tiny_scenario)

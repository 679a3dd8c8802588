"""
reach 子命令：从问题文件求解单个 BRS / FRS，快照写为 HJVF 序列。
"""
import json
from pathlib import Path
from typing import Any, Dict, Optional

import jsonschema
from jsonschema.exceptions import best_match

from reach.dynamics import ROLES, DubinsParams, RelativeParams, SingleIntegratorParams, make_dynspec
from reach.gridfield import TimeField, make_grid, sdf_ball, sdf_rect, set_union
from reach.hjsolver import ReachProblem, solve_brs, solve_frs
from reach.reachops import ObstacleSchedule
from stpplanner.scenario import _DUBINS, _NUM, _POS, _obj
from utils.errors import SchemaError
from utils.hjvf import write_sequence
from utils.logger import log_info

from .base_stage import BaseStage

FIELDS_INDEX = "fields.json"

_SHAPE = {"oneOf": [
    _obj({"circle": _obj({"center": {"type": "array", "items": _NUM, "minItems": 1}, "radius": _POS},
                         ["center", "radius"])}, ["circle"]),
    _obj({"rect": _obj({"min": {"type": "array", "items": _NUM, "minItems": 1},
                        "max": {"type": "array", "items": _NUM, "minItems": 1}}, ["min", "max"])}, ["rect"]),
]}

REACH_SCHEMA: Dict[str, Any] = _obj({
    "name": {"type": "string"},
    "grid": _obj({
        "mins": {"type": "array", "items": _NUM, "minItems": 1},
        "maxs": {"type": "array", "items": _NUM, "minItems": 1},
        "counts": {"type": "array", "items": {"type": "integer", "minimum": 3}, "minItems": 1},
        "periodic": {"type": "array", "items": {"type": "boolean"}, "minItems": 1},
    }, ["mins", "maxs", "counts", "periodic"]),
    "dynamics": _obj({
        "kind": {"enum": ["single-integrator", "dubins-absolute", "dubins-relative"]},
        "role": {"enum": sorted(ROLES)},
        "speed": {"type": "number", "minimum": 0},
        "d_r": {"type": "number", "minimum": 0},
        "vehicle": _DUBINS,
        "intruder": _DUBINS,
    }, ["kind"]),
    "target": _SHAPE,
    "obstacles": {"type": "array", "items": _SHAPE},
    "horizon": _POS,
    "direction": {"enum": ["backward", "forward"]},
    "mode": {"enum": ["reach-exists", "exact-time"]},
    "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    "save_dt": _POS,
}, ["grid", "dynamics", "target", "horizon"])


def _shape_field(grid, shape: Dict[str, Any]):
    if "circle" in shape:
        c = shape["circle"]
        return sdf_ball(grid, c["center"], c["radius"], dims=range(len(c["center"])))
    r = shape["rect"]
    return sdf_rect(grid, r["min"], r["max"], dims=range(len(r["min"])))


def _dynspec(d: Dict[str, Any], ndim: int):
    role = ROLES[d.get("role", "basic")]
    kind = d["kind"]
    try:
        if kind == "single-integrator":
            params = SingleIntegratorParams(float(d.get("speed", 0.0)), float(d.get("d_r", 0.0)), ndim)
        elif kind == "dubins-absolute":
            params = DubinsParams(**d["vehicle"])
        else:
            params = RelativeParams(DubinsParams(**d["vehicle"]), DubinsParams(**d["intruder"]))
    except (KeyError, ValueError) as e:
        raise SchemaError(f"bad {kind} parameters: {e}", "dynamics") from e
    return make_dynspec(kind, params, role)


def parse_reach_problem(data: Dict[str, Any]) -> ReachProblem:
    error = best_match(jsonschema.Draft7Validator(REACH_SCHEMA).iter_errors(data))
    if error is not None:
        raise SchemaError(error.message, ".".join(str(p) for p in error.absolute_path) or "<root>")
    g = data["grid"]
    try:
        grid = make_grid(g["mins"], g["maxs"], g["counts"], g["periodic"])
        target = _shape_field(grid, data["target"])
        obstacles = None
        if data.get("obstacles"):
            fields = [_shape_field(grid, s) for s in data["obstacles"]]
            merged = fields[0]
            for f in fields[1:]:
                merged = set_union(merged, f)
            obstacles = ObstacleSchedule.static(merged)
    except ValueError as e:
        raise SchemaError(str(e), "grid") from e
    return ReachProblem(
        grid=grid, target=target, dynspec=_dynspec(data["dynamics"], grid.ndim),
        horizon=float(data["horizon"]), direction=data.get("direction", "backward"),
        mode=data.get("mode", "reach-exists"), obstacles=obstacles,
        cfl_factor=float(data.get("cfl", 0.5)), save_dt=data.get("save_dt"))


class ReachStage(BaseStage):
    """求解单个可达集问题。"""

    def __init__(self, out_dir: str, problem: str, **kwargs):
        super().__init__(out_dir, **kwargs)
        self.problem_path = Path(problem)
        self.problem_data: Optional[Dict[str, Any]] = None
        self.timefield: Optional[TimeField] = None

    def load(self) -> ReachProblem:
        log_info(f"从 {self.problem_path} 加载可达集问题...")
        try:
            self.problem_data = json.loads(self.problem_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise SchemaError(f"invalid JSON: {e}") from e
        problem = parse_reach_problem(self.problem_data)
        if self.grid_scale is not None:
            grid = problem.grid.scaled(self.grid_scale)
            problem = parse_reach_problem({**self.problem_data, "grid": grid.to_dict()})
        if self.snapshot_every is not None:
            problem.save_dt = float(self.snapshot_every)
        return problem

    def execute(self) -> TimeField:
        problem = self.load()
        solve = solve_brs if problem.direction == "backward" else solve_frs
        self.timefield = solve(problem)
        entries = write_sequence(self.out_dir / "fields", "V", self.timefield.times, self.timefield.fields)
        index = {"direction": problem.direction, "snapshots": entries}
        (self.out_dir / FIELDS_INDEX).write_text(json.dumps(index, indent=2), encoding="utf-8")
        return self.timefield

    def manifest_extra(self) -> Dict[str, Any]:
        return {"problem": self.problem_data}

    def get_status(self) -> str:
        if self.timefield is None:
            return f"问题 {self.problem_path}: 未求解"
        tf = self.timefield
        final = tf.fields[0] if tf.direction == "backward" else tf.fields[-1]
        inside = int((final.values <= 0).sum())
        return f"问题 {self.problem_path}: {len(tf.times)} 个快照, 最终集合 {inside} 个节点"

"""
场景描述：JSON 读取、Schema 校验、默认值与序列化。

所有角度用弧度，距离用米，时间用秒。
"""
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import jsonschema
from jsonschema.exceptions import best_match

from intrudersim.config import IntruderPlan, SimConfig
from reach.dynamics import DubinsParams
from reach.gridfield import Grid, ScalarField, make_grid, sdf_ball, sdf_rect
from utils.errors import SchemaError, UnitsError
from utils.logger import log_info, log_warning

DEFAULT_N_VA = 3

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_TRIPLE = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}


def _obj(properties: Dict[str, Any], required=()) -> Dict[str, Any]:
    return {"type": "object", "properties": properties, "required": list(required),
            "additionalProperties": False}


_DUBINS = _obj({"v_min": _NONNEG, "v_max": _NONNEG, "w_max": _POS, "d_r": _NONNEG},
               ["v_min", "v_max", "w_max", "d_r"])

SCENARIO_SCHEMA: Dict[str, Any] = _obj({
    "name": {"type": "string"},
    "grid": _obj({
        "mins": {"type": "array", "items": _NUM, "minItems": 1},
        "maxs": {"type": "array", "items": _NUM, "minItems": 1},
        "counts": {"type": "array", "items": {"type": "integer", "minimum": 3}, "minItems": 1},
        "periodic": {"type": "array", "items": {"type": "boolean"}, "minItems": 1},
    }, ["mins", "maxs", "counts", "periodic"]),
    "dynamics": _DUBINS,
    "intruder": _obj({"v_min": _NONNEG, "v_max": _NONNEG, "w_max": _POS, "d_r": _NONNEG, "iat": _POS},
                     ["v_min", "v_max", "w_max", "d_r", "iat"]),
    "planner": _obj({
        "n_va": {"type": "integer", "minimum": 1},
        "r_c": _POS,
        "eps_track": _NONNEG,
        "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "control_dt": _POS,
        "snapshot_stride": _POS,
        "relative_half_width": _POS,
        "relative_counts": {"type": "array", "items": {"type": "integer", "minimum": 3},
                            "minItems": 3, "maxItems": 3},
        "obstacle_space": {"enum": ["position", "state"]},
        "departure_slack": _NONNEG,
        "early_departure": _NONNEG,
        "replan_mode": {"enum": ["intruder", "basic"]},
        "replan_slack": _NONNEG,
        "replan_max_horizon": _POS,
        "reinit_iterations": {"type": "integer", "minimum": 1},
        "horizon_pad": _NONNEG,
    }, ["r_c"]),
    "vehicles": {"type": "array", "minItems": 1, "items": _obj({
        "id": {"type": "string", "minLength": 1},
        "priority": {"type": "integer"},
        "x0": _TRIPLE,
        "target": _obj({"center": _PAIR, "radius": _POS}, ["center", "radius"]),
        "sta": _NONNEG,
        "dynamics": _DUBINS,
    }, ["id", "priority", "x0", "target", "sta"])},
    "static_obstacles": {"type": "array", "items": {"oneOf": [
        _obj({"circle": _obj({"center": _PAIR, "radius": _POS}, ["center", "radius"])}, ["circle"]),
        _obj({"rect": _obj({"min": _PAIR, "max": _PAIR}, ["min", "max"])}, ["rect"]),
    ]}},
    "sim": _obj({
        "dt": _POS,
        "disturbance": {"enum": ["none", "random", "worst"]},
        "horizon": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "avoidance": {"type": "boolean"},
        "victim_control": {"enum": ["nominal", "collide"]},
        "intruder": _obj({
            "strategy": {"enum": ["none", "waypoints", "pursuit", "chain"]},
            "victims": {"type": "array", "items": {"type": "string"}},
            "waypoints": {"type": "array", "items": _PAIR},
            "t_sa": _NONNEG,
            "injection": _obj({
                "rule": {"enum": ["explicit", "boundary"]},
                "state": _TRIPLE,
                "victim": {"type": "string"},
            }, ["rule"]),
        }, ["strategy"]),
    }),
}, ["grid", "dynamics", "intruder", "planner", "vehicles"])


@dataclass(frozen=True)
class VehicleSpec:
    id: str
    priority: int
    x0: Tuple[float, float, float]
    target_center: Tuple[float, float]
    target_radius: float
    sta: float
    dynamics: Optional[DubinsParams] = None

    def target_value(self, x) -> float:
        """目标集的有符号距离（位置平面）。"""
        return math.hypot(x[0] - self.target_center[0], x[1] - self.target_center[1]) - self.target_radius

    def target_field(self, grid: Grid) -> ScalarField:
        return sdf_ball(grid, self.target_center, self.target_radius, dims=(0, 1))


@dataclass(frozen=True)
class StaticObstacle:
    kind: str
    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = 0.0
    lo: Tuple[float, float] = (0.0, 0.0)
    hi: Tuple[float, float] = (0.0, 0.0)

    def field(self, grid: Grid) -> ScalarField:
        if self.kind == "circle":
            return sdf_ball(grid, self.center, self.radius, dims=(0, 1))
        return sdf_rect(grid, self.lo, self.hi, dims=(0, 1))


@dataclass(frozen=True)
class PlannerOptions:
    n_va: int = DEFAULT_N_VA
    r_c: float = 100.0
    eps_track: float = 5.0
    cfl: float = 0.5
    control_dt: float = 0.1
    snapshot_stride: float = 0.1
    relative_half_width: float = 300.0
    relative_counts: Tuple[int, int, int] = (41, 41, 21)
    obstacle_space: str = "position"
    departure_slack: float = 0.1
    early_departure: float = 0.0
    replan_mode: str = "intruder"
    replan_slack: float = 0.1
    replan_max_horizon: float = 200.0
    reinit_iterations: int = 8
    horizon_pad: float = 0.0


@dataclass(frozen=True)
class Scenario:
    grid: Grid
    dynamics: DubinsParams
    intruder: DubinsParams
    t_bar: float
    planner: PlannerOptions
    vehicles: Tuple[VehicleSpec, ...]
    static_obstacles: Tuple[StaticObstacle, ...] = ()
    sim: SimConfig = field(default_factory=SimConfig)
    name: str = "scenario"

    @property
    def t_brd(self) -> float:
        return self.t_bar / self.planner.n_va

    @property
    def t_rd(self) -> float:
        return self.t_bar - self.t_brd

    @property
    def position_grid(self) -> Grid:
        return self.grid.slice_dims(self.grid.position_dims)

    def vehicle(self, vehicle_id: str) -> VehicleSpec:
        for v in self.vehicles:
            if v.id == vehicle_id:
                return v
        raise KeyError(vehicle_id)

    def params_of(self, vehicle: VehicleSpec) -> DubinsParams:
        return vehicle.dynamics or self.dynamics

    def with_overrides(self, n_va: Optional[int] = None, grid_scale: Optional[float] = None,
                       snapshot_stride: Optional[float] = None, seed: Optional[int] = None) -> "Scenario":
        scenario = self
        if n_va is not None:
            scenario = replace(scenario, planner=replace(scenario.planner, n_va=int(n_va)))
        if grid_scale is not None:
            scenario = replace(scenario, grid=scenario.grid.scaled(float(grid_scale)))
        if snapshot_stride is not None:
            scenario = replace(scenario, planner=replace(scenario.planner, snapshot_stride=float(snapshot_stride)))
        if seed is not None:
            scenario = replace(scenario, sim=replace(scenario.sim, seed=int(seed)))
        return scenario


def _validate(data: Dict[str, Any]):
    validator = jsonschema.Draft7Validator(SCENARIO_SCHEMA)
    error = best_match(validator.iter_errors(data))
    if error is not None:
        key_path = ".".join(str(p) for p in error.absolute_path) or "<root>"
        raise SchemaError(error.message, key_path)


def _check_units(data: Dict[str, Any]):
    for k, v in enumerate(data["vehicles"]):
        if abs(v["x0"][2]) > 2 * math.pi:
            raise UnitsError(f"vehicles.{k}.x0: heading {v['x0'][2]} exceeds 2π (degrees?)")
    injection = data.get("sim", {}).get("intruder", {}).get("injection", {})
    if "state" in injection and abs(injection["state"][2]) > 2 * math.pi:
        raise UnitsError("sim.intruder.injection.state: heading exceeds 2π (degrees?)")
    grid = data["grid"]
    for k, per in enumerate(grid["periodic"]):
        if per and k < len(grid["maxs"]) and max(abs(grid["mins"][k]), abs(grid["maxs"][k])) > 2 * math.pi + 1e-9:
            raise UnitsError(f"grid: periodic dim {k} bounds exceed 2π (degrees?)")


def _dubins(d: Dict[str, Any]) -> DubinsParams:
    try:
        return DubinsParams(d["v_min"], d["v_max"], d["w_max"], d["d_r"])
    except ValueError as e:
        raise SchemaError(str(e), "dynamics") from e


def parse_scenario_dict(data: Dict[str, Any]) -> Scenario:
    _validate(data)
    _check_units(data)

    g = data["grid"]
    try:
        grid = make_grid(g["mins"], g["maxs"], g["counts"], g["periodic"])
    except ValueError as e:
        raise SchemaError(str(e), "grid") from e
    if grid.ndim != 3 or grid.periodic != (False, False, True):
        raise SchemaError("grid must be (x, y, heading) with a periodic heading dim", "grid")

    p = data["planner"]
    if "n_va" not in p:
        log_warning(f"⚠️ planner.n_va 未配置，使用默认值 {DEFAULT_N_VA}")
    control_dt = float(p.get("control_dt", 0.1))
    stride = float(p.get("snapshot_stride", control_dt))
    r_c = float(p["r_c"])
    planner = PlannerOptions(
        n_va=int(p.get("n_va", DEFAULT_N_VA)),
        r_c=r_c,
        eps_track=float(p.get("eps_track", 5.0)),
        cfl=float(p.get("cfl", 0.5)),
        control_dt=control_dt,
        snapshot_stride=stride,
        relative_half_width=float(p.get("relative_half_width", 3.0 * r_c)),
        relative_counts=tuple(int(c) for c in p.get("relative_counts", (41, 41, 21))),
        obstacle_space=p.get("obstacle_space", "position"),
        departure_slack=float(p.get("departure_slack", stride)),
        early_departure=float(p.get("early_departure", 0.0)),
        replan_mode=p.get("replan_mode", "intruder"),
        replan_slack=float(p.get("replan_slack", stride)),
        replan_max_horizon=float(p.get("replan_max_horizon", 200.0)),
        reinit_iterations=int(p.get("reinit_iterations", 8)),
        horizon_pad=float(p.get("horizon_pad", 0.0)),
    )

    vehicles = []
    for v in data["vehicles"]:
        vehicles.append(VehicleSpec(
            id=v["id"],
            priority=int(v["priority"]),
            x0=tuple(float(c) for c in v["x0"]),
            target_center=tuple(float(c) for c in v["target"]["center"]),
            target_radius=float(v["target"]["radius"]),
            sta=float(v["sta"]),
            dynamics=_dubins(v["dynamics"]) if "dynamics" in v else None,
        ))
    priorities = [v.priority for v in vehicles]
    if len(set(priorities)) != len(priorities):
        raise SchemaError("vehicle priorities must be distinct", "vehicles")
    ids = [v.id for v in vehicles]
    if len(set(ids)) != len(ids):
        raise SchemaError("vehicle ids must be distinct", "vehicles")
    vehicles.sort(key=lambda v: v.priority)

    statics = []
    for item in data.get("static_obstacles", []):
        if "circle" in item:
            c = item["circle"]
            statics.append(StaticObstacle("circle", center=tuple(c["center"]), radius=float(c["radius"])))
        else:
            r = item["rect"]
            if not all(b > a for a, b in zip(r["min"], r["max"])):
                raise SchemaError("rect max must exceed min", "static_obstacles")
            statics.append(StaticObstacle("rect", lo=tuple(r["min"]), hi=tuple(r["max"])))

    intruder_data = data["intruder"]
    intruder = _dubins(intruder_data)
    sim = _parse_sim(data.get("sim", {}), control_dt, set(ids))

    scenario = Scenario(
        grid=grid,
        dynamics=_dubins(data["dynamics"]),
        intruder=intruder,
        t_bar=float(intruder_data["iat"]),
        planner=planner,
        vehicles=tuple(vehicles),
        static_obstacles=tuple(statics),
        sim=sim,
        name=data.get("name", "scenario"),
    )
    log_info(f"✅ 场景 {scenario.name}: {len(vehicles)} 架飞行器, t̄={scenario.t_bar}s, n_va={planner.n_va}")
    return scenario


def _parse_sim(s: Dict[str, Any], control_dt: float, ids: set) -> SimConfig:
    intr = s.get("intruder", {"strategy": "none"})
    injection = intr.get("injection", {"rule": "boundary"})
    for vid in list(intr.get("victims", [])) + ([injection["victim"]] if "victim" in injection else []):
        if vid not in ids:
            raise SchemaError(f"unknown vehicle id {vid!r}", "sim.intruder.victims")
    try:
        plan = IntruderPlan(
            strategy=intr["strategy"],
            victims=tuple(intr.get("victims", ())),
            waypoints=tuple(tuple(float(c) for c in w) for w in intr.get("waypoints", ())),
            t_sa=float(intr.get("t_sa", 0.0)),
            injection_rule=injection["rule"],
            injection_state=tuple(float(c) for c in injection["state"]) if "state" in injection else None,
            injection_victim=injection.get("victim"),
        )
        return SimConfig(
            dt=float(s.get("dt", control_dt)),
            disturbance=s.get("disturbance", "none"),
            intruder=plan,
            horizon=s.get("horizon"),
            seed=int(s.get("seed", 0)),
            avoidance=bool(s.get("avoidance", True)),
            victim_control=s.get("victim_control", "nominal"),
        )
    except ValueError as e:
        raise SchemaError(str(e), "sim") from e


def parse_scenario(path) -> Scenario:
    path = Path(path)
    log_info(f"从 {path} 加载场景...")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e}", "<root>") from e
    return parse_scenario_dict(data)


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    """序列化为与 parse_scenario_dict 兼容的字典（所有默认值显式写出）。"""
    p = scenario.planner
    sim = scenario.sim
    intr = sim.intruder
    injection: Dict[str, Any] = {"rule": intr.injection_rule}
    if intr.injection_state is not None:
        injection["state"] = list(intr.injection_state)
    if intr.injection_victim is not None:
        injection["victim"] = intr.injection_victim

    def vehicle(v: VehicleSpec) -> Dict[str, Any]:
        out = {"id": v.id, "priority": v.priority, "x0": list(v.x0),
               "target": {"center": list(v.target_center), "radius": v.target_radius}, "sta": v.sta}
        if v.dynamics is not None:
            out["dynamics"] = v.dynamics.to_dict()
        return out

    def static(o: StaticObstacle) -> Dict[str, Any]:
        if o.kind == "circle":
            return {"circle": {"center": list(o.center), "radius": o.radius}}
        return {"rect": {"min": list(o.lo), "max": list(o.hi)}}

    return {
        "name": scenario.name,
        "grid": scenario.grid.to_dict(),
        "dynamics": scenario.dynamics.to_dict(),
        "intruder": {**scenario.intruder.to_dict(), "iat": scenario.t_bar},
        "planner": {
            "n_va": p.n_va, "r_c": p.r_c, "eps_track": p.eps_track, "cfl": p.cfl,
            "control_dt": p.control_dt, "snapshot_stride": p.snapshot_stride,
            "relative_half_width": p.relative_half_width, "relative_counts": list(p.relative_counts),
            "obstacle_space": p.obstacle_space, "departure_slack": p.departure_slack,
            "early_departure": p.early_departure, "replan_mode": p.replan_mode,
            "replan_slack": p.replan_slack, "replan_max_horizon": p.replan_max_horizon,
            "reinit_iterations": p.reinit_iterations, "horizon_pad": p.horizon_pad,
        },
        "vehicles": [vehicle(v) for v in scenario.vehicles],
        "static_obstacles": [static(o) for o in scenario.static_obstacles],
        "sim": {
            "dt": sim.dt, "disturbance": sim.disturbance, "horizon": sim.horizon, "seed": sim.seed,
            "avoidance": sim.avoidance, "victim_control": sim.victim_control,
            "intruder": {
                "strategy": intr.strategy, "victims": list(intr.victims),
                "waypoints": [list(w) for w in intr.waypoints], "t_sa": intr.t_sa,
                "injection": injection,
            },
        },
    }

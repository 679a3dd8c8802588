"""
PlanSet 目录持久化：manifest.json + HJVF 快照 + 每架飞行器的轨迹 CSV。
"""
import json
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from reach.dynamics import ROLE_AVOID, ROLE_BUFFER, DubinsParams, DubinsRelative, RelativeParams
from reach.gridfield import TimeField
from reach.reachops import ObstacleSchedule
from stpplanner.avoid import AvoidArtifacts
from stpplanner.planner import PlanSet, VehiclePlan, planning_dynspec
from stpplanner.scenario import VehicleSpec, parse_scenario_dict, scenario_to_dict
from utils.hjvf import read_sequence, write_sequence
from utils.logger import log_info

MANIFEST = "manifest.json"


def _vehicle_dict(v: VehicleSpec) -> Dict[str, Any]:
    out = {"id": v.id, "priority": v.priority, "x0": list(v.x0), "target_center": list(v.target_center),
           "target_radius": v.target_radius, "sta": v.sta}
    if v.dynamics is not None:
        out["dynamics"] = v.dynamics.to_dict()
    return out


def _vehicle_from(d: Dict[str, Any]) -> VehicleSpec:
    return VehicleSpec(id=d["id"], priority=int(d["priority"]), x0=tuple(d["x0"]),
                       target_center=tuple(d["target_center"]), target_radius=float(d["target_radius"]),
                       sta=float(d["sta"]), dynamics=DubinsParams(**d["dynamics"]) if "dynamics" in d else None)


def save_planset(planset: PlanSet, directory, save_totals: bool = True) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest: Dict[str, Any] = {
        "scenario": scenario_to_dict(planset.scenario),
        "mode": planset.mode,
        "order": list(planset.plans.keys()),
        "vehicles": {},
        "artifacts": {},
        "artifact_keys": {},
    }
    for vid, plan in planset.plans.items():
        traj_name = f"trajectory_{vid}.csv"
        plan.trajectory.to_csv(directory / traj_name, index=False)
        entry = {
            "vehicle": _vehicle_dict(plan.vehicle),
            "params": plan.params.to_dict(),
            "ldt": plan.ldt,
            "departure": plan.departure_time,
            "arrival": plan.arrival_time,
            "replanned_at": plan.replanned_at,
            "mode": plan.mode,
            "trajectory": traj_name,
            "value": write_sequence(directory / "values", f"{vid}", plan.value.times, plan.value.fields),
            "total": None,
        }
        if save_totals and plan.total is not None:
            entry["total"] = write_sequence(directory / "obstacles", f"{vid}", plan.total.times, plan.total.fields)
        manifest["vehicles"][vid] = entry

    keys: Dict[int, str] = {}
    for vid, art in planset.artifacts.items():
        key = keys.setdefault(id(art), f"A{len(keys)}")
        manifest["artifact_keys"][vid] = key
        if key in manifest["artifacts"]:
            continue
        manifest["artifacts"][key] = {
            "vehicle_params": art.dynspec.params.vehicle.to_dict(),
            "t_bar": art.t_bar, "t_brd": art.t_brd, "r_c": art.r_c, "d_sen": art.d_sen,
            "avoid": write_sequence(directory / "avoid", f"{key}_avoid", art.avoid.times, art.avoid.fields),
            "buffer": write_sequence(directory / "avoid", f"{key}_buffer", art.buffer.times, art.buffer.fields),
        }
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, ensure_ascii=False), encoding="utf-8")
    log_info(f"✅ PlanSet 已写入 {directory}")
    return directory / MANIFEST


def load_planset(directory) -> PlanSet:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text(encoding="utf-8"))
    scenario = parse_scenario_dict(manifest["scenario"])
    mode = manifest["mode"]

    plans: Dict[str, VehiclePlan] = {}
    for vid in manifest["order"]:
        entry = manifest["vehicles"][vid]
        params = DubinsParams(**entry["params"])
        plan_mode = entry.get("mode", mode)
        times, fields = read_sequence(directory / "values", entry["value"])
        total: Optional[ObstacleSchedule] = None
        if entry.get("total"):
            t_times, t_fields = read_sequence(directory / "obstacles", entry["total"])
            total = ObstacleSchedule(t_times, tuple(t_fields))
        plans[vid] = VehiclePlan(
            vehicle=_vehicle_from(entry["vehicle"]),
            params=params,
            value=TimeField(times, tuple(fields), "backward"),
            dynspec=planning_dynspec(params, plan_mode),
            trajectory=pd.read_csv(directory / entry["trajectory"]),
            ldt=float(entry["ldt"]),
            departure_time=float(entry["departure"]),
            arrival_time=float(entry["arrival"]),
            total=total,
            replanned_at=entry.get("replanned_at"),
            mode=plan_mode,
        )

    cache: Dict[str, AvoidArtifacts] = {}
    artifacts: Dict[str, AvoidArtifacts] = {}
    for vid, key in manifest["artifact_keys"].items():
        if key not in cache:
            a = manifest["artifacts"][key]
            rel = RelativeParams(vehicle=DubinsParams(**a["vehicle_params"]), intruder=scenario.intruder)
            a_times, a_fields = read_sequence(directory / "avoid", a["avoid"])
            b_times, b_fields = read_sequence(directory / "avoid", a["buffer"])
            cache[key] = AvoidArtifacts(
                avoid=TimeField(a_times, tuple(a_fields), "backward"),
                buffer=TimeField(b_times, tuple(b_fields), "backward"),
                dynspec=DubinsRelative(rel, ROLE_AVOID),
                buffer_dynspec=DubinsRelative(rel, ROLE_BUFFER),
                t_bar=float(a["t_bar"]), t_brd=float(a["t_brd"]), r_c=float(a["r_c"]),
            )
        artifacts[vid] = cache[key]
    log_info(f"✅ 从 {directory} 载入 {len(plans)} 个规划")
    return PlanSet(scenario, plans, artifacts, mode)

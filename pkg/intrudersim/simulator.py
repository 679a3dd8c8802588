"""
闭环仿真：名义控制 u^PP、入侵者出现后的避让切换、扰动策略与违规记录。
"""
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Set

import numpy as np
import pandas as pd

from intrudersim.config import SimConfig
from intrudersim.strategies import IntruderView, boundary_injection, evasion_control, make_strategy
from reach.dynamics import ROLE_BASIC, ControlSample, DubinsAbsolute, flow, to_relative, wrap_angle
from reach.gridfield import FAR
from stpplanner.planner import PlanSet
from stpplanner.scenario import Scenario
from utils.errors import MissingPlan, SeparationBreach
from utils.logger import log_error, log_info, log_warning

RECORD_COLUMNS = ["t", "vehicle_id", "x", "y", "theta", "u_v", "u_w", "d_x", "d_y", "mode", "v_avoid", "active"]
INTRUDER_COLUMNS = ["t", "x", "y", "theta", "u_v", "u_w"]
MODES = ("nominal", "avoid", "replanned")


@dataclass
class SimLog:
    records: pd.DataFrame
    intruder: pd.DataFrame
    events: List[Dict[str, object]]
    avoid_start: Dict[str, float]
    arrivals: Dict[str, float]
    t_sa: Optional[float]
    t_bar: float
    seed: int

    @property
    def violations(self) -> List[Dict[str, object]]:
        return [e for e in self.events if e["kind"] == "violation"]

    @property
    def end_time(self) -> float:
        return float(self.records["t"].max()) if not self.records.empty else 0.0

    def states_at(self, t: float) -> Dict[str, np.ndarray]:
        """各飞行器在 t 时刻（或之前最后一条记录）的状态。"""
        rows = self.records[self.records["t"] <= t + 1e-9]
        out = {}
        for vid, group in rows.groupby("vehicle_id", sort=False):
            last = group.iloc[-1]
            out[vid] = np.array([last["x"], last["y"], last["theta"]], dtype=float)
        return out

    def prefix(self, t: float) -> "SimLog":
        """截取 t 之前（含 t）的记录。"""
        records = self.records[self.records["t"] <= t + 1e-9].reset_index(drop=True)
        intruder = self.intruder[self.intruder["t"] <= t + 1e-9].reset_index(drop=True)
        events = [e for e in self.events if float(e["t"]) <= t + 1e-9]
        avoid = {k: (v if v <= t + 1e-9 else math.inf) for k, v in self.avoid_start.items()}
        arrivals = {k: v for k, v in self.arrivals.items() if v <= t + 1e-9}
        return SimLog(records, intruder, events, avoid, arrivals, self.t_sa, self.t_bar, self.seed)

    def min_pairwise_distance(self) -> float:
        active = self.records[self.records["active"]]
        best = math.inf
        for _, group in active.groupby("t"):
            pts = group[["x", "y"]].to_numpy()
            if len(pts) < 2:
                continue
            diff = pts[:, None, :] - pts[None, :, :]
            dist = np.sqrt((diff ** 2).sum(-1))
            dist[np.diag_indices(len(pts))] = math.inf
            best = min(best, float(dist.min()))
        return best

    def min_intruder_distance(self, vehicle_id: Optional[str] = None) -> float:
        if self.intruder.empty:
            return math.inf
        rec = self.records[self.records["active"]]
        if vehicle_id is not None:
            rec = rec[rec["vehicle_id"] == vehicle_id]
        merged = rec.merge(self.intruder, on="t", suffixes=("", "_I"))
        if merged.empty:
            return math.inf
        return float(np.hypot(merged["x"] - merged["x_I"], merged["y"] - merged["y_I"]).min())

    def to_csv(self, directory) -> Dict[str, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {"simlog": directory / "simlog.csv", "intruder": directory / "intruder.csv",
                 "events": directory / "events.json"}
        self.records.to_csv(paths["simlog"], index=False, float_format="%.10g")
        self.intruder.to_csv(paths["intruder"], index=False, float_format="%.10g")
        meta = {
            "events": self.events,
            "avoid_start": {k: (None if math.isinf(v) else v) for k, v in self.avoid_start.items()},
            "arrivals": self.arrivals,
            "t_sa": self.t_sa,
            "t_bar": self.t_bar,
            "seed": self.seed,
        }
        paths["events"].write_text(json.dumps(meta, indent=2, ensure_ascii=False), encoding="utf-8")
        return paths

    @classmethod
    def from_csv(cls, directory) -> "SimLog":
        directory = Path(directory)
        records = pd.read_csv(directory / "simlog.csv", dtype={"vehicle_id": str})
        records["active"] = records["active"].astype(bool)
        intruder = pd.read_csv(directory / "intruder.csv")
        meta = json.loads((directory / "events.json").read_text(encoding="utf-8"))
        avoid = {k: (math.inf if v is None else float(v)) for k, v in meta["avoid_start"].items()}
        return cls(records, intruder, meta["events"], avoid, meta["arrivals"], meta["t_sa"],
                   meta["t_bar"], meta["seed"])


@dataclass
class _Runtime:
    x: np.ndarray
    mode: str = "nominal"
    active: bool = False
    arrived: bool = False


def _disturbance(policy: str, rng: np.random.Generator, d_r: float, ctrl: Optional[ControlSample]):
    if policy == "random":
        # 圆盘上均匀分布
        radius = d_r * math.sqrt(rng.random())
        angle = 2.0 * math.pi * rng.random()
        return (radius * math.cos(angle), radius * math.sin(angle))
    if policy == "worst" and ctrl is not None:
        return ctrl.d
    return (0.0, 0.0)


def _default_horizon(scenario: Scenario, planset: PlanSet, cfg: SimConfig) -> float:
    end = max(max(p.sta, p.arrival_time) for p in planset.plans.values())
    if cfg.intruder.present:
        end = max(end, cfg.intruder.t_sa + scenario.t_bar)
    return end + scenario.planner.snapshot_stride


def simulate(scenario: Scenario, planset: PlanSet, simconfig: Optional[SimConfig] = None,
             resume_from: Optional[SimLog] = None) -> SimLog:
    cfg = simconfig or scenario.sim
    missing = [v.id for v in scenario.vehicles if v.id not in planset.plans]
    if missing:
        raise MissingPlan(f"no plan for {missing}")

    dt = cfg.dt
    r_c = scenario.planner.r_c
    grid = scenario.grid
    horizon = cfg.horizon if cfg.horizon is not None else _default_horizon(scenario, planset, cfg)
    rng = np.random.default_rng(cfg.seed)
    intr_plan = cfg.intruder
    strategy = make_strategy(intr_plan, scenario.intruder)
    intruder_dyn = DubinsAbsolute(scenario.intruder, ROLE_BASIC)
    t_leave = intr_plan.t_sa + scenario.t_bar if intr_plan.present else -math.inf

    ids = [v.id for v in scenario.vehicles]
    runtimes: Dict[str, _Runtime] = {}
    records: List[tuple] = []
    intruder_rows: List[tuple] = []
    events: List[Dict[str, object]] = []
    avoid_start = {vid: math.inf for vid in ids}
    arrivals: Dict[str, float] = {}
    t0 = 0.0 if not planset.plans else min(0.0, min(p.departure_time for p in planset.plans.values()))
    x_intruder: Optional[np.ndarray] = None
    injected = False

    if resume_from is not None:
        # 从前缀的最后一个时刻重新开始，该时刻的记录由本次仿真重新生成
        t_end = resume_from.end_time
        prior = resume_from.records
        records = list(prior[prior["t"] < t_end - 1e-9].itertuples(index=False, name=None))
        prior_i = resume_from.intruder
        intruder_rows = list(prior_i[prior_i["t"] < t_end - 1e-9].itertuples(index=False, name=None))
        events = [e for e in resume_from.events if float(e["t"]) < t_end - 1e-9 or e["kind"] == "removal"]
        avoid_start.update({k: (v if v < t_end - 1e-9 else math.inf) for k, v in resume_from.avoid_start.items()})
        arrivals.update({k: v for k, v in resume_from.arrivals.items() if v <= t_end + 1e-9})
        last = resume_from.records[resume_from.records["t"] == t_end].set_index("vehicle_id")
        for vid in ids:
            row = last.loc[vid]
            runtimes[vid] = _Runtime(x=np.array([row["x"], row["y"], row["theta"]], dtype=float),
                                     mode=row["mode"], active=bool(row["active"]), arrived=vid in arrivals)
        injected = resume_from.t_sa is not None and t_end >= intr_plan.t_sa
        at_end = prior_i[(prior_i["t"] - t_end).abs() < 1e-9]
        if injected and not at_end.empty and t_end < t_leave - 1e-9:
            lrow = at_end.iloc[-1]
            x_intruder = np.array([lrow["x"], lrow["y"], lrow["theta"]], dtype=float)
        t0 = t_end
    else:
        for vid in ids:
            runtimes[vid] = _Runtime(x=np.asarray(planset.plans[vid].vehicle.x0, dtype=float))

    steps = int(math.floor((horizon - t0) / dt + 1e-9)) + 1
    log_info(f"🚀 仿真 t∈[{t0:.2f}, {horizon:.2f}]s, dt={dt}, seed={cfg.seed}, intruder={intr_plan.strategy}")

    for k in range(steps):
        t = round(t0 + k * dt, 9)

        # 入侵者出现与离开
        if strategy is not None and not injected and t >= intr_plan.t_sa - 1e-9:
            injected = True
            x_intruder = _inject(intr_plan, runtimes, planset, grid)
            events.append({"t": t, "kind": "injection", "vehicle_id": intr_plan.boundary_victim,
                           "detail": [float(c) for c in x_intruder]})
            log_info(f"📢 入侵者出现 t={t:.2f}s 位于 ({x_intruder[0]:.0f}, {x_intruder[1]:.0f})")
        if x_intruder is not None and t >= t_leave - 1e-9:
            x_intruder = None
            events.append({"t": t, "kind": "removal", "vehicle_id": None, "detail": None})
            log_info(f"📢 入侵者离开 t={t:.2f}s")

        avoid_values: Dict[str, float] = {}
        controls: Dict[str, tuple] = {}
        for vid in ids:
            rt = runtimes[vid]
            plan = planset.plans[vid]
            if rt.mode == "avoid" and plan.replanned_at is not None and t >= plan.replanned_at - 1e-9:
                rt.mode = "replanned"
                events.append({"t": t, "kind": "replanned", "vehicle_id": vid, "detail": None})
            if not rt.active and not rt.arrived and t >= plan.departure_time - 1e-9:
                rt.active = True

            artifacts = planset.artifacts.get(vid)
            v_avoid = math.nan
            x_rel = None
            if rt.active and x_intruder is not None and artifacts is not None:
                x_rel = to_relative(rt.x, x_intruder)
                v_avoid = artifacts.avoid_value(x_rel, 0.0)
                if v_avoid <= 0.0 and math.isinf(avoid_start[vid]):
                    avoid_start[vid] = t
                    events.append({"t": t, "kind": "avoid_start", "vehicle_id": vid, "detail": v_avoid})
                    if cfg.avoidance and rt.mode == "nominal":
                        rt.mode = "avoid"
                        log_info(f"📢 {vid} 切换到避让控制 t={t:.2f}s")
            avoid_values[vid] = v_avoid

            ctrl = None
            if not rt.active:
                u = (0.0, 0.0)
            elif rt.mode == "avoid":
                if x_rel is not None and artifacts.avoid_value(x_rel, 0.0) < FAR:
                    ctrl = artifacts.avoidance_control(x_rel, t - intr_plan.t_sa)
                    u = ctrl.u
                elif x_rel is not None:
                    # 相对状态出了避让网格：背离入侵者全速飞行
                    u = evasion_control(rt.x, x_intruder, plan.params, dt)
                else:
                    # 入侵者离开后保持避让结束时的状态，直到重新规划
                    u = (plan.params.v_min, 0.0)
            elif t < plan.departure_time - 1e-9:
                # 重新规划后的出发时刻之前原地等待
                u = (plan.params.v_min, 0.0)
            else:
                if cfg.victim_control == "collide" and x_rel is not None:
                    ctrl = artifacts.collide_control(x_rel)
                if ctrl is None:
                    ctrl = plan.nominal_control(t, rt.x)
                u = ctrl.u
            d = _disturbance(cfg.disturbance, rng, plan.params.d_r, ctrl) if rt.active else (0.0, 0.0)
            controls[vid] = (u, d)
            records.append((t, vid, rt.x[0], rt.x[1], rt.x[2], u[0], u[1], d[0], d[1], rt.mode,
                            v_avoid, rt.active))

        _record_violations(t, ids, runtimes, x_intruder, r_c, events)

        u_I = (0.0, 0.0)
        if x_intruder is not None:
            view = IntruderView(t=t, dt=dt, t_sa=intr_plan.t_sa, intruder=x_intruder,
                                vehicles={vid: rt.x for vid, rt in runtimes.items() if rt.active},
                                active={vid: rt.active for vid, rt in runtimes.items()},
                                avoid_start=avoid_start, planset=planset, avoid_values=avoid_values)
            u_I = strategy.control(view)
            intruder_rows.append((t, x_intruder[0], x_intruder[1], x_intruder[2], u_I[0], u_I[1]))

        # Euler 积分
        for vid in ids:
            rt = runtimes[vid]
            if not rt.active:
                continue
            plan = planset.plans[vid]
            u, d = controls[vid]
            dyn = DubinsAbsolute(plan.params, ROLE_BASIC)
            rt.x = grid.clip(rt.x + dt * flow(dyn, rt.x, u, d))
            if rt.mode != "avoid" and plan.vehicle.target_value(rt.x) <= 0.0:
                rt.active = False
                rt.arrived = True
                arrivals[vid] = round(t + dt, 9)
                events.append({"t": arrivals[vid], "kind": "arrival", "vehicle_id": vid, "detail": None})
        if x_intruder is not None:
            x_intruder = x_intruder + dt * flow(intruder_dyn, x_intruder, u_I, (0.0, 0.0))
            x_intruder[2] = float(wrap_angle(x_intruder[2]))

    log = SimLog(
        records=pd.DataFrame(records, columns=RECORD_COLUMNS),
        intruder=pd.DataFrame(intruder_rows, columns=INTRUDER_COLUMNS),
        events=events,
        avoid_start=avoid_start,
        arrivals=arrivals,
        t_sa=intr_plan.t_sa if intr_plan.present else None,
        t_bar=scenario.t_bar,
        seed=cfg.seed,
    )
    n_viol = len(log.violations)
    if n_viol:
        log_warning(f"⚠️ 仿真记录到 {n_viol} 次危险区违规")
    log_info(f"✅ 仿真完成: {len(ids)} 架飞行器, 到达 {len(arrivals)}, 避让 {len(extract_rvs(log))}")
    return log


def _inject(intr_plan, runtimes, planset: PlanSet, grid) -> np.ndarray:
    if intr_plan.injection_rule == "explicit":
        return np.asarray(intr_plan.injection_state, dtype=float)
    victim = intr_plan.boundary_victim
    artifacts = planset.artifacts[victim]
    cell = float(min(artifacts.avoid.grid.spacing[:2]))
    return boundary_injection(runtimes[victim].x, artifacts, cell)


def _record_violations(t, ids, runtimes, x_intruder, r_c, events):
    active = [vid for vid in ids if runtimes[vid].active]
    for i, a in enumerate(active):
        for b in active[i + 1:]:
            dist = float(np.hypot(*(runtimes[a].x[:2] - runtimes[b].x[:2])))
            if dist < r_c:
                events.append({"t": t, "kind": "violation", "vehicle_id": a, "detail": {"other": b, "distance": dist}})
        if x_intruder is not None:
            dist = float(np.hypot(*(runtimes[a].x[:2] - x_intruder[:2])))
            if dist < r_c:
                events.append({"t": t, "kind": "violation", "vehicle_id": a,
                               "detail": {"other": "intruder", "distance": dist}})


def extract_rvs(simlog: SimLog, n_va: Optional[int] = None) -> Set[str]:
    """被迫进入避让、因而需要重新规划的飞行器集合。"""
    rvs = {vid for vid, t_a in simlog.avoid_start.items() if t_a < math.inf}
    if n_va is not None and len(rvs) > n_va:
        log_error(f"❌ |RVS| = {len(rvs)} 超过 n_va = {n_va}: {sorted(rvs)}")
        raise SeparationBreach(f"{len(rvs)} vehicles forced into avoidance, n_va = {n_va}")
    return rvs

"""
顺序轨迹规划：按优先级逐架计算总障碍、规划 BRS、最晚出发时间与名义轨迹。
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from reach.dynamics import (
    ROLE_BASIC,
    ROLE_FRS,
    ROLE_OBSTACLE,
    ROLE_PLANNING,
    ControlSample,
    DubinsAbsolute,
    DubinsParams,
    DynSpec,
    controller_from_value,
    flow,
    wrap_angle,
)
from reach.gridfield import FAR, Grid, ScalarField, TimeField
from reach.hjsolver import ReachProblem, solve_brs
from reach.reachops import (
    ObstacleSchedule,
    augment_capture,
    schedule_union_all,
)
from stpplanner.avoid import (
    AvoidArtifacts,
    buffer_region,
    compute_avoid_region,
    mirror_buffer_region,
    position_envelope,
    separation_region,
    static_avoid_brs,
)
from stpplanner.obstacles import InducedContext, compute_cases
from stpplanner.scenario import Scenario, VehicleSpec
from utils.errors import Infeasible, MissingPrerequisite
from utils.logger import log_error, log_info, log_warning

TRAJECTORY_COLUMNS = ["t", "x", "y", "theta", "u_v", "u_w"]
# 名义轨迹晚到时 BRS 终端最多提前的次数；滚动越过 sta 的探测格数
MAX_ANCHOR_SHIFTS = 3
LATE_LOOKAHEAD = 5


@dataclass(eq=False)
class VehiclePlan:
    vehicle: VehicleSpec
    params: DubinsParams
    value: TimeField
    dynspec: DynSpec
    trajectory: pd.DataFrame
    ldt: float
    departure_time: float
    arrival_time: float
    total: Optional[ObstacleSchedule] = None
    replanned_at: Optional[float] = None
    # 规划该飞行器时所用的模式（重新规划可能退回 basic）
    mode: str = "intruder"

    @property
    def vehicle_id(self) -> str:
        return self.vehicle.id

    @property
    def sta(self) -> float:
        return self.vehicle.sta

    def active_at(self, t: float) -> bool:
        return self.departure_time - 1e-9 <= t <= self.arrival_time + 1e-9

    def nominal_control(self, t: float, x) -> ControlSample:
        grid = self.value.grid
        x = grid.clip(np.asarray(x, dtype=float))
        return controller_from_value(self.value, self.dynspec, t, x, mode="nominal")

    def nominal_state(self, t: float) -> np.ndarray:
        traj = self.trajectory
        ts = traj["t"].to_numpy()
        theta = np.unwrap(traj["theta"].to_numpy())
        return np.array([np.interp(t, ts, traj["x"]), np.interp(t, ts, traj["y"]),
                         float(wrap_angle(np.interp(t, ts, theta)))])


@dataclass(eq=False)
class PlanSet:
    scenario: Scenario
    plans: Dict[str, VehiclePlan]
    artifacts: Dict[str, AvoidArtifacts] = field(default_factory=dict)
    mode: str = "intruder"

    def ordered(self) -> List[VehiclePlan]:
        return [self.plans[v.id] for v in self.scenario.vehicles if v.id in self.plans]

    def merged(self, replanned: Dict[str, VehiclePlan]) -> "PlanSet":
        plans = {vid: replanned.get(vid, plan) for vid, plan in self.plans.items()}
        return PlanSet(self.scenario, plans, self.artifacts, self.mode)


class PlanningContext:
    """单次规划的共享量：时间格点、障碍网格、避让产物缓存与静态障碍。"""

    def __init__(self, scenario: Scenario, mode: str = "intruder", t_start: Optional[float] = None,
                 t_end: Optional[float] = None):
        self.scenario = scenario
        self.mode = mode
        opts = scenario.planner
        self.stride = opts.snapshot_stride
        start = -opts.early_departure if t_start is None else t_start
        end = max(v.sta for v in scenario.vehicles) + scenario.t_bar + opts.horizon_pad if t_end is None else t_end
        end = max(end, start + scenario.t_bar + self.stride)
        count = int(math.ceil((end - start) / self.stride - 1e-9))
        self.lattice = start + self.stride * np.arange(count + 1)
        self.obstacle_grid: Grid = scenario.grid if opts.obstacle_space == "state" else scenario.position_grid
        self._artifacts: Dict[DubinsParams, AvoidArtifacts] = {}
        self._static_brs: Dict[DubinsParams, ObstacleSchedule] = {}
        self.static_fields = [o.field(self.obstacle_grid) for o in scenario.static_obstacles]

    @property
    def start(self) -> float:
        return float(self.lattice[0])

    def avoid_artifacts(self, params: DubinsParams) -> AvoidArtifacts:
        if params not in self._artifacts:
            opts = self.scenario.planner
            self._artifacts[params] = compute_avoid_region(
                self.scenario.intruder, params, self.scenario.t_bar, opts.r_c,
                t_brd=self.scenario.t_brd, half_width=opts.relative_half_width,
                counts=opts.relative_counts, cfl=opts.cfl)
        return self._artifacts[params]

    def envelope(self, params: DubinsParams, role) -> DynSpec:
        if self.obstacle_grid.ndim == 2:
            return position_envelope(params, role)
        return DubinsAbsolute(params, role)

    def static_schedule(self) -> Optional[ObstacleSchedule]:
        """静态障碍本身（未膨胀）。"""
        if not self.static_fields:
            return None
        values = np.min(np.stack([f.values for f in self.static_fields]), axis=0)
        return ObstacleSchedule.static(ScalarField(self.obstacle_grid, values), self.start)

    def static_dilated(self) -> Optional[ObstacleSchedule]:
        static = self.static_schedule()
        if static is None:
            return None
        return augment_capture(static, self.scenario.planner.r_c, self.scenario.planner.reinit_iterations)

    def static_brs(self, params: DubinsParams) -> ObstacleSchedule:
        if params not in self._static_brs:
            self._static_brs[params] = static_avoid_brs(
                self.static_fields, params, self.scenario.t_bar, self.scenario.planner.r_c, self.start,
                self.obstacle_grid, dynspec=self.envelope(params, ROLE_OBSTACLE), cfl=self.scenario.planner.cfl)
        return self._static_brs[params]

    def base_schedule(self, plan: VehiclePlan, eps: Optional[float] = None) -> ObstacleSchedule:
        eps = self.scenario.planner.eps_track if eps is None else eps
        return base_obstacle_rtt(plan.trajectory, eps, self.obstacle_grid, self.lattice,
                                 sample_dt=self.scenario.planner.control_dt)


def base_obstacle_rtt(nominal_traj: pd.DataFrame, eps_track: float, grid: Grid, times: Sequence[float],
                      r_c: float = 0.0, sample_dt: Optional[float] = None) -> ObstacleSchedule:
    """
    名义轨迹周围半径 eps_track 的跟踪管（无航向）。快照 k 覆盖保持区间
    [t_k, t_{k+1}) 内扫过的管段；出发前与到达后为空。r_c > 0 时再做捕获膨胀。
    """
    times = np.asarray(times, dtype=float)
    ts = nominal_traj["t"].to_numpy(dtype=float)
    xs = nominal_traj["x"].to_numpy(dtype=float)
    ys = nominal_traj["y"].to_numpy(dtype=float)
    t_first, t_last = ts[0], ts[-1]
    stride = float(np.min(np.diff(times))) if len(times) > 1 else 0.0
    n_sub = 1 if not sample_dt or stride == 0 else max(1, int(math.ceil(stride / sample_dt - 1e-9)))

    gx, gy = grid.coords[0], grid.coords[1]
    values = np.full((len(times),) + grid.shape, FAR)
    for k, t in enumerate(times):
        samples = t + stride * np.arange(n_sub) / n_sub
        samples = samples[(samples >= t_first - 1e-9) & (samples <= t_last + 1e-9)]
        for edge in (t_first, t_last):
            if t < edge < t + stride - 1e-9:
                samples = np.append(samples, edge)
        if len(samples) == 0:
            continue
        px = np.interp(samples, ts, xs)
        py = np.interp(samples, ts, ys)
        dist = None
        for x_s, y_s in zip(px, py):
            d = np.sqrt((gx - x_s) ** 2 + (gy - y_s) ** 2)
            dist = d if dist is None else np.minimum(dist, d)
        values[k] = np.broadcast_to(dist - eps_track, grid.shape)
    schedule = ObstacleSchedule.from_stack(grid, times, values)
    return augment_capture(schedule, r_c) if r_c > 0 else schedule


def total_obstacles(vehicle: VehicleSpec, higher: Sequence[VehiclePlan], ctx: PlanningContext) -> ObstacleSchedule:
    """飞行器 i 的总障碍：静态障碍 BRS、双向缓冲区与五类诱导障碍之并，再按跟踪误差膨胀。"""
    scenario = ctx.scenario
    opts = scenario.planner
    params_i = scenario.params_of(vehicle)
    parts: List[ObstacleSchedule] = []

    if ctx.mode == "basic":
        static = ctx.static_schedule()
        if static is not None:
            parts.append(static)
    else:
        parts.append(ctx.static_brs(params_i))

    for plan_j in higher:
        if plan_j is None or plan_j.trajectory is None or plan_j.trajectory.empty:
            raise MissingPrerequisite(f"{vehicle.id}: higher-priority plan missing")
        if ctx.mode == "basic":
            parts.append(augment_capture(ctx.base_schedule(plan_j, eps=0.0), opts.r_c, opts.reinit_iterations))
            continue
        params_j = plan_j.params
        art_i = ctx.avoid_artifacts(params_i)
        art_j = ctx.avoid_artifacts(params_j)
        base_j = ctx.base_schedule(plan_j)
        sep_j = separation_region(base_j, art_j.avoid_full)
        parts.append(buffer_region(sep_j, art_i.buffer_full, art_i.avoid_trd))
        parts.append(mirror_buffer_region(base_j, art_j, art_i.avoid_full))
        induced = InducedContext(
            base=base_j,
            static_dilated=ctx.static_dilated(),
            frs_dynspec=ctx.envelope(params_j, ROLE_FRS),
            obstacle_dynspec=ctx.envelope(params_i, ROLE_OBSTACLE),
            t_bar=scenario.t_bar,
            t_brd=scenario.t_brd,
            r_c=opts.r_c,
            cfl=opts.cfl,
            reinit_iterations=opts.reinit_iterations,
        )
        parts.extend(compute_cases(induced).values())

    if not parts:
        return ObstacleSchedule.empty(ctx.obstacle_grid, ctx.start)
    total = schedule_union_all(parts)
    if ctx.mode != "basic" and opts.eps_track > 0:
        total = augment_capture(total, opts.eps_track, opts.reinit_iterations)
    return total


def planning_dynspec(params: DubinsParams, mode: str) -> DubinsAbsolute:
    if mode == "basic":
        return DubinsAbsolute(params.without_disturbance(), ROLE_BASIC)
    return DubinsAbsolute(params, ROLE_PLANNING)


def latest_departure(value: TimeField, x0, earliest: bool = False) -> float:
    """x0 仍在 BRS 内的最晚（或最早）时刻；相邻快照间线性插值过零点。"""
    vals = np.array([f.interpolate(x0) for f in value.fields])
    inside = np.flatnonzero(vals <= 0.0)
    if len(inside) == 0:
        raise ValueError("initial state never enters the BRS")
    times = value.times
    if earliest:
        return float(times[inside[0]])
    k = int(inside[-1])
    if k == len(times) - 1:
        return float(times[k])
    v0, v1 = vals[k], vals[k + 1]
    return float(times[k] + (times[k + 1] - times[k]) * (-v0) / (v1 - v0))


def rollout_nominal(value: TimeField, dynspec: DubinsAbsolute, vehicle: VehicleSpec, departure: float,
                    dt: float, t_limit: float) -> pd.DataFrame:
    """零扰动下积分 u^PP，直到进入目标或到达 t_limit；未进入目标时末行时刻不早于 t_limit。"""
    grid = value.grid
    x = grid.clip(np.asarray(vehicle.x0, dtype=float))
    t = departure
    rows = []
    while True:
        ctrl = controller_from_value(value, dynspec, t, x)
        rows.append((t, x[0], x[1], x[2], ctrl.u[0], ctrl.u[1]))
        if vehicle.target_value(x) <= 0.0 or t >= t_limit:
            break
        x = grid.clip(x + dt * flow(dynspec, x, ctrl.u, (0.0, 0.0)))
        t = round(t + dt, 9)
    return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)


def _arrival(trajectory: pd.DataFrame, vehicle: VehicleSpec) -> float:
    last = trajectory.iloc[-1]
    if vehicle.target_value([last["x"], last["y"], last["theta"]]) > 0.0:
        return math.inf
    return float(last["t"])


def plan_vehicle(vehicle: VehicleSpec, total: Optional[ObstacleSchedule], ctx: PlanningContext, *,
                 start_time: Optional[float] = None, departure: str = "latest",
                 replanned_at: Optional[float] = None) -> VehiclePlan:
    """
    求解到达目标的 BRS 并滚动名义轨迹。离散控制落后于值函数时名义轨迹会晚到，
    此时把 BRS 的终端时刻按快照间隔整格提前后重算；到达时刻必须不晚于 sta。
    """
    scenario = ctx.scenario
    opts = scenario.planner
    params = scenario.params_of(vehicle)
    dyn = planning_dynspec(params, ctx.mode)
    start = ctx.start if start_time is None else start_time
    grid = scenario.grid
    target = vehicle.target_field(grid)
    x0 = grid.clip(np.asarray(vehicle.x0, dtype=float))
    if vehicle.sta <= start:
        raise Infeasible(vehicle.id, f"sta {vehicle.sta} is not after planning start {start}")

    anchor = vehicle.sta
    for _ in range(MAX_ANCHOR_SHIFTS + 1):
        horizon = anchor - start
        if horizon <= 0:
            break
        problem = ReachProblem(grid=grid, target=target, dynspec=dyn, horizon=horizon, direction="backward",
                               mode="reach-exists", obstacles=total, cfl_factor=opts.cfl,
                               save_dt=ctx.stride, t_anchor=anchor)
        value = solve_brs(problem)
        try:
            ldt = latest_departure(value, x0, earliest=(departure == "earliest"))
        except ValueError:
            raise Infeasible(vehicle.id, "initial state never enters the planning BRS") from None

        dep = ldt if departure == "earliest" else max(start, ldt - opts.departure_slack)
        trajectory = rollout_nominal(value, dyn, vehicle, dep, opts.control_dt,
                                     vehicle.sta + LATE_LOOKAHEAD * ctx.stride)
        arrival = _arrival(trajectory, vehicle)
        if arrival <= vehicle.sta + 1e-9:
            value = value.window(dep - ctx.stride, anchor)
            plan = VehiclePlan(vehicle=vehicle, params=params, value=value, dynspec=dyn, trajectory=trajectory,
                               ldt=ldt, departure_time=dep, arrival_time=arrival, total=total,
                               replanned_at=replanned_at, mode=ctx.mode)
            log_info(f"✅ {vehicle.id}: ldt={ldt:.2f}s, 出发 {dep:.2f}s, 到达 {arrival:.2f}s (sta {vehicle.sta}s)")
            return plan

        late = (arrival if math.isfinite(arrival) else vehicle.sta + LATE_LOOKAHEAD * ctx.stride) - vehicle.sta
        shift = ctx.stride * max(1, int(math.ceil(late / ctx.stride - 1e-9)))
        log_warning(f"⚠️ {vehicle.id}: 名义轨迹晚到 {late:.2f}s，BRS 终端提前 {shift:.1f}s 重算")
        anchor = round(anchor - shift, 9)

    raise Infeasible(vehicle.id, f"nominal rollout cannot reach the target by sta {vehicle.sta}")


def _min_pairwise_distance(a: VehiclePlan, b: VehiclePlan, dt: float) -> float:
    lo = max(a.departure_time, b.departure_time)
    hi = min(a.arrival_time, b.arrival_time)
    if hi < lo:
        return math.inf
    ts = np.arange(lo, hi + 1e-9, dt)
    pa = np.array([a.nominal_state(t)[:2] for t in ts])
    pb = np.array([b.nominal_state(t)[:2] for t in ts])
    return float(np.linalg.norm(pa - pb, axis=1).min())


def _plan_sequence(scenario: Scenario, mode: str) -> PlanSet:
    ctx = PlanningContext(scenario, mode)
    plans: Dict[str, VehiclePlan] = {}
    for vehicle in scenario.vehicles:
        log_info(f"🚀 规划 {vehicle.id} (priority {vehicle.priority}, mode={mode})")
        total = total_obstacles(vehicle, list(plans.values()), ctx)
        plans[vehicle.id] = plan_vehicle(vehicle, total, ctx)

    ordered = list(plans.values())
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            d = _min_pairwise_distance(a, b, scenario.planner.control_dt)
            if d < scenario.planner.r_c:
                log_error(f"❌ 名义轨迹 {a.vehicle_id}/{b.vehicle_id} 最小间距 {d:.1f}m < r_c")
                # 低优先级一方负责避让
                raise Infeasible(b.vehicle_id, f"nominal separation {d:.1f}m from {a.vehicle_id} < r_c")

    artifacts = {}
    if mode != "basic":
        artifacts = {v.id: ctx.avoid_artifacts(scenario.params_of(v)) for v in scenario.vehicles}
    return PlanSet(scenario, plans, artifacts, mode)


def plan_all(scenario: Scenario) -> PlanSet:
    return _plan_sequence(scenario, "intruder")


def basic_stp(scenario: Scenario) -> PlanSet:
    return _plan_sequence(scenario, "basic")

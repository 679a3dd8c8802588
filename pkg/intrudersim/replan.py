"""
入侵者离开后的重新规划：对 RVS 中的飞行器按优先级依次求 FRS 得到新的 sta，
再以 RVS 之外的飞行器（及已重新规划者）为高优先级重新规划。
"""
from dataclasses import replace
from typing import Dict, List

import numpy as np

from intrudersim.simulator import SimLog, extract_rvs
from reach.dynamics import ROLE_REPLAN, DubinsAbsolute, wrap_angle
from reach.gridfield import ScalarField, TimeField, sdf_ball, set_intersect
from reach.hjsolver import ReachProblem, solve_frs
from reach.reachops import ObstacleSchedule
from stpplanner.planner import PlanningContext, PlanSet, VehiclePlan, plan_vehicle, total_obstacles
from stpplanner.scenario import Scenario
from utils.errors import Infeasible, ReplanInfeasible
from utils.logger import log_info, log_warning


def initial_set(grid, x0, heading_halfwidth: float) -> ScalarField:
    """x̃⁰ 周围一格的位置球与航向带之交；航向部分按位置间距缩放。"""
    h = float(min(grid.spacing[0], grid.spacing[1]))
    ball = sdf_ball(grid, x0[:2], h, dims=(0, 1))
    dtheta = np.abs(wrap_angle(grid.coords[2] - x0[2]))
    band = np.broadcast_to((dtheta - heading_halfwidth) * (h / heading_halfwidth), grid.shape)
    return set_intersect(ball, ScalarField(grid, np.array(band)))


def earliest_arrival(frs: TimeField, target: ScalarField) -> float:
    """FRS 第一次与目标相交的快照时刻。"""
    inside_target = target.subzero()
    for t, f in zip(frs.times, frs.fields):
        if np.any(f.subzero() & inside_target):
            return float(t)
    raise ValueError("FRS never meets the target")


def _obstacles_at(schedule: ObstacleSchedule, t: float, x) -> float:
    field = schedule.sample(t)
    return field.interpolate(np.asarray(x)[: field.grid.ndim])


def replan(scenario: Scenario, planset: PlanSet, simlog: SimLog) -> PlanSet:
    rvs = extract_rvs(simlog, scenario.planner.n_va)
    if not rvs:
        log_info("✅ RVS 为空，无需重新规划")
        return planset
    if simlog.t_sa is None:
        raise ValueError("simlog has avoid starts but no intruder injection time")

    opts = scenario.planner
    t_resume = round(simlog.t_sa + scenario.t_bar, 9)
    states = simlog.states_at(t_resume)
    ctx = PlanningContext(
        scenario, mode=opts.replan_mode, t_start=t_resume,
        t_end=max(t_resume + opts.replan_max_horizon,
                  max(p.arrival_time for p in planset.plans.values())) + scenario.t_bar)
    basic_ctx = PlanningContext(scenario, mode="basic", t_start=ctx.start, t_end=float(ctx.lattice[-1]))

    ordered = [v for v in scenario.vehicles if v.id in rvs]
    keep: List[VehiclePlan] = [planset.plans[v.id] for v in scenario.vehicles if v.id not in rvs]
    replanned: Dict[str, VehiclePlan] = {}
    log_info(f"🚀 重新规划 RVS={sorted(rvs)}，起始 t={t_resume:.2f}s")

    for vehicle in ordered:
        x_tilde = states[vehicle.id]
        higher = keep + list(replanned.values())
        use_ctx = ctx
        total = total_obstacles(vehicle, higher, ctx)
        if _obstacles_at(total, t_resume, x_tilde) <= 0.0 and ctx.mode != "basic":
            log_warning(f"⚠️ {vehicle.id}: 当前状态位于入侵者鲁棒障碍内，退回基本 STP 障碍")
            use_ctx = basic_ctx
            total = total_obstacles(vehicle, higher, basic_ctx)

        params = scenario.params_of(vehicle)
        grid = scenario.grid
        heading_halfwidth = float(grid.spacing[2])
        problem = ReachProblem(
            grid=grid, target=initial_set(grid, x_tilde, heading_halfwidth),
            dynspec=DubinsAbsolute(params, ROLE_REPLAN), horizon=opts.replan_max_horizon,
            direction="forward", mode="reach-exists", obstacles=total, cfl_factor=opts.cfl,
            save_dt=opts.snapshot_stride, t_anchor=t_resume)
        frs = solve_frs(problem)
        try:
            first_hit = earliest_arrival(frs, vehicle.target_field(grid))
        except ValueError:
            raise ReplanInfeasible(vehicle.id, "FRS never reaches the target") from None
        new_sta = first_hit + opts.replan_slack
        spec = replace(vehicle, x0=tuple(float(c) for c in x_tilde), sta=new_sta)
        try:
            plan = plan_vehicle(spec, total, use_ctx, start_time=t_resume, departure="earliest",
                                replanned_at=t_resume)
        except Infeasible as e:
            raise ReplanInfeasible(vehicle.id, str(e)) from e
        replanned[vehicle.id] = plan
        log_info(f"✅ {vehicle.id}: 新 sta={new_sta:.2f}s (原 {vehicle.sta}s)")

    return planset.merged(replanned)

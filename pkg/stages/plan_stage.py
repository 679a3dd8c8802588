"""
plan / simulate / replan 子命令。
"""
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Optional

from intrudersim.replan import replan
from intrudersim.simulator import SimLog, extract_rvs, simulate
from stpplanner.planner import PlanSet, basic_stp, plan_all
from stpplanner.planset import load_planset, save_planset
from stpplanner.scenario import Scenario, parse_scenario, scenario_to_dict

from .base_stage import BaseStage

PLANNERS = {"intruder": plan_all, "basic": basic_stp}


class PlanStage(BaseStage):
    """规划阶段：按优先级依次规划，写出 PlanSet 目录。"""

    def __init__(self, out_dir: str, scenario: str, mode: str = "intruder", **kwargs):
        super().__init__(out_dir, **kwargs)
        if mode not in PLANNERS:
            raise ValueError(f"unknown planning mode {mode}")
        self.scenario_path = Path(scenario)
        self.mode = mode
        self.scenario: Optional[Scenario] = None
        self.planset: Optional[PlanSet] = None

    def execute(self) -> PlanSet:
        self.scenario = self.apply_overrides(parse_scenario(self.scenario_path))
        self.planset = PLANNERS[self.mode](self.scenario)
        save_planset(self.planset, self.out_dir / "planset")
        return self.planset

    def manifest_extra(self) -> Dict[str, Any]:
        return {"scenario": scenario_to_dict(self.scenario)} if self.scenario else {}

    def get_status(self) -> str:
        if self.planset is None:
            return f"场景 {self.scenario_path} ({self.mode}): 未规划"
        lines = [f"场景 {self.scenario.name} ({self.mode})"]
        for plan in self.planset.ordered():
            lines.append(f"  - {plan.vehicle_id}: 出发 {plan.departure_time:.2f}s, "
                         f"到达 {plan.arrival_time:.2f}s, sta {plan.sta:.2f}s")
        return "\n".join(lines)


class SimulateStage(BaseStage):
    """仿真阶段：读取 PlanSet，按场景中的 sim 配置闭环仿真。"""

    def __init__(self, out_dir: str, planset: str, scenario: Optional[str] = None, **kwargs):
        super().__init__(out_dir, **kwargs)
        self.planset_dir = Path(planset)
        self.scenario_path = Path(scenario) if scenario else None
        self.simlog: Optional[SimLog] = None

    def _scenario(self, planset: PlanSet) -> Scenario:
        # 场景文件只提供 sim 配置，规划参数以 PlanSet 为准
        scenario = planset.scenario
        if self.scenario_path is not None:
            scenario = replace(scenario, sim=parse_scenario(self.scenario_path).sim)
        return scenario.with_overrides(seed=self.seed)

    def execute(self) -> SimLog:
        planset = load_planset(self.planset_dir)
        scenario = self._scenario(planset)
        self.simlog = simulate(scenario, planset)
        self.simlog.to_csv(self.out_dir / "simlog")
        return self.simlog

    def get_status(self) -> str:
        if self.simlog is None:
            return f"PlanSet {self.planset_dir}: 未仿真"
        rvs = sorted(extract_rvs(self.simlog))
        return (f"PlanSet {self.planset_dir}: 结束于 {self.simlog.end_time:.2f}s, "
                f"RVS={rvs}, 违规 {len(self.simlog.violations)} 次")


class ReplanStage(BaseStage):
    """重新规划阶段：根据 SimLog 中的 RVS 为被迫避让的飞行器重新规划。"""

    def __init__(self, out_dir: str, planset: str, simlog: str, **kwargs):
        super().__init__(out_dir, **kwargs)
        self.planset_dir = Path(planset)
        self.simlog_dir = Path(simlog)
        self.planset: Optional[PlanSet] = None

    def execute(self) -> PlanSet:
        planset = load_planset(self.planset_dir)
        simlog = SimLog.from_csv(self.simlog_dir)
        self.planset = replan(planset.scenario, planset, simlog)
        save_planset(self.planset, self.out_dir / "planset")
        return self.planset

    def get_status(self) -> str:
        if self.planset is None:
            return f"PlanSet {self.planset_dir}: 未重新规划"
        replanned = [p.vehicle_id for p in self.planset.ordered() if p.replanned_at is not None]
        return f"重新规划 {replanned or '无'}"

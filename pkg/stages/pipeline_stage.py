"""
pipeline 子命令：规划 → 仿真 → 重新规划 → 续接仿真 → 校验。
"""
import json
import math
from pathlib import Path
from typing import Any, Dict, Optional

from intrudersim.replan import replan
from intrudersim.simulator import SimLog, extract_rvs, simulate
from stpplanner.planner import PlanSet, plan_all
from stpplanner.planset import save_planset
from stpplanner.scenario import Scenario, parse_scenario, scenario_to_dict
from utils.errors import SafetyViolation
from utils.logger import log_error, log_info, log_warning

from .base_stage import BaseStage


def verify(scenario: Scenario, planset: PlanSet, simlog: SimLog) -> Dict[str, Any]:
    """汇总危险区进入、RVS 规模与按时到达情况。"""
    rvs = extract_rvs(simlog, scenario.planner.n_va)
    late = {}
    for plan in planset.ordered():
        arrival = simlog.arrivals.get(plan.vehicle_id, math.inf)
        if arrival > plan.sta + scenario.sim.dt + 1e-6:
            late[plan.vehicle_id] = {"sta": plan.sta, "arrival": None if math.isinf(arrival) else arrival}
    report = {
        "violations": simlog.violations,
        "rvs": sorted(rvs),
        "late": late,
        "min_pairwise_distance": _finite(simlog.min_pairwise_distance()),
        "min_intruder_distance": _finite(simlog.min_intruder_distance()),
    }
    if late:
        log_warning(f"⚠️ 未按时到达目标: {sorted(late)}")
    return report


def raise_on_violation(report: Dict[str, Any]):
    violations = report["violations"]
    if violations:
        first = violations[0]
        log_error(f"❌ 检测到 {len(violations)} 次危险区进入，首次 t={first['t']:.2f}s {first['vehicle_id']}")
        raise SafetyViolation(f"{len(violations)} danger-zone entries, first at t={first['t']}")


def _finite(x: float) -> Optional[float]:
    return None if math.isinf(x) else x


class PipelineStage(BaseStage):
    """完整流程，各步骤顺序执行，产物分目录写出。"""

    def __init__(self, out_dir: str, scenario: str, **kwargs):
        super().__init__(out_dir, **kwargs)
        self.scenario_path = Path(scenario)
        self.scenario: Optional[Scenario] = None
        self.report: Optional[Dict[str, Any]] = None

    def execute(self) -> Dict[str, Any]:
        scenario = self.apply_overrides(parse_scenario(self.scenario_path))
        self.scenario = scenario

        planset = plan_all(scenario)
        save_planset(planset, self.out_dir / "planset")
        simlog = simulate(scenario, planset)
        simlog.to_csv(self.out_dir / "simlog")

        final_plans, final_log = planset, simlog
        if extract_rvs(simlog, scenario.planner.n_va):
            final_plans = replan(scenario, planset, simlog)
            save_planset(final_plans, self.out_dir / "planset_replanned")
            t_resume = simlog.t_sa + scenario.t_bar
            final_log = simulate(scenario, final_plans, resume_from=simlog.prefix(t_resume))
            final_log.to_csv(self.out_dir / "simlog_replanned")
        else:
            log_info("📢 无飞行器被迫避让，跳过重新规划")

        self.report = verify(scenario, final_plans, final_log)
        (self.out_dir / "verify.json").write_text(
            json.dumps(self.report, indent=2, ensure_ascii=False, sort_keys=True), encoding="utf-8")
        raise_on_violation(self.report)
        return self.report

    def manifest_extra(self) -> Dict[str, Any]:
        return {"scenario": scenario_to_dict(self.scenario)} if self.scenario else {}

    def get_status(self) -> str:
        if self.report is None:
            return f"场景 {self.scenario_path}: 未运行"
        r = self.report
        return f"RVS={r['rvs']}, 违规 0 次, 未按时到达 {sorted(r['late']) or '无'}"

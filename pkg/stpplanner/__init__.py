"""顺序轨迹规划（入侵者鲁棒）。"""
from stpplanner.planner import PlanSet, VehiclePlan, basic_stp, plan_all
from stpplanner.scenario import Scenario, parse_scenario

__all__ = ["PlanSet", "VehiclePlan", "Scenario", "basic_stp", "parse_scenario", "plan_all"]

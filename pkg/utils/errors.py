"""
项目统一的异常层次。

所有异常都继承 StpError，命令行入口据此映射退出码。
"""
from typing import Optional


class StpError(Exception):
    """所有规划/求解相关异常的基类。"""


# === 网格与场 ===
class GridError(StpError):
    pass


class NonMonotoneBounds(GridError, ValueError):
    pass


class TooFewNodes(GridError, ValueError):
    pass


class BadDims(GridError, ValueError):
    pass


class GridMismatch(GridError, ValueError):
    pass


class OutOfBounds(GridError, ValueError):
    pass


class NegativeRadius(GridError, ValueError):
    pass


class EmptySummand(GridError, ValueError):
    pass


class EmptySet(GridError, ValueError):
    pass


# === 求解器 ===
class SolverError(StpError):
    pass


class CflViolation(SolverError):
    pass


class UnboundedSpeed(SolverError):
    pass


class SpanTooShort(SolverError, ValueError):
    pass


class DomainTooSmall(SolverError):
    pass


class InputOutOfBounds(SolverError, ValueError):
    pass


# === 规划 ===
class PlanningError(StpError):
    pass


class MissingPrerequisite(PlanningError):
    pass


class Infeasible(PlanningError):
    def __init__(self, vehicle_id: str, reason: str = ""):
        self.vehicle_id = vehicle_id
        super().__init__(f"vehicle {vehicle_id} infeasible{': ' + reason if reason else ''}")


class ReplanInfeasible(Infeasible):
    pass


# === 场景文件 ===
class ScenarioError(StpError):
    pass


class SchemaError(ScenarioError, ValueError):
    def __init__(self, message: str, key_path: Optional[str] = None):
        self.key_path = key_path or "<root>"
        super().__init__(f"{self.key_path}: {message}")


class UnitsError(ScenarioError, ValueError):
    pass


# === 仿真 ===
class SimulationError(StpError):
    pass


class MissingPlan(SimulationError):
    pass


class SeparationBreach(SimulationError):
    pass


class SafetyViolation(SimulationError):
    pass

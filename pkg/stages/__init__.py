"""
命令行各子命令对应的阶段类。
"""
from .base_stage import BaseStage
from .export_stage import ExportStage
from .pipeline_stage import PipelineStage
from .plan_stage import PlanStage, ReplanStage, SimulateStage
from .reach_stage import ReachStage

# 映射子命令名称到阶段类
STAGE_CLASSES = {
    "reach": ReachStage,
    "plan": PlanStage,
    "simulate": SimulateStage,
    "replan": ReplanStage,
    "pipeline": PipelineStage,
    "export": ExportStage,
}

__all__ = [
    "BaseStage",
    "ReachStage",
    "PlanStage",
    "SimulateStage",
    "ReplanStage",
    "PipelineStage",
    "ExportStage",
    "STAGE_CLASSES",
]

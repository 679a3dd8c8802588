from intrudersim.config import IntruderPlan, SimConfig

__all__ = ["IntruderPlan", "SimConfig"]

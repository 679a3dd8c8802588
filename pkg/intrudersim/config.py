"""仿真配置。"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

DISTURBANCE_POLICIES = ("none", "random", "worst")
STRATEGIES = ("none", "waypoints", "pursuit", "chain")
INJECTION_RULES = ("explicit", "boundary")
VICTIM_CONTROLS = ("nominal", "collide")


@dataclass(frozen=True)
class IntruderPlan:
    strategy: str = "none"
    victims: Tuple[str, ...] = ()
    waypoints: Tuple[Tuple[float, float], ...] = ()
    t_sa: float = 0.0
    injection_rule: str = "boundary"
    injection_state: Optional[Tuple[float, float, float]] = None
    injection_victim: Optional[str] = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown intruder strategy {self.strategy}")
        if self.injection_rule not in INJECTION_RULES:
            raise ValueError(f"unknown injection rule {self.injection_rule}")
        if self.strategy in ("pursuit", "chain") and not self.victims:
            raise ValueError(f"strategy {self.strategy} needs at least one victim")
        if self.strategy == "waypoints" and not self.waypoints:
            raise ValueError("strategy waypoints needs waypoints")
        if self.strategy != "none" and self.injection_rule == "explicit" and self.injection_state is None:
            raise ValueError("explicit injection needs a state")

    @property
    def present(self) -> bool:
        return self.strategy != "none"

    @property
    def boundary_victim(self) -> Optional[str]:
        if self.injection_victim:
            return self.injection_victim
        return self.victims[0] if self.victims else None


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    disturbance: str = "none"
    intruder: IntruderPlan = field(default_factory=IntruderPlan)
    horizon: Optional[float] = None
    seed: int = 0
    avoidance: bool = True
    victim_control: str = "nominal"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.disturbance not in DISTURBANCE_POLICIES:
            raise ValueError(f"unknown disturbance policy {self.disturbance}")
        if self.victim_control not in VICTIM_CONTROLS:
            raise ValueError(f"unknown victim_control {self.victim_control}")

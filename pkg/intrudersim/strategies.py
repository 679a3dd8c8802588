"""
入侵者策略：脚本航点、追击、连环攻击。

追击使用受害者避让区域梯度下的第二玩家最优输入（入侵者为使 V^A 下降的一方），
相对状态落在网格外时退化为几何追踪。
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from intrudersim.config import IntruderPlan
from reach.dynamics import DubinsParams, to_relative, wrap_angle
from utils.errors import OutOfBounds
from utils.logger import log_info


@dataclass
class IntruderView:
    """策略在每步看到的世界状态。"""
    t: float
    dt: float
    t_sa: float
    intruder: np.ndarray
    vehicles: Dict[str, np.ndarray]
    active: Dict[str, bool]
    avoid_start: Dict[str, float]
    planset: object
    avoid_values: Dict[str, float] = field(default_factory=dict)


def steer_towards(state: np.ndarray, point: Sequence[float], params: DubinsParams, dt: float) -> Tuple[float, float]:
    """几何追踪：全速，转向角速度饱和。"""
    desired = math.atan2(point[1] - state[1], point[0] - state[0])
    err = float(wrap_angle(desired - state[2]))
    w = max(-params.w_max, min(params.w_max, err / dt))
    return params.v_max, w


def evasion_control(state: np.ndarray, threat: Sequence[float], params: DubinsParams, dt: float) -> Tuple[float, float]:
    """沿入侵者指向本机的方向全速飞离。"""
    away = (2.0 * state[0] - threat[0], 2.0 * state[1] - threat[1])
    return steer_towards(state, away, params, dt)


def pursuit_control(view: IntruderView, victim: str, params: DubinsParams) -> Tuple[float, float]:
    plan = view.planset.plans[victim]
    target = view.vehicles.get(victim, plan.nominal_state(view.t))
    artifacts = view.planset.artifacts.get(victim)
    if artifacts is not None:
        x_rel = to_relative(target, view.intruder)
        tau = min(max(view.t - view.t_sa, 0.0), artifacts.t_bar)
        try:
            snapshot = artifacts.avoid.at(tau)
            grad = snapshot.gradient_at(x_rel)
            if np.linalg.norm(grad) > 1e-9:
                inputs = artifacts.dynspec.optimal_inputs(list(x_rel), list(grad))
                v_I, w_I = (float(c) for c in inputs["u_other"])
                return min(max(v_I, params.v_min), params.v_max), max(-params.w_max, min(params.w_max, w_I))
        except OutOfBounds:
            pass
    return steer_towards(view.intruder, target[:2], params, view.dt)


def intruder_chain_strategy(state: np.ndarray, victims: Sequence[str], planset, view: IntruderView,
                            params: DubinsParams, index: int = 0) -> Tuple[Tuple[float, float], int]:
    """
    连环攻击：追击当前受害者，一旦其 V^A ≤ 0（进入避让）或不在空域中就转向下一个。
    返回 (控制, 新的受害者下标)。
    """
    while index < len(victims) - 1:
        current = victims[index]
        forced = view.avoid_start.get(current, math.inf) < math.inf
        gone = not view.active.get(current, True) and view.t > planset.plans[current].departure_time
        if not (forced or gone):
            break
        index += 1
    view = IntruderView(**{**view.__dict__, "intruder": np.asarray(state, dtype=float)})
    return pursuit_control(view, victims[index], params), index


class BaseIntruderStrategy(ABC):
    def __init__(self, plan: IntruderPlan, params: DubinsParams):
        self.plan = plan
        self.params = params
        self.strategy_name = self.__class__.__name__

    @abstractmethod
    def control(self, view: IntruderView) -> Tuple[float, float]:
        pass

    @abstractmethod
    def get_status(self) -> str:
        pass


class ScriptedWaypoints(BaseIntruderStrategy):
    capture_radius = 20.0

    def __init__(self, plan, params):
        super().__init__(plan, params)
        self.index = 0

    def control(self, view):
        waypoints = self.plan.waypoints
        while self.index < len(waypoints) - 1 and \
                math.dist(view.intruder[:2], waypoints[self.index]) < self.capture_radius:
            self.index += 1
        return steer_towards(view.intruder, waypoints[self.index], self.params, view.dt)

    def get_status(self):
        return f"waypoints {self.index + 1}/{len(self.plan.waypoints)}"


class PursuitStrategy(BaseIntruderStrategy):
    def control(self, view):
        return pursuit_control(view, self.plan.victims[0], self.params)

    def get_status(self):
        return f"pursuit {self.plan.victims[0]}"


class ChainAttack(BaseIntruderStrategy):
    def __init__(self, plan, params):
        super().__init__(plan, params)
        self.index = 0

    def control(self, view):
        u, index = intruder_chain_strategy(view.intruder, self.plan.victims, view.planset, view,
                                           self.params, self.index)
        if index != self.index:
            log_info(f"📢 连环攻击转向 {self.plan.victims[index]} (t={view.t:.2f}s)")
            self.index = index
        return u

    def get_status(self):
        return f"chain {self.index + 1}/{len(self.plan.victims)}: {self.plan.victims[self.index]}"


STRATEGY_CLASSES = {
    "waypoints": ScriptedWaypoints,
    "pursuit": PursuitStrategy,
    "chain": ChainAttack,
}


def make_strategy(plan: IntruderPlan, params: DubinsParams) -> Optional[BaseIntruderStrategy]:
    if not plan.present:
        return None
    return STRATEGY_CLASSES[plan.strategy](plan, params)


def boundary_injection(victim_state: np.ndarray, artifacts, cell: float) -> np.ndarray:
    """
    在受害者正前方、避让区域边界外一格处放置入侵者，航向朝向受害者。
    """
    r = artifacts.r_c
    step = max(cell, 1.0)
    limit = artifacts.avoid.grid.maxs[0]
    while r < limit and artifacts.avoid_value(np.array([r, 0.0, -math.pi]), 0.0) <= 0.0:
        r += step
    r += step
    theta = float(victim_state[2])
    return np.array([
        victim_state[0] + r * math.cos(theta),
        victim_state[1] + r * math.sin(theta),
        float(wrap_angle(theta + math.pi)),
    ])

"""
高优先级飞行器 j 对低优先级飞行器 i 诱导的五类障碍物。

每类一个类，按 CASE_CLASSES 注册；共享的前置量（滚动 FRS 等）在
InducedContext 中只算一次。五类之间互不依赖，可并发计算。
"""
import asyncio
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional

from reach.dynamics import DynSpec
from reach.reachops import (
    ObstacleSchedule,
    augment_capture,
    rolling_frs,
    schedule_union,
    windowed_brs,
)
from utils.logger import log_debug, log_error, log_info


@dataclass
class InducedContext:
    base: ObstacleSchedule
    static_dilated: Optional[ObstacleSchedule]
    frs_dynspec: DynSpec
    obstacle_dynspec: DynSpec
    t_bar: float
    t_brd: float
    r_c: float
    cfl: float = 0.5
    reinit_iterations: int = 8

    @cached_property
    def frs_full(self) -> ObstacleSchedule:
        return rolling_frs(self.base, self.t_bar, self.frs_dynspec, self.cfl)

    @cached_property
    def frs_rd(self) -> ObstacleSchedule:
        return rolling_frs(self.base, max(self.t_bar - self.t_brd, 0.0), self.frs_dynspec, self.cfl)

    def capture(self, schedule: ObstacleSchedule) -> ObstacleSchedule:
        return augment_capture(schedule, self.r_c, self.reinit_iterations)

    def prepare(self):
        """预先计算共享前置量，避免并发线程重复求解。"""
        _ = self.frs_full, self.frs_rd


class BaseObstacleCase(ABC):
    case_id: int = 0

    def __init__(self):
        self.case_name = self.__class__.__name__

    @abstractmethod
    def compute(self, ctx: InducedContext) -> ObstacleSchedule:
        pass

    @abstractmethod
    def get_status(self) -> str:
        pass

    def run(self, ctx: InducedContext) -> ObstacleSchedule:
        result = self.compute(ctx)
        log_debug(f"{self.case_name}: {len(result)} snapshots")
        return result


class BaseObstacleCaseOne(BaseObstacleCase):
    """入侵者出现前：膨胀的基础障碍。"""
    case_id = 1

    def compute(self, ctx):
        return ctx.capture(ctx.base)

    def get_status(self):
        return "Case 1: base ⊕ r_c"


class ForwardReachCase(BaseObstacleCase):
    """j 在 [t − t̄, t] 内可能到达的位置（滚动 FRS），膨胀 r_c。"""
    case_id = 2

    def compute(self, ctx):
        return ctx.capture(ctx.frs_full)

    def get_status(self):
        return "Case 2: FRS(base, t̄) ⊕ r_c"


class BaseAvoidCase(BaseObstacleCase):
    """i 在 [t, t+t̄] 内可能被迫撞上 j 的基础障碍或静态障碍的状态。"""
    case_id = 3

    def compute(self, ctx):
        target = ctx.capture(ctx.base)
        if ctx.static_dilated is not None:
            target = schedule_union(target, ctx.static_dilated)
        return windowed_brs(target, 0.0, ctx.t_bar, ctx.obstacle_dynspec, ctx.cfl)

    def get_status(self):
        return "Case 3: BRS over [0, t̄] of (base ⊕ r_c) ∪ statics"


class ForwardAvoidCase(BaseObstacleCase):
    """i 在 [t, t+t̄−t_brd] 内可能撞上 j 的滚动 FRS 的状态。"""
    case_id = 4

    def compute(self, ctx):
        target = ctx.capture(ctx.frs_full)
        return windowed_brs(target, 0.0, ctx.t_bar - ctx.t_brd, ctx.obstacle_dynspec, ctx.cfl)

    def get_status(self):
        return "Case 4: BRS over [0, t̄ − t_brd] of FRS(base, t̄) ⊕ r_c"


class LateAvoidCase(BaseObstacleCase):
    """精确时刻语义：τ ∈ [t̄ − 2t_brd, t̄] 时到达 FRS(base, t̄ − t_brd) ⊕ r_c。"""
    case_id = 5

    def compute(self, ctx):
        target = ctx.capture(ctx.frs_rd)
        return windowed_brs(target, ctx.t_bar - 2.0 * ctx.t_brd, ctx.t_bar, ctx.obstacle_dynspec, ctx.cfl)

    def get_status(self):
        return "Case 5: exact-time BRS over [t̄ − 2t_brd, t̄] of FRS(base, t̄ − t_brd) ⊕ r_c"


CASE_CLASSES: Dict[int, type] = {
    1: BaseObstacleCaseOne,
    2: ForwardReachCase,
    3: BaseAvoidCase,
    4: ForwardAvoidCase,
    5: LateAvoidCase,
}


def induced_obstacles(ctx: InducedContext, case: int) -> ObstacleSchedule:
    if case not in CASE_CLASSES:
        raise ValueError(f"unknown case {case}, expected one of {sorted(CASE_CLASSES)}")
    return CASE_CLASSES[case]().run(ctx)


async def _compute_cases_async(ctx: InducedContext, cases: List[int]) -> Dict[int, ObstacleSchedule]:
    tasks = [asyncio.to_thread(induced_obstacles, ctx, case) for case in cases]
    results = await asyncio.gather(*tasks, return_exceptions=True)
    out: Dict[int, ObstacleSchedule] = {}
    first_error: Optional[BaseException] = None
    for case, result in zip(cases, results):
        if isinstance(result, BaseException):
            log_error(f"❌ Case {case} 计算失败: {result}")
            first_error = first_error or result
        else:
            out[case] = result
    if first_error is not None:
        raise first_error
    return out


def compute_cases(ctx: InducedContext, cases=(1, 2, 3, 4, 5)) -> Dict[int, ObstacleSchedule]:
    """并发计算各类诱导障碍。"""
    ctx.prepare()
    results = asyncio.run(_compute_cases_async(ctx, list(cases)))
    log_info(f"✅ 诱导障碍 Case {', '.join(str(c) for c in sorted(results))} 计算完成")
    return results

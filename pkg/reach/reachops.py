"""
随时间变化的障碍物代数：时间表、捕获半径膨胀、滚动 FRS、时间窗并集与感知距离。
"""
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from reach.dynamics import DynSpec
from reach.gridfield import (
    FAR,
    Grid,
    ScalarField,
    dilate_values,
    lift_values,
    max_norm_of_subzero,
    minkowski_values,
    project_min,
)
from reach.hjsolver import propagate_chain
from utils.errors import GridMismatch, NegativeRadius, SpanTooShort
from utils.logger import log_debug

_TIME_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ObstacleSchedule:
    """分段常值（保持前一快照）的障碍物时间表。"""
    times: np.ndarray
    fields: Tuple[ScalarField, ...]

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        fields = tuple(self.fields)
        if times.ndim != 1 or len(times) == 0 or len(times) != len(fields):
            raise ValueError("ObstacleSchedule needs one field per time")
        if np.any(np.diff(times) <= 0):
            raise ValueError("ObstacleSchedule times must be strictly increasing")
        if any(f.grid != fields[0].grid for f in fields):
            raise GridMismatch("schedule snapshots must share one grid")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "fields", fields)

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    def __len__(self) -> int:
        return len(self.times)

    @classmethod
    def from_stack(cls, grid: Grid, times: Sequence[float], stack: np.ndarray) -> "ObstacleSchedule":
        return cls(np.asarray(times, dtype=float), tuple(ScalarField(grid, v) for v in stack))

    @classmethod
    def static(cls, field: ScalarField, t: float = 0.0) -> "ObstacleSchedule":
        return cls(np.array([t]), (field,))

    @classmethod
    def empty(cls, grid: Grid, t: float = 0.0) -> "ObstacleSchedule":
        return cls.static(ScalarField(grid, np.full(grid.shape, FAR)), t)

    def index_at(self, t: float) -> int:
        idx = int(np.searchsorted(self.times, t + _TIME_TOL, side="right")) - 1
        return min(max(idx, 0), len(self.times) - 1)

    def sample(self, t: float) -> ScalarField:
        return self.fields[self.index_at(t)]

    def stack(self) -> np.ndarray:
        return np.stack([f.values for f in self.fields])

    def resampled(self, times: Sequence[float]) -> np.ndarray:
        return np.stack([self.sample(t).values for t in times])

    def is_empty(self) -> bool:
        return not any(f.subzero().any() for f in self.fields)

    def lifted(self, grid: Grid) -> "ObstacleSchedule":
        if grid == self.grid:
            return self
        return ObstacleSchedule(self.times, tuple(
            ScalarField(grid, lift_values(f.values, f.grid, grid)) for f in self.fields))

    def window(self, t_lo: float, t_hi: float) -> "ObstacleSchedule":
        lo = self.index_at(t_lo)
        hi = max(lo + 1, int(np.searchsorted(self.times, t_hi - _TIME_TOL, side="left")) + 1)
        return ObstacleSchedule(self.times[lo:hi], self.fields[lo:hi])


def schedule_sample(schedule: ObstacleSchedule, t: float) -> ScalarField:
    return schedule.sample(t)


def schedule_shift(schedule: ObstacleSchedule, dt: float) -> ObstacleSchedule:
    if dt == 0:
        return schedule
    return ObstacleSchedule(schedule.times + dt, schedule.fields)


def _common_grid(a: Grid, b: Grid) -> Grid:
    if a == b or a.embedding_of(b) is not None:
        return a
    if b.embedding_of(a) is not None:
        return b
    raise GridMismatch("schedules live on unrelated grids")


def schedule_union(a: ObstacleSchedule, b: ObstacleSchedule) -> ObstacleSchedule:
    grid = _common_grid(a.grid, b.grid)
    times = np.union1d(a.times, b.times)
    values = []
    for t in times:
        fa, fb = a.sample(t), b.sample(t)
        values.append(np.minimum(lift_values(fa.values, fa.grid, grid), lift_values(fb.values, fb.grid, grid)))
    return ObstacleSchedule.from_stack(grid, times, np.stack(values))


def schedule_union_all(schedules: Iterable[ObstacleSchedule]) -> Optional[ObstacleSchedule]:
    schedules = list(schedules)
    if not schedules:
        return None
    return reduce(schedule_union, schedules)


def augment_capture(schedule: ObstacleSchedule, r_c: float, iterations: int = 8) -> ObstacleSchedule:
    if r_c < 0:
        raise NegativeRadius(f"r_c={r_c}")
    if r_c == 0:
        return schedule
    stack = dilate_values(schedule.stack(), schedule.grid, r_c, iterations=iterations)
    return ObstacleSchedule.from_stack(schedule.grid, schedule.times, stack)


def schedule_minkowski(schedule: ObstacleSchedule, kernel: ScalarField) -> ObstacleSchedule:
    stack = minkowski_values(schedule.stack(), schedule.grid, kernel)
    return ObstacleSchedule.from_stack(schedule.grid, schedule.times, stack)


def _uniform(schedule: ObstacleSchedule) -> Tuple[np.ndarray, np.ndarray, float]:
    """返回等间隔格点上的 (times, stack, stride)；非等间隔时按最小间隔重采样。"""
    times = schedule.times
    if len(times) == 1:
        return times, schedule.stack(), 0.0
    steps = np.diff(times)
    stride = float(steps.min())
    if np.allclose(steps, stride, rtol=1e-6, atol=1e-9):
        return times, schedule.stack(), stride
    count = int(round((times[-1] - times[0]) / stride))
    lattice = times[0] + stride * np.arange(count + 1)
    return lattice, schedule.resampled(lattice), stride


def rolling_frs(base: ObstacleSchedule, duration: float, dynspec: DynSpec,
                cfl_factor: float = 0.5) -> ObstacleSchedule:
    """
    每个输出时刻 t 给出 base(t − duration) 前向传播 duration 后的可达集；
    t − duration 早于第一个快照时使用从第一个快照起的截断时长。
    """
    if duration < 0:
        raise ValueError(f"duration must be non-negative, got {duration}")
    if duration == 0:
        return base
    times, stack, stride = _uniform(base)
    grid = base.grid
    if stride == 0.0:
        # 单快照视为静态时间表
        out = {}
        propagate_chain(stack, grid, dynspec, [duration], "forward", cfl_factor,
                        on_lead=lambda i, v: out.setdefault("v", v.copy()))
        return ObstacleSchedule.from_stack(grid, times, out["v"])
    if times[-1] - times[0] < duration - _TIME_TOL:
        raise SpanTooShort(f"base spans {times[-1] - times[0]:.3g}s < duration {duration:.3g}s")

    n_early = int(np.ceil(duration / stride - 1e-9))
    leads = [k * stride for k in range(n_early)] + [duration]
    result = np.empty_like(stack)

    def collect(index: int, values: np.ndarray):
        if index < n_early:
            # 截断时长：第一个快照传播 k·stride
            result[index] = values[0]
            return
        for k in range(n_early, len(times)):
            src = int(np.floor((times[k] - duration - times[0]) / stride + 1e-9))
            result[k] = values[min(max(src, 0), len(times) - 1)]

    propagate_chain(stack, grid, dynspec, leads, "forward", cfl_factor, on_lead=collect)
    log_debug(f"rolling_frs: duration {duration}s over {len(times)} snapshots")
    return ObstacleSchedule.from_stack(grid, times, result)


def window_leads(lead_lo: float, lead_hi: float, stride: float) -> List[float]:
    """时间窗 [lead_lo, lead_hi] 的两端加上窗内的格点时长；stride 为 0 时按 1 秒取样。"""
    step = stride if stride > 0.0 else 1.0
    inner = np.arange(np.floor(lead_lo / step + 1e-9) + 1, np.ceil(lead_hi / step - 1e-9)) * step
    leads = [lead_lo] + [float(v) for v in inner if lead_lo + _TIME_TOL < v < lead_hi - _TIME_TOL]
    if lead_hi > lead_lo + _TIME_TOL:
        leads.append(lead_hi)
    return leads


def windowed_brs(target: ObstacleSchedule, lead_lo: float, lead_hi: float, dynspec: DynSpec,
                 cfl_factor: float = 0.5) -> ObstacleSchedule:
    """
    out(t) = ∪_L BRS_L(target(t + L))，L 只取时间窗 [lead_lo, lead_hi] 内的时长；
    精确时刻语义，target(t + L) 取保持的前一快照，超出末快照时保持末快照。
    """
    lead_lo = max(0.0, lead_lo)
    if lead_hi < lead_lo:
        raise ValueError(f"empty lead window [{lead_lo}, {lead_hi}]")
    times, stack, stride = _uniform(target)
    grid = target.grid
    leads = window_leads(lead_lo, lead_hi, stride)
    offsets = [int(np.floor(lead / stride + 1e-9)) if stride > 0.0 else 0 for lead in leads]
    result = np.full(stack.shape, FAR)
    count = len(times)

    def collect(index: int, values: np.ndarray):
        src = np.minimum(np.arange(count) + offsets[index], count - 1)
        np.minimum(result, values[src], out=result)

    propagate_chain(stack, grid, dynspec, leads, "backward", cfl_factor, on_lead=collect)
    return ObstacleSchedule.from_stack(grid, times, result)


def sensing_distance(avoid_region: ScalarField, position_dims: Sequence[int] = (0, 1)) -> float:
    """避让区域在位置平面投影上的最大范数。"""
    if avoid_region.grid.ndim > len(position_dims):
        avoid_region = project_min(avoid_region, position_dims)
    return max_norm_of_subzero(avoid_region)

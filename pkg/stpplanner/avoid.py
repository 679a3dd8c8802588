"""
相对坐标下的避让区域、相对缓冲区，以及由它们构造的分离区域与缓冲区域。

相对集合与绝对（无航向）集合求和前先对车辆航向做旋转包络：
原点连通集合的所有旋转之并是以其最大范数为半径的球，
因此所有相对集合的 Minkowski 和都化为球膨胀。
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from reach.dynamics import (
    ROLE_AVOID,
    ROLE_BUFFER,
    ROLE_OBSTACLE,
    ControlSample,
    DubinsAbsolute,
    DubinsParams,
    DubinsRelative,
    DynSpec,
    RelativeParams,
    SingleIntegrator,
    SingleIntegratorParams,
    controller_from_value,
)
from reach.gridfield import (
    FAR,
    Grid,
    ScalarField,
    TimeField,
    ball_kernel,
    dilate_ball,
    lift,
    make_grid,
    max_norm_of_subzero,
    project_min,
    sdf_ball,
)
from reach.hjsolver import ReachProblem, solve_brs
from reach.reachops import ObstacleSchedule, schedule_minkowski, sensing_distance
from utils.errors import DomainTooSmall, OutOfBounds
from utils.logger import log_info, log_warning

MAX_EXPANSIONS = 2
EXPANSION_FACTOR = 1.5


def relative_grid(half_width: float, counts: Sequence[int] = (41, 41, 21)) -> Grid:
    return make_grid([-half_width, -half_width, -math.pi], [half_width, half_width, math.pi],
                     counts, [False, False, True])


def _touches_boundary(field_: ScalarField) -> bool:
    inside = field_.subzero()
    for axis in field_.grid.position_dims:
        if np.take(inside, 0, axis=axis).any() or np.take(inside, -1, axis=axis).any():
            return True
    return False


def _solve_relative(dynspec: DynSpec, horizon: float, r_c: float, half_width: float,
                    counts: Sequence[int], cfl: float, label: str) -> TimeField:
    """在相对网格上求危险球的 BRS；零下集触及边界时放大网格重算。"""
    width = half_width
    for attempt in range(MAX_EXPANSIONS + 1):
        grid = relative_grid(width, counts)
        danger = sdf_ball(grid, (0.0, 0.0), r_c, dims=(0, 1))
        if horizon <= 0:
            return TimeField(np.array([0.0]), (danger,), "backward")
        problem = ReachProblem(grid=grid, target=danger, dynspec=dynspec, horizon=horizon,
                               direction="backward", mode="reach-exists", cfl_factor=cfl,
                               t_anchor=horizon)
        result = solve_brs(problem)
        if not _touches_boundary(result.fields[0]):
            return result
        log_warning(f"⚠️ {label}: 相对网格半宽 {width:.0f}m 不足，扩大后重算")
        width *= EXPANSION_FACTOR
    raise DomainTooSmall(f"{label}: sub-zero set still touches the boundary after {MAX_EXPANSIONS} expansions")


@dataclass(frozen=True, eq=False)
class AvoidArtifacts:
    """
    avoid: A^A(τ, t̄)，τ ∈ [0, t̄] 为入侵者出现后经过的时间，τ=0 时集合最大。
    buffer: A^B，buffer.at(0) 为 horizon = t_brd 的相对缓冲区。
    """
    avoid: TimeField
    buffer: TimeField
    dynspec: DynSpec
    buffer_dynspec: DynSpec
    t_bar: float
    t_brd: float
    r_c: float
    d_sen: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "d_sen", sensing_distance(self.avoid.at(0.0)))

    @property
    def avoid_full(self) -> ScalarField:
        return self.avoid.at(0.0)

    @property
    def avoid_trd(self) -> ScalarField:
        """剩余时间 t_rd = t̄ − t_brd 的避让区域。"""
        return self.avoid.at(self.t_brd)

    @property
    def buffer_full(self) -> ScalarField:
        return self.buffer.at(0.0)

    @property
    def avoid_radius(self) -> float:
        return self.d_sen

    @property
    def avoid_trd_radius(self) -> float:
        return max_norm_of_subzero(project_min(self.avoid_trd, (0, 1)))

    @property
    def buffer_radius(self) -> float:
        return max_norm_of_subzero(project_min(self.buffer_full, (0, 1)))

    def avoid_value(self, x_rel, tau: float = 0.0) -> float:
        """V^A(τ, x_rel)；相对状态在网格外时视为远离。"""
        try:
            return self.avoid.value_at(tau, x_rel)
        except OutOfBounds:
            return FAR

    def avoidance_control(self, x_rel, tau: float) -> ControlSample:
        return controller_from_value(self.avoid, self.dynspec, tau, x_rel, mode="avoid")

    def collide_control(self, x_rel) -> Optional[ControlSample]:
        try:
            return controller_from_value(self.buffer, self.buffer_dynspec, 0.0, x_rel, mode="nominal")
        except OutOfBounds:
            return None


def compute_avoid_region(intruder_params: DubinsParams, vehicle_params: DubinsParams, t_bar: float,
                         r_c: float, *, t_brd: Optional[float] = None, half_width: Optional[float] = None,
                         counts: Sequence[int] = (41, 41, 21), cfl: float = 0.5) -> AvoidArtifacts:
    rel = RelativeParams(vehicle=vehicle_params, intruder=intruder_params)
    dyn = DubinsRelative(rel, ROLE_AVOID)
    width = half_width or 3.0 * r_c
    t_brd = t_bar / 3.0 if t_brd is None else t_brd
    avoid = _solve_relative(dyn, t_bar, r_c, width, counts, cfl, "avoid region")
    buffer = relative_buffer(rel, t_brd, r_c, half_width=width, counts=counts, cfl=cfl)
    artifacts = AvoidArtifacts(avoid=avoid, buffer=buffer, dynspec=dyn,
                               buffer_dynspec=DubinsRelative(rel, ROLE_BUFFER),
                               t_bar=t_bar, t_brd=t_brd, r_c=r_c)
    log_info(f"✅ 避让区域: d_sen={artifacts.d_sen:.1f}m, 缓冲半径={artifacts.buffer_radius:.1f}m")
    return artifacts


def relative_buffer(params: RelativeParams, t_brd: float, r_c: float, *, half_width: Optional[float] = None,
                    counts: Sequence[int] = (41, 41, 21), cfl: float = 0.5) -> TimeField:
    dyn = DubinsRelative(params, ROLE_BUFFER)
    width = half_width or 3.0 * r_c
    # 闭合速度上界：半宽至少覆盖 r_c + 闭合距离
    closing = 2.0 * max(params.vehicle.v_max, params.intruder.v_max) + params.vehicle.d_r + params.intruder.d_r
    width = max(width, 1.2 * (r_c + closing * t_brd))
    return _solve_relative(dyn, t_brd, r_c, width, counts, cfl, "relative buffer")


def _position_spacing(schedule: ObstacleSchedule) -> Tuple[float, ...]:
    grid = schedule.grid
    return tuple(float(grid.spacing[k]) for k in grid.position_dims)


def _dilate_schedule(schedule: ObstacleSchedule, radius: float) -> ObstacleSchedule:
    if radius <= 0:
        return schedule
    return schedule_minkowski(schedule, ball_kernel(_position_spacing(schedule), radius))


def hull_radius(relative_set: ScalarField) -> float:
    """相对集合位置投影的最大范数（旋转包络的球半径）。"""
    return max_norm_of_subzero(project_min(relative_set, (0, 1)))


def separation_region(base_sched_j: ObstacleSchedule, avoid_region_j: ScalarField) -> ObstacleSchedule:
    """S_j(t) = base_j(t) ⊕ A^A_j(0, t̄)。"""
    return _dilate_schedule(base_sched_j, hull_radius(avoid_region_j))


def buffer_region(sep_j: ObstacleSchedule, rel_buffer_i: Optional[ScalarField],
                  static_avoid_trd_i: Optional[ScalarField]) -> ObstacleSchedule:
    """B̃_ij = S_j ⊕ A^B_i(0, t_brd) ⊕ A^A_i(0, t_rd)；缺省项跳过（得到 B_ij）。"""
    radius = 0.0
    for summand in (rel_buffer_i, static_avoid_trd_i):
        if summand is not None:
            radius += hull_radius(summand)
    return _dilate_schedule(sep_j, radius)


def mirror_buffer_region(base_j: ObstacleSchedule, artifacts_j: AvoidArtifacts,
                         avoid_full_i: ScalarField) -> ObstacleSchedule:
    """B̃_ji = base_j ⊕ A^A_j(0, t_rd) ⊕ A^B_j(0, t_brd) ⊕ A^A_i(0, t̄)。"""
    radius = artifacts_j.avoid_trd_radius + artifacts_j.buffer_radius + hull_radius(avoid_full_i)
    return _dilate_schedule(base_j, radius)


def position_envelope(params: DubinsParams, role=ROLE_OBSTACLE) -> SingleIntegrator:
    """Dubins 位置可达集的单积分器外包络（速度 v_max + d_r）。"""
    return SingleIntegrator(SingleIntegratorParams(speed=params.v_max, d_r=params.d_r), role)


def static_avoid_brs(static_fields: Sequence[ScalarField], vehicle_params: DubinsParams, t_bar: float,
                     r_c: float, t_anchor: float, grid: Grid, *, dynspec: Optional[DynSpec] = None,
                     cfl: float = 0.5) -> ObstacleSchedule:
    """
    静态障碍的 t̄ 时长 BRS（min_u min_d）；目标为膨胀 r_c 后的静态障碍。
    静态障碍使结果与时间无关，返回单快照时间表。
    """
    if not static_fields:
        return ObstacleSchedule.empty(grid, t_anchor)
    union = static_fields[0].values
    for f in static_fields[1:]:
        union = np.minimum(union, f.values)
    target = ScalarField(static_fields[0].grid, union)
    target = lift(target, grid)
    if r_c > 0:
        target = dilate_ball(target, r_c)
    if dynspec is None:
        dynspec = position_envelope(vehicle_params) if grid.ndim == 2 else DubinsAbsolute(vehicle_params, ROLE_OBSTACLE)
    problem = ReachProblem(grid=grid, target=target, dynspec=dynspec, horizon=t_bar, direction="backward",
                           mode="reach-exists", cfl_factor=cfl, t_anchor=t_bar)
    result = solve_brs(problem)
    return ObstacleSchedule.static(result.fields[0], t_anchor)

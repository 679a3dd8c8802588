"""
HJ 变分不等式 / HJ PDE 的网格求解器。

一阶迎风差分 + 全局 Lax-Friedrichs 数值哈密顿量 + TVD-RK2。
前向形式：V ← V − dt·(H(p̄) − Σ α_k (p⁺ − p⁻)/2)；后向求解在倒计时时间上
使用取负的哈密顿量，两者共用同一套更新。
"""
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from reach.dynamics import DynSpec
from reach.gridfield import Grid, ScalarField, TimeField, lift, lift_values
from utils.errors import CflViolation, GridMismatch, UnboundedSpeed
from utils.logger import log_debug, log_info

# 自动保存时的快照上限
MAX_AUTO_SNAPSHOTS = 200

Hamiltonian = Callable[[Sequence[np.ndarray], Sequence[np.ndarray]], np.ndarray]


@dataclass
class ReachProblem:
    grid: Grid
    target: ScalarField
    dynspec: DynSpec
    horizon: float
    direction: str = "backward"
    mode: str = "reach-exists"
    obstacles: Optional[object] = None   # ObstacleSchedule，按 sample(t) 取值
    cfl_factor: float = 0.5
    save_stride: Optional[int] = None
    save_dt: Optional[float] = None
    t_anchor: float = 0.0   # 后向为 t_f，前向为 t_0
    clip_obstacles: bool = True

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not 0 < self.cfl_factor <= 1:
            raise ValueError(f"cfl_factor must lie in (0, 1], got {self.cfl_factor}")
        if self.direction not in ("backward", "forward"):
            raise ValueError(f"unknown direction {self.direction}")
        if self.mode not in ("reach-exists", "exact-time"):
            raise ValueError(f"unknown mode {self.mode}")
        if self.grid.embedding_of(self.target.grid) is None:
            raise GridMismatch("target grid does not match problem grid")
        if self.obstacles is not None and self.grid.embedding_of(self.obstacles.grid) is None:
            raise GridMismatch("obstacle grid does not match problem grid")


@dataclass
class SchemeState:
    grid: Grid
    values: np.ndarray
    time: float
    alphas: np.ndarray
    cfl_factor: float = 0.5
    dt_history: List[float] = field(default_factory=list)

    @property
    def field(self) -> ScalarField:
        return ScalarField(self.grid, self.values)

    @property
    def max_dt(self) -> float:
        rate = float(np.sum(self.alphas / self.grid.spacing))
        return math.inf if rate == 0 else self.cfl_factor / rate


def _upwind(values: np.ndarray, grid: Grid, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    axis = values.ndim - grid.ndim + dim
    h = grid.spacing[dim]
    if grid.periodic[dim]:
        left = (values - np.roll(values, 1, axis=axis)) / h
        right = (np.roll(values, -1, axis=axis) - values) / h
        return left, right
    diff = np.diff(values, axis=axis) / h
    n = diff.shape[axis]
    # 线性外推的虚节点：边界处单侧差分等于相邻内侧差分
    left = np.concatenate([np.take(diff, [0], axis=axis), diff], axis=axis)
    right = np.concatenate([diff, np.take(diff, [n - 1], axis=axis)], axis=axis)
    return left, right


def upwind_derivs(field: ScalarField, dim: int) -> Tuple[ScalarField, ScalarField]:
    left, right = _upwind(field.values, field.grid, dim)
    return ScalarField(field.grid, left), ScalarField(field.grid, right)


def dissipation_bounds(dynspec: DynSpec, grid: Grid) -> np.ndarray:
    alphas = np.asarray(dynspec.speed_bounds(grid), dtype=float)
    if alphas.shape != (grid.ndim,) or not np.all(np.isfinite(alphas)) or np.any(alphas < 0):
        raise UnboundedSpeed(f"invalid speed bounds {alphas} for {dynspec!r}")
    return alphas


def _lf_rate(values: np.ndarray, grid: Grid, hamiltonian: Hamiltonian, alphas: np.ndarray) -> np.ndarray:
    p_mean = []
    dissipation = 0.0
    for k in range(grid.ndim):
        left, right = _upwind(values, grid, k)
        p_mean.append(0.5 * (left + right))
        if alphas[k] > 0:
            dissipation = dissipation + 0.5 * alphas[k] * (right - left)
    return -(hamiltonian(grid.coords, p_mean) - dissipation)


def lf_step(state: SchemeState, hamiltonian: Hamiltonian, dt: float) -> ScalarField:
    """单个显式 Euler 子步（不修改 state）。"""
    if not dt > 0 or dt > state.max_dt * (1 + 1e-9):
        raise CflViolation(f"dt={dt} violates CFL bound {state.max_dt}")
    values = state.values + dt * _lf_rate(state.values, state.grid, hamiltonian, state.alphas)
    return ScalarField(state.grid, values)


def _rk2(values: np.ndarray, grid: Grid, hamiltonian: Hamiltonian, alphas: np.ndarray, dt: float) -> np.ndarray:
    stage = values + dt * _lf_rate(values, grid, hamiltonian, alphas)
    stage = stage + dt * _lf_rate(stage, grid, hamiltonian, alphas)
    return 0.5 * (values + stage)


def signed_hamiltonian(dynspec: DynSpec, direction: str) -> Hamiltonian:
    if direction == "forward":
        return dynspec.hamiltonian
    return lambda x, p: -dynspec.hamiltonian(x, p)


def _substeps(interval: float, max_dt: float) -> int:
    if math.isinf(max_dt):
        return 1
    return max(1, int(math.ceil(interval / max_dt - 1e-9)))


def save_lattice(horizon: float, max_dt: float, save_dt: Optional[float] = None,
                 save_stride: Optional[int] = None) -> np.ndarray:
    """从 0 到 horizon 的保存偏移（含两端）。"""
    if save_dt is not None:
        offsets = list(np.arange(0.0, horizon - 1e-9 * max(1.0, horizon), save_dt))
        return np.array(offsets + [horizon])
    total = _substeps(horizon, max_dt)
    stride = save_stride or (1 if total <= MAX_AUTO_SNAPSHOTS else int(math.ceil(total / MAX_AUTO_SNAPSHOTS)))
    steps = list(range(0, total, stride)) + [total]
    return np.array(steps, dtype=float) * (horizon / total)


def _solve(problem: ReachProblem) -> TimeField:
    grid = problem.grid
    dyn = problem.dynspec
    alphas = dissipation_bounds(dyn, grid)
    max_dt = float(problem.cfl_factor / np.sum(alphas / grid.spacing)) if np.any(alphas > 0) else math.inf
    ham = signed_hamiltonian(dyn, problem.direction)
    sign = -1.0 if problem.direction == "backward" else 1.0

    target = lift(problem.target, grid).values

    def neg_obstacle(t: float) -> Optional[np.ndarray]:
        if problem.obstacles is None:
            return None
        sample = problem.obstacles.sample(t)
        return -lift_values(sample.values, sample.grid, grid)

    values = np.array(target, dtype=float)
    g0 = neg_obstacle(problem.t_anchor)
    if g0 is not None:
        values = np.maximum(values, g0)

    offsets = save_lattice(problem.horizon, max_dt, problem.save_dt, problem.save_stride)
    snapshots = [values.copy()]
    n_steps = 0
    for a, b in zip(offsets[:-1], offsets[1:]):
        n = _substeps(b - a, max_dt)
        dt = (b - a) / n
        for i in range(n):
            t_start = problem.t_anchor + sign * (a + i * dt)
            values = _rk2(values, grid, ham, alphas, dt)
            if problem.mode == "reach-exists":
                np.minimum(values, target, out=values)
            if problem.clip_obstacles:
                g = neg_obstacle(t_start)
                if g is not None:
                    np.maximum(values, g, out=values)
        n_steps += n
        snapshots.append(values.copy())

    times = problem.t_anchor + sign * offsets
    if problem.direction == "backward":
        times, snapshots = times[::-1], snapshots[::-1]
    log_debug(f"{problem.direction} solve: {n_steps} steps, {len(snapshots)} snapshots, dt<= {max_dt:.4g}")
    return TimeField(times, tuple(ScalarField(grid, s) for s in snapshots), problem.direction)


def solve_brs(problem: ReachProblem) -> TimeField:
    if problem.direction != "backward":
        raise ValueError("solve_brs needs a backward problem")
    return _solve(problem)


def solve_frs(problem: ReachProblem) -> TimeField:
    if problem.direction != "forward":
        raise ValueError("solve_frs needs a forward problem")
    return _solve(problem)


def propagate_chain(values: np.ndarray, grid: Grid, dynspec: DynSpec, leads: Sequence[float],
                    direction: str, cfl_factor: float = 0.5,
                    on_lead: Optional[Callable[[int, np.ndarray], None]] = None) -> None:
    """
    对带前导批维的值数组做纯传播（无目标、无障碍，精确时刻语义），
    依次到达 leads 中的各时长并回调 on_lead(index, values)。
    """
    alphas = dissipation_bounds(dynspec, grid)
    max_dt = cfl_factor / float(np.sum(alphas / grid.spacing)) if np.any(alphas > 0) else math.inf
    ham = signed_hamiltonian(dynspec, direction)
    current = np.array(values, dtype=float)
    elapsed = 0.0
    for index, lead in enumerate(leads):
        interval = lead - elapsed
        if interval < -1e-12:
            raise ValueError("leads must be non-decreasing")
        if interval > 1e-12:
            n = _substeps(interval, max_dt)
            dt = interval / n
            for _ in range(n):
                current = _rk2(current, grid, ham, alphas, dt)
            elapsed = lead
        if on_lead is not None:
            on_lead(index, current)
    log_info(f"📢 propagate_chain({direction}): {len(leads)} leads up to {elapsed:.3g}s, batch {values.shape[:-grid.ndim]}")

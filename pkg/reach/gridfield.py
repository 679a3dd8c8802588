"""
网格、隐式曲面场与场代数。

约定：值 <= 0 表示点在集合内；并集取逐点 min，交集取 max，补集取负。
周期维（航向）不存储重复端点，所有模板都按周期回绕。
"""
import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from utils.errors import (
    BadDims,
    EmptySet,
    EmptySummand,
    GridMismatch,
    NegativeRadius,
    NonMonotoneBounds,
    OutOfBounds,
    TooFewNodes,
)
from utils.logger import log_debug, log_warning

# 空集占位值，保持有限
FAR = 1.0e9
# 快速扫描中“尚未到达”的距离
_UNREACHED = 1.0e12


@dataclass(frozen=True)
class Grid:
    mins: Tuple[float, ...]
    maxs: Tuple[float, ...]
    counts: Tuple[int, ...]
    periodic: Tuple[bool, ...]

    @property
    def ndim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @cached_property
    def spacing(self) -> np.ndarray:
        spans = np.asarray(self.maxs, dtype=float) - np.asarray(self.mins, dtype=float)
        denom = np.array([c if p else c - 1 for c, p in zip(self.counts, self.periodic)], dtype=float)
        return spans / denom

    @cached_property
    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(
            self.mins[k] + self.spacing[k] * np.arange(self.counts[k]) for k in range(self.ndim)
        )

    @cached_property
    def coords(self) -> Tuple[np.ndarray, ...]:
        """稀疏网格坐标（可广播），供哈密顿量向量化计算。"""
        return tuple(np.meshgrid(*self.axes, indexing="ij", sparse=True))

    @property
    def position_dims(self) -> Tuple[int, ...]:
        return tuple(k for k in range(self.ndim) if not self.periodic[k])

    def slice_dims(self, keep: Sequence[int]) -> "Grid":
        keep = tuple(keep)
        return Grid(
            mins=tuple(self.mins[k] for k in keep),
            maxs=tuple(self.maxs[k] for k in keep),
            counts=tuple(self.counts[k] for k in keep),
            periodic=tuple(self.periodic[k] for k in keep),
        )

    def scaled(self, factor: float) -> "Grid":
        counts = tuple(max(3, int(round(c * factor))) for c in self.counts)
        return Grid(self.mins, self.maxs, counts, self.periodic)

    def embedding_of(self, sub: "Grid") -> Optional[Tuple[int, ...]]:
        """若 sub 是本网格若干维的切片，返回对应维度。"""
        if sub == self:
            return tuple(range(self.ndim))
        for dims in itertools.combinations(range(self.ndim), sub.ndim):
            if self.slice_dims(dims) == sub:
                return dims
        return None

    def wrap(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=float, copy=True)
        for k in range(self.ndim):
            if self.periodic[k]:
                span = self.maxs[k] - self.mins[k]
                x[..., k] = self.mins[k] + np.mod(x[..., k] - self.mins[k], span)
        return x

    def clip(self, x: np.ndarray) -> np.ndarray:
        """把非周期维坐标夹回网格范围，周期维回绕。"""
        x = self.wrap(x)
        for k in range(self.ndim):
            if not self.periodic[k]:
                x[..., k] = np.clip(x[..., k], self.mins[k], self.maxs[k])
        return x

    def node_coordinates(self, dims: Sequence[int]) -> np.ndarray:
        """全部节点在 dims 上的坐标，形状 (*shape, len(dims))。"""
        mesh = np.meshgrid(*[self.axes[k] for k in range(self.ndim)], indexing="ij")
        return np.stack([mesh[k] for k in dims], axis=-1)

    def to_dict(self) -> dict:
        return {
            "mins": list(self.mins),
            "maxs": list(self.maxs),
            "counts": list(self.counts),
            "periodic": list(self.periodic),
        }


def make_grid(mins, maxs, counts, periodic=None) -> Grid:
    mins = tuple(float(m) for m in mins)
    maxs = tuple(float(m) for m in maxs)
    counts = tuple(int(c) for c in counts)
    periodic = tuple(bool(p) for p in (periodic if periodic is not None else [False] * len(counts)))
    if not counts or not (len(mins) == len(maxs) == len(counts) == len(periodic)):
        raise BadDims("mins/maxs/counts/periodic 维数不一致")
    for k, c in enumerate(counts):
        if c < 3:
            raise TooFewNodes(f"dim {k}: counts={c} < 3")
        if not maxs[k] > mins[k]:
            raise NonMonotoneBounds(f"dim {k}: maxs={maxs[k]} <= mins={mins[k]}")
    return Grid(mins, maxs, counts, periodic)


def _check_dims(grid: Grid, dims: Sequence[int]) -> Tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or len(set(dims)) != len(dims) or any(d < 0 or d >= grid.ndim for d in dims):
        raise BadDims(f"invalid dims {dims} for a {grid.ndim}-D grid")
    return dims


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise GridMismatch(f"values shape {values.shape} != grid shape {self.grid.shape}")
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("ScalarField values must be finite")
        if values.flags.writeable:
            values = values.copy()
            values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def subzero(self) -> np.ndarray:
        return self.values <= 0.0

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    @cached_property
    def _interpolator(self) -> RegularGridInterpolator:
        return _build_interpolator(self.grid, self.values)

    @cached_property
    def _gradient_interpolators(self) -> Tuple[RegularGridInterpolator, ...]:
        return tuple(
            _build_interpolator(self.grid, central_gradient(self.values, self.grid, k))
            for k in range(self.grid.ndim)
        )

    def interpolate(self, x):
        pts, single = _prepare_points(self.grid, x)
        out = self._interpolator(pts)
        return float(out[0]) if single else out

    def gradient_at(self, x) -> np.ndarray:
        pts, single = _prepare_points(self.grid, x)
        grads = np.stack([interp(pts) for interp in self._gradient_interpolators], axis=-1)
        return grads[0] if single else grads


def _build_interpolator(grid: Grid, values: np.ndarray) -> RegularGridInterpolator:
    axes = list(grid.axes)
    for k in range(grid.ndim):
        if grid.periodic[k]:
            # 追加一个回绕节点，使区间 [min, max] 完整
            axes[k] = np.append(axes[k], grid.maxs[k])
            values = np.concatenate([values, np.take(values, [0], axis=k)], axis=k)
    return RegularGridInterpolator(axes, values, method="linear", bounds_error=False, fill_value=None)


def _prepare_points(grid: Grid, x) -> Tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != grid.ndim:
        raise BadDims(f"point dimension {pts.shape[-1]} != grid ndim {grid.ndim}")
    pts = grid.wrap(pts)
    for k in range(grid.ndim):
        if grid.periodic[k]:
            continue
        tol = 1e-9 * (grid.maxs[k] - grid.mins[k])
        col = pts[:, k]
        if np.any(col < grid.mins[k] - tol) or np.any(col > grid.maxs[k] + tol):
            raise OutOfBounds(f"dim {k}: point outside [{grid.mins[k]}, {grid.maxs[k]}]")
        pts[:, k] = np.clip(col, grid.mins[k], grid.maxs[k])
    return pts, single


def central_gradient(values: np.ndarray, grid: Grid, dim: int) -> np.ndarray:
    """节点处中心差分；values 可带前导批维。"""
    axis = values.ndim - grid.ndim + dim
    h = grid.spacing[dim]
    if grid.periodic[dim]:
        return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * h)
    return np.gradient(values, h, axis=axis, edge_order=1)


def interpolate(field: ScalarField, x):
    return field.interpolate(x)


def gradient_at(field: ScalarField, x) -> np.ndarray:
    return field.gradient_at(x)


# === 几何体 ===
def sdf_ball(grid: Grid, center: Sequence[float], radius: float, dims: Optional[Sequence[int]] = None) -> ScalarField:
    if radius < 0:
        raise NegativeRadius(f"radius={radius}")
    dims = _check_dims(grid, dims if dims is not None else range(len(center)))
    if len(dims) != len(center):
        raise BadDims("center length does not match dims")
    sq = 0.0
    for c, k in zip(center, dims):
        sq = sq + (grid.coords[k] - float(c)) ** 2
    values = np.broadcast_to(np.sqrt(sq) - radius, grid.shape)
    return ScalarField(grid, np.array(values))


def sdf_rect(grid: Grid, lo: Sequence[float], hi: Sequence[float], dims: Optional[Sequence[int]] = None) -> ScalarField:
    """轴对齐矩形的有符号距离。"""
    dims = _check_dims(grid, dims if dims is not None else range(len(lo)))
    if len(lo) != len(dims) or len(hi) != len(dims):
        raise BadDims("rect bounds do not match dims")
    outside_sq = 0.0
    inner = None
    for a, b, k in zip(lo, hi, dims):
        if not b > a:
            raise NonMonotoneBounds(f"rect dim {k}: {b} <= {a}")
        q = np.maximum(float(a) - grid.coords[k], grid.coords[k] - float(b))
        outside_sq = outside_sq + np.maximum(q, 0.0) ** 2
        inner = q if inner is None else np.maximum(inner, q)
    values = np.sqrt(outside_sq) + np.minimum(inner, 0.0)
    return ScalarField(grid, np.array(np.broadcast_to(values, grid.shape)))


def empty_field(grid: Grid) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, FAR))


# === 集合运算 ===
def _same_grid(a: ScalarField, b: ScalarField):
    if a.grid != b.grid:
        raise GridMismatch("operands live on different grids")


def set_union(a: ScalarField, b: ScalarField) -> ScalarField:
    _same_grid(a, b)
    return ScalarField(a.grid, np.minimum(a.values, b.values))


def set_intersect(a: ScalarField, b: ScalarField) -> ScalarField:
    _same_grid(a, b)
    return ScalarField(a.grid, np.maximum(a.values, b.values))


def set_complement(a: ScalarField) -> ScalarField:
    return ScalarField(a.grid, -a.values)


def project_min(field: ScalarField, keep_dims: Sequence[int]) -> ScalarField:
    keep = tuple(sorted(_check_dims(field.grid, keep_dims)))
    if len(keep) == field.grid.ndim:
        raise BadDims("keep_dims must be a proper subset")
    dropped = tuple(k for k in range(field.grid.ndim) if k not in keep)
    return ScalarField(field.grid.slice_dims(keep), field.values.min(axis=dropped))


def lift_values(values: np.ndarray, sub: Grid, grid: Grid) -> np.ndarray:
    """把低维网格上的值沿缺失维广播到 grid（只读视图）。"""
    if sub == grid:
        return values
    dims = grid.embedding_of(sub)
    if dims is None:
        raise GridMismatch("field grid is not a slice of the target grid")
    shape = [1] * grid.ndim
    for k in dims:
        shape[k] = grid.counts[k]
    return np.broadcast_to(values.reshape(shape), grid.shape)


def lift(field: ScalarField, grid: Grid) -> ScalarField:
    if field.grid == grid:
        return field
    return ScalarField(grid, lift_values(field.values, field.grid, grid))


# === 重初始化（快速扫描） ===
def _sweep_fronts(shape: Tuple[int, ...]):
    idx = np.indices(shape).reshape(len(shape), -1)
    level = idx.sum(axis=0)
    order = np.argsort(level, kind="stable")
    idx, level = idx[:, order], level[order]
    cuts = np.flatnonzero(np.diff(level)) + 1
    return np.split(idx, cuts, axis=1)


def _godunov_update(dist, fixed, coords, spacings, shape):
    k = len(shape)
    neigh = []
    for d in range(k):
        lo = coords.copy()
        hi = coords.copy()
        lo[d] = np.clip(coords[d] - 1, 0, shape[d] - 1)
        hi[d] = np.clip(coords[d] + 1, 0, shape[d] - 1)
        v_lo = np.where((coords[d] >= 1)[:, None], dist[tuple(lo)], _UNREACHED)
        v_hi = np.where((coords[d] <= shape[d] - 2)[:, None], dist[tuple(hi)], _UNREACHED)
        neigh.append(np.minimum(v_lo, v_hi))
    a = np.stack(neigh)
    h = np.broadcast_to(np.asarray(spacings, dtype=float)[:, None, None], a.shape)
    order = np.argsort(a, axis=0)
    a = np.take_along_axis(a, order, axis=0)
    h = np.take_along_axis(h, order, axis=0)
    u = a[0] + h[0]
    for j in range(1, k):
        need = u > a[j]
        if not need.any():
            break
        w = 1.0 / h[: j + 1] ** 2
        sw = w.sum(axis=0)
        sa = (w * a[: j + 1]).sum(axis=0)
        saa = (w * a[: j + 1] ** 2).sum(axis=0)
        disc = np.maximum(sa * sa - sw * (saa - 1.0), 0.0)
        u = np.where(need, (sa + np.sqrt(disc)) / sw, u)
    u = np.where(a[0] >= _UNREACHED / 2, _UNREACHED, u)
    target = tuple(coords)
    current = dist[target]
    dist[target] = np.where(fixed[target], current, np.minimum(current, u))


def reinit_values(values: np.ndarray, grid: Grid, dims: Optional[Sequence[int]] = None, iterations: int = 8) -> np.ndarray:
    """
    一阶快速扫描重初始化。values 可带前导批维；只在 dims（默认非周期维）上
    计算距离，其余维度逐切片独立处理。没有界面的切片保持原值。
    """
    dims = tuple(dims) if dims is not None else grid.position_dims
    lead = values.ndim - grid.ndim
    axes = [lead + d for d in dims]
    spacings = [float(grid.spacing[d]) for d in dims]
    k = len(axes)

    phi = np.moveaxis(np.asarray(values, dtype=float), axes, list(range(k)))
    front_shape = phi.shape[:k]
    rest_shape = phi.shape[k:]
    phi = phi.reshape(front_shape + (-1,))

    inside = phi <= 0.0
    interface = np.zeros(phi.shape, dtype=bool)
    grad_sq = np.zeros(phi.shape)
    for d in range(k):
        n = front_shape[d]
        head = [slice(None)] * phi.ndim
        tail = [slice(None)] * phi.ndim
        head[d] = slice(0, n - 1)
        tail[d] = slice(1, n)
        change = inside[tuple(head)] != inside[tuple(tail)]
        interface[tuple(head)] |= change
        interface[tuple(tail)] |= change
        g = np.gradient(phi, spacings[d], axis=d, edge_order=1)
        grad_sq += g * g

    dist = np.full(phi.shape, _UNREACHED)
    cap = max(spacings)
    seed = np.minimum(np.abs(phi) / np.maximum(np.sqrt(grad_sq), 1e-12), cap)
    dist[interface] = seed[interface]

    if interface.any():
        fronts = _sweep_fronts(front_shape)
        for _ in range(iterations):
            for flips in itertools.product((False, True), repeat=k):
                view, fixed_view = dist, interface
                for d, flip in enumerate(flips):
                    if flip:
                        view = np.flip(view, axis=d)
                        fixed_view = np.flip(fixed_view, axis=d)
                for coords in fronts:
                    _godunov_update(view, fixed_view, coords, spacings, front_shape)

    out = np.where(dist >= _UNREACHED / 2, phi, np.where(inside, -dist, dist))
    out = out.reshape(front_shape + rest_shape)
    return np.moveaxis(out, list(range(k)), axes)


def reinit_sdf(field: ScalarField, iterations: int = 8, dims: Optional[Sequence[int]] = None) -> ScalarField:
    if field.subzero().all() or not field.subzero().any():
        log_warning("⚠️ reinit_sdf: 场没有符号变化，原样返回")
        return field
    return ScalarField(field.grid, reinit_values(field.values, field.grid, dims, iterations))


def dilate_values(values: np.ndarray, grid: Grid, radius: float, dims=None, iterations: int = 8) -> np.ndarray:
    if radius < 0:
        raise NegativeRadius(f"radius={radius}")
    if radius == 0:
        return values
    return reinit_values(values, grid, dims, iterations) - radius


def dilate_ball(field: ScalarField, radius: float, dims: Optional[Sequence[int]] = None, iterations: int = 8) -> ScalarField:
    if radius < 0:
        raise NegativeRadius(f"radius={radius}")
    if radius == 0:
        return field
    return ScalarField(field.grid, reinit_sdf(field, iterations, dims).values - radius)


# === Minkowski 和 ===
def _ball_radius(kernel: ScalarField) -> Optional[float]:
    """若核的零下集恰为以原点为心的球，返回半径。"""
    dims = kernel.grid.position_dims
    inside = kernel.subzero()
    if not inside.any():
        return None
    norms = np.linalg.norm(kernel.grid.node_coordinates(dims), axis=-1)
    radius = float(norms[inside].max())
    if np.array_equal(norms <= radius, inside):
        return radius
    return None


def _shift_min(values: np.ndarray, grid: Grid, shift: Sequence[int]) -> np.ndarray:
    lead = values.ndim - grid.ndim
    out = values
    for d, s in enumerate(shift):
        if s == 0:
            continue
        axis = lead + d
        if grid.periodic[d]:
            out = np.roll(out, s, axis=axis)
            continue
        padded = np.full(out.shape, FAR)
        n = out.shape[axis]
        if abs(s) >= n:
            out = padded
            continue
        dst = [slice(None)] * out.ndim
        src = [slice(None)] * out.ndim
        if s > 0:
            dst[axis], src[axis] = slice(s, n), slice(0, n - s)
        else:
            dst[axis], src[axis] = slice(0, n + s), slice(-s, n)
        padded[tuple(dst)] = out[tuple(src)]
        out = padded
    return out


def minkowski_values(values: np.ndarray, grid: Grid, kernel: ScalarField, iterations: int = 8) -> np.ndarray:
    """values（可带批维）与 kernel 零下集的 Minkowski 和。"""
    if not kernel.subzero().any():
        raise EmptySummand("summand has an empty sub-zero set")
    radius = _ball_radius(kernel)
    if radius is not None:
        return dilate_values(values, grid, radius, iterations=iterations)

    kgrid = kernel.grid
    if kgrid.ndim != grid.ndim or not np.allclose(kgrid.spacing, grid.spacing, rtol=1e-9):
        raise GridMismatch("summand grid must share the spacing of the field grid")
    nodes = np.argwhere(kernel.subzero())
    result = np.full(values.shape, FAR)
    for node in nodes:
        offset = [kgrid.mins[k] + node[k] * kgrid.spacing[k] for k in range(kgrid.ndim)]
        shift = [o / kgrid.spacing[k] for k, o in enumerate(offset)]
        ishift = [int(round(s)) for s in shift]
        if any(abs(s - i) > 1e-6 for s, i in zip(shift, ishift)):
            raise GridMismatch("summand nodes must sit on multiples of the spacing")
        np.minimum(result, _shift_min(values, grid, ishift), out=result)
    log_debug(f"minkowski: exact min-convolution over {len(nodes)} summand nodes")
    return result


def minkowski_sum(field_a: ScalarField, field_b: ScalarField) -> ScalarField:
    return ScalarField(field_a.grid, minkowski_values(field_a.values, field_a.grid, field_b))


def ball_kernel(spacing: Sequence[float], radius: float) -> ScalarField:
    """以原点为心、与给定间距对齐的球形求和核。"""
    if radius < 0:
        raise NegativeRadius(f"radius={radius}")
    m = [int(np.ceil(radius / h - 1e-9)) + 1 for h in spacing]
    grid = make_grid([-mk * h for mk, h in zip(m, spacing)], [mk * h for mk, h in zip(m, spacing)],
                     [2 * mk + 1 for mk in m])
    return sdf_ball(grid, [0.0] * len(spacing), radius)


def max_norm_of_subzero(field: ScalarField, dims: Optional[Sequence[int]] = None) -> float:
    dims = _check_dims(field.grid, dims if dims is not None else field.grid.position_dims)
    inside = field.subzero()
    if not inside.any():
        raise EmptySet("sub-zero set is empty")
    coords = field.grid.node_coordinates(dims)
    return float(np.linalg.norm(coords[inside], axis=-1).max())


@dataclass(frozen=True, eq=False)
class TimeField:
    times: np.ndarray
    fields: Tuple[ScalarField, ...]
    direction: str = "backward"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        fields = tuple(self.fields)
        if times.ndim != 1 or len(times) == 0 or len(times) != len(fields):
            raise ValueError("TimeField needs one field per time and at least one time")
        if np.any(np.diff(times) <= 0):
            raise ValueError("TimeField times must be strictly increasing")
        if any(f.grid != fields[0].grid for f in fields):
            raise GridMismatch("TimeField snapshots must share one grid")
        if self.direction not in ("backward", "forward"):
            raise ValueError(f"unknown direction {self.direction}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "fields", fields)

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    def __len__(self) -> int:
        return len(self.times)

    def index_at(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def at(self, t: float) -> ScalarField:
        return self.fields[self.index_at(t)]

    def value_at(self, t: float, x) -> float:
        return self.at(t).interpolate(x)

    def stack(self) -> np.ndarray:
        return np.stack([f.values for f in self.fields])

    def window(self, t_lo: float, t_hi: float) -> "TimeField":
        """保留 [t_lo, t_hi] 内的快照，并各多留一个端点快照。"""
        lo = max(0, int(np.searchsorted(self.times, t_lo, side="right")) - 1)
        hi = min(len(self.times), int(np.searchsorted(self.times, t_hi, side="left")) + 1)
        return TimeField(self.times[lo:hi], self.fields[lo:hi], self.direction)

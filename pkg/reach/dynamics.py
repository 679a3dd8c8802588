"""
车辆动力学、相对动力学与哈密顿量角色。

所有最优输入都是 bang-bang 解析解，向量化函数在求解器与单点控制器之间共用，
保证 H == λ·f(x, u*, d*)。
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from reach.gridfield import Grid, TimeField
from utils.errors import InputOutOfBounds

_TOL = 1e-9


@dataclass(frozen=True)
class DubinsParams:
    v_min: float = 0.0
    v_max: float = 25.0
    w_max: float = 2.0
    d_r: float = 6.0

    def __post_init__(self):
        if not 0.0 <= self.v_min <= self.v_max:
            raise ValueError(f"需要 0 <= v_min <= v_max, got {self.v_min}, {self.v_max}")
        if self.w_max <= 0:
            raise ValueError(f"w_max must be positive, got {self.w_max}")
        if self.d_r < 0:
            raise ValueError(f"d_r must be non-negative, got {self.d_r}")

    def without_disturbance(self) -> "DubinsParams":
        return replace(self, d_r=0.0)

    def to_dict(self) -> dict:
        return {"v_min": self.v_min, "v_max": self.v_max, "w_max": self.w_max, "d_r": self.d_r}


@dataclass(frozen=True)
class RelativeParams:
    """相对动力学：vehicle 为参考车辆 i，intruder 为入侵者 I。"""
    vehicle: DubinsParams
    intruder: DubinsParams


@dataclass(frozen=True)
class SingleIntegratorParams:
    speed: float
    d_r: float = 0.0
    ndim: int = 2

    def __post_init__(self):
        if self.speed < 0 or self.d_r < 0 or self.ndim < 1:
            raise ValueError("single integrator needs speed >= 0, d_r >= 0, ndim >= 1")


@dataclass(frozen=True)
class HamRole:
    name: str
    control_dir: str
    disturbance_dir: str
    second_player_dir: Optional[str] = None


# 角色目录
ROLE_BASIC = HamRole("basic", "min", "min")
ROLE_PLANNING = HamRole("planning", "min", "max")
ROLE_AVOID = HamRole("avoid", "max", "min", "min")
ROLE_BUFFER = HamRole("buffer", "min", "min", "min")
ROLE_OBSTACLE = HamRole("obstacle", "min", "min")
ROLE_FRS = HamRole("frs", "max", "max")
ROLE_REPLAN = HamRole("replan", "max", "min")

ROLES: Dict[str, HamRole] = {
    role.name: role
    for role in (ROLE_BASIC, ROLE_PLANNING, ROLE_AVOID, ROLE_BUFFER, ROLE_OBSTACLE, ROLE_FRS, ROLE_REPLAN)
}


@dataclass(frozen=True)
class ControlSample:
    u: Tuple[float, ...]
    d: Tuple[float, ...]
    mode: str = "nominal"
    value: float = float("nan")
    u_other: Optional[Tuple[float, ...]] = None
    d_other: Optional[Tuple[float, ...]] = None


class OptimalInputs(NamedTuple):
    u: Tuple[float, ...]
    d: Tuple[float, ...]
    hamiltonian: float


# === bang-bang 选择 ===
def _bang_speed(coef, lo: float, hi: float, direction: str):
    # 系数为 0 时取 v_max
    if direction == "min":
        return np.where(coef > 0, lo, hi)
    return np.where(coef < 0, lo, hi)


def _bang_turn(coef, w_max: float, direction: str):
    sign = -1.0 if direction == "min" else 1.0
    return sign * w_max * np.sign(coef)


def _disk(px, py, radius: float, direction: str):
    norm = np.hypot(px, py)
    safe = np.where(norm > 0, norm, 1.0)
    sign = -1.0 if direction == "min" else 1.0
    scale = np.where(norm > 0, sign * radius / safe, 0.0)
    return scale * px, scale * py


def _ball(ps: Sequence[np.ndarray], radius: float, direction: str):
    norm = np.sqrt(sum(p * p for p in ps))
    safe = np.where(norm > 0, norm, 1.0)
    sign = -1.0 if direction == "min" else 1.0
    scale = np.where(norm > 0, sign * radius / safe, 0.0)
    return [scale * p for p in ps]


class DynSpec(ABC):
    """动力学模型基类：子类提供向量化流场、最优输入与速度上界。"""

    kind: str = ""
    state_dim: int = 0
    relative: bool = False

    def __init__(self, params, role: HamRole):
        if self.relative != (role.second_player_dir is not None):
            raise ValueError(f"role {role.name} does not fit {self.kind} dynamics")
        self.params = params
        self.role = role

    def with_role(self, role: HamRole) -> "DynSpec":
        return self.__class__(self.params, role)

    @abstractmethod
    def optimal_inputs(self, x: Sequence, p: Sequence) -> Dict[str, tuple]:
        """返回 {'u':..., 'd':..., 'u_other':..., 'd_other':...}（各分量可为数组）。"""

    @abstractmethod
    def flow_arrays(self, x: Sequence, inputs: Dict[str, tuple]) -> list:
        """向量化右端项。"""

    @abstractmethod
    def speed_bounds(self, grid: Grid) -> np.ndarray:
        """每维 |ẋ_k| 的上界。"""

    @abstractmethod
    def check_inputs(self, inputs: Dict[str, tuple]):
        """输入越界时抛出 InputOutOfBounds。"""

    def hamiltonian(self, x: Sequence, p: Sequence) -> np.ndarray:
        f = self.flow_arrays(x, self.optimal_inputs(x, p))
        return sum(pk * fk for pk, fk in zip(p, f))

    def __repr__(self):
        return f"{self.__class__.__name__}({self.params}, role={self.role.name})"


class DubinsAbsolute(DynSpec):
    kind = "dubins-absolute"
    state_dim = 3

    def optimal_inputs(self, x, p):
        prm = self.params
        c, s = np.cos(x[2]), np.sin(x[2])
        v = _bang_speed(p[0] * c + p[1] * s, prm.v_min, prm.v_max, self.role.control_dir)
        w = _bang_turn(p[2], prm.w_max, self.role.control_dir)
        dx, dy = _disk(p[0], p[1], prm.d_r, self.role.disturbance_dir)
        return {"u": (v, w), "d": (dx, dy)}

    def flow_arrays(self, x, inputs):
        v, w = inputs["u"]
        dx, dy = inputs["d"]
        return [v * np.cos(x[2]) + dx, v * np.sin(x[2]) + dy, w + 0.0 * x[2]]

    def speed_bounds(self, grid):
        prm = self.params
        return np.array([prm.v_max + prm.d_r, prm.v_max + prm.d_r, prm.w_max], dtype=float)

    def check_inputs(self, inputs):
        _check_dubins(self.params, inputs["u"], inputs["d"])


class DubinsRelative(DynSpec):
    """入侵者相对车辆 i 的状态，坐标系随车辆 i 航向旋转。"""

    kind = "dubins-relative"
    state_dim = 3
    relative = True

    def optimal_inputs(self, x, p):
        veh, intr = self.params.vehicle, self.params.intruder
        own = self.role.control_dir
        other = self.role.second_player_dir
        v_i = _bang_speed(-p[0], veh.v_min, veh.v_max, own)
        w_i = _bang_turn(p[0] * x[1] - p[1] * x[0] - p[2], veh.w_max, own)
        c, s = np.cos(x[2]), np.sin(x[2])
        v_I = _bang_speed(p[0] * c + p[1] * s, intr.v_min, intr.v_max, other)
        w_I = _bang_turn(p[2], intr.w_max, other)
        d_i = _disk(p[0], p[1], veh.d_r, other)
        d_I = _disk(p[0], p[1], intr.d_r, other)
        return {"u": (v_i, w_i), "d": d_i, "u_other": (v_I, w_I), "d_other": d_I}

    def flow_arrays(self, x, inputs):
        v_i, w_i = inputs["u"]
        v_I, w_I = inputs.get("u_other", (0.0, 0.0))
        dxi, dyi = inputs["d"]
        dxI, dyI = inputs.get("d_other", (0.0, 0.0))
        return [
            v_I * np.cos(x[2]) - v_i + w_i * x[1] + dxi + dxI,
            v_I * np.sin(x[2]) - w_i * x[0] + dyi + dyI,
            w_I - w_i + 0.0 * x[2],
        ]

    def speed_bounds(self, grid):
        veh, intr = self.params.vehicle, self.params.intruder
        x_max = max(abs(grid.mins[0]), abs(grid.maxs[0]))
        y_max = max(abs(grid.mins[1]), abs(grid.maxs[1]))
        d = veh.d_r + intr.d_r
        return np.array([
            intr.v_max + veh.v_max + veh.w_max * y_max + d,
            intr.v_max + veh.w_max * x_max + d,
            intr.w_max + veh.w_max,
        ], dtype=float)

    def check_inputs(self, inputs):
        _check_dubins(self.params.vehicle, inputs["u"], inputs["d"])
        _check_dubins(self.params.intruder, inputs.get("u_other", (self.params.intruder.v_min, 0.0)),
                      inputs.get("d_other", (0.0, 0.0)))


class SingleIntegrator(DynSpec):
    """ẋ = u + d，‖u‖ ≤ speed，‖d‖ ≤ d_r；用作位置空间的可达包络。"""

    kind = "single-integrator"

    @property
    def state_dim(self) -> int:
        return self.params.ndim

    def optimal_inputs(self, x, p):
        u = _ball(p, self.params.speed, self.role.control_dir)
        d = _ball(p, self.params.d_r, self.role.disturbance_dir)
        return {"u": tuple(u), "d": tuple(d)}

    def flow_arrays(self, x, inputs):
        return [uk + dk for uk, dk in zip(inputs["u"], inputs["d"])]

    def speed_bounds(self, grid):
        return np.full(self.params.ndim, self.params.speed + self.params.d_r, dtype=float)

    def check_inputs(self, inputs):
        if np.linalg.norm(inputs["u"]) > self.params.speed + _TOL:
            raise InputOutOfBounds(f"|u| exceeds {self.params.speed}")
        if np.linalg.norm(inputs["d"]) > self.params.d_r + _TOL:
            raise InputOutOfBounds(f"|d| exceeds {self.params.d_r}")


def _check_dubins(params: DubinsParams, u, d):
    v, w = float(u[0]), float(u[1])
    if v < params.v_min - _TOL or v > params.v_max + _TOL:
        raise InputOutOfBounds(f"speed {v} outside [{params.v_min}, {params.v_max}]")
    if abs(w) > params.w_max + _TOL:
        raise InputOutOfBounds(f"turn rate {w} outside ±{params.w_max}")
    if math.hypot(float(d[0]), float(d[1])) > params.d_r + _TOL:
        raise InputOutOfBounds(f"disturbance {tuple(d)} outside radius {params.d_r}")


DYNAMICS_CLASSES = {
    DubinsAbsolute.kind: DubinsAbsolute,
    DubinsRelative.kind: DubinsRelative,
    SingleIntegrator.kind: SingleIntegrator,
}


def make_dynspec(kind: str, params, role: HamRole) -> DynSpec:
    if kind not in DYNAMICS_CLASSES:
        raise ValueError(f"unknown dynamics kind: {kind}")
    return DYNAMICS_CLASSES[kind](params, role)


def flow(dynspec: DynSpec, x, u, d, u_other=None, d_other=None) -> np.ndarray:
    inputs = {"u": tuple(u), "d": tuple(d)}
    if dynspec.relative:
        inputs["u_other"] = tuple(u_other) if u_other is not None else (dynspec.params.intruder.v_min, 0.0)
        inputs["d_other"] = tuple(d_other) if d_other is not None else (0.0, 0.0)
    dynspec.check_inputs(inputs)
    x = np.asarray(x, dtype=float)
    return np.array([float(v) for v in dynspec.flow_arrays(list(x), inputs)])


def _scalar_tuple(values) -> Tuple[float, ...]:
    return tuple(float(v) for v in values)


def opt_inputs(dynspec: DynSpec, x, costate) -> OptimalInputs:
    x = [float(v) for v in x]
    p = [float(v) for v in costate]
    if not np.all(np.isfinite(p)):
        raise ValueError("costate must be finite")
    inputs = dynspec.optimal_inputs(x, p)
    f = dynspec.flow_arrays(x, inputs)
    ham = float(sum(pk * fk for pk, fk in zip(p, f)))
    return OptimalInputs(_scalar_tuple(inputs["u"]), _scalar_tuple(inputs["d"]), ham)


def controller_from_value(timefield: TimeField, dynspec: DynSpec, t: float, x, mode: str = "nominal") -> ControlSample:
    """由值函数梯度合成外层玩家的控制，同时返回 V(t, x)。"""
    snapshot = timefield.at(t)
    value = snapshot.interpolate(x)
    grad = snapshot.gradient_at(x)
    inputs = dynspec.optimal_inputs([float(v) for v in x], [float(g) for g in grad])
    return ControlSample(
        u=_scalar_tuple(inputs["u"]),
        d=_scalar_tuple(inputs["d"]),
        mode=mode,
        value=float(value),
        u_other=_scalar_tuple(inputs["u_other"]) if "u_other" in inputs else None,
        d_other=_scalar_tuple(inputs["d_other"]) if "d_other" in inputs else None,
    )


def wrap_angle(theta):
    """航向回绕到 [-π, π)。"""
    return np.mod(np.asarray(theta) + np.pi, 2.0 * np.pi) - np.pi


def to_relative(x_vehicle, x_intruder) -> np.ndarray:
    """入侵者相对车辆的状态（车辆航向坐标系）。"""
    xi = np.asarray(x_vehicle, dtype=float)
    xI = np.asarray(x_intruder, dtype=float)
    dx, dy = xI[0] - xi[0], xI[1] - xi[1]
    c, s = math.cos(xi[2]), math.sin(xi[2])
    return np.array([c * dx + s * dy, -s * dx + c * dy, float(wrap_angle(xI[2] - xi[2]))])

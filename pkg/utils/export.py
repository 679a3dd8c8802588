"""
绘图数据导出：固定航向切片的零等值线 CSV 与轨迹图 PNG。
"""
import io
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from contourpy import contour_generator

from reach.gridfield import ScalarField, TimeField
from utils.errors import OutOfBounds
from utils.logger import log_info

CONTOUR_COLUMNS = ["contour_id", "x", "y"]


def heading_slice(field: ScalarField, heading: float) -> np.ndarray:
    """在航向维上线性插值得到 (x, y) 切片；二维场直接返回。"""
    grid = field.grid
    if grid.ndim == 2:
        return np.asarray(field.values)
    if heading < grid.mins[2] - 1e-12 or heading > grid.maxs[2] + 1e-12:
        raise OutOfBounds(f"heading {heading} outside [{grid.mins[2]}, {grid.maxs[2]}]")
    pos = (heading - grid.mins[2]) / grid.spacing[2]
    lo = int(np.floor(pos)) % grid.counts[2]
    hi = (lo + 1) % grid.counts[2]
    w = pos - np.floor(pos)
    return (1.0 - w) * field.values[:, :, lo] + w * field.values[:, :, hi]


def zero_contours(field: ScalarField, heading: float = 0.0) -> List[np.ndarray]:
    """二维切片的零等值线折线列表（marching squares）。"""
    values = heading_slice(field, heading)
    if values.min() > 0 or values.max() <= 0:
        return []
    x, y = field.grid.axes[0], field.grid.axes[1]
    gen = contour_generator(x=x, y=y, z=values.T)
    return [np.asarray(line) for line in gen.lines(0.0) if len(line) > 1]


def contour_frame(lines: Sequence[np.ndarray]) -> pd.DataFrame:
    frames = [pd.DataFrame({"contour_id": k, "x": line[:, 0], "y": line[:, 1]}) for k, line in enumerate(lines)]
    if not frames:
        return pd.DataFrame(columns=CONTOUR_COLUMNS)
    return pd.concat(frames, ignore_index=True)


def export_slices(timefield: TimeField, heading: float, out, prefix: str = "slice") -> List[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, (t, f) in enumerate(zip(timefield.times, timefield.fields)):
        path = out / f"{prefix}_{k:04d}_t{t:+.3f}.csv"
        contour_frame(zero_contours(f, heading)).to_csv(path, index=False, float_format="%.6f")
        paths.append(path)
    log_info(f"✅ 导出 {len(paths)} 个等值线切片到 {out}")
    return paths


def polyline_length(line: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(line, axis=0), axis=1)))


def render_trajectories(planset, simlog=None, obstacles: Optional[Dict[str, ScalarField]] = None,
                        title: str = "Trajectories") -> io.BytesIO:
    """名义轨迹、仿真轨迹、目标与障碍等值线。"""
    fig, ax = plt.subplots(figsize=(9, 9))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for k, plan in enumerate(planset.ordered()):
        color = colors[k % len(colors)]
        traj = plan.trajectory
        ax.plot(traj["x"], traj["y"], "--", color=color, linewidth=1, label=f"{plan.vehicle_id} nominal")
        circle = plt.Circle(plan.vehicle.target_center, plan.vehicle.target_radius, color=color, fill=False)
        ax.add_patch(circle)
        if simlog is not None:
            rec = simlog.records[(simlog.records["vehicle_id"] == plan.vehicle_id) & simlog.records["active"]]
            ax.plot(rec["x"], rec["y"], "-", color=color, linewidth=1.8, label=f"{plan.vehicle_id} simulated")
    if simlog is not None and not simlog.intruder.empty:
        ax.plot(simlog.intruder["x"], simlog.intruder["y"], "k:", linewidth=1.5, label="intruder")
    for name, f in (obstacles or {}).items():
        for line in zero_contours(f):
            ax.plot(line[:, 0], line[:, 1], color="#888", linewidth=0.8)
    grid = planset.scenario.grid
    ax.set_xlim(grid.mins[0], grid.maxs[0])
    ax.set_ylim(grid.mins[1], grid.maxs[1])
    ax.set_aspect("equal")
    ax.set_title(title)
    ax.grid(True, linestyle="--", alpha=0.4)
    ax.legend(loc="upper right", fontsize=8)
    plt.tight_layout()

    buffer = io.BytesIO()
    plt.savefig(buffer, format="png")
    buffer.seek(0)
    plt.close(fig)
    return buffer


def export_trajectories(planset, out, simlog=None) -> List[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for plan in planset.ordered():
        path = out / f"trajectory_{plan.vehicle_id}.csv"
        plan.trajectory.to_csv(path, index=False, float_format="%.6f")
        paths.append(path)
    png = out / "trajectories.png"
    png.write_bytes(render_trajectories(planset, simlog).getvalue())
    paths.append(png)
    return paths

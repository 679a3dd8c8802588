"""
export 子命令：零等值线切片 CSV 与轨迹图。
"""
import json
from pathlib import Path
from typing import List, Optional

from intrudersim.simulator import SimLog
from reach.gridfield import TimeField
from stpplanner.planset import load_planset
from utils.export import export_slices, export_trajectories
from utils.hjvf import read_sequence
from utils.logger import log_info

from .base_stage import BaseStage
from .reach_stage import FIELDS_INDEX


class ExportStage(BaseStage):
    """
    三类输入可任选其一或组合：
    - reach 输出目录（fields.json + HJVF 快照）
    - PlanSet 目录：轨迹 CSV/PNG、各飞行器价值函数与避让区切片
    - SimLog 目录：叠加到轨迹图上
    """

    def __init__(self, out_dir: str, planset: Optional[str] = None, simlog: Optional[str] = None,
                 fields: Optional[str] = None, heading: float = 0.0, **kwargs):
        super().__init__(out_dir, **kwargs)
        self.planset_dir = Path(planset) if planset else None
        self.simlog_dir = Path(simlog) if simlog else None
        self.fields_dir = Path(fields) if fields else None
        self.heading = float(heading)
        self.written: List[Path] = []

    def _export_fields(self):
        index = json.loads((self.fields_dir / FIELDS_INDEX).read_text(encoding="utf-8"))
        times, fields = read_sequence(self.fields_dir / "fields", index["snapshots"])
        tf = TimeField(times, tuple(fields), index["direction"])
        self.written += export_slices(tf, self.heading, self.out_dir / "fields")

    def _export_planset(self):
        planset = load_planset(self.planset_dir)
        simlog = SimLog.from_csv(self.simlog_dir) if self.simlog_dir else None
        self.written += export_trajectories(planset, self.out_dir / "trajectories", simlog)
        for plan in planset.ordered():
            self.written += export_slices(plan.value, self.heading, self.out_dir / "values" / plan.vehicle_id)
        seen = set()
        for vid, art in planset.artifacts.items():
            if id(art) in seen:
                continue
            seen.add(id(art))
            self.written += export_slices(art.avoid, self.heading, self.out_dir / "avoid" / vid, prefix="avoid")
            self.written += export_slices(art.buffer, self.heading, self.out_dir / "avoid" / vid, prefix="buffer")

    def execute(self) -> List[Path]:
        if self.fields_dir is None and self.planset_dir is None:
            raise ValueError("export needs --fields or --planset")
        if self.fields_dir is not None:
            self._export_fields()
        if self.planset_dir is not None:
            self._export_planset()
        log_info(f"📢 共导出 {len(self.written)} 个文件")
        return self.written

    def get_status(self) -> str:
        return f"航向切片 θ={self.heading:.3f} rad, 已导出 {len(self.written)} 个文件"

import hashlib
import json
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, Optional

from utils.logger import log_error, log_info

MANIFEST_NAME = "run_manifest.json"


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class BaseStage(ABC):
    """
    一个命令行阶段的抽象基类，包含了通用的功能：
    - 命令行覆盖项（seed / grid_scale / n_va / snapshot_every）的类型转换
    - 统一的运行包装和错误日志
    - 运行清单（配置、种子、产物哈希）的写出
    """
    # 值为 None 的覆盖项按此表转换类型
    OVERRIDE_TYPES = {"seed": int, "grid_scale": float, "n_va": int, "snapshot_every": float}

    def __init__(self, out_dir: str, seed: Optional[int] = None, grid_scale: Optional[float] = None,
                 n_va: Optional[int] = None, snapshot_every: Optional[float] = None, **kwargs):
        self.out_dir = Path(out_dir)
        self.seed = seed
        self.grid_scale = grid_scale
        self.n_va = n_va
        self.snapshot_every = snapshot_every
        self.options: Dict[str, Any] = dict(kwargs)
        self.stage_name = self.__class__.__name__
        self.result: Any = None

    @abstractmethod
    def execute(self) -> Any:
        """
        阶段的核心逻辑。
        子类必须实现此方法，产物写入 self.out_dir。
        """

    @abstractmethod
    def get_status(self) -> str:
        """返回描述阶段配置与结果的字符串。"""

    def update_config(self, key: str, value: str) -> str:
        """
        通用的配置更新方法。
        尝试将字符串值转换为属性的正确类型并更新。
        """
        if not hasattr(self, key):
            return f"❌ {self.stage_name} 没有名为 {key} 的配置项。"
        current = getattr(self, key)
        attr_type = self.OVERRIDE_TYPES.get(key) if current is None else type(current)
        try:
            new_value = attr_type(value) if attr_type is not None else value
        except (ValueError, TypeError):
            return f"❌ 无法将值 '{value}' 转换为 {key} 所需的类型。"
        setattr(self, key, new_value)
        return f"✅ {self.stage_name} 的配置 {key} 已更新为 {new_value}。"

    def overrides(self) -> Dict[str, Any]:
        return {"seed": self.seed, "grid_scale": self.grid_scale, "n_va": self.n_va,
                "snapshot_stride": self.snapshot_every}

    def apply_overrides(self, scenario):
        return scenario.with_overrides(**self.overrides())

    def config_dict(self) -> Dict[str, Any]:
        return {"stage": self.stage_name, **{k: v for k, v in self.overrides().items()},
                **{k: str(v) for k, v in self.options.items()}}

    def manifest_extra(self) -> Dict[str, Any]:
        return {}

    def write_manifest(self, extra: Optional[Dict[str, Any]] = None) -> Path:
        """记录完整配置、种子与产物的 sha256；不含时间戳，重跑时逐字节一致。"""
        artifacts = {}
        for path in sorted(p for p in self.out_dir.rglob("*") if p.is_file()):
            if path.name == MANIFEST_NAME:
                continue
            artifacts[path.relative_to(self.out_dir).as_posix()] = file_sha256(path)
        manifest = {"config": self.config_dict(), "seed": self.seed, "artifacts": artifacts, **(extra or {})}
        path = self.out_dir / MANIFEST_NAME
        path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False, sort_keys=True), encoding="utf-8")
        return path

    def run(self) -> Any:
        """阶段的统一入口：执行、写清单、记录日志；失败时也写清单，异常记录后继续抛出。"""
        log_info(f"🚀 启动 {self.stage_name}...")
        self.out_dir.mkdir(parents=True, exist_ok=True)
        try:
            self.result = self.execute()
            self.write_manifest({"status": "ok", **self.manifest_extra()})
            log_info(f"✅ {self.stage_name} 完成: {self.get_status()}")
            return self.result
        except Exception as e:
            log_error(f"❌ {self.stage_name} 运行出错: {e}")
            self.write_manifest({"status": "failed", "error": f"{type(e).__name__}: {e}", **self.manifest_extra()})
            raise
        finally:
            log_info(f"🛑 {self.stage_name} 已停止。")

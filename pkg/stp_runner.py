import argparse
import json
import sys
from typing import Any, Dict, List, Optional

from stages import STAGE_CLASSES, BaseStage
from utils.errors import Infeasible, SafetyViolation, ScenarioError, SeparationBreach, StpError
from utils.logger import log_error, log_info, set_level

# 退出码
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_SCHEMA = 3
EXIT_UNSAFE = 4

# 命令行覆盖项 → 阶段属性
OVERRIDE_FLAGS = {"seed": "seed", "grid_scale": "grid_scale", "nva": "n_va", "snapshot_every": "snapshot_every"}

# 各子命令的输入参数
STAGE_INPUTS = {
    "reach": ["problem"],
    "plan": ["scenario", "mode"],
    "simulate": ["planset", "scenario"],
    "replan": ["planset", "simlog"],
    "pipeline": ["scenario"],
    "export": ["planset", "simlog", "fields", "heading"],
}


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, Infeasible):
        return EXIT_INFEASIBLE
    if isinstance(error, ScenarioError):
        return EXIT_SCHEMA
    if isinstance(error, (SafetyViolation, SeparationBreach)):
        return EXIT_UNSAFE
    return EXIT_ERROR


class StageRunner:
    def __init__(self, command: str, options: Dict[str, Any], config_path: Optional[str] = None):
        self.command = command
        self.config = self._load_config(config_path) if config_path else {}
        # 命令行参数优先于配置文件
        self.options = {**self.config, **{k: v for k, v in options.items() if v is not None}}
        self.stage: Optional[BaseStage] = None

    def _load_config(self, config_path: str) -> Dict[str, Any]:
        log_info(f"从 {config_path} 加载运行配置...")
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                return json.load(f)
        except (FileNotFoundError, json.JSONDecodeError) as e:
            log_error(f"❌ 无法加载或解析配置文件: {e}")
            sys.exit(EXIT_ERROR)

    def _initialize_stages(self):
        stage_class = STAGE_CLASSES.get(self.command)
        if stage_class is None:
            raise ValueError(f"unknown command {self.command}")
        params = {k: self.options[k] for k in STAGE_INPUTS[self.command] if k in self.options}
        self.stage = stage_class(out_dir=self.options.get("out") or f"runs/{self.command}", **params)
        for flag, attr in OVERRIDE_FLAGS.items():
            if flag in self.options:
                message = self.stage.update_config(attr, str(self.options[flag]))
                log_info(message)
                if message.startswith("❌"):
                    raise ScenarioError(message)
        log_info(f"✅ 成功初始化: {stage_class.__name__}")

    def run(self) -> int:
        try:
            self._initialize_stages()
            self.stage.run()
            return EXIT_OK
        except StpError as e:
            code = exit_code_for(e)
            log_error(f"❌ {self.command} 失败 (exit {code}): {e}")
            return code
        except (OSError, ValueError) as e:
            log_error(f"❌ {self.command} 失败: {e}")
            return EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stp_runner", description="入侵者鲁棒的顺序轨迹规划工具")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="产物输出目录")
    common.add_argument("--config", help="JSON 运行配置，键名与命令行参数一致")
    # 覆盖项保持字符串，由阶段按属性类型转换
    common.add_argument("--seed")
    common.add_argument("--grid-scale", dest="grid_scale", help="网格节点数的统一倍率（最少 3 个节点）")
    common.add_argument("--nva", help="可同时被迫避让的飞行器数 n_va")
    common.add_argument("--snapshot-every", dest="snapshot_every", help="快照间隔（秒）")
    common.add_argument("--verbose", action="store_true")

    p = sub.add_parser("reach", parents=[common], help="从问题文件求解一个 BRS/FRS")
    p.add_argument("--problem", required=True)
    p = sub.add_parser("plan", parents=[common], help="规划阶段，输出 PlanSet")
    p.add_argument("--scenario", required=True)
    p.add_argument("--mode", choices=["intruder", "basic"])
    p = sub.add_parser("simulate", parents=[common], help="PlanSet + 仿真配置 → SimLog")
    p.add_argument("--planset", required=True)
    p.add_argument("--scenario", help="可选：取其中的 sim 配置")
    p = sub.add_parser("replan", parents=[common], help="SimLog → 新 PlanSet")
    p.add_argument("--planset", required=True)
    p.add_argument("--simlog", required=True)
    p = sub.add_parser("pipeline", parents=[common], help="规划 + 仿真 + 重新规划 + 校验")
    p.add_argument("--scenario", required=True)
    p = sub.add_parser("export", parents=[common], help="导出等值线切片与轨迹图")
    p.add_argument("--planset")
    p.add_argument("--simlog")
    p.add_argument("--fields", help="reach 子命令的输出目录")
    p.add_argument("--heading", type=float)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_level("debug")
    options = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    runner = StageRunner(args.command, options, config_path=args.config)
    return runner.run()


if __name__ == "__main__":
    sys.exit(main())

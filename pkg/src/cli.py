"""
vos-edge 命令行

    vos-edge [--config FILE] [-e ENV] [--verbose] [--log-file PATH] <detect|synth|eval> ...

退出码: 0 成功；1 运行期失败 (读写、解码、方案文件)；2 用法或配置错误。
标准输出只包含结果行 (threshold=… / name=value)，诊断信息走标准错误。
"""

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv
from loguru import logger

from .collection import SchemeError, load_schemes
from .config import DEFAULT_CONFIG, ConfigLoader, SynthSettings, locate_config
from .imageio import (
    ImageIOError,
    load_edge_map,
    load_image,
    read_provenance,
    save_edge_map,
    save_image,
    save_response_map,
)
from .metrics import (
    DEFAULT_ALPHA,
    METRICS,
    MIN_STEP_SIZE,
    ORIENTATIONS,
    GroundTruth,
    evaluate,
    generate_disk_image,
    generate_roof_image,
    generate_step_image,
)
from .pipeline import BORDERS, PLATEAU_POLICIES, ConfigError, PipelineConfig, run_detection
from .threshold_resolver import resolve_threshold_mode
from .vos_core import OPERATORS, RESPONSE_CEILING

SUBCOMMANDS = ("detect", "synth", "eval")
PATTERNS = ("step", "disk", "roof")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

LOG_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | <level>{message}</level>"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """参数错误抛出 UsageError，而不是直接退出进程。"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class Invocation:
    subcommand: str
    paths: Dict[str, Optional[str]] = field(default_factory=dict)
    pipeline: Optional[PipelineConfig] = None
    synth: Optional[SynthSettings] = None
    metrics: Tuple[str, ...] = ()
    alpha: float = DEFAULT_ALPHA
    verbose: bool = False
    log_level: str = "WARNING"
    log_file: Optional[str] = None
    log_rotation: str = "10 MB"


# ============================================================
# 参数类型
# ============================================================

def _k_value(text: str) -> int:
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"k 必须是整数: '{text}'")
    if not 1 <= k <= 8:
        raise argparse.ArgumentTypeError(f"k 必须在 [1, 8] 内: {k}")
    return k


def _float_in(low: float, high: float, low_open: bool = False, high_open: bool = False):
    def parse(text: str) -> float:
        try:
            value = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"不是数值: '{text}'")
        too_low = value <= low if low_open else value < low
        too_high = value >= high if high_open else value > high
        if too_low or too_high or value != value:
            left = "(" if low_open else "["
            right = ")" if high_open else "]"
            raise argparse.ArgumentTypeError(f"必须在 {left}{low:g}, {high:g}{right} 内: {text}")
        return value
    return parse


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"必须是整数: '{text}'")
    if value < 1:
        raise argparse.ArgumentTypeError(f"必须是正整数: {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"必须是整数: '{text}'")
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"种子必须是 64 位无符号整数: {value}")
    return value


def _color(text: str) -> List[float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"颜色格式应为 R,G,B: '{text}'")
    channel = _float_in(0.0, 255.0)
    return [channel(p.strip()) for p in parts]


# ============================================================
# 参数解析
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vos-edge", description="基于向量序统计的彩色图像边缘检测")
    parser.add_argument("--config", default=None, help=f"配置文件路径 (默认 {DEFAULT_CONFIG})")
    parser.add_argument("-e", "--env-file", default=None, help="指定 .env 文件路径")
    parser.add_argument("--verbose", action="store_true", help="输出 DEBUG 级别日志")
    parser.add_argument("--log-file", default=None, help="日志文件路径 (按 10 MB 轮转)")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")

    # detect
    p = sub.add_parser("detect", help="检测边缘并写出边缘图")
    p.add_argument("--input", required=True, help="输入图像 (PNG / PPM)")
    p.add_argument("--output", required=True, help="边缘图输出 (.png / .pgm)")
    p.add_argument("--operator", choices=OPERATORS, default=None, help="VOS 算子 (默认 mvr)")
    p.add_argument("--k", type=_k_value, default=None, help="MVR/MVD 的 k (默认 3)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--threshold", type=_float_in(0.0, RESPONSE_CEILING), default=None, help="固定阈值 T")
    group.add_argument("--otsu", action="store_true", help="Otsu 自动阈值 (默认)")
    group.add_argument("--percentile", type=_float_in(0.0, 100.0, True, True), default=None,
                       help="非零响应的百分位阈值 p")
    p.add_argument("--no-nms", action="store_true", help="跳过非极大值抑制")
    p.add_argument("--plateau", choices=PLATEAU_POLICIES, default=None, help="NMS 平台处理策略 (默认 thin)")
    p.add_argument("--border", choices=BORDERS, default=None, help="边界策略 (默认 replicate)")
    p.add_argument("--schemes", default=None, help="像素集合方案文件")
    p.add_argument("--response-out", default=None, help="响应图输出 (.png 16 位 / .csv)")

    # synth
    p = sub.add_parser("synth", help="生成合成测试图像与真值")
    p.add_argument("--pattern", choices=PATTERNS, default=None, help="图案 (默认 step)")
    p.add_argument("--width", type=_positive_int, default=None)
    p.add_argument("--height", type=_positive_int, default=None)
    p.add_argument("--size", type=_positive_int, default=None, help="disk 图像边长")
    p.add_argument("--radius", type=_positive_int, default=None, help="disk 半径")
    p.add_argument("--orientation", choices=ORIENTATIONS, default=None)
    p.add_argument("--color-a", type=_color, default=None, help="背景 / A 侧颜色 R,G,B")
    p.add_argument("--color-b", type=_color, default=None, help="前景 / B 侧颜色 R,G,B")
    p.add_argument("--noise", type=_float_in(0.0, 1.0), default=None, help="椒盐噪声比例")
    p.add_argument("--seed", type=_seed, default=None, help="噪声种子")
    p.add_argument("--out", required=True, help="图像输出 (.png / .ppm)")
    p.add_argument("--truth-out", required=True, help="真值边缘图输出 (.png / .pgm)")

    # eval
    p = sub.add_parser("eval", help="评估边缘图")
    p.add_argument("--detected", required=True, help="检测得到的边缘图")
    p.add_argument("--truth", required=True, help="真值边缘图")
    p.add_argument("--metric", choices=METRICS + ("all",), default="all")
    p.add_argument("--alpha", type=_float_in(0.0, float("inf"), True, True), default=DEFAULT_ALPHA,
                   help="Pratt FOM 的 alpha (默认 1/9)")
    return parser


def _load_config(config_arg: Optional[str]) -> Optional[ConfigLoader]:
    """显式指定的配置文件必须存在；默认配置不存在时使用内置默认值。"""
    if config_arg is None:
        if not os.path.exists(locate_config(DEFAULT_CONFIG)):
            logger.debug(f"未找到 {DEFAULT_CONFIG}，使用内置默认值")
            return None
        config_arg = DEFAULT_CONFIG
    try:
        return ConfigLoader(config_arg)
    except FileNotFoundError as e:
        raise UsageError(f"--config: {e}")


def _detect_config(loader: Optional[ConfigLoader], overrides: Dict[str, Any]) -> PipelineConfig:
    if loader is not None:
        return loader.get_pipeline_config(overrides)
    kwargs = {k: v for k, v in overrides.items() if v is not None and k != "threshold"}
    if overrides.get("threshold") is not None:
        kwargs["threshold_mode"] = resolve_threshold_mode(overrides["threshold"])
    return PipelineConfig(**kwargs)


def _check_geometry(s: SynthSettings):
    if s.pattern not in PATTERNS:
        raise ConfigError(f"synth.pattern 未知: '{s.pattern}'，可选: {', '.join(PATTERNS)}")
    if s.orientation not in ORIENTATIONS:
        raise ConfigError(f"synth.orientation 未知: '{s.orientation}'，可选: {', '.join(ORIENTATIONS)}")
    if s.pattern == "disk":
        if 2 * s.radius + 4 > s.size:
            raise UsageError(f"--radius: 半径 {s.radius} 过大，需要 2*radius + 4 <= size ({s.size})")
    elif s.width < MIN_STEP_SIZE or s.height < MIN_STEP_SIZE:
        raise UsageError(f"--width/--height: 尺寸至少为 {MIN_STEP_SIZE}，实际 {s.width}x{s.height}")


def parse_args(argv: Optional[Sequence[str]] = None) -> Invocation:
    """
    解析命令行为 Invocation。

    Raises:
        UsageError: 参数非法 (消息包含出错的参数名)
        ConfigError: 配置文件内容非法
    """
    args = build_parser().parse_args(argv)

    # 加载 .env 环境变量 (只在显式指定时)，供配置文件中的 ${VAR} 占位符使用
    if args.env_file:
        if not os.path.isfile(args.env_file):
            raise UsageError(f"--env-file: 文件不存在 {args.env_file}")
        load_dotenv(args.env_file)

    loader = _load_config(args.config)
    logging_settings = loader.get_logging_settings() if loader else None
    inv = Invocation(
        subcommand=args.subcommand,
        verbose=args.verbose,
        log_level=logging_settings.level if logging_settings else "WARNING",
        log_file=args.log_file or (logging_settings.file if logging_settings else None),
        log_rotation=logging_settings.rotation if logging_settings else "10 MB",
    )

    if args.subcommand == "detect":
        threshold = None
        if args.threshold is not None:
            threshold = f"fixed:{args.threshold!r}"
        elif args.percentile is not None:
            threshold = f"percentile:{args.percentile!r}"
        elif args.otsu:
            threshold = "otsu"
        inv.pipeline = _detect_config(loader, {
            "operator": args.operator,
            "k": args.k,
            "threshold": threshold,
            "nms": False if args.no_nms else None,
            "plateau": args.plateau,
            "border": args.border,
        })
        inv.paths = {
            "input": args.input,
            "output": args.output,
            "schemes": args.schemes or (loader.get_schemes_path() if loader else None),
            "response_out": args.response_out,
        }

    elif args.subcommand == "synth":
        base = loader.get_synth_settings() if loader else SynthSettings()
        flags = {
            "pattern": args.pattern, "width": args.width, "height": args.height,
            "size": args.size, "radius": args.radius, "orientation": args.orientation,
            "color_a": args.color_a, "color_b": args.color_b,
            "noise": args.noise, "seed": args.seed,
        }
        inv.synth = dataclasses.replace(base, **{k: v for k, v in flags.items() if v is not None})
        _check_geometry(inv.synth)
        inv.paths = {"out": args.out, "truth_out": args.truth_out}

    else:
        inv.metrics = METRICS if args.metric == "all" else (args.metric,)
        inv.alpha = args.alpha
        inv.paths = {"detected": args.detected, "truth": args.truth}

    logger.debug(f"解析完成: {inv}")
    return inv


# ============================================================
# 子命令
# ============================================================

def _run_detect(inv: Invocation) -> int:
    cfg = inv.pipeline
    img = load_image(inv.paths["input"])
    schemes_path = inv.paths.get("schemes")
    schemes = load_schemes(schemes_path) if schemes_path else None

    detection = run_detection(img, cfg, schemes)
    provenance = (
        f"detect operator={cfg.operator} k={cfg.k} threshold={cfg.threshold_mode.describe()} "
        f"nms={'on' if cfg.nms else 'off'} plateau={cfg.plateau} border={cfg.border}"
    )
    save_edge_map(detection.edges, inv.paths["output"], provenance=provenance)
    if inv.paths.get("response_out"):
        save_response_map(detection.response_map, inv.paths["response_out"])

    print(f"threshold={detection.threshold_value:.6f}")
    logger.info(f"✅ 检测完成: {inv.paths['input']} -> {inv.paths['output']}, 边缘像素 {detection.edges.count()}")
    return EXIT_OK


def _run_synth(inv: Invocation) -> int:
    s = inv.synth
    if s.pattern == "disk":
        img, truth = generate_disk_image(s.size, s.radius, s.color_a, s.color_b, noise=s.noise, seed=s.seed)
    elif s.pattern == "roof":
        img, truth = generate_roof_image(
            s.width, s.height, s.color_a, s.color_b, s.orientation, noise=s.noise, seed=s.seed,
        )
    else:
        img, truth = generate_step_image(
            s.width, s.height, s.color_a, s.color_b, s.orientation, noise=s.noise, seed=s.seed,
        )
    save_image(img, inv.paths["out"])
    save_edge_map(truth.edges, inv.paths["truth_out"], provenance=truth.provenance)
    logger.info(f"✅ 已生成 {truth.provenance}")
    return EXIT_OK


def _run_eval(inv: Invocation) -> int:
    detected = load_edge_map(inv.paths["detected"])
    truth_path = inv.paths["truth"]
    truth = GroundTruth(load_edge_map(truth_path), read_provenance(truth_path) or "")
    if detected.edge.shape != truth.edges.edge.shape:
        raise ValueError(
            f"尺寸不一致: {inv.paths['detected']} 为 {detected.width}x{detected.height}，"
            f"{truth_path} 为 {truth.edges.width}x{truth.edges.height}"
        )
    for name, value in evaluate(detected, truth, inv.metrics, inv.alpha).items():
        print(f"{name}={value:.6f}")
    return EXIT_OK


_HANDLERS = {"detect": _run_detect, "synth": _run_synth, "eval": _run_eval}


def run(inv: Invocation) -> int:
    """执行子命令并返回退出码。"""
    try:
        return _HANDLERS[inv.subcommand](inv)
    except ConfigError as e:
        logger.error(f"❌ 配置错误: {e}")
        return EXIT_USAGE
    except (ImageIOError, SchemeError, OSError, ValueError) as e:
        logger.error(f"❌ {e}")
        return EXIT_FAILURE
    except Exception as e:
        logger.exception(f"❌ 未预期的错误: {e}")
        return EXIT_FAILURE


# ============================================================
# 入口
# ============================================================

def setup_logging(
    verbose: bool = False,
    log_file: Optional[str] = None,
    rotation: str = "10 MB",
    level: str = "WARNING",
):
    logger.remove()  # 移除默认的 stderr handler
    logger.add(sys.stderr, level="DEBUG" if verbose else level, format=LOG_FORMAT)
    if log_file:
        logger.add(log_file, rotation=rotation, level="DEBUG", format=LOG_FORMAT)


def main(argv: Optional[Sequence[str]] = None) -> int:
    setup_logging()
    try:
        inv = parse_args(argv)
    except (UsageError, ConfigError) as e:
        logger.error(f"❌ {e}")
        return EXIT_USAGE

    setup_logging(inv.verbose, inv.log_file, inv.log_rotation, inv.log_level)
    return run(inv)


if __name__ == "__main__":
    sys.exit(main())

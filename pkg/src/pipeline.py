"""
端到端检测流程

    3x3 取窗 (边界策略) -> VOS 算子响应 -> 集合方案定方向 -> 非极大值抑制 -> 阈值化

响应图按行带 (band_rows) 分块向量化计算，各行带相互独立；
NMS 必须等完整响应图就绪后才执行。
"""

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from .collection import (
    CollectionScheme,
    SchemeError,
    best_direction_array,
    build_default_schemes,
    suppression_axis,
)
from .vos_core import (
    OPERATORS,
    RESPONSE_CEILING,
    ColorPixel,
    WindowSample,
    operator_array,
    reduced_order_array,
)

BORDERS = ("replicate", "reflect", "zero")
PLATEAU_POLICIES = ("keep", "thin")
THRESHOLD_KINDS = ("fixed", "otsu", "percentile")
OTSU_BINS = 512

_PAD_MODES = {"replicate": "edge", "reflect": "reflect", "zero": "constant"}


class ConfigError(ValueError):
    pass


# ============================================================
# 数据类型
# ============================================================

@dataclass(frozen=True)
class ThresholdMode:
    kind: str
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind not in THRESHOLD_KINDS:
            raise ConfigError(f"未知阈值模式 '{self.kind}'，可选: {', '.join(THRESHOLD_KINDS)}")
        if self.kind == "otsu":
            object.__setattr__(self, "value", None)
            return
        try:
            value = float(self.value)
        except (TypeError, ValueError):
            raise ConfigError(f"{self.kind} 阈值需要数值参数，实际为 {self.value!r}")
        if self.kind == "fixed" and not 0.0 <= value <= RESPONSE_CEILING:
            raise ConfigError(f"固定阈值 T 必须在 [0, {RESPONSE_CEILING}] 内，实际为 {value}")
        if self.kind == "percentile" and not 0.0 < value < 100.0:
            raise ConfigError(f"百分位 p 必须在 (0, 100) 内，实际为 {value}")
        object.__setattr__(self, "value", value)

    @classmethod
    def fixed(cls, t: float) -> "ThresholdMode":
        return cls("fixed", t)

    @classmethod
    def otsu(cls) -> "ThresholdMode":
        return cls("otsu")

    @classmethod
    def percentile(cls, p: float) -> "ThresholdMode":
        return cls("percentile", p)

    def describe(self) -> str:
        return self.kind if self.value is None else f"{self.kind}:{self.value:g}"


@dataclass(frozen=True)
class PipelineConfig:
    """
    一次检测的全部参数。

    plateau 默认 "thin" 而不是保留全部平台: 两色阶跃在边界两侧两列响应相等，
    "keep" 会输出两列，"thin" 只保留 B 侧一列，与真值位置一致。
    """

    operator: str = "mvr"
    k: int = 3
    threshold_mode: ThresholdMode = field(default_factory=ThresholdMode.otsu)
    nms: bool = True
    plateau: str = "thin"
    border: str = "replicate"
    band_rows: int = 64

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise ConfigError(f"未知算子 '{self.operator}'，可选: {', '.join(OPERATORS)}")
        if isinstance(self.k, bool) or not isinstance(self.k, int) or not 1 <= self.k <= 8:
            raise ConfigError(f"k 必须是 [1, 8] 内的整数，实际为 {self.k!r}")
        if not isinstance(self.threshold_mode, ThresholdMode):
            raise ConfigError(f"threshold_mode 类型错误: {self.threshold_mode!r}")
        if self.plateau not in PLATEAU_POLICIES:
            raise ConfigError(f"未知平台处理策略 '{self.plateau}'，可选: {', '.join(PLATEAU_POLICIES)}")
        if self.border not in BORDERS:
            raise ConfigError(f"未知边界策略 '{self.border}'，可选: {', '.join(BORDERS)}")
        if isinstance(self.band_rows, bool) or not isinstance(self.band_rows, int) or self.band_rows < 1:
            raise ConfigError(f"band_rows 必须是正整数，实际为 {self.band_rows!r}")


@dataclass(frozen=True)
class RgbImage:
    """行主序 RGB 图像，pixels 形状为 (height, width, 3)，通道为 [0, 255] 实数。"""
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=np.float64)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"图像数组形状必须为 (height, width, 3)，实际为 {pixels.shape}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValueError(f"图像尺寸必须为正: {pixels.shape[1]}x{pixels.shape[0]}")
        if not np.all(np.isfinite(pixels)):
            raise ValueError("图像包含非有限值")
        if pixels.min() < 0.0 or pixels.max() > 255.0:
            raise ValueError("图像通道值超出 [0, 255]")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def pixel(self, x: int, y: int) -> ColorPixel:
        return ColorPixel(*self.pixels[y, x].tolist())

    @classmethod
    def uniform(cls, width: int, height: int, color: Sequence[float]) -> "RgbImage":
        return cls(np.broadcast_to(np.asarray(color, dtype=np.float64), (height, width, 3)))


@dataclass(frozen=True)
class ResponseMap:
    """
    逐像素算子响应与最佳方向。

    direction 存储 scheme_ids 中的下标，direction_id() 给出方案标识。
    """
    response: np.ndarray
    direction: np.ndarray
    scheme_ids: Tuple[str, ...]

    def __post_init__(self):
        response = np.array(self.response, dtype=np.float64)
        direction = np.array(self.direction, dtype=np.int64)
        scheme_ids = tuple(self.scheme_ids)
        if response.ndim != 2 or direction.shape != response.shape:
            raise ValueError(f"response/direction 形状不一致: {response.shape} vs {direction.shape}")
        if not np.all(np.isfinite(response)) or (response.size and response.min() < 0.0):
            raise ValueError("响应值必须为有限非负数")
        if not scheme_ids:
            raise ValueError("scheme_ids 不能为空")
        for sid in scheme_ids:
            suppression_axis(sid)
        if direction.size and (direction.min() < 0 or direction.max() >= len(scheme_ids)):
            raise ValueError("direction 下标超出 scheme_ids 范围")
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "scheme_ids", scheme_ids)

    @property
    def width(self) -> int:
        return self.response.shape[1]

    @property
    def height(self) -> int:
        return self.response.shape[0]

    def direction_id(self, x: int, y: int) -> str:
        return self.scheme_ids[int(self.direction[y, x])]


@dataclass(frozen=True)
class EdgeMap:
    edge: np.ndarray

    def __post_init__(self):
        edge = np.array(self.edge, dtype=bool)
        if edge.ndim != 2:
            raise ValueError(f"边缘图必须是二维数组，实际形状 {edge.shape}")
        object.__setattr__(self, "edge", edge)

    @property
    def width(self) -> int:
        return self.edge.shape[1]

    @property
    def height(self) -> int:
        return self.edge.shape[0]

    def count(self) -> int:
        return int(self.edge.sum())

    @classmethod
    def empty(cls, width: int, height: int) -> "EdgeMap":
        return cls(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True)
class Detection:
    """一次检测的全部中间结果，CLI 需要阈值回显和响应图输出。"""
    response_map: ResponseMap
    suppressed: ResponseMap
    threshold_value: float
    edges: EdgeMap


# ============================================================
# 取窗
# ============================================================

def _border_index(i: int, n: int, border: str) -> Optional[int]:
    if 0 <= i < n:
        return i
    if border == "zero":
        return None
    if border == "replicate" or n == 1:
        return min(max(i, 0), n - 1)
    # reflect: 不重复边缘像素，-1 -> 1，n -> n-2
    return -i if i < 0 else 2 * (n - 1) - i


def extract_window(img: RgbImage, x: int, y: int, border: str = "replicate") -> WindowSample:
    """以 (x, y) 为中心的 3x3 窗口，越界邻居按边界策略补齐。"""
    if border not in BORDERS:
        raise ConfigError(f"未知边界策略 '{border}'，可选: {', '.join(BORDERS)}")
    if not (0 <= x < img.width and 0 <= y < img.height):
        raise ValueError(f"窗口中心 ({x}, {y}) 超出图像范围 {img.width}x{img.height}")
    pixels = []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            yy = _border_index(y + dy, img.height, border)
            xx = _border_index(x + dx, img.width, border)
            if yy is None or xx is None:
                pixels.append(ColorPixel(0.0, 0.0, 0.0))
            else:
                pixels.append(img.pixel(xx, yy))
    return WindowSample(tuple(pixels))


def _pad(pixels: np.ndarray, border: str) -> np.ndarray:
    mode = _PAD_MODES[border]
    if mode == "constant":
        return np.pad(pixels, ((1, 1), (1, 1), (0, 0)), mode="constant", constant_values=0.0)
    return np.pad(pixels, ((1, 1), (1, 1), (0, 0)), mode=mode)


def _window_stack(padded: np.ndarray, y0: int, y1: int, width: int) -> np.ndarray:
    """行 y0..y1-1 所有像素的窗口，形状 (9, rows, width, 3)，位置按行主序。"""
    return np.stack([
        padded[y0 + dy:y1 + dy, dx:dx + width]
        for dy in range(3)
        for dx in range(3)
    ])


# ============================================================
# 流程各阶段
# ============================================================

def compute_response_map(
    img: RgbImage,
    cfg: Optional[PipelineConfig] = None,
    schemes: Optional[Sequence[CollectionScheme]] = None,
) -> ResponseMap:
    """逐像素计算 VOS 算子响应，并用集合方案选出最佳方向。"""
    cfg = cfg or PipelineConfig()
    schemes = list(schemes) if schemes is not None else build_default_schemes()
    if not schemes:
        raise SchemeError("方案列表不能为空")

    start_time = time.time()
    padded = _pad(img.pixels, cfg.border)
    response = np.empty((img.height, img.width), dtype=np.float64)
    direction = np.empty((img.height, img.width), dtype=np.int64)

    for y0 in range(0, img.height, cfg.band_rows):
        y1 = min(img.height, y0 + cfg.band_rows)
        windows = _window_stack(padded, y0, y1, img.width)
        order, _ = reduced_order_array(windows)
        response[y0:y1] = operator_array(cfg.operator, windows, order, cfg.k)
        direction[y0:y1], _ = best_direction_array(windows, schemes)

    logger.debug(
        f"响应图完成: {img.width}x{img.height}, 算子={cfg.operator}, k={cfg.k}, "
        f"边界={cfg.border}, 耗时 {time.time() - start_time:.3f}s"
    )
    return ResponseMap(response, direction, tuple(s.id for s in schemes))


def _shifted(padded: np.ndarray, index: int, height: int, width: int) -> np.ndarray:
    dy, dx = divmod(index, 3)
    return padded[dy:dy + height, dx:dx + width]


def non_max_suppression(rm: ResponseMap, plateau: str = "keep") -> ResponseMap:
    """
    沿方向对应的比较轴做非极大值抑制，被抑制像素响应置 0，方向保持不变。

    Args:
        rm: 响应图
        plateau: "keep" 时响应 >= 两侧邻居即保留 (相等的平台全部保留)；
            "thin" 时要求 >= 较小窗口索引一侧、> 较大索引一侧，平台只保留最后一个像素。
            图像外的邻居不参与比较。
    """
    if plateau not in PLATEAU_POLICIES:
        raise ConfigError(f"未知平台处理策略 '{plateau}'，可选: {', '.join(PLATEAU_POLICIES)}")

    r = rm.response
    height, width = r.shape
    padded = np.pad(r, 1, mode="constant", constant_values=-np.inf)

    axes = [suppression_axis(sid) for sid in rm.scheme_ids]
    keep = np.zeros(r.shape, dtype=bool)
    for axis in sorted(set(axes)):
        scheme_indices = [i for i, a in enumerate(axes) if a == axis]
        selected = np.isin(rm.direction, scheme_indices)
        before = _shifted(padded, axis[0], height, width)
        after = _shifted(padded, axis[1], height, width)
        if plateau == "thin":
            local_max = (r >= before) & (r > after)
        else:
            local_max = (r >= before) & (r >= after)
        keep |= selected & local_max

    return ResponseMap(np.where(keep, r, 0.0), rm.direction, rm.scheme_ids)


def _otsu_threshold(response: np.ndarray) -> float:
    """512 桶直方图上的 Otsu 阈值: 取使类间方差最大的第一个内部桶边界。"""
    hist, edges = np.histogram(response, bins=OTSU_BINS, range=(0.0, RESPONSE_CEILING))
    hist = hist.astype(np.float64)
    centers = (edges[:-1] + edges[1:]) / 2.0

    w0 = np.cumsum(hist)[:-1]
    s0 = np.cumsum(hist * centers)[:-1]
    total_w = hist.sum()
    total_s = (hist * centers).sum()
    w1 = total_w - w0

    variance = np.zeros(OTSU_BINS - 1, dtype=np.float64)
    valid = (w0 > 0) & (w1 > 0)
    mu0 = s0[valid] / w0[valid]
    mu1 = (total_s - s0[valid]) / w1[valid]
    variance[valid] = w0[valid] * w1[valid] * (mu0 - mu1) ** 2

    t = int(np.argmax(variance)) + 1
    return float(edges[t])


def resolve_threshold(rm: ResponseMap, mode: ThresholdMode) -> float:
    """把阈值模式解析为具体数值 T (边缘判定为 response > T)。"""
    if mode.kind == "fixed":
        return float(mode.value)
    if mode.kind == "percentile":
        nonzero = rm.response[rm.response > 0.0]
        if nonzero.size == 0:
            return 0.0
        return float(np.percentile(nonzero, mode.value))
    return _otsu_threshold(rm.response)


def threshold(rm: ResponseMap, mode: ThresholdMode) -> EdgeMap:
    return EdgeMap(rm.response > resolve_threshold(rm, mode))


def run_detection(
    img: RgbImage,
    cfg: Optional[PipelineConfig] = None,
    schemes: Optional[Sequence[CollectionScheme]] = None,
) -> Detection:
    cfg = cfg or PipelineConfig()
    rm = compute_response_map(img, cfg, schemes)
    suppressed = non_max_suppression(rm, cfg.plateau) if cfg.nms else rm
    t = resolve_threshold(suppressed, cfg.threshold_mode)
    edges = EdgeMap(suppressed.response > t)
    logger.debug(f"阈值 {cfg.threshold_mode.describe()} -> T={t:.6f}, 边缘像素 {edges.count()}")
    return Detection(response_map=rm, suppressed=suppressed, threshold_value=t, edges=edges)


def detect_edges(
    img: RgbImage,
    cfg: Optional[PipelineConfig] = None,
    schemes: Optional[Sequence[CollectionScheme]] = None,
) -> EdgeMap:
    return run_detection(img, cfg, schemes).edges

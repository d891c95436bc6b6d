"""
合成测试图像与边缘图质量指标

生成器给出 (RgbImage, GroundTruth) 对；指标把"边缘连续、细、定位准"量化为:
    - endpoint_count: 断裂程度 (端点数)
    - connected_components: 8 连通分量数
    - pratt_fom: Pratt 品质因数
    - thinness: 单像素宽度占比
"""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import ndimage

from .pipeline import EdgeMap, RgbImage

ORIENTATIONS = ("vertical", "horizontal", "diagonal")
METRICS = ("fom", "endpoints", "components")
DEFAULT_ALPHA = 1.0 / 9.0
MIN_STEP_SIZE = 8

_EIGHT = np.ones((3, 3), dtype=int)
_NEIGHBOR_KERNEL = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=int)


@dataclass(frozen=True)
class GroundTruth:
    """参考边缘图及其生成来源描述。"""
    edges: EdgeMap
    provenance: str = ""


Color = Sequence[float]


def _check_color(color: Color) -> Tuple[float, float, float]:
    values = tuple(float(c) for c in color)
    if len(values) != 3 or any(not 0.0 <= c <= 255.0 for c in values):
        raise ValueError(f"颜色必须是 [0, 255] 内的 (R, G, B): {color!r}")
    return values


def _paint(mask: np.ndarray, color_a: Color, color_b: Color) -> np.ndarray:
    """mask 为 True 的像素取 color_b，其余取 color_a。"""
    a = np.asarray(_check_color(color_a))
    b = np.asarray(_check_color(color_b))
    return np.where(mask[..., np.newaxis], b, a)


def _format_color(color: Color) -> str:
    return ",".join(f"{float(c):g}" for c in color)


# ============================================================
# 噪声
# ============================================================

def add_salt_pepper(img: RgbImage, rate: float, seed: int = 0) -> RgbImage:
    """
    椒盐噪声: 每个像素以概率 rate 被替换为白 (255,255,255) 或黑 (0,0,0)，各占一半。

    同一 seed 结果完全确定。
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"噪声比例必须在 [0, 1] 内: {rate}")
    if rate == 0.0:
        return img
    rng = np.random.default_rng(seed)
    hit = rng.random((img.height, img.width)) < rate
    salt = rng.random((img.height, img.width)) < 0.5
    pixels = np.array(img.pixels)
    pixels[hit & salt] = 255.0
    pixels[hit & ~salt] = 0.0
    logger.debug(f"椒盐噪声: rate={rate}, seed={seed}, 受影响像素 {int(hit.sum())}")
    return RgbImage(pixels)


def _with_noise(img: RgbImage, noise: float, seed: int) -> RgbImage:
    return add_salt_pepper(img, noise, seed) if noise else img


def _noise_tag(noise: float, seed: int) -> str:
    return f" noise={noise:g} seed={seed}" if noise else ""


# ============================================================
# 生成器
# ============================================================

def generate_step_image(
    width: int,
    height: int,
    color_a: Color,
    color_b: Color,
    orientation: str = "vertical",
    noise: float = 0.0,
    seed: int = 0,
) -> Tuple[RgbImage, GroundTruth]:
    """
    阶跃边缘: 两个半平面分别取 color_a / color_b。

    真值是 color_b 一侧紧贴分界的单像素线:
        vertical   x >= w//2 为 B，真值列 x = w//2
        horizontal y >= h//2 为 B，真值行 y = h//2
        diagonal   x >= (y*w)//h 为 B，真值每行一个像素 x = (y*w)//h
    """
    if width < MIN_STEP_SIZE or height < MIN_STEP_SIZE:
        raise ValueError(f"阶跃图像尺寸至少为 {MIN_STEP_SIZE}x{MIN_STEP_SIZE}，实际 {width}x{height}")
    if orientation not in ORIENTATIONS:
        raise ValueError(f"未知方向 '{orientation}'，可选: {', '.join(ORIENTATIONS)}")

    ys, xs = np.mgrid[0:height, 0:width]
    if orientation == "vertical":
        boundary = np.full_like(ys, width // 2)
        side_b = xs >= boundary
        truth = xs == boundary
    elif orientation == "horizontal":
        boundary = np.full_like(xs, height // 2)
        side_b = ys >= boundary
        truth = ys == boundary
    else:
        boundary = (ys * width) // height
        side_b = xs >= boundary
        truth = xs == boundary

    img = _with_noise(RgbImage(_paint(side_b, color_a, color_b)), noise, seed)
    provenance = (
        f"step {width}x{height} {orientation} a={_format_color(color_a)} "
        f"b={_format_color(color_b)}{_noise_tag(noise, seed)}"
    )
    return img, GroundTruth(EdgeMap(truth), provenance)


def generate_disk_image(
    size: int,
    radius: int,
    color_a: Color,
    color_b: Color,
    noise: float = 0.0,
    seed: int = 0,
) -> Tuple[RgbImage, GroundTruth]:
    """
    color_a 背景上以 (size//2, size//2) 为圆心的 color_b 实心圆盘。

    圆盘为 (x-c)^2 + (y-c)^2 <= r^2 的像素；真值是盘内至少有一个 4 邻居在盘外的像素。
    """
    if radius < 1:
        raise ValueError(f"半径必须为正: {radius}")
    if 2 * radius + 4 > size:
        raise ValueError(f"半径过大: 需要 2*radius + 4 <= size，实际 radius={radius}, size={size}")

    c = size // 2
    ys, xs = np.mgrid[0:size, 0:size]
    disk = (xs - c) ** 2 + (ys - c) ** 2 <= radius * radius
    # 圆盘离图像边界至少 2 像素，腐蚀不受边界影响
    interior = ndimage.binary_erosion(disk, structure=ndimage.generate_binary_structure(2, 1))
    truth = disk & ~interior

    img = _with_noise(RgbImage(_paint(disk, color_a, color_b)), noise, seed)
    provenance = (
        f"disk {size}x{size} r={radius} a={_format_color(color_a)} "
        f"b={_format_color(color_b)}{_noise_tag(noise, seed)}"
    )
    return img, GroundTruth(EdgeMap(truth), provenance)


def generate_roof_image(
    width: int,
    height: int,
    color_a: Color,
    color_b: Color,
    orientation: str = "vertical",
    noise: float = 0.0,
    seed: int = 0,
) -> Tuple[RgbImage, GroundTruth]:
    """屋脊边缘: color_a 背景上一条 color_b 单像素脊线，位置与阶跃真值相同，真值即脊线。"""
    _, truth = generate_step_image(width, height, color_a, color_b, orientation)
    ridge = truth.edges.edge
    img = _with_noise(RgbImage(_paint(ridge, color_a, color_b)), noise, seed)
    provenance = (
        f"roof {width}x{height} {orientation} a={_format_color(color_a)} "
        f"b={_format_color(color_b)}{_noise_tag(noise, seed)}"
    )
    return img, GroundTruth(EdgeMap(ridge), provenance)


# ============================================================
# 指标
# ============================================================

def _neighbor_counts(edge: np.ndarray) -> np.ndarray:
    return ndimage.convolve(edge.astype(int), _NEIGHBOR_KERNEL, mode="constant", cval=0)


def endpoint_count(em: EdgeMap) -> int:
    """8 邻居中恰有一个边缘像素的边缘像素个数。"""
    return int((em.edge & (_neighbor_counts(em.edge) == 1)).sum())


def connected_components(em: EdgeMap) -> int:
    """边缘像素的 8 连通分量数。"""
    _, count = ndimage.label(em.edge, structure=_EIGHT)
    return int(count)


def thinness(em: EdgeMap) -> float:
    """不属于任何全满 2x2 块的边缘像素比例；空图为 1.0。"""
    edge = em.edge
    total = int(edge.sum())
    if total == 0:
        return 1.0
    full = edge[:-1, :-1] & edge[:-1, 1:] & edge[1:, :-1] & edge[1:, 1:]
    thick = np.zeros_like(edge)
    thick[:-1, :-1] |= full
    thick[:-1, 1:] |= full
    thick[1:, :-1] |= full
    thick[1:, 1:] |= full
    return 1.0 - int((edge & thick).sum()) / total


def pratt_fom(detected: EdgeMap, truth: GroundTruth, alpha: float = DEFAULT_ALPHA) -> float:
    """
    Pratt 品质因数 (1/max(Nd, Nt)) * sum(1 / (1 + alpha * d^2))。

    d 为检测像素到最近真值像素的欧氏距离；无检测像素时为 0。

    Raises:
        ValueError: 真值为空、尺寸不一致或 alpha 非正
    """
    t = truth.edges.edge
    d = detected.edge
    if d.shape != t.shape:
        raise ValueError(f"检测图与真值尺寸不一致: {d.shape} vs {t.shape}")
    if not t.any():
        raise ValueError("真值边缘图为空")
    if alpha <= 0:
        raise ValueError(f"alpha 必须为正: {alpha}")

    n_detected = int(d.sum())
    if n_detected == 0:
        return 0.0

    # 最近真值像素的整数坐标，d^2 由坐标差精确求得
    _, (iy, ix) = ndimage.distance_transform_edt(~t, return_indices=True)
    ys, xs = np.nonzero(d)
    dy = ys - iy[ys, xs]
    dx = xs - ix[ys, xs]
    squared = (dy * dy + dx * dx).astype(np.float64)

    score = float(np.sum(1.0 / (1.0 + alpha * squared)))
    return score / max(n_detected, int(t.sum()))


def evaluate(
    detected: EdgeMap,
    truth: Optional[GroundTruth] = None,
    metrics: Sequence[str] = METRICS,
    alpha: float = DEFAULT_ALPHA,
) -> Dict[str, float]:
    """按 fom, endpoints, components 的固定顺序计算所选指标。"""
    unknown = [m for m in metrics if m not in METRICS]
    if unknown:
        raise ValueError(f"未知指标: {', '.join(unknown)}，可选: {', '.join(METRICS)}")

    results: Dict[str, float] = OrderedDict()
    for name in METRICS:
        if name not in metrics:
            continue
        if name == "fom":
            if truth is None:
                raise ValueError("计算 fom 需要真值边缘图")
            results[name] = pratt_fom(detected, truth, alpha)
        elif name == "endpoints":
            results[name] = float(endpoint_count(detected))
        else:
            results[name] = float(connected_components(detected))
    logger.debug(f"评估结果: {dict(results)}")
    return results

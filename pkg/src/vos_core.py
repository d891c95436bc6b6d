"""
向量序统计 (Vector Order Statistics) 核心运算

RGB 空间中的颜色距离、3x3 窗口的约简排序 (R-ordering)，以及四种 VOS 边缘算子:
VR / MVR / VD / MVD。

标量接口 (ColorPixel / WindowSample) 用于单窗口计算与测试预言机；
*_array 接口对整批窗口做同样的浮点运算、同样的运算顺序，结果与标量接口逐位一致。
"""

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

# RGB 立方体对角线长度，即两像素之间可能的最大距离
MAX_DISTANCE = math.sqrt(3.0) * 255.0
# 阈值、Otsu 直方图与响应图量化使用的上界
RESPONSE_CEILING = 441.673

OPERATORS = ("vr", "mvr", "vd", "mvd")
WINDOW_SIZE = 9
CENTER_INDEX = 4


@dataclass(frozen=True)
class ColorPixel:
    """一个 RGB 样本，通道为 [0, 255] 内的实数 (8 位输入不做缩放)。"""
    r: float
    g: float
    b: float

    def __post_init__(self):
        for name in ("r", "g", "b"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"通道 {name} 不是有限值: {value}")
            if value < 0.0 or value > 255.0:
                raise ValueError(f"通道 {name} 超出 [0, 255]: {value}")
            object.__setattr__(self, name, value)

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.r, self.g, self.b)


@dataclass(frozen=True)
class WindowSample:
    """
    3x3 邻域的 9 个像素，按行主序编号 0..8 (index = 3*row + col，中心为 4)。
    """
    pixels: Tuple[ColorPixel, ...]

    def __post_init__(self):
        pixels = tuple(self.pixels)
        if len(pixels) != WINDOW_SIZE:
            raise ValueError(f"窗口必须恰好包含 9 个像素，实际为 {len(pixels)}")
        for p in pixels:
            if not isinstance(p, ColorPixel):
                raise ValueError(f"窗口元素必须是 ColorPixel: {p!r}")
        object.__setattr__(self, "pixels", pixels)

    def __getitem__(self, index: int) -> ColorPixel:
        return self.pixels[index]

    def __len__(self) -> int:
        return WINDOW_SIZE

    @classmethod
    def from_values(cls, values: Iterable[Sequence[float]]) -> "WindowSample":
        """从 9 个 (r, g, b) 三元组构造窗口。"""
        return cls(tuple(ColorPixel(*v) for v in values))

    @classmethod
    def from_array(cls, array: np.ndarray) -> "WindowSample":
        """从形状为 (3, 3, 3) 或 (9, 3) 的数组构造窗口。"""
        flat = np.asarray(array, dtype=np.float64).reshape(WINDOW_SIZE, 3)
        return cls.from_values(flat.tolist())

    def to_array(self) -> np.ndarray:
        return np.array([p.as_tuple() for p in self.pixels], dtype=np.float64)


@dataclass(frozen=True)
class OrderedWindow:
    """约简排序结果: order[0] 为向量中值 X(1)，order[8] 为 X(9)。"""
    order: Tuple[int, ...]
    aggregates: Tuple[float, ...]

    def __post_init__(self):
        if sorted(self.order) != list(range(WINDOW_SIZE)):
            raise ValueError(f"order 不是 0..8 的排列: {self.order}")
        if len(self.aggregates) != WINDOW_SIZE:
            raise ValueError("aggregates 必须恰好有 9 个值")
        if any(a > b for a, b in zip(self.aggregates, self.aggregates[1:])):
            raise ValueError("aggregates 必须非递减")


def _squared_sum(dr: float, dg: float, db: float) -> float:
    # 三个平方项按升序相加，通道置换下结果逐位不变
    lo, mid, hi = sorted((dr * dr, dg * dg, db * db))
    return (lo + mid) + hi


def distance_values(a: Sequence[float], b: Sequence[float]) -> float:
    return math.sqrt(_squared_sum(a[0] - b[0], a[1] - b[1], a[2] - b[2]))


def distance(a: ColorPixel, b: ColorPixel) -> float:
    """RGB 空间欧氏距离 sqrt((R1-R2)^2 + (G1-G2)^2 + (B1-B2)^2)。"""
    return distance_values(a.as_tuple(), b.as_tuple())


def aggregate_distance(i: int, w: WindowSample) -> float:
    """像素 i 到窗口内全部 9 个像素 (含自身) 的距离之和。"""
    if not 0 <= i < WINDOW_SIZE:
        raise ValueError(f"窗口索引越界: {i}")
    total = 0.0
    for j in range(WINDOW_SIZE):
        total += distance(w[i], w[j])
    return total


def reduced_order(w: WindowSample) -> OrderedWindow:
    """按聚合距离升序排列，聚合距离相同时按位置索引升序 (稳定排序)。"""
    aggregates = [aggregate_distance(i, w) for i in range(WINDOW_SIZE)]
    order = sorted(range(WINDOW_SIZE), key=lambda i: (aggregates[i], i))
    return OrderedWindow(
        order=tuple(order),
        aggregates=tuple(aggregates[i] for i in order),
    )


def _check_k(k: int):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or not 1 <= k <= 8:
        raise ValueError(f"k 必须是 [1, 8] 内的整数，实际为 {k!r}")


def _window_mean(w: WindowSample) -> Tuple[float, float, float]:
    sr = sg = sb = 0.0
    for p in w.pixels:
        sr += p.r
        sg += p.g
        sb += p.b
    return (sr / WINDOW_SIZE, sg / WINDOW_SIZE, sb / WINDOW_SIZE)


def vector_range(ow: OrderedWindow, w: WindowSample) -> float:
    """VR = ||X(9) - X(1)||"""
    return distance(w[ow.order[8]], w[ow.order[0]])


def min_vector_range(ow: OrderedWindow, w: WindowSample, k: int = 3) -> float:
    """
    MVR: 排名最高的 k 个像素到向量中值 X(1) 的最小距离。

    k 个排名最高的像素中只要有一个与中值同色，结果即为 0，
    因此最多 k-1 个脉冲噪声像素会被忽略。
    """
    _check_k(k)
    median = w[ow.order[0]]
    best = math.inf
    for j in range(1, k + 1):
        best = min(best, distance(w[ow.order[WINDOW_SIZE - j]], median))
    return best


def vector_dispersion(ow: OrderedWindow, w: WindowSample) -> float:
    """VD = ||X(9) - mean||，mean 为 9 个像素的逐通道均值。"""
    return distance_values(w[ow.order[8]].as_tuple(), _window_mean(w))


def mean_vector_dispersion(ow: OrderedWindow, w: WindowSample, k: int = 3) -> float:
    """MVD: 排名最高的 k 个像素到窗口均值的最小距离。"""
    _check_k(k)
    mean = _window_mean(w)
    best = math.inf
    for j in range(1, k + 1):
        best = min(best, distance_values(w[ow.order[WINDOW_SIZE - j]].as_tuple(), mean))
    return best


def apply_operator(operator: str, ow: OrderedWindow, w: WindowSample, k: int = 3) -> float:
    """按名称调用 VOS 算子 (vr / mvr / vd / mvd)。"""
    if operator == "vr":
        return vector_range(ow, w)
    if operator == "mvr":
        return min_vector_range(ow, w, k)
    if operator == "vd":
        return vector_dispersion(ow, w)
    if operator == "mvd":
        return mean_vector_dispersion(ow, w, k)
    raise ValueError(f"未知算子 '{operator}'，可选: {', '.join(OPERATORS)}")


# ============================================================
# 批量 (数组) 版本
# windows 形状为 (9, ..., 3)，第 0 轴为窗口位置
# ============================================================

def distance_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """逐元素 RGB 距离，a/b 形状为 (..., 3)。"""
    d = a - b
    s0 = d[..., 0] * d[..., 0]
    s1 = d[..., 1] * d[..., 1]
    s2 = d[..., 2] * d[..., 2]
    # 三元素排序网络，与标量版本的 sorted() 相同
    lo01 = np.minimum(s0, s1)
    hi01 = np.maximum(s0, s1)
    mid_tmp = np.minimum(hi01, s2)
    hi = np.maximum(hi01, s2)
    lo = np.minimum(lo01, mid_tmp)
    mid = np.maximum(lo01, mid_tmp)
    return np.sqrt((lo + mid) + hi)


def reduced_order_array(windows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    批量约简排序。

    Args:
        windows: 形状 (9, ..., 3) 的窗口栈

    Returns:
        (order, aggregates): order 形状 (9, ...)，aggregates 为排序后的聚合距离
    """
    pair = {}
    for i in range(WINDOW_SIZE):
        for j in range(i + 1, WINDOW_SIZE):
            pair[(i, j)] = distance_array(windows[i], windows[j])

    zero = np.zeros(windows.shape[1:-1], dtype=np.float64)
    aggregates = np.empty((WINDOW_SIZE,) + zero.shape, dtype=np.float64)
    for i in range(WINDOW_SIZE):
        total = zero.copy()
        for j in range(WINDOW_SIZE):
            if i == j:
                total = total + zero
            else:
                total = total + pair[(min(i, j), max(i, j))]
        aggregates[i] = total

    order = np.argsort(aggregates, axis=0, kind="stable")
    return order, np.take_along_axis(aggregates, order, axis=0)


def window_mean_array(windows: np.ndarray) -> np.ndarray:
    total = np.zeros(windows.shape[1:], dtype=np.float64)
    for i in range(WINDOW_SIZE):
        total = total + windows[i]
    return total / WINDOW_SIZE


def operator_array(operator: str, windows: np.ndarray, order: np.ndarray, k: int = 3) -> np.ndarray:
    """对整批窗口计算 VOS 算子值，order 来自 reduced_order_array。"""
    if operator not in OPERATORS:
        raise ValueError(f"未知算子 '{operator}'，可选: {', '.join(OPERATORS)}")
    ranked = np.take_along_axis(windows, order[..., np.newaxis], axis=0)

    if operator == "vr":
        return distance_array(ranked[8], ranked[0])
    if operator == "vd":
        return distance_array(ranked[8], window_mean_array(windows))

    _check_k(k)
    anchor = ranked[0] if operator == "mvr" else window_mean_array(windows)
    best = np.full(windows.shape[1:-1], np.inf)
    for j in range(1, k + 1):
        best = np.minimum(best, distance_array(ranked[WINDOW_SIZE - j], anchor))
    return best

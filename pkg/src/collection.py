"""
像素集合方案 (Pixel Collection Scheme)

8 邻域整数记法 (行主序 0..8，中心为 4)，基于阶跃/屋脊边缘剖面的方向性像素集合，
集合到零和 3x3 掩模的转换，以及为非极大值抑制提供方向的方向响应。

方案文件格式 (每行一个方案，# 开头为注释):

    E: a={0,1,2} b={6,7,8}
"""

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, List, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from .vos_core import CENTER_INDEX, WINDOW_SIZE, WindowSample, distance_values, distance_array

STEP_IDS = ("E", "NE", "N", "NW")
CURVE_IDS = ("CE", "CNE", "CN", "CNW")
SCHEME_IDS = STEP_IDS + CURVE_IDS

NEIGHBOR_INDICES = frozenset(range(WINDOW_SIZE)) - {CENTER_INDEX}

# NMS 比较轴: (较小窗口索引, 较大窗口索引)
_AXES: Dict[str, Tuple[int, int]] = {
    "E": (1, 7),    # 上下
    "N": (3, 5),    # 左右
    "NE": (2, 6),   # 副对角线
    "NW": (0, 8),   # 主对角线
}

# 绕 8 邻域环顺时针移动一格 (45°)，E -> NE -> N -> NW 即沿此方向
_RING_STEP = {0: 1, 1: 2, 2: 5, 5: 8, 8: 7, 7: 6, 6: 3, 3: 0}

# 窗口内容逆时针旋转 90° 时位置 i 的去向
_ROT90 = {i: (2 - i % 3) * 3 + i // 3 for i in range(WINDOW_SIZE)}


class SchemeError(ValueError):
    pass


def neighbor_index(value: int) -> int:
    """校验 8 邻域整数记法 (0..8)。"""
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or not 0 <= value <= 8:
        raise SchemeError(f"邻域索引必须在 [0, 8] 内: {value!r}")
    return int(value)


@dataclass(frozen=True)
class CollectionScheme:
    """把 8 邻域划分为两个相对像素集合的方向性方案。"""
    id: str
    side_a: FrozenSet[int]
    side_b: FrozenSet[int]

    def __post_init__(self):
        a = frozenset(neighbor_index(i) for i in self.side_a)
        b = frozenset(neighbor_index(i) for i in self.side_b)
        if not a or not b:
            raise SchemeError(f"方案 {self.id}: 两侧集合均不能为空")
        if a & b:
            raise SchemeError(f"方案 {self.id}: 两侧集合相交 {sorted(a & b)}")
        if CENTER_INDEX in a or CENTER_INDEX in b:
            raise SchemeError(f"方案 {self.id}: 集合不能包含中心像素 4")
        object.__setattr__(self, "side_a", a)
        object.__setattr__(self, "side_b", b)


@dataclass(frozen=True)
class Mask:
    """方案的 3x3 系数表示，系数和为 0。"""
    coefficients: np.ndarray

    def total(self) -> float:
        return float(self.coefficients.sum())


def _ring_rotate(s: CollectionScheme, new_id: str) -> CollectionScheme:
    return CollectionScheme(
        id=new_id,
        side_a=frozenset(_RING_STEP[i] for i in s.side_a),
        side_b=frozenset(_RING_STEP[i] for i in s.side_b),
    )


def build_default_schemes() -> List[CollectionScheme]:
    """
    内置的 8 个方案。

    阶跃族过中心直线把邻域一分为二；曲线 (屋脊) 族由 CE 楔形对相对楔形，
    其余三个依次绕邻域环旋转 45°，与阶跃族 E -> NE -> N -> NW 的转向一致。
    不用 90° 旋转: 那样只能得到两个轴向，CNE / CNW 没有对应的对角方向可继承 NMS 轴。
    """
    step = [
        CollectionScheme("E", frozenset({0, 1, 2}), frozenset({6, 7, 8})),
        CollectionScheme("NE", frozenset({1, 2, 5}), frozenset({3, 6, 7})),
        CollectionScheme("N", frozenset({0, 3, 6}), frozenset({2, 5, 8})),
        CollectionScheme("NW", frozenset({0, 1, 3}), frozenset({5, 7, 8})),
    ]
    curve = [CollectionScheme("CE", frozenset({0, 1, 2, 3, 5}), frozenset({6, 7, 8}))]
    for new_id in CURVE_IDS[1:]:
        curve.append(_ring_rotate(curve[-1], new_id))
    return step + curve


def scheme_to_mask(s: CollectionScheme) -> Mask:
    coefficients = np.zeros(WINDOW_SIZE, dtype=np.float64)
    for i in s.side_a:
        coefficients[i] = 1.0 / len(s.side_a)
    for i in s.side_b:
        coefficients[i] = -1.0 / len(s.side_b)
    return Mask(coefficients.reshape(3, 3))


def suppression_axis(scheme_id: str) -> Tuple[int, int]:
    """方案对应的 NMS 比较像素对 (窗口索引)，曲线方案继承其基础方向。"""
    base = scheme_id[1:] if scheme_id in CURVE_IDS else scheme_id
    if base not in _AXES:
        raise SchemeError(f"未知方案标识 '{scheme_id}'，可选: {', '.join(SCHEME_IDS)}")
    return _AXES[base]


def _side_mean(w: WindowSample, side: FrozenSet[int]) -> Tuple[float, float, float]:
    sr = sg = sb = 0.0
    for i in sorted(side):
        p = w[i]
        sr += p.r
        sg += p.g
        sb += p.b
    n = len(side)
    return (sr / n, sg / n, sb / n)


def directional_response(w: WindowSample, s: CollectionScheme) -> float:
    """两侧像素集合逐通道均值之间的 RGB 距离 (等于掩模作用结果的向量模)。"""
    return distance_values(_side_mean(w, s.side_a), _side_mean(w, s.side_b))


def best_direction(w: WindowSample, schemes: Sequence[CollectionScheme]) -> Tuple[str, float]:
    """响应最大的方案；并列时取序列中靠前者。"""
    if not schemes:
        raise SchemeError("方案列表不能为空")
    best_id, best_value = schemes[0].id, directional_response(w, schemes[0])
    for s in schemes[1:]:
        value = directional_response(w, s)
        if value > best_value:
            best_id, best_value = s.id, value
    return best_id, best_value


def rotate_window(w: WindowSample) -> WindowSample:
    """窗口内容逆时针旋转 90°。"""
    rotated = [None] * WINDOW_SIZE
    for i in range(WINDOW_SIZE):
        rotated[_ROT90[i]] = w[i]
    return WindowSample(tuple(rotated))


# ============================================================
# 批量版本，windows 形状为 (9, ..., 3)
# ============================================================

def _side_mean_array(windows: np.ndarray, side: FrozenSet[int]) -> np.ndarray:
    total = np.zeros(windows.shape[1:], dtype=np.float64)
    for i in sorted(side):
        total = total + windows[i]
    return total / len(side)


def directional_response_array(windows: np.ndarray, s: CollectionScheme) -> np.ndarray:
    return distance_array(_side_mean_array(windows, s.side_a), _side_mean_array(windows, s.side_b))


def best_direction_array(windows: np.ndarray, schemes: Sequence[CollectionScheme]) -> Tuple[np.ndarray, np.ndarray]:
    """
    批量方向选择。

    Returns:
        (index, response): index 为 schemes 中的下标 (并列取最小下标)，response 为对应响应
    """
    if not schemes:
        raise SchemeError("方案列表不能为空")
    responses = np.stack([directional_response_array(windows, s) for s in schemes])
    index = np.argmax(responses, axis=0)
    return index, np.take_along_axis(responses, index[np.newaxis], axis=0)[0]


# ============================================================
# 方案文件
# ============================================================

_LINE_PATTERN = re.compile(r"^\s*(\w+)\s*:\s*a\s*=\s*\{([^}]*)\}\s+b\s*=\s*\{([^}]*)\}\s*$")


def _parse_index_set(text: str) -> FrozenSet[int]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    try:
        return frozenset(neighbor_index(int(t)) for t in items)
    except ValueError as e:
        raise SchemeError(f"无效的索引集合 {{{text}}}: {e}")


def parse_schemes(text: str) -> List[CollectionScheme]:
    """解析方案文本，每行 `id: a={...} b={...}`。"""
    schemes: List[CollectionScheme] = []
    seen = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = _LINE_PATTERN.match(line)
        if not match:
            raise SchemeError(f"第 {line_no} 行格式错误: '{raw.strip()}'")
        scheme_id = match.group(1)
        if scheme_id not in SCHEME_IDS:
            raise SchemeError(f"第 {line_no} 行: 未知方案标识 '{scheme_id}'，可选: {', '.join(SCHEME_IDS)}")
        if scheme_id in seen:
            raise SchemeError(f"第 {line_no} 行: 方案 '{scheme_id}' 重复定义")
        seen.add(scheme_id)
        try:
            schemes.append(CollectionScheme(
                id=scheme_id,
                side_a=_parse_index_set(match.group(2)),
                side_b=_parse_index_set(match.group(3)),
            ))
        except SchemeError as e:
            raise SchemeError(f"第 {line_no} 行: {e}")
    if not schemes:
        raise SchemeError("方案文件中没有任何方案")
    return schemes


def load_schemes(path: Union[str, Path]) -> List[CollectionScheme]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise SchemeError(f"无法读取方案文件 {path}: {e}")
    try:
        schemes = parse_schemes(text)
    except SchemeError as e:
        raise SchemeError(f"{path}: {e}")
    logger.debug(f"已加载 {len(schemes)} 个方案: {path}")
    return schemes


def format_schemes(schemes: Sequence[CollectionScheme]) -> str:
    """生成方案文件文本 (parse_schemes 的逆操作)。"""
    lines = []
    for s in schemes:
        a = ",".join(str(i) for i in sorted(s.side_a))
        b = ",".join(str(i) for i in sorted(s.side_b))
        lines.append(f"{s.id}: a={{{a}}} b={{{b}}}")
    return "\n".join(lines) + "\n"

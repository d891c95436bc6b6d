"""
阈值模式解析器 (Threshold Resolver)

将配置文件 / 命令行中的阈值写法解析为 ThresholdMode:
    otsu            -> Otsu 自动阈值
    fixed:<T> 或 T  -> 固定阈值
    percentile:<p>  -> 非零响应的第 p 百分位
"""

from typing import Any

from .pipeline import ConfigError, ThresholdMode


def resolve_threshold_mode(value: Any) -> ThresholdMode:
    """
    将阈值写法解析为 ThresholdMode。

    Args:
        value: 字符串写法、数值 (视为固定阈值) 或已构造好的 ThresholdMode

    Returns:
        校验过的 ThresholdMode

    Raises:
        ConfigError: 写法无法识别或参数越界
    """
    if isinstance(value, ThresholdMode):
        # 已经是具体模式，直接返回
        return value
    if isinstance(value, bool) or value is None:
        raise ConfigError(f"无法识别的阈值模式: {value!r}")
    if isinstance(value, (int, float)):
        return ThresholdMode.fixed(value)

    text = str(value).strip().lower()
    if text == "otsu":
        return ThresholdMode.otsu()

    kind, sep, arg = text.partition(":")
    if sep and kind in ("fixed", "percentile"):
        try:
            number = float(arg)
        except ValueError:
            raise ConfigError(f"阈值模式 '{value}' 的参数不是数值")
        return ThresholdMode(kind, number)

    if not sep and _is_number(text):
        return ThresholdMode.fixed(float(text))
    raise ConfigError(f"无法识别的阈值模式 '{value}'，可选: otsu, fixed:<T>, percentile:<p>")


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True

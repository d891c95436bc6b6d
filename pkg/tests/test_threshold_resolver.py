"""
阈值模式解析器单元测试
直接测试 threshold_resolver.py 的解析逻辑
"""

import pytest

from src.pipeline import ConfigError, ThresholdMode
from src.threshold_resolver import resolve_threshold_mode


class TestResolveThresholdMode:
    """阈值写法 -> ThresholdMode"""

    @pytest.mark.parametrize("value, expected", [
        ("otsu", ThresholdMode.otsu()),
        ("  OTSU ", ThresholdMode.otsu()),
        ("fixed:100", ThresholdMode.fixed(100)),
        ("fixed:0", ThresholdMode.fixed(0)),
        ("100", ThresholdMode.fixed(100)),
        (12.5, ThresholdMode.fixed(12.5)),
        (7, ThresholdMode.fixed(7)),
        ("percentile:90", ThresholdMode.percentile(90)),
        ("percentile:0.5", ThresholdMode.percentile(0.5)),
    ])
    def test_spellings(self, value, expected):
        assert resolve_threshold_mode(value) == expected

    def test_passthrough(self):
        mode = ThresholdMode.percentile(75)
        assert resolve_threshold_mode(mode) is mode

    @pytest.mark.parametrize("value", [
        "median",
        "fixed:",
        "fixed:abc",
        "fixed:1000",
        "percentile:100",
        "percentile:0",
        "-3",
        "otsu:5",
        None,
        True,
    ])
    def test_rejected(self, value):
        with pytest.raises(ConfigError):
            resolve_threshold_mode(value)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])

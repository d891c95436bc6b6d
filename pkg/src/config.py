import os
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import yaml

from .pipeline import ConfigError, PipelineConfig
from .threshold_resolver import resolve_threshold_mode

DEFAULT_CONFIG = "detector.yaml"

# detector 段允许的键 (schemes 不属于 PipelineConfig，单独读取)
DETECTOR_KEYS = ("operator", "k", "threshold", "nms", "plateau", "border", "band_rows", "schemes")
SYNTH_KEYS = (
    "pattern", "width", "height", "size", "radius", "orientation",
    "color_a", "color_b", "noise", "seed",
)


@dataclass
class LoggingSettings:
    level: str = "WARNING"
    file: Optional[str] = None
    rotation: str = "10 MB"


@dataclass
class SynthSettings:
    pattern: str = "step"
    width: int = 64
    height: int = 64
    size: int = 64
    radius: int = 20
    orientation: str = "vertical"
    color_a: List[float] = field(default_factory=lambda: [255.0, 0.0, 0.0])
    color_b: List[float] = field(default_factory=lambda: [0.0, 0.0, 255.0])
    noise: float = 0.0
    seed: int = 0


def _project_root() -> str:
    # src/config.py -> src -> project_root
    current_dir = os.path.dirname(os.path.abspath(__file__))
    return os.path.dirname(current_dir)


def locate_config(config_path: str) -> str:
    """绝对路径原样返回；相对路径优先按当前目录查找，找不到再按项目根目录定位。"""
    if os.path.isabs(config_path):
        return config_path
    if os.path.exists(config_path):
        return os.path.abspath(config_path)
    return os.path.join(_project_root(), config_path)


def _as_int(section: str, key: str, value: Any) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{section}.{key} 必须是整数，实际为 {value!r}")
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key} 必须是整数，实际为 {value!r}")
    if not number.is_integer():
        raise ConfigError(f"{section}.{key} 必须是整数，实际为 {value!r}")
    return int(number)


def _as_float(section: str, key: str, value: Any) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{section}.{key} 必须是数值，实际为 {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key} 必须是数值，实际为 {value!r}")


def _as_bool(section: str, key: str, value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "yes", "on", "1"):
        return True
    if text in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{section}.{key} 必须是布尔值，实际为 {value!r}")


def _as_color(section: str, key: str, value: Any) -> List[float]:
    if isinstance(value, str):
        value = value.split(",")
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{section}.{key} 必须是 [R, G, B]，实际为 {value!r}")
    return [_as_float(section, key, v) for v in value]


class ConfigLoader:
    """
    detector.yaml 加载器，每个配置文件路径一个实例。

    YAML 只解析结构，${VAR} / ${VAR:default} 占位符推迟到读取各配置段时再替换。
    """
    _instances: Dict[str, "ConfigLoader"] = {}

    def __new__(cls, config_path: str = DEFAULT_CONFIG):
        path = locate_config(config_path)
        instance = cls._instances.get(path)
        if instance is None:
            instance = super().__new__(cls)
            instance._initialized = False
            cls._instances[path] = instance
        return instance

    def __init__(self, config_path: str = DEFAULT_CONFIG):
        # 防止重复初始化
        if self._initialized:
            return
        self.config_path = locate_config(config_path)
        self._config_cache: Dict[str, Any] = {}
        self.load_config()
        self._initialized = True

    @classmethod
    def reset(cls):
        """清空实例缓存 (测试用)。"""
        cls._instances.clear()

    def load_config(self) -> Dict[str, Any]:
        """加载原始 yaml 配置，不进行变量替换。"""
        if not os.path.exists(self.config_path):
            raise FileNotFoundError(f"未找到配置文件: {self.config_path}")

        with open(self.config_path, 'r', encoding='utf-8') as f:
            content = f.read()

        try:
            config = yaml.safe_load(content) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"YAML 配置解析错误 ({self.config_path}): {e}")
        if not isinstance(config, dict):
            raise ConfigError(f"配置文件顶层必须是映射: {self.config_path}")
        self._config_cache = config
        return config

    def _resolve_with_env(self, value: Any, env: Dict[str, str]) -> Any:
        """递归解析配置中的环境变量占位符。"""
        if isinstance(value, str):
            # 正则匹配 ${VAR} 或 ${VAR:default}
            pattern = re.compile(r'\$\{([^}:]+)(:([^}]*))?\}')

            def env_sub(match):
                var_name = match.group(1)
                default_value = match.group(3)
                return env.get(var_name, default_value if default_value is not None else "")

            return pattern.sub(env_sub, value)

        elif isinstance(value, dict):
            return {k: self._resolve_with_env(v, env) for k, v in value.items()}

        elif isinstance(value, list):
            return [self._resolve_with_env(v, env) for v in value]

        else:
            return value

    def _section(
        self,
        name: str,
        allowed: tuple,
        env_overrides: Optional[Dict[str, str]] = None,
    ) -> Dict[str, Any]:
        raw = self._config_cache.get(name) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"配置段 '{name}' 必须是映射")
        unknown = [k for k in raw if k not in allowed]
        if unknown:
            raise ConfigError(f"配置段 '{name}' 包含未知键: {', '.join(map(str, unknown))}")

        # 合并环境: os.environ (底座) + env_overrides (本次调用)
        run_env = os.environ.copy()
        if env_overrides:
            run_env.update(env_overrides)
        return self._resolve_with_env(raw, run_env)

    def get_pipeline_config(
        self,
        overrides: Optional[Dict[str, Any]] = None,
        env_overrides: Optional[Dict[str, str]] = None,
    ) -> PipelineConfig:
        """
        合成 PipelineConfig。

        优先级: overrides (命令行) > 配置文件 detector 段 > PipelineConfig 默认值。
        overrides 中值为 None 的键视为未指定。
        """
        settings = self._section("detector", DETECTOR_KEYS, env_overrides)
        for key, value in (overrides or {}).items():
            if key not in DETECTOR_KEYS:
                raise ConfigError(f"未知的检测参数: {key}")
            if value is not None:
                settings[key] = value

        kwargs: Dict[str, Any] = {}
        for key in ("operator", "plateau", "border"):
            if settings.get(key) is not None:
                kwargs[key] = str(settings[key]).strip().lower()
        for key in ("k", "band_rows"):
            if settings.get(key) is not None:
                kwargs[key] = _as_int("detector", key, settings[key])
        if settings.get("nms") is not None:
            kwargs["nms"] = _as_bool("detector", "nms", settings["nms"])
        if settings.get("threshold") is not None:
            kwargs["threshold_mode"] = resolve_threshold_mode(settings["threshold"])
        return PipelineConfig(**kwargs)

    def get_schemes_path(self, env_overrides: Optional[Dict[str, str]] = None) -> Optional[str]:
        """detector.schemes 指向的方案文件 (相对配置文件所在目录)，未设置时为 None。"""
        value = self._section("detector", DETECTOR_KEYS, env_overrides).get("schemes")
        if not value:
            return None
        value = str(value)
        if os.path.isabs(value):
            return value
        return os.path.join(os.path.dirname(self.config_path), value)

    def get_synth_settings(self, env_overrides: Optional[Dict[str, str]] = None) -> SynthSettings:
        raw = self._section("synth", SYNTH_KEYS, env_overrides)
        kwargs: Dict[str, Any] = {}
        for key in ("pattern", "orientation"):
            if raw.get(key) is not None:
                kwargs[key] = str(raw[key])
        for key in ("width", "height", "size", "radius", "seed"):
            if raw.get(key) is not None:
                kwargs[key] = _as_int("synth", key, raw[key])
        if raw.get("noise") is not None:
            kwargs["noise"] = _as_float("synth", "noise", raw["noise"])
        for key in ("color_a", "color_b"):
            if raw.get(key) is not None:
                kwargs[key] = _as_color("synth", key, raw[key])
        return SynthSettings(**kwargs)

    def get_logging_settings(self, env_overrides: Optional[Dict[str, str]] = None) -> LoggingSettings:
        raw = self._section("logging", ("level", "file", "rotation"), env_overrides)
        return LoggingSettings(
            level=str(raw.get("level") or "WARNING").upper(),
            file=raw.get("file") or None,
            rotation=str(raw.get("rotation") or "10 MB"),
        )

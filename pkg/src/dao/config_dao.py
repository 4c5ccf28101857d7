import json
from pathlib import Path
from typing import Any, Dict, Union

from src.model.config import EstimationConfig, RunConfig, parse_config
from src.model.errors import ConfigurationError


class ConfigDAO:
    """配置数据访问对象：负责加载JSON配置并返回配置模型"""

    @staticmethod
    def load_json(path: Union[str, Path]) -> Dict[str, Any]:
        config_path = Path(path)
        if not config_path.exists():
            raise ConfigurationError(f"配置文件不存在: {path}")
        try:
            with config_path.open("r", encoding="utf-8") as f:
                raw_data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"配置文件JSON解析失败: {config_path}\n错误: {e}") from e
        if not isinstance(raw_data, dict):
            raise ConfigurationError(f"配置文件根节点必须是对象: {config_path}")
        return raw_data

    @staticmethod
    def load_run(path: Union[str, Path]) -> RunConfig:
        """加载基准测试配置，相对的 data_path / mechanism_path 按配置文件所在目录解析"""
        raw_data = ConfigDAO.load_json(path)
        base = Path(path).parent
        for key in ("data_path", "mechanism_path"):
            value = raw_data.get(key)
            if value and not Path(value).is_absolute() and not Path(value).exists():
                raw_data[key] = str(base / value)
        return RunConfig.from_dict(raw_data)

    @staticmethod
    def load_estimation(path: Union[str, Path, None]) -> EstimationConfig:
        """path 为空时返回默认配置"""
        if path is None:
            return EstimationConfig()
        return parse_config(EstimationConfig, ConfigDAO.load_json(path))

    @staticmethod
    def save(config: Union[RunConfig, EstimationConfig], path: Union[str, Path]) -> Path:
        """写入失败直接抛出 OSError"""
        config_path = Path(path)
        config_path.parent.mkdir(parents=True, exist_ok=True)
        with config_path.open("w", encoding="utf-8") as f:
            json.dump(config.model_dump(mode="json"), f, ensure_ascii=False, indent=4)
        return config_path

import json
from pathlib import Path
from typing import Union

from src.core.generator import GeneratorNet
from src.model.errors import ConfigurationError


class ModelDAO:
    """生成网络的 JSON 持久化（结构、噪声布局、行优先展平的权重、训练元数据）"""

    @staticmethod
    def save(gen: GeneratorNet, path: Union[str, Path]) -> Path:
        model_path = Path(path)
        model_path.parent.mkdir(parents=True, exist_ok=True)
        with model_path.open("w", encoding="utf-8") as f:
            json.dump(gen.to_dict(), f, ensure_ascii=False)
        return model_path

    @staticmethod
    def load(path: Union[str, Path]) -> GeneratorNet:
        model_path = Path(path)
        if not model_path.exists():
            raise ConfigurationError(f"模型文件不存在: {model_path}")
        try:
            with model_path.open("r", encoding="utf-8") as f:
                return GeneratorNet.create(json.load(f))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"模型文件JSON解析失败: {model_path}\n错误: {e}") from e
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"模型文件内容不完整: {model_path}\n错误: {e}") from e

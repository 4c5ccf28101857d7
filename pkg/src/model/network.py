from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np

from src.model.errors import ConfigurationError

ACTIVATIONS = ("relu", "linear")


@dataclass(frozen=True)
class LayerSpec:
    """全连接层: in_width 已包含该层输入端追加的噪声单元"""

    in_width: int
    out_width: int
    activation: str = "relu"

    def to_dict(self) -> Dict[str, Any]:
        return {"in_width": self.in_width, "out_width": self.out_width, "activation": self.activation}


@dataclass(frozen=True)
class NetSpec:
    """
    网络结构
    input_width: 数据输入宽度（不含噪声）
    noise_layout[i]: 第 i 层输入端追加的标准高斯噪声单元数
    """

    input_width: int
    layers: List[LayerSpec]
    noise_layout: List[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.noise_layout:
            object.__setattr__(self, "noise_layout", [0] * len(self.layers))
        self.validate()

    def validate(self) -> None:
        if self.input_width < 0:
            raise ConfigurationError(f"输入宽度非法: {self.input_width}")
        if not self.layers:
            raise ConfigurationError("网络至少需要一层")
        if len(self.noise_layout) != len(self.layers):
            raise ConfigurationError(f"噪声布局长度 {len(self.noise_layout)} 与层数 {len(self.layers)} 不符")
        previous = self.input_width
        for i, (layer, noise) in enumerate(zip(self.layers, self.noise_layout)):
            if layer.in_width < 1 or layer.out_width < 1:
                raise ConfigurationError(f"第 {i} 层宽度为 0: {layer}")
            if noise < 0:
                raise ConfigurationError(f"第 {i} 层噪声单元数为负: {noise}")
            if layer.activation not in ACTIVATIONS:
                raise ConfigurationError(f"未知激活函数: {layer.activation}")
            if layer.in_width != previous + noise:
                raise ConfigurationError(
                    f"第 {i} 层输入宽度 {layer.in_width} ≠ 上一层输出 {previous} + 噪声 {noise}"
                )
            previous = layer.out_width
        if self.layers[-1].activation != "linear":
            raise ConfigurationError("最后一层必须是线性激活")

    @property
    def output_width(self) -> int:
        return self.layers[-1].out_width

    @property
    def total_noise(self) -> int:
        return int(sum(self.noise_layout))

    @classmethod
    def mlp(cls, input_width: int, hidden: List[int], output_width: int) -> "NetSpec":
        """无噪声的普通 MLP: ReLU 隐层 + 线性输出"""
        widths = [input_width] + list(hidden)
        layers = [LayerSpec(widths[i], widths[i + 1], "relu") for i in range(len(hidden))]
        layers.append(LayerSpec(widths[-1], output_width, "linear"))
        return cls(input_width, layers)

    @classmethod
    def create(cls, data: Dict[str, Any]) -> "NetSpec":
        layers = [LayerSpec(int(l["in_width"]), int(l["out_width"]), l.get("activation", "relu")) for l in data["layers"]]
        return cls(int(data["input_width"]), layers, [int(v) for v in data.get("noise_layout", [])])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input_width": self.input_width,
            "layers": [l.to_dict() for l in self.layers],
            "noise_layout": list(self.noise_layout),
        }


@dataclass
class ParamState:
    """
    可训练参数 + Adam 状态
    params 以名字索引: "W0","b0",... 以及噪声头的 "head.*"
    一次训练独占一个 ParamState（单写者）
    """

    params: Dict[str, np.ndarray]
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    lr: float = 1e-3
    epoch: int = 0

    def __post_init__(self):
        for name, value in self.params.items():
            self.m.setdefault(name, np.zeros_like(value))
            self.v.setdefault(name, np.zeros_like(value))

    def add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = np.asarray(value, dtype=float)
        self.m[name] = np.zeros_like(self.params[name])
        self.v[name] = np.zeros_like(self.params[name])

    def copy(self) -> "ParamState":
        return ParamState(
            params={k: v.copy() for k, v in self.params.items()},
            m={k: v.copy() for k, v in self.m.items()},
            v={k: v.copy() for k, v in self.v.items()},
            step=self.step,
            lr=self.lr,
            epoch=self.epoch,
        )

    def weight(self, i: int) -> np.ndarray:
        return self.params[f"W{i}"]

    def bias(self, i: int) -> np.ndarray:
        return self.params[f"b{i}"]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())

    def snapshot(self) -> Dict[str, Any]:
        """诊断用的参数摘要"""
        return {k: {"min": float(np.min(v)), "max": float(np.max(v))} for k, v in self.params.items() if v.size}

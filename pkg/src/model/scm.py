from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Optional

import numpy as np

from src.model.errors import ConfigurationError
from src.model.mechanism import DiscreteMechanism
from src.model.noise import NoiseDistribution


class BenchmarkId(str, Enum):
    """四个模拟数据集"""

    A_gaussian = "A_gaussian"
    B_binary = "B_binary"
    C_exponential = "C_exponential"
    D_highdim = "D_highdim"

    @classmethod
    def parse(cls, value: Any) -> "BenchmarkId":
        if isinstance(value, cls):
            return value
        text = str(value).strip()
        for member in cls:
            if text in (member.value, member.name) or text.upper() == member.value[0]:
                return member
        raise ConfigurationError(f"未知基准数据集: {value}，可选: {[m.value for m in cls]}")


TREATMENT_KINDS = ("continuous", "binary")


@dataclass
class PcScmSpec:
    """
    代理-混杂结构因果模型 U → (W, X) → Y
    结构函数全部向量化:
        f_W(u: (n,k), e: (n,d))           -> (n,d)
        f_X(u: (n,k), n_x: (n,·))         -> (n,p)
        f_Y(u: (n,k), x: (n,p), n_y: (n,1)) -> (n,)
    各噪声项由独立的随机流抽取
    """

    name: str
    p: int
    k: int
    d: int
    noise_U: NoiseDistribution
    noise_E: NoiseDistribution
    noise_X: NoiseDistribution
    noise_Y: NoiseDistribution
    f_W: Callable[[np.ndarray, np.ndarray], np.ndarray]
    f_X: Callable[[np.ndarray, np.ndarray], np.ndarray]
    f_Y: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    treatment_kind: str = "continuous"
    description: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for dim_name in ("p", "k", "d"):
            if getattr(self, dim_name) < 1:
                raise ConfigurationError(f"维度 {dim_name} 必须为正整数")
        if self.treatment_kind not in TREATMENT_KINDS:
            raise ConfigurationError(f"treatment_kind 必须是 {TREATMENT_KINDS} 之一")
        if self.noise_U.dimension != self.k:
            raise ConfigurationError(f"N_U 维度 {self.noise_U.dimension} 与 k={self.k} 不符")
        if self.noise_E.dimension != self.d:
            raise ConfigurationError(f"E 维度 {self.noise_E.dimension} 与 d={self.d} 不符")

    def to_dict(self) -> Dict[str, Any]:
        """manifest 用的描述（结构函数以文字形式记录）"""
        return {
            "name": self.name,
            "dims": {"p": self.p, "k": self.k, "d": self.d},
            "noise_U": self.noise_U.to_dict(),
            "noise_E": self.noise_E.to_dict(),
            "noise_X": self.noise_X.to_dict(),
            "noise_Y": self.noise_Y.to_dict(),
            "treatment_kind": self.treatment_kind,
            "structure": dict(self.description),
        }


@dataclass
class ErrorMechanism:
    """
    已知误差机制 p(W|U)
    kind="additive": W = A U + E，E 服从参数已知的 noise
    kind="discrete": 列随机矩阵 F
    """

    kind: str
    A: Optional[np.ndarray] = None
    noise: Optional[NoiseDistribution] = None
    discrete: Optional[DiscreteMechanism] = None

    def __post_init__(self):
        if self.kind == "additive":
            if self.noise is None:
                raise ConfigurationError("加性误差机制缺少噪声分布")
            if self.A is None:
                self.A = np.eye(self.noise.dimension)
            self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
            if self.A.shape[0] != self.noise.dimension:
                raise ConfigurationError(f"A 的行数 {self.A.shape[0]} 与 E 维度 {self.noise.dimension} 不符")
        elif self.kind == "discrete":
            if self.discrete is None:
                raise ConfigurationError("离散误差机制缺少矩阵")
        else:
            raise ConfigurationError(f"未知误差机制类型: {self.kind}")

    @property
    def proxy_dim(self) -> int:
        if self.kind == "additive":
            return self.noise.dimension
        return 1

    @classmethod
    def additive(cls, noise: NoiseDistribution, A: Any = None) -> "ErrorMechanism":
        return cls("additive", A=A, noise=noise)

    @classmethod
    def from_discrete(cls, mechanism: DiscreteMechanism) -> "ErrorMechanism":
        return cls("discrete", discrete=mechanism)

    @classmethod
    def from_calibration(cls, w_calibration: np.ndarray) -> "ErrorMechanism":
        """
        校准实验: 把混杂固定为 0 时读取代理，读数的经验标准差即 E 的 scale
        假定 E 为零均值高斯
        """
        w = np.asarray(w_calibration, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        if w.shape[0] < 2:
            raise ConfigurationError("校准样本至少需要 2 行")
        sd = w.std(axis=0, ddof=1)
        return cls.additive(NoiseDistribution.gaussian(0.0, sd, w.shape[1]))

    @classmethod
    def create(cls, data: Dict[str, Any]) -> "ErrorMechanism":
        """
        兼容两种 JSON:
            {"kind": "additive", "A": [[...]], "noise": {...}}
            {"u_labels": [...], "w_labels": [...], "matrix": [[...]]}  (离散)
        """
        kind = data.get("kind")
        if kind is None:
            kind = "discrete" if "matrix" in data else "additive"
        if kind == "discrete":
            return cls.from_discrete(DiscreteMechanism.create(data))
        if "noise" not in data:
            raise ConfigurationError("加性误差机制缺少 'noise' 字段")
        return cls.additive(NoiseDistribution.create(data["noise"]), data.get("A"))

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "discrete":
            return {"kind": "discrete", **self.discrete.to_dict()}
        return {"kind": "additive", "A": self.A.tolist(), "noise": self.noise.to_dict()}

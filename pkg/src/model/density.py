from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy import stats

from src.model.errors import ConfigurationError
from src.model.noise import NoiseDistribution

DENSITY_FAMILIES = ("gaussian", "laplace", "exponential", "uniform", "gaussian_mixture")
# 默认积分窗口: 12 个尺度单位
WINDOW_SCALE_UNITS = 12.0
COVERAGE_TAIL = 1e-10


@dataclass
class DensitySpec:
    """
    一维噪声密度 p_E
    gaussian(loc, scale) / laplace(loc, scale) / exponential(rate) /
    uniform(low, high) / gaussian_mixture(weights, locs, scales)
    """

    family: str
    params: Dict[str, Any] = field(default_factory=dict)
    dimension: int = 1

    def __post_init__(self):
        if self.family not in DENSITY_FAMILIES:
            raise ConfigurationError(f"未知密度族: {self.family}，可选: {DENSITY_FAMILIES}")
        if self.dimension != 1:
            raise ConfigurationError("傅里叶检验只支持一维密度")

        p = self.params
        if self.family in ("gaussian", "laplace"):
            p.setdefault("loc", 0.0)
            p.setdefault("scale", 1.0)
            if not float(p["scale"]) > 0:
                raise ConfigurationError(f"scale 必须 > 0: {p['scale']}")
        elif self.family == "exponential":
            p.setdefault("rate", 1.0)
            if not float(p["rate"]) > 0:
                raise ConfigurationError(f"rate 必须 > 0: {p['rate']}")
        elif self.family == "uniform":
            p.setdefault("low", -1.0)
            p.setdefault("high", 1.0)
            if not float(p["high"]) > float(p["low"]):
                raise ConfigurationError(f"均匀分布需要 low < high: {p}")
        else:
            weights = np.asarray(p.get("weights", []), dtype=float)
            locs = np.asarray(p.get("locs", []), dtype=float)
            scales = np.asarray(p.get("scales", []), dtype=float)
            if weights.size == 0 or not (weights.size == locs.size == scales.size):
                raise ConfigurationError("混合高斯的 weights/locs/scales 长度必须一致且非空")
            if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-10:
                raise ConfigurationError(f"混合权重必须非负且和为 1: {weights}")
            if np.any(scales <= 0):
                raise ConfigurationError(f"混合成分 scale 必须 > 0: {scales}")

    # ========== 工厂 ==========

    @classmethod
    def create(cls, data: Dict[str, Any]) -> "DensitySpec":
        """{"family": ..., 其余键作为参数}"""
        if "family" not in data:
            raise ConfigurationError("密度定义缺少 'family' 字段")
        params = {k: v for k, v in data.items() if k not in ("family", "dimension")}
        return cls(data["family"], params, int(data.get("dimension", 1)))

    @classmethod
    def from_noise(cls, noise: NoiseDistribution) -> "DensitySpec":
        if noise.dimension != 1 or noise.family == "multivariate_gaussian":
            raise ConfigurationError("只有一维噪声可以转换为 DensitySpec")
        if noise.family == "gaussian":
            return cls("gaussian", {"loc": float(noise.loc[0]), "scale": float(noise.scale[0])})
        return cls("exponential", {"rate": float(noise.rate[0])})

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "dimension": self.dimension, **_plain(self.params)}

    # ========== 求值 ==========

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "gaussian_mixture":
            return sum(w * stats.norm.pdf(x, m, s) for w, m, s in self._components())
        return self._frozen().pdf(x)

    def cdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "gaussian_mixture":
            return sum(w * stats.norm.cdf(x, m, s) for w, m, s in self._components())
        return self._frozen().cdf(x)

    def window(self, tail: float = COVERAGE_TAIL) -> Tuple[float, float]:
        """
        默认积分窗口: 12 个尺度单位，必要时按分位数扩到覆盖 1 − tail
        有界支撑直接取支撑端点；对称族以 loc 为中点
        """
        p = self.params
        if self.family == "uniform":
            return float(p["low"]), float(p["high"])
        if self.family == "exponential":
            rate = float(p["rate"])
            return 0.0, max(WINDOW_SCALE_UNITS / rate, float(stats.expon.isf(tail, scale=1.0 / rate)))
        if self.family in ("gaussian", "laplace"):
            loc, scale = float(p["loc"]), float(p["scale"])
            half = max(WINDOW_SCALE_UNITS * scale, float(self._frozen().isf(tail / 2)) - loc)
            return loc - half, loc + half
        low = min(m - WINDOW_SCALE_UNITS * s for _, m, s in self._components())
        high = max(m + WINDOW_SCALE_UNITS * s for _, m, s in self._components())
        return low, high

    def coverage(self, low: float, high: float) -> float:
        return float(self.cdf(high) - self.cdf(low))

    def is_symmetric_about_zero(self) -> bool:
        p = self.params
        if self.family in ("gaussian", "laplace"):
            return float(p["loc"]) == 0.0
        if self.family == "uniform":
            return float(p["low"]) == -float(p["high"])
        return False

    # ========== 内部 ==========

    def _frozen(self):
        p = self.params
        if self.family == "gaussian":
            return stats.norm(float(p["loc"]), float(p["scale"]))
        if self.family == "laplace":
            return stats.laplace(float(p["loc"]), float(p["scale"]))
        if self.family == "exponential":
            return stats.expon(scale=1.0 / float(p["rate"]))
        return stats.uniform(float(p["low"]), float(p["high"]) - float(p["low"]))

    def _components(self) -> List[Tuple[float, float, float]]:
        p = self.params
        return list(zip(map(float, p["weights"]), map(float, p["locs"]), map(float, p["scales"])))


def _plain(params: Dict[str, Any]) -> Dict[str, Any]:
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in params.items()}

from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from src.model.errors import ConfigurationError

FAMILIES = ("gaussian", "exponential", "multivariate_gaussian")


@dataclass
class NoiseDistribution:
    """
    噪声分布模型 - 结构方程中每个外生噪声项的分布
    family: gaussian(loc, scale) / exponential(rate) / multivariate_gaussian(mean, covariance)
    所有参数都以长度为 dimension 的向量保存（标量自动广播）
    """

    family: str
    dimension: int = 1
    loc: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None
    rate: Optional[np.ndarray] = None
    covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"未知噪声族: {self.family}，可选: {FAMILIES}")
        if self.dimension < 1:
            raise ConfigurationError(f"噪声维度必须为正: {self.dimension}")

        d = self.dimension
        if self.family == "gaussian":
            self.loc = _as_vector(self.loc, d, 0.0, "loc")
            self.scale = _as_vector(self.scale, d, 1.0, "scale")
            if np.any(self.scale <= 0):
                raise ConfigurationError(f"高斯噪声 scale 必须 > 0: {self.scale}")
        elif self.family == "exponential":
            self.rate = _as_vector(self.rate, d, 1.0, "rate")
            if np.any(self.rate <= 0):
                raise ConfigurationError(f"指数噪声 rate 必须 > 0: {self.rate}")
        else:
            self.loc = _as_vector(self.loc, d, 0.0, "mean")
            cov = np.eye(d) if self.covariance is None else np.asarray(self.covariance, dtype=float)
            if cov.shape != (d, d):
                raise ConfigurationError(f"协方差矩阵形状应为 {(d, d)}，实际 {cov.shape}")
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise ConfigurationError("协方差矩阵必须对称")
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as e:
                raise ConfigurationError("协方差矩阵必须正定 (Cholesky 失败)") from e
            self.covariance = cov

    # ========== 工厂方法 ==========

    @classmethod
    def gaussian(cls, loc: Any = 0.0, scale: Any = 1.0, dimension: int = 1) -> "NoiseDistribution":
        return cls("gaussian", dimension, loc=loc, scale=scale)

    @classmethod
    def exponential(cls, rate: Any = 1.0, dimension: int = 1) -> "NoiseDistribution":
        return cls("exponential", dimension, rate=rate)

    @classmethod
    def multivariate_gaussian(cls, mean: Sequence[float], covariance: Any) -> "NoiseDistribution":
        mean = np.asarray(mean, dtype=float)
        return cls("multivariate_gaussian", int(mean.size), loc=mean, covariance=covariance)

    @classmethod
    def create(cls, data: Dict[str, Any]) -> "NoiseDistribution":
        """从 JSON 字典创建，忽略未知字段"""
        family = data.get("family")
        if family == "multivariate_gaussian":
            return cls.multivariate_gaussian(data.get("mean", data.get("loc")), data.get("covariance"))
        dimension = int(data.get("dimension", 1))
        if family == "gaussian":
            return cls.gaussian(data.get("loc", 0.0), data.get("scale", 1.0), dimension)
        if family == "exponential":
            return cls.exponential(data.get("rate", 1.0), dimension)
        raise ConfigurationError(f"未知噪声族: {family}")

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"family": self.family, "dimension": self.dimension}
        if self.family == "gaussian":
            out.update(loc=self.loc.tolist(), scale=self.scale.tolist())
        elif self.family == "exponential":
            out.update(rate=self.rate.tolist())
        else:
            out.update(mean=self.loc.tolist(), covariance=self.covariance.tolist())
        return out

    # ========== 业务方法 ==========

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """
        抽取 n 行噪声，返回 (n, dimension)
        指数分布走逆 CDF，保证同一条均匀流可用于重参数化
        """
        d = self.dimension
        if self.family == "gaussian":
            return self.loc + self.scale * rng.standard_normal((n, d))
        if self.family == "exponential":
            v = rng.random((n, d))
            return -np.log1p(-v) / self.rate
        chol = np.linalg.cholesky(self.covariance)
        return self.loc + rng.standard_normal((n, d)) @ chol.T

    def mean(self) -> np.ndarray:
        if self.family == "exponential":
            return 1.0 / self.rate
        return self.loc.copy()

    def variance(self) -> np.ndarray:
        """各维边际方差"""
        if self.family == "gaussian":
            return self.scale**2
        if self.family == "exponential":
            return 1.0 / self.rate**2
        return np.diag(self.covariance).copy()

    def standardized(self, sd: Any) -> "NoiseDistribution":
        """
        经过 W ↦ W / sd 变换后的噪声分布
        (高斯 scale/sd，指数 rate·sd，多元高斯 D⁻¹ΣD⁻¹)
        """
        sd = _as_vector(sd, self.dimension, 1.0, "sd")
        if np.any(sd <= 0):
            raise ConfigurationError(f"标准化尺度必须 > 0: {sd}")
        if self.family == "gaussian":
            return NoiseDistribution.gaussian(self.loc / sd, self.scale / sd, self.dimension)
        if self.family == "exponential":
            return NoiseDistribution.exponential(self.rate * sd, self.dimension)
        cov = self.covariance / np.outer(sd, sd)
        return NoiseDistribution.multivariate_gaussian(self.loc / sd, cov)


def _as_vector(value: Any, d: int, default: float, name: str) -> np.ndarray:
    if value is None:
        return np.full(d, default, dtype=float)
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1 and d > 1:
        arr = np.full(d, float(arr[0]))
    if arr.shape != (d,):
        raise ConfigurationError(f"参数 {name} 长度应为 {d}，实际 {arr.shape}")
    return arr

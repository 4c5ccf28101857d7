"""
生成网络输出端的 E 采样头
fixed: 参数已知且训练中不变
learnable: 参数随网络一起训练；scale 经 cap·sigmoid(ρ) 重参数化，始终落在 (0, cap)
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.special import expit, logit

from src.model.dataset import Standardization
from src.model.errors import ConfigurationError
from src.model.noise import FAMILIES, NoiseDistribution
from src.model.scm import ErrorMechanism

PREFIX = "head."
INIT_SHRINK = 0.999


@dataclass
class NoiseHead:
    family: str
    mode: str
    dimension: int
    fixed: Optional[NoiseDistribution] = None
    cap: Optional[np.ndarray] = None
    init: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"未知噪声族: {self.family}")
        if self.mode == "fixed":
            if self.fixed is None:
                raise ConfigurationError("fixed 模式需要已知的噪声分布")
        elif self.mode == "learnable":
            self.cap = np.broadcast_to(np.asarray(self.cap, dtype=float), (self.dimension,)).copy()
            if np.any(self.cap <= 0):
                raise ConfigurationError(f"scale 上限必须 > 0: {self.cap}")
        else:
            raise ConfigurationError(f"未知噪声头模式: {self.mode}")

    # ========== 工厂 ==========

    @classmethod
    def fixed_head(cls, noise: NoiseDistribution) -> "NoiseHead":
        return cls(noise.family, "fixed", noise.dimension, fixed=noise)

    @classmethod
    def learnable(cls, family: str, dimension: int, cap: Any, init: Optional[Dict[str, Any]] = None) -> "NoiseHead":
        """
        init 使用与 NoiseDistribution 相同的键 (loc/scale、rate、mean/covariance)
        初始 scale 超出上限时收缩到 0.999·cap
        """
        cap = np.broadcast_to(np.asarray(cap, dtype=float), (dimension,)).copy()
        init = dict(init or {})
        params: Dict[str, np.ndarray] = {}

        if family == "gaussian":
            scale = _vector(init.get("scale", cap), dimension)
            params["loc"] = _vector(init.get("loc", 0.0), dimension)
            params["rho"] = _to_rho(scale, cap)
        elif family == "exponential":
            rate = _vector(init.get("rate", 1.0 / cap), dimension)
            params["rho"] = _to_rho(1.0 / rate, cap)
        elif family == "multivariate_gaussian":
            cov = np.asarray(init.get("covariance", np.diag(cap**2)), dtype=float)
            if cov.shape != (dimension, dimension):
                raise ConfigurationError(f"初始协方差形状应为 {(dimension, dimension)}，实际 {cov.shape}")
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as e:
                raise ConfigurationError(f"初始协方差非正定: {e}") from e
            params["loc"] = _vector(init.get("mean", init.get("loc", 0.0)), dimension)
            params["rho"] = _to_rho(np.linalg.norm(chol, axis=1), cap)
            params["L"] = chol
        else:
            raise ConfigurationError(f"未知噪声族: {family}")
        return cls(family, "learnable", dimension, cap=cap, init=params)

    @classmethod
    def for_mechanism(cls, mechanism: ErrorMechanism, standardization: Optional[Standardization]) -> "NoiseHead":
        """已知机制 → 标准化尺度上的 fixed 头"""
        if mechanism is None or mechanism.kind != "additive":
            raise ConfigurationError("SPICE-Net 需要加性误差机制 W = A U + E")
        noise = mechanism.noise
        if standardization is not None:
            noise = noise.standardized(standardization.w_sd())
        return cls.fixed_head(noise)

    # ========== 参数 ==========

    def initial_params(self) -> Dict[str, np.ndarray]:
        """加入 ParamState 的可训练参数（fixed 模式为空）"""
        return {PREFIX + k: v.copy() for k, v in self.init.items()}

    def distribution(self, params: Optional[Dict[str, np.ndarray]] = None) -> NoiseDistribution:
        """当前参数对应的噪声分布"""
        if self.mode == "fixed":
            return self.fixed
        p = self._own(params)
        if self.family == "gaussian":
            return NoiseDistribution.gaussian(p["loc"], self._scale(p), self.dimension)
        if self.family == "exponential":
            return NoiseDistribution.exponential(1.0 / self._scale(p), self.dimension)
        chol = self._cholesky(p)
        return NoiseDistribution.multivariate_gaussian(p["loc"], chol @ chol.T)

    def scale(self, params: Optional[Dict[str, np.ndarray]] = None) -> np.ndarray:
        """各维边际标准差"""
        if self.mode == "fixed":
            return np.sqrt(self.fixed.variance())
        return self._scale(self._own(params))

    # ========== 采样与梯度 ==========

    def sample(
        self, batch: int, rng: np.random.Generator, params: Optional[Dict[str, np.ndarray]] = None
    ) -> Tuple[np.ndarray, Any]:
        """返回 (e, aux)；aux 是重参数化用到的基础随机数"""
        if self.mode == "fixed":
            return self.fixed.sample(batch, rng), None

        p = self._own(params)
        if self.family == "gaussian":
            z = rng.standard_normal((batch, self.dimension))
            return p["loc"] + self._scale(p) * z, z
        if self.family == "exponential":
            t = -np.log1p(-rng.random((batch, self.dimension)))
            return t * self._scale(p), t
        z = rng.standard_normal((batch, self.dimension))
        return p["loc"] + z @ self._cholesky(p).T, z

    def grad(
        self, upstream: np.ndarray, aux: Any, params: Optional[Dict[str, np.ndarray]] = None
    ) -> Dict[str, np.ndarray]:
        """upstream = ∂loss/∂e (B, d)，返回 head.* 参数的梯度"""
        if self.mode == "fixed":
            return {}

        p = self._own(params)
        s = expit(p["rho"])
        dscale_drho = self.cap * s * (1.0 - s)
        if self.family == "gaussian":
            return {
                PREFIX + "loc": upstream.sum(axis=0),
                PREFIX + "rho": (upstream * aux).sum(axis=0) * dscale_drho,
            }
        if self.family == "exponential":
            return {PREFIX + "rho": (upstream * aux).sum(axis=0) * dscale_drho}

        # C[i] = cap_i·s_i·r_i/‖r_i‖
        d_chol = np.tril(upstream.T @ aux)
        rows = np.tril(p["L"])
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        unit = rows / norms
        along = np.sum(d_chol * unit, axis=1, keepdims=True)
        amplitude = (self.cap * s)[:, None]
        d_rows = amplitude / norms * (d_chol - unit * along)
        return {
            PREFIX + "loc": upstream.sum(axis=0),
            PREFIX + "rho": along[:, 0] * dscale_drho,
            PREFIX + "L": np.tril(d_rows),
        }

    def to_dict(self, params: Optional[Dict[str, np.ndarray]] = None) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "family": self.family,
            "mode": self.mode,
            "dimension": self.dimension,
            "distribution": self.distribution(params).to_dict(),
        }
        if self.mode == "learnable":
            out["cap"] = self.cap.tolist()
        return out

    # ========== 内部 ==========

    def _own(self, params: Optional[Dict[str, np.ndarray]]) -> Dict[str, np.ndarray]:
        if params is None:
            return self.init
        return {k[len(PREFIX):]: v for k, v in params.items() if k.startswith(PREFIX)}

    def _scale(self, p: Dict[str, np.ndarray]) -> np.ndarray:
        if self.family == "multivariate_gaussian":
            return np.linalg.norm(self._cholesky(p), axis=1)
        return self.cap * expit(p["rho"])

    def _cholesky(self, p: Dict[str, np.ndarray]) -> np.ndarray:
        rows = np.tril(p["L"])
        amplitude = self.cap * expit(p["rho"])
        return amplitude[:, None] * rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _vector(value: Any, d: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(d, float(arr[0]))
    if arr.shape != (d,):
        raise ConfigurationError(f"参数长度应为 {d}，实际 {arr.shape}")
    return arr


def _to_rho(scale: np.ndarray, cap: np.ndarray) -> np.ndarray:
    if np.any(scale <= 0):
        raise ConfigurationError(f"初始 scale 必须 > 0: {scale}")
    return logit(np.minimum(scale, INIT_SHRINK * cap) / cap)

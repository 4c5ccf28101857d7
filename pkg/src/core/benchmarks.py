"""
四个模拟数据集 (A 高斯 / B 二值 / C 指数 / D 高维) 与其真值因果函数
"""

from typing import Any, Dict

import numpy as np

from src.model.noise import NoiseDistribution
from src.model.scm import BenchmarkId, ErrorMechanism, PcScmSpec

# 数据集 D 的载荷矩阵与 E 协方差
D_LOADING_A = np.array([[1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
D_LOADING_B = np.array([[1.0], [1.0]])
D_E_COVARIANCE = np.array([[2.0, -0.3, 0.5], [-0.3, 1.5, 0.4], [0.5, 0.4, 1.8]])

# SPICE-Net-Approx 的初值 (E 参数未知时)
D_APPROX_CORRELATION = np.array([[1.0, 0.7, 0.4], [0.7, 1.0, -0.2], [0.4, -0.2, 1.0]])


def _row_sum(u: np.ndarray) -> np.ndarray:
    return u.sum(axis=1)


def benchmark_spec(benchmark: Any) -> PcScmSpec:
    """返回数据集的精确结构方程"""
    bid = BenchmarkId.parse(benchmark)
    std_normal = NoiseDistribution.gaussian(0.0, 1.0)

    if bid is BenchmarkId.A_gaussian:
        return PcScmSpec(
            name=bid.value, p=1, k=1, d=1,
            noise_U=std_normal, noise_E=std_normal, noise_X=std_normal, noise_Y=std_normal,
            f_W=lambda u, e: u + e,
            f_X=lambda u, n: u + n,
            f_Y=lambda u, x, n: u[:, 0] + x[:, 0] + n[:, 0],
            description={"f_W": "U + E", "f_X": "U + N_X", "f_Y": "U + X + N_Y"},
        )

    if bid is BenchmarkId.B_binary:
        return PcScmSpec(
            name=bid.value, p=1, k=1, d=1,
            noise_U=std_normal, noise_E=std_normal, noise_X=std_normal, noise_Y=std_normal,
            f_W=lambda u, e: u + e,
            f_X=lambda u, n: (u + n > 0).astype(float),
            f_Y=lambda u, x, n: u[:, 0] + x[:, 0] + n[:, 0],
            treatment_kind="binary",
            description={"f_W": "U + E", "f_X": "1{U + N_X > 0}", "f_Y": "U + X + N_Y"},
        )

    if bid is BenchmarkId.C_exponential:
        exp1 = NoiseDistribution.exponential(1.0)
        return PcScmSpec(
            name=bid.value, p=1, k=1, d=1,
            noise_U=exp1, noise_E=exp1, noise_X=exp1, noise_Y=exp1,
            f_W=lambda u, e: u + e,
            f_X=lambda u, n: u + n,
            f_Y=lambda u, x, n: x[:, 0] ** 2 + u[:, 0] * x[:, 0] + n[:, 0],
            description={"f_W": "U + E", "f_X": "U + N_X", "f_Y": "X^2 + U X + N_Y"},
        )

    return PcScmSpec(
        name=bid.value, p=1, k=2, d=3,
        noise_U=NoiseDistribution.multivariate_gaussian([0.0, 0.0], np.eye(2)),
        noise_E=NoiseDistribution.multivariate_gaussian([0.0, 0.0, 0.0], D_E_COVARIANCE),
        noise_X=std_normal,
        noise_Y=std_normal,
        f_W=lambda u, e: u @ D_LOADING_A.T + e,
        f_X=lambda u, n: u @ D_LOADING_B + n,
        f_Y=lambda u, x, n: (u @ D_LOADING_B)[:, 0] + x[:, 0] + n[:, 0],
        description={"f_W": "A U + E", "f_X": "B^T U + N_X", "f_Y": "B^T U + X + N_Y",
                     "A": D_LOADING_A.tolist(), "B": D_LOADING_B.tolist()},
    )


def benchmark_mechanism(benchmark: Any) -> ErrorMechanism:
    """数据集对应的已知误差机制 W = A U + E"""
    spec = benchmark_spec(benchmark)
    if spec.name == BenchmarkId.D_highdim.value:
        return ErrorMechanism.additive(spec.noise_E, D_LOADING_A)
    return ErrorMechanism.additive(spec.noise_E, np.eye(1))


def true_causal_function(benchmark: Any, x: Any) -> np.ndarray:
    """A、B、D: θ(x) = x；C: θ(x) = x² + x + 1"""
    bid = BenchmarkId.parse(benchmark)
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[:, 0]
    if bid is BenchmarkId.C_exponential:
        return x**2 + x + 1.0
    return x.copy()


def approx_head_init(benchmark: Any) -> Dict[str, Any]:
    """
    SPICE-Net-Approx 的 E 参数初值（标准化尺度，W 方差为 1）
    """
    bid = BenchmarkId.parse(benchmark)
    if bid in (BenchmarkId.A_gaussian, BenchmarkId.B_binary):
        return {"family": "gaussian", "loc": [1.0], "scale": [1.0]}
    if bid is BenchmarkId.C_exponential:
        return {"family": "exponential", "rate": [1.0]}
    return {
        "family": "multivariate_gaussian",
        "mean": [1.0, 2.0, 3.0],
        "covariance": D_APPROX_CORRELATION.tolist(),
    }

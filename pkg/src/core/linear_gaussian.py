"""
一元线性高斯 PC-SCM 的闭式估计量与偏差诊断
"""

from typing import Optional

import numpy as np

from src.core.rng import stream
from src.model.errors import CollinearityError, ConfigurationError, InvalidMechanismError, UnidentifiedError
from src.model.estimate import CausalEstimate
from src.model.linear import LinearScmParams, SecondMoments

# 分母相对容差: denominator < UNIDENTIFIED_TOL · σ_XX 视为不可识别
UNIDENTIFIED_TOL = 1e-8
SINGULAR_TOL = 1e-12


def population_covariance(params: LinearScmParams) -> SecondMoments:
    """总体协方差矩阵 V 的各项"""
    a_uw, a_ux, a_uy, a_xy = params.alpha_uw, params.alpha_ux, params.alpha_uy, params.alpha_xy
    s_u = params.var_nu

    s_ux = a_ux * s_u
    s_uy = a_uy * s_u + a_xy * s_ux
    s_xx = a_ux**2 * s_u + params.var_nx
    s_ww = a_uw**2 * s_u + params.var_e
    s_wx = a_uw * a_ux * s_u
    s_xy = a_ux * a_uy * s_u + a_xy * s_xx
    s_wy = a_uw * s_uy

    return SecondMoments(s_xx=s_xx, s_ww=s_ww, s_wx=s_wx, s_wy=s_wy, s_xy=s_xy, s_uu=s_u, s_ux=s_ux, s_uy=s_uy)


def ols_coeff_adjust_u(moments: SecondMoments) -> float:
    """Y 对 (X, U) 回归中 X 的系数；总体矩下等于 α_XY"""
    if not moments.has_confounder:
        raise ConfigurationError("调整 U 需要 σ_UU、σ_UX、σ_UY")
    denom = moments.s_xx * moments.s_uu - moments.s_ux**2
    if denom <= SINGULAR_TOL * max(moments.s_xx * moments.s_uu, SINGULAR_TOL):
        raise CollinearityError(f"X 与 U 共线，分母 {denom:.3e}")
    return (moments.s_xy * moments.s_uu - moments.s_uy * moments.s_ux) / denom


def ols_coeff_adjust_w(moments: SecondMoments) -> float:
    """Y 对 (X, W) 回归中 X 的系数（以代理代替混杂，带偏差）"""
    denom = moments.s_xx * moments.s_ww - moments.s_wx**2
    if denom <= SINGULAR_TOL * max(moments.s_xx * moments.s_ww, SINGULAR_TOL):
        raise CollinearityError(f"X 与 W 共线，分母 {denom:.3e}")
    return (moments.s_xy * moments.s_ww - moments.s_wy * moments.s_wx) / denom


def bias_term(params: LinearScmParams) -> float:
    """α_UX α_UY / (α²_UX + α²_UW σ²_NX/σ²_E + σ²_NX/σ²_NU)"""
    denom = (
        params.alpha_ux**2
        + params.alpha_uw**2 * params.var_nx / params.var_e
        + params.var_nx / params.var_nu
    )
    return params.alpha_ux * params.alpha_uy / denom


def corrected_estimator(moments: SecondMoments, var_e: float) -> float:
    """
    已知测量误差方差时的校正估计
        (σ_XY − σ_WY σ_WX / (σ_WW − σ²_E)) / (σ_XX − σ²_WX / (σ_WW − σ²_E))
    """
    if var_e < 0:
        raise ConfigurationError(f"σ²_E 不能为负: {var_e}")
    signal = moments.s_ww - var_e
    if signal <= 0:
        raise InvalidMechanismError(f"σ_WW = {moments.s_ww:.4g} ≤ σ²_E = {var_e:.4g}，代理方差小于其噪声方差")
    denom = moments.s_xx - moments.s_wx**2 / signal
    if denom < UNIDENTIFIED_TOL * moments.s_xx:
        raise UnidentifiedError(f"校正分母 {denom:.3e} 在容差下不可识别")
    return (moments.s_xy - moments.s_wy * moments.s_wx / signal) / denom


def empirical_moments(w, x, y, u=None) -> SecondMoments:
    """无偏 (n−1) 样本协方差"""
    w, x, y = (np.asarray(a, dtype=float).reshape(-1) for a in (w, x, y))
    cols = [w, x, y] if u is None else [w, x, y, np.asarray(u, dtype=float).reshape(-1)]
    if w.size < 2:
        raise ConfigurationError("经验矩至少需要 2 个样本")
    cov = np.cov(np.vstack(cols), ddof=1)
    moments = dict(s_ww=cov[0, 0], s_wx=cov[0, 1], s_wy=cov[0, 2], s_xx=cov[1, 1], s_xy=cov[1, 2])
    if u is not None:
        moments.update(s_uu=cov[3, 3], s_ux=cov[1, 3], s_uy=cov[2, 3])
    return SecondMoments(**{k: float(v) for k, v in moments.items()})


def simulate_linear(params: LinearScmParams, n: int, seed: int):
    """抽取 n 组 (U, W, X, Y)，各噪声项独立随机流"""
    if n < 2:
        raise ConfigurationError(f"蒙特卡洛样本量必须 ≥ 2: {n}")
    u = np.sqrt(params.var_nu) * stream(seed, "linear/N_U").standard_normal(n)
    e = np.sqrt(params.var_e) * stream(seed, "linear/E").standard_normal(n)
    n_x = np.sqrt(params.var_nx) * stream(seed, "linear/N_X").standard_normal(n)
    n_y = np.sqrt(params.var_ny) * stream(seed, "linear/N_Y").standard_normal(n)
    w = params.alpha_uw * u + e
    x = params.alpha_ux * u + n_x
    y = params.alpha_uy * u + params.alpha_xy * x + n_y
    return u, w, x, y


def linear_causal_estimate(
    moments: SecondMoments,
    mean_x: float,
    mean_y: float,
    var_e: float,
    x_low: float,
    x_high: float,
    provenance: Optional[dict] = None,
) -> CausalEstimate:
    """θ̂(x) = μ_Y + α̂ (x − μ_X)，α̂ 取校正估计"""
    slope = corrected_estimator(moments, var_e)

    def fn(x: np.ndarray) -> np.ndarray:
        return mean_y + slope * (x[:, 0] - mean_x)

    return CausalEstimate(
        fn=fn,
        treatment_kind="continuous",
        x_low=np.array([x_low]),
        x_high=np.array([x_high]),
        provenance=dict(provenance or {}),
        extras={"slope": slope},
    )

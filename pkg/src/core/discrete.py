"""
离散混杂的矩阵调整（效应还原）与满列秩检验
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import linalg

from src.model.errors import (
    ConfigurationError,
    InconsistencyError,
    NonInvertibleMechanismError,
    UnsupportedInterventionError,
)
from src.model.mechanism import DiscreteJoint, DiscreteMechanism

logger = logging.getLogger(__name__)

EPS_CLIP = 1e-8
RANK_TOL = 1e-10


@dataclass
class RankCheck:
    """满列秩检验结果；不满秩时 null_vector 满足 ‖Fδ‖ ≈ 0"""

    complete: bool
    singular_values: List[float]
    reason: str = ""
    null_vector: Optional[np.ndarray] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": "complete" if self.complete else "not_complete",
            "reason": self.reason,
            "singular_values": self.singular_values,
            "null_vector": None if self.null_vector is None else self.null_vector.tolist(),
        }


def check_full_column_rank(mech: DiscreteMechanism, tol: float = RANK_TOL) -> RankCheck:
    """最小奇异值 > tol · 最大奇异值 即满列秩"""
    F = mech.matrix
    r, k = F.shape
    _, s, vt = linalg.svd(F, full_matrices=True)
    sv = s.tolist()

    if r < k:
        # 零空间至少 k - r 维，取 V 的最后一行
        return RankCheck(False, sv, "insufficient proxy support", vt[-1])

    if s[-1] > tol * s[0]:
        return RankCheck(True, sv)

    null = vt[-1]
    return RankCheck(False, sv, "rank deficient", null / np.max(np.abs(null)))


def forward_mechanism(joint_u: DiscreteJoint, mech: DiscreteMechanism) -> DiscreteJoint:
    """正向组合 p(w,x,y) = Σ_u F[w,u] p(u,x,y)"""
    if joint_u.table.shape[0] != mech.matrix.shape[1]:
        raise ConfigurationError(
            f"联合表的混杂取值数 {joint_u.table.shape[0]} 与误差矩阵列数 {mech.matrix.shape[1]} 不符"
        )
    table = np.einsum("wu,uxy->wxy", mech.matrix, joint_u.table)
    return DiscreteJoint(table, list(mech.w_labels), joint_u.x_labels, joint_u.y_labels, first_axis="w")


def matrix_adjust(joint: DiscreteJoint, mech: DiscreteMechanism, eps_clip: float = EPS_CLIP) -> DiscreteJoint:
    """
    对每个 (x, y) 切片求解 F p_U = p_W，恢复 p(U, X, Y)
    r = k 用精确求逆；r > k 用最小二乘并在 metadata 中标记
    [-eps_clip, 0) 的负值裁剪为 0 后按切片重归一化，更负则报不相容
    """
    F = _aligned_matrix(joint, mech)
    r, k = F.shape
    rank = check_full_column_rank(mech)
    if not rank.complete:
        raise NonInvertibleMechanismError(f"误差矩阵在容差下不可逆: {rank.reason}")

    rhs = joint.table.reshape(r, -1)
    if r == k:
        recovered = linalg.solve(F, rhs)
        solver = "inverse"
    else:
        recovered, *_ = linalg.lstsq(F, rhs)
        solver = "least_squares"

    worst = float(recovered.min())
    if worst < -eps_clip:
        raise InconsistencyError(f"恢复的概率质量 {worst:.3e} < -{eps_clip}，联合分布与误差机制不相容")

    clipped = int(np.sum(recovered < 0))
    slice_mass = rhs.sum(axis=0)
    recovered = np.clip(recovered, 0.0, None)
    recovered_mass = recovered.sum(axis=0)
    nonzero = recovered_mass > 0
    recovered[:, nonzero] *= slice_mass[nonzero] / recovered_mass[nonzero]
    recovered /= recovered.sum()

    table = recovered.reshape(k, *joint.table.shape[1:])
    if clipped:
        logger.info("矩阵调整裁剪了 %d 个微小负值", clipped)
    return DiscreteJoint(
        table,
        list(mech.u_labels),
        joint.x_labels,
        joint.y_labels,
        first_axis="u",
        metadata={"solver": solver, "eps_clip": eps_clip, "clipped_cells": clipped, "min_raw_mass": worst},
    )


def causal_function_discrete(joint_u: DiscreteJoint, x: Any) -> float:
    """θ(x) = Σ_y y Σ_u p(y | u, x) p(u)"""
    j = joint_u.x_index(x)
    p_u = joint_u.table.sum(axis=(1, 2))
    p_ux = joint_u.table[:, j, :].sum(axis=1)
    relevant = p_u > 0
    if np.any(p_ux[relevant] <= 0):
        raise UnsupportedInterventionError(f"正性条件不满足: 存在 u 使 p(U=u, X={x}) = 0")

    y_values = np.asarray(joint_u.y_labels, dtype=float)
    cond_mean = np.zeros_like(p_u)
    cond_mean[relevant] = (joint_u.table[relevant, j, :] @ y_values) / p_ux[relevant]
    return float(np.sum(cond_mean * p_u))


def ace_binary_discrete(joint_u: DiscreteJoint) -> float:
    return causal_function_discrete(joint_u, 1) - causal_function_discrete(joint_u, 0)


def empirical_joint(w: np.ndarray, x: np.ndarray, y: np.ndarray) -> DiscreteJoint:
    """由离散观测列统计经验联合表 p(W, X, Y)"""
    w, x, y = (np.asarray(a, dtype=float).reshape(-1) for a in (w, x, y))
    w_levels, w_idx = np.unique(w, return_inverse=True)
    x_levels, x_idx = np.unique(x, return_inverse=True)
    y_levels, y_idx = np.unique(y, return_inverse=True)
    table = np.zeros((w_levels.size, x_levels.size, y_levels.size))
    np.add.at(table, (w_idx, x_idx, y_idx), 1.0)
    table /= table.sum()
    return DiscreteJoint(table, w_levels.tolist(), x_levels.tolist(), y_levels.tolist(), first_axis="w")


def _aligned_matrix(joint: DiscreteJoint, mech: DiscreteMechanism) -> np.ndarray:
    """按代理标签对齐误差矩阵的行；标签对不上时报错"""
    F = mech.matrix
    if F.shape[0] != joint.table.shape[0]:
        raise ConfigurationError(
            f"误差矩阵行数 {F.shape[0]} 与联合表代理取值数 {joint.table.shape[0]} 不符"
        )
    lookup = {_label_key(label): i for i, label in enumerate(mech.w_labels)}
    order = [lookup.get(_label_key(label)) for label in joint.first_labels]
    if None in order or len(set(order)) != len(order):
        raise ConfigurationError(
            f"联合表代理取值 {list(joint.first_labels)} 与误差矩阵标签 {list(mech.w_labels)} 对不上"
        )
    return F[order]


def _label_key(label: Any):
    try:
        return float(label)
    except (TypeError, ValueError):
        return str(label)

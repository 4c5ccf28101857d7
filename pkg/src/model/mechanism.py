from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from src.model.errors import ConfigurationError, DataError

PROB_TOL = 1e-10


@dataclass
class DiscreteMechanism:
    """
    离散误差机制矩阵 F (r×k)
    F[i][j] = p(W = w_i | U = u_j)
    full_support=True 表示 r 覆盖了代理变量的全部取值，此时每列和为 1
    """

    matrix: np.ndarray
    w_labels: List[Any] = field(default_factory=list)
    u_labels: List[Any] = field(default_factory=list)
    full_support: bool = True

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        r, k = self.matrix.shape
        if r < 1 or k < 1:
            raise ConfigurationError(f"误差矩阵形状非法: {self.matrix.shape}")
        if not self.w_labels:
            self.w_labels = list(range(r))
        if not self.u_labels:
            self.u_labels = list(range(k))
        if len(self.w_labels) != r or len(self.u_labels) != k:
            raise ConfigurationError(
                f"标签数量与矩阵形状不符: w_labels={len(self.w_labels)}, u_labels={len(self.u_labels)}, shape={self.matrix.shape}"
            )
        if np.any(self.matrix < -PROB_TOL) or np.any(self.matrix > 1 + PROB_TOL):
            raise ConfigurationError("误差矩阵元素必须在 [0, 1] 内")
        if self.full_support:
            col_sums = self.matrix.sum(axis=0)
            if np.any(np.abs(col_sums - 1.0) > PROB_TOL):
                raise ConfigurationError(f"误差矩阵每列和必须为 1，实际: {col_sums}")

    @property
    def shape(self):
        return self.matrix.shape

    @classmethod
    def create(cls, data: Dict[str, Any]) -> "DiscreteMechanism":
        if "matrix" not in data:
            raise ConfigurationError("误差机制缺少 'matrix' 字段")
        return cls(
            matrix=np.asarray(data["matrix"], dtype=float),
            w_labels=list(data.get("w_labels", [])),
            u_labels=list(data.get("u_labels", [])),
            full_support=bool(data.get("full_support", True)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "u_labels": list(self.u_labels),
            "w_labels": list(self.w_labels),
            "matrix": self.matrix.tolist(),
            "full_support": self.full_support,
        }


@dataclass
class DiscreteJoint:
    """
    有限支撑上的联合概率表 p[a][x][y]
    第一个轴是代理 W 或 (调整后的) 混杂 U，由 first_axis 标明
    metadata 记录求解方式、裁剪量等
    """

    table: np.ndarray
    first_labels: List[Any]
    x_labels: List[Any]
    y_labels: List[Any]
    first_axis: str = "w"
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=float)
        if self.table.ndim != 3:
            raise ConfigurationError(f"联合概率表必须是三维，实际 {self.table.ndim} 维")
        expected = (len(self.first_labels), len(self.x_labels), len(self.y_labels))
        if self.table.shape != expected:
            raise ConfigurationError(f"联合概率表形状 {self.table.shape} 与标签 {expected} 不符")
        if np.any(self.table < 0):
            raise DataError("联合概率表存在负值")
        total = self.table.sum()
        if abs(total - 1.0) > PROB_TOL:
            raise DataError(f"联合概率表总和应为 1，实际 {total}")

    @property
    def sizes(self):
        return self.table.shape

    def x_index(self, level: Any) -> int:
        for i, label in enumerate(self.x_labels):
            if label == level or (_is_number(label) and _is_number(level) and float(label) == float(level)):
                return i
        raise ConfigurationError(f"处理变量取值 {level} 不在支撑 {self.x_labels} 中")

    def to_records(self) -> List[Dict[str, Any]]:
        """展开为 (a, x, y, prob) 记录，用于 CSV 输出"""
        records = []
        for i, a in enumerate(self.first_labels):
            for j, x in enumerate(self.x_labels):
                for k, y in enumerate(self.y_labels):
                    records.append({self.first_axis: a, "x": x, "y": y, "prob": float(self.table[i, j, k])})
        return records


def _is_number(value: Any) -> bool:
    try:
        float(value)
        return True
    except (TypeError, ValueError):
        return False

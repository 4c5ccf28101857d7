from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from src.model.errors import ConfigurationError


@dataclass
class ColumnScale:
    """单列标准化参数"""

    mean: float
    sd: float

    def to_dict(self) -> Dict[str, float]:
        return {"mean": self.mean, "sd": self.sd}


@dataclass
class Standardization:
    """
    每列的 (mean, sd) 记录
    x 中为 None 的列是二值处理变量，保持原样
    """

    w: List[ColumnScale]
    x: List[Optional[ColumnScale]]
    y: ColumnScale
    u: Optional[List[ColumnScale]] = None

    @classmethod
    def create(cls, data: Dict[str, Any]) -> "Standardization":
        def scale(item):
            return None if item is None else ColumnScale(float(item["mean"]), float(item["sd"]))

        u = data.get("u")
        return cls(
            w=[scale(c) for c in data["w"]],
            x=[scale(c) for c in data["x"]],
            y=scale(data["y"]),
            u=None if u is None else [scale(c) for c in u],
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "w": [c.to_dict() for c in self.w],
            "x": [None if c is None else c.to_dict() for c in self.x],
            "y": self.y.to_dict(),
            "u": None if self.u is None else [c.to_dict() for c in self.u],
        }

    def w_sd(self) -> np.ndarray:
        return np.array([c.sd for c in self.w])

    def transform_x(self, x: np.ndarray) -> np.ndarray:
        """原始尺度 x → 标准化尺度"""
        x = np.array(x, dtype=float, copy=True)
        for j, c in enumerate(self.x):
            if c is not None:
                x[:, j] = (x[:, j] - c.mean) / c.sd
        return x

    def inverse_y(self, y_std: np.ndarray) -> np.ndarray:
        return self.y.sd * np.asarray(y_std) + self.y.mean


@dataclass
class Dataset:
    """
    n 行独立同分布观测 (W, X, Y)
    u_hidden 仅供 oracle (Adj.-U、检验) 使用
    """

    w: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u_hidden: Optional[np.ndarray] = None
    standardization: Optional[Standardization] = None
    seed: Optional[int] = None
    treatment_kind: str = "continuous"
    source: str = ""
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.w = _as_matrix(self.w, "w")
        self.x = _as_matrix(self.x, "x")
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.u_hidden is not None:
            self.u_hidden = _as_matrix(self.u_hidden, "u_hidden")
        n = self.y.shape[0]
        rows = {"w": self.w.shape[0], "x": self.x.shape[0], "y": n}
        if self.u_hidden is not None:
            rows["u_hidden"] = self.u_hidden.shape[0]
        if len(set(rows.values())) != 1:
            raise ConfigurationError(f"各列行数不一致: {rows}")
        if self.treatment_kind not in ("continuous", "binary"):
            raise ConfigurationError(f"未知 treatment_kind: {self.treatment_kind}")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.w.shape[1]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def k(self) -> int:
        return 0 if self.u_hidden is None else self.u_hidden.shape[1]

    @property
    def is_standardized(self) -> bool:
        return self.standardization is not None

    def column_names(self) -> List[str]:
        names = [f"w_{i + 1}" for i in range(self.d)] + [f"x_{i + 1}" for i in range(self.p)] + ["y"]
        if self.u_hidden is not None:
            names += [f"u_{i + 1}" for i in range(self.k)]
        return names

    def to_matrix(self) -> np.ndarray:
        blocks = [self.w, self.x, self.y[:, None]]
        if self.u_hidden is not None:
            blocks.append(self.u_hidden)
        return np.hstack(blocks)

    def subset(self, rows: np.ndarray) -> "Dataset":
        return Dataset(
            w=self.w[rows],
            x=self.x[rows],
            y=self.y[rows],
            u_hidden=None if self.u_hidden is None else self.u_hidden[rows],
            standardization=self.standardization,
            seed=self.seed,
            treatment_kind=self.treatment_kind,
            source=self.source,
            metadata=dict(self.metadata),
        )

    def x_hull(self):
        """处理变量的观测范围 (min, max)，逐列"""
        return self.x.min(axis=0), self.x.max(axis=0)


def _as_matrix(value: Any, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ConfigurationError(f"{name} 必须是一维或二维数组，实际 {arr.ndim} 维")
    return arr

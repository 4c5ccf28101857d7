from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import numpy as np

from src.model.dataset import Standardization


@dataclass(frozen=True)
class AceResult:
    """平均因果效应，extrapolated 表示评估点超出了数据范围"""

    value: float
    extrapolated: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {"value": self.value, "extrapolated": self.extrapolated}


@dataclass(frozen=True)
class CausalEstimate:
    """
    可求值的因果函数估计 θ̂: x → E[Y | do(X := x)]
    fn 作用在 scale 所示的尺度上 ("standardized" 或 "original")
    构造后不可变，可在线程间共享
    """

    fn: Callable[[np.ndarray], np.ndarray]
    treatment_kind: str
    x_low: np.ndarray
    x_high: np.ndarray
    scale: str = "original"
    standardization: Optional[Standardization] = None
    provenance: Dict[str, Any] = field(default_factory=dict)
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def p(self) -> int:
        return int(np.asarray(self.x_low).size)

    def as_grid(self, x: Any) -> np.ndarray:
        """标量 / 一维 / 二维输入统一成 (G, p)"""
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr[:, None] if self.p == 1 else arr[None, :]
        return arr

    def evaluate(self, x: Any) -> np.ndarray:
        return np.asarray(self.fn(self.as_grid(x)), dtype=float).reshape(-1)

    def __call__(self, x: Any) -> np.ndarray:
        return self.evaluate(x)

    def extrapolated(self, x: Any) -> np.ndarray:
        grid = self.as_grid(x)
        outside = (grid < np.asarray(self.x_low) - 1e-12) | (grid > np.asarray(self.x_high) + 1e-12)
        return outside.any(axis=1)

    def to_dict(self, grid: Optional[Any] = None) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "treatment_kind": self.treatment_kind,
            "scale": self.scale,
            "x_hull": [np.asarray(self.x_low).tolist(), np.asarray(self.x_high).tolist()],
            "provenance": dict(self.provenance),
            "extras": dict(self.extras),
        }
        if self.standardization is not None:
            out["standardization"] = self.standardization.to_dict()
        if grid is not None:
            points = self.as_grid(grid)
            out["grid"] = {
                "x": points.tolist(),
                "theta": self.evaluate(points).tolist(),
                "extrapolated": self.extrapolated(points).tolist(),
            }
        return out


def grid_points(x_low: np.ndarray, x_high: np.ndarray, count: int) -> np.ndarray:
    """在观测范围内等距取点（仅一维处理变量）"""
    return np.linspace(float(np.asarray(x_low).reshape(-1)[0]), float(np.asarray(x_high).reshape(-1)[0]), count)

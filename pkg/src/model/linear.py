from dataclasses import dataclass, fields
from typing import Any, Dict, Optional

from src.model.errors import ConfigurationError


@dataclass
class LinearScmParams:
    """
    一元线性高斯 PC-SCM
        U = N_U, W = α_UW U + E, X = α_UX U + N_X, Y = α_UY U + α_XY X + N_Y
    所有噪声零均值、相互独立
    """

    alpha_uw: float = 1.0
    alpha_ux: float = 1.0
    alpha_uy: float = 1.0
    alpha_xy: float = 1.0
    var_nu: float = 1.0
    var_e: float = 1.0
    var_nx: float = 1.0
    var_ny: float = 1.0

    def __post_init__(self):
        for name in ("var_nu", "var_e", "var_nx", "var_ny"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"方差 {name} 必须 > 0: {getattr(self, name)}")

    @classmethod
    def create(cls, data: Dict[str, Any]) -> "LinearScmParams":
        """只提取已定义字段，忽略未知参数"""
        names = {f.name for f in fields(cls)}
        return cls(**{k: float(v) for k, v in data.items() if k in names})

    def to_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class SecondMoments:
    """二阶矩；含 U 的项只有 oracle 场景才有"""

    s_xx: float
    s_ww: float
    s_wx: float
    s_wy: float
    s_xy: float
    s_uu: Optional[float] = None
    s_ux: Optional[float] = None
    s_uy: Optional[float] = None

    def __post_init__(self):
        tol = 1e-12 * max(1.0, abs(self.s_xx), abs(self.s_ww))
        if self.s_xx < 0 or self.s_ww < 0 or self.s_xx * self.s_ww - self.s_wx**2 < -tol:
            raise ConfigurationError("(W, X) 二阶矩矩阵不是半正定的")
        if self.s_uu is not None and self.s_ux is not None:
            if self.s_uu < 0 or self.s_xx * self.s_uu - self.s_ux**2 < -tol:
                raise ConfigurationError("(U, X) 二阶矩矩阵不是半正定的")

    @property
    def has_confounder(self) -> bool:
        return self.s_uu is not None and self.s_ux is not None and self.s_uy is not None

    def to_dict(self) -> Dict[str, Optional[float]]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

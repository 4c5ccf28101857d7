"""
统一异常体系
每个异常类都带 exit_code，CLI 直接映射为进程退出码：
    2 = 配置错误, 3 = 数据错误, 4 = 数值失败
"""

from typing import Any, Dict, Optional


class SpiceError(Exception):
    """所有业务异常的基类"""

    exit_code = 1


# ==================== 配置错误 (exit 2) ====================


class ConfigurationError(SpiceError, ValueError):
    """参数非法、前置条件缺失、规格不匹配"""

    exit_code = 2


class MergeError(ConfigurationError):
    """报告合并时配置不兼容"""


# ==================== 数据错误 (exit 3) ====================


class DataError(SpiceError):
    """输入数据本身有问题"""

    exit_code = 3


class DegenerateDataError(DataError):
    """零方差列等退化数据"""


class InsufficientDataError(DataError):
    """样本量不足"""


class InconsistencyError(DataError):
    """联合分布与误差机制不相容"""


class UnsupportedInterventionError(DataError):
    """正性条件不满足，干预无法识别"""


class IngestionError(DataError):
    """CSV 读取/校验失败，带行列坐标"""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        location = ""
        if row is not None or column is not None:
            location = f" (行={row}, 列={column})"
        super().__init__(f"{message}{location}")
        self.row = row
        self.column = column


# ==================== 数值失败 (exit 4) ====================


class NumericError(SpiceError):
    """数值计算失败"""

    exit_code = 4


class TrainingDivergedError(NumericError):
    """训练中出现 NaN/Inf"""

    def __init__(self, message: str, epoch: int, snapshot: Optional[Dict[str, Any]] = None):
        super().__init__(f"{message} (epoch={epoch})")
        self.epoch = epoch
        self.snapshot = snapshot or {}


class NonInvertibleMechanismError(NumericError):
    """误差矩阵在容差下不可逆"""


class CollinearityError(NumericError):
    """回归分母奇异"""


class InvalidMechanismError(NumericError):
    """误差机制与观测矩不相容 (如 σ_WW ≤ σ²_E)"""


class UnidentifiedError(NumericError):
    """在数值容差下不可识别"""


class CoverageError(NumericError):
    """积分窗口覆盖的概率质量不足"""

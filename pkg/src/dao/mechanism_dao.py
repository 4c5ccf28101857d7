import json
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd

from src.model.density import DensitySpec
from src.model.errors import ConfigurationError, IngestionError
from src.model.mechanism import DiscreteJoint
from src.model.scm import ErrorMechanism

JOINT_COLUMNS = ("w", "x", "y", "prob")


class MechanismDAO:
    """
    误差机制 / 联合概率表 / 噪声密度 的文件读写
    机制与密度为 JSON，联合概率表为长格式 CSV (w, x, y, prob)
    """

    @staticmethod
    def load(path: Union[str, Path]) -> ErrorMechanism:
        raw_data = MechanismDAO._read_json(path)
        try:
            return ErrorMechanism.create(raw_data)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"误差机制解析失败: {path}\n错误: {e}") from e

    @staticmethod
    def save(mechanism: ErrorMechanism, path: Union[str, Path]) -> Path:
        return MechanismDAO._write_json(mechanism.to_dict(), path)

    @staticmethod
    def load_density(path: Union[str, Path]) -> DensitySpec:
        raw_data = MechanismDAO._read_json(path)
        # 允许直接给出加性机制文件，取其中的噪声
        if "noise" in raw_data and "family" not in raw_data:
            raw_data = raw_data["noise"]
        return DensitySpec.create(_scalarize(raw_data))

    @staticmethod
    def load_calibration(path: Union[str, Path]) -> ErrorMechanism:
        """
        校准读数 CSV: 混杂固定为 0 时的代理读数，列名 w 或 w_1..w_d
        """
        frame = MechanismDAO._read_csv(path)
        columns = [c for c in frame.columns if c == "w" or c.startswith("w_")]
        if not columns:
            raise IngestionError(f"校准文件缺少 w 列: {path}", column="w")
        values = frame[columns].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(values)
        if bad.any():
            row, col = (int(i) for i in np.argwhere(bad)[0])
            raise IngestionError("校准读数不是有限数值", row=row + 1, column=columns[col])
        return ErrorMechanism.from_calibration(values)

    @staticmethod
    def load_joint(path: Union[str, Path]) -> DiscreteJoint:
        """长格式 (w, x, y, prob) → p[w][x][y]；缺失组合视为 0"""
        frame = MechanismDAO._read_csv(path)
        for col in JOINT_COLUMNS:
            if col not in frame.columns:
                raise IngestionError(f"联合概率表缺少列 '{col}'", column=col)
        prob = pd.to_numeric(frame["prob"], errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(prob) | (prob < 0)
        if bad.any():
            row = int(np.argmax(bad))
            raise IngestionError("概率必须是非负有限数值", row=row + 1, column="prob")

        labels = {}
        index = {}
        for col in ("w", "x", "y"):
            levels = sorted(frame[col].unique().tolist(), key=_sort_key)
            labels[col] = levels
            index[col] = {v: i for i, v in enumerate(levels)}

        table = np.zeros((len(labels["w"]), len(labels["x"]), len(labels["y"])))
        for row, (w, x, y) in enumerate(zip(frame["w"], frame["x"], frame["y"])):
            table[index["w"][w], index["x"][x], index["y"][y]] += prob[row]
        return DiscreteJoint(table, labels["w"], labels["x"], labels["y"], first_axis="w")

    @staticmethod
    def save_joint(joint: DiscreteJoint, path: Union[str, Path]) -> Path:
        csv_path = Path(path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(joint.to_records()).to_csv(csv_path, index=False, float_format="%.17g", lineterminator="\n")
        return csv_path

    # ========== 内部 ==========

    @staticmethod
    def _read_json(path: Union[str, Path]) -> Dict[str, Any]:
        json_path = Path(path)
        if not json_path.exists():
            raise ConfigurationError(f"文件不存在: {json_path}")
        try:
            with json_path.open("r", encoding="utf-8") as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"JSON解析失败: {json_path}\n错误: {e}") from e

    @staticmethod
    def _write_json(data: Dict[str, Any], path: Union[str, Path]) -> Path:
        json_path = Path(path)
        json_path.parent.mkdir(parents=True, exist_ok=True)
        with json_path.open("w", encoding="utf-8") as f:
            json.dump(data, f, ensure_ascii=False, indent=2)
        return json_path

    @staticmethod
    def _read_csv(path: Union[str, Path]) -> pd.DataFrame:
        csv_path = Path(path)
        if not csv_path.exists():
            raise IngestionError(f"文件不存在: {csv_path}")
        try:
            return pd.read_csv(csv_path)
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise IngestionError(f"CSV 解析失败: {csv_path}\n错误: {e}") from e


def _sort_key(value: Any):
    try:
        return (0, float(value), "")
    except (TypeError, ValueError):
        return (1, 0.0, str(value))


def _scalarize(data: Dict[str, Any]) -> Dict[str, Any]:
    """NoiseDistribution.to_dict 的单元素列表参数还原为标量"""
    out = {}
    for key, value in data.items():
        if isinstance(value, list) and len(value) == 1 and key not in ("weights", "locs", "scales"):
            out[key] = value[0]
        else:
            out[key] = value
    return out

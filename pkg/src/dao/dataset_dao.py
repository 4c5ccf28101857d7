import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from src.model.dataset import Dataset, Standardization
from src.model.errors import IngestionError

FLOAT_FORMAT = "%.17g"
MANIFEST_SUFFIX = ".manifest.json"


class DatasetDAO:
    """
    数据集数据访问对象
    职责: CSV 读写 + 同名 manifest 旁注文件
    列约定: w_1..w_d, x_1..x_p, y, 可选 u_1..u_k
    """

    @staticmethod
    def manifest_path(csv_path: Union[str, Path]) -> Path:
        csv_path = Path(csv_path)
        return csv_path.with_name(csv_path.stem + MANIFEST_SUFFIX)

    @staticmethod
    def save(data: Dataset, path: Union[str, Path], extra: Optional[Dict[str, Any]] = None) -> Path:
        """
        写出 CSV（17 位有效数字，可精确回读）与 manifest；相同输入产生相同字节
        已标准化的数据把每列 (mean, sd) 写入 manifest，回读后可反标准化
        """
        csv_path = Path(path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(data.to_matrix(), columns=data.column_names())
        frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

        manifest = {
            "file": csv_path.name,
            "rows": data.n,
            "columns": data.column_names(),
            "schema": DatasetDAO.default_schema(data.column_names()),
            "dims": {"d": data.d, "p": data.p, "k": data.k},
            "treatment_kind": data.treatment_kind,
            "seed": data.seed,
            "source": data.source,
            "metadata": data.metadata,
            "standardization": None if data.standardization is None else data.standardization.to_dict(),
        }
        if extra:
            manifest.update(extra)
        with DatasetDAO.manifest_path(csv_path).open("w", encoding="utf-8") as f:
            json.dump(manifest, f, ensure_ascii=False, indent=2, sort_keys=True)
        return csv_path

    @staticmethod
    def load(path: Union[str, Path], schema: Optional[Dict[str, Any]] = None) -> Dataset:
        """
        读取并校验 CSV
        schema: {"w": [...], "x": [...], "y": "y", "u": [...], "treatment_kind": ...}
        缺省时依次尝试 manifest 中的 schema 与列名前缀
        异常: IngestionError（带行列坐标）
        """
        csv_path = Path(path)
        if not csv_path.exists():
            raise IngestionError(f"数据文件不存在: {csv_path}")
        try:
            frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False)
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise IngestionError(f"CSV 解析失败: {csv_path}\n错误: {e}") from e

        manifest = DatasetDAO.load_manifest(csv_path)
        schema = dict(schema or manifest.get("schema") or DatasetDAO.default_schema(list(frame.columns)))
        columns = DatasetDAO._schema_columns(schema)

        if not columns["w"] or not columns["x"]:
            raise IngestionError("schema 至少需要一列 w 和一列 x")
        declared = columns["w"] + columns["x"] + columns["y"] + columns["u"]
        for col in declared:
            if col not in frame.columns:
                raise IngestionError(f"缺少声明的列 '{col}'，文件列: {list(frame.columns)}", column=col)
        numeric = {col: DatasetDAO._numeric_column(frame[col], col) for col in declared}

        def block(names: List[str]) -> np.ndarray:
            return np.column_stack([numeric[c] for c in names])

        treatment_kind = schema.get("treatment_kind") or manifest.get("treatment_kind") or "continuous"
        scales = manifest.get("standardization")
        x = block(columns["x"])
        if treatment_kind == "binary" and not np.all(np.isin(x, (0.0, 1.0))):
            bad = int(np.argmax(~np.isin(x, (0.0, 1.0)).all(axis=1)))
            raise IngestionError("二值处理列只能取 0/1", row=bad + 1, column=columns["x"][0])

        return Dataset(
            w=block(columns["w"]),
            x=x,
            y=numeric[columns["y"][0]],
            u_hidden=block(columns["u"]) if columns["u"] else None,
            standardization=Standardization.create(scales) if scales else None,
            seed=manifest.get("seed"),
            treatment_kind=treatment_kind,
            source=manifest.get("source", csv_path.stem),
            metadata={"path": str(csv_path), **manifest.get("metadata", {})},
        )

    @staticmethod
    def load_manifest(csv_path: Union[str, Path]) -> Dict[str, Any]:
        manifest_path = DatasetDAO.manifest_path(csv_path)
        if not manifest_path.exists():
            return {}
        try:
            with manifest_path.open("r", encoding="utf-8") as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise IngestionError(f"manifest JSON 解析失败: {manifest_path}\n错误: {e}") from e

    @staticmethod
    def default_schema(columns: List[str]) -> Dict[str, Any]:
        """按列名前缀推断: w*/x*/u* 与 y"""

        def pick(prefix: str) -> List[str]:
            return [c for c in columns if c == prefix or c.startswith(prefix + "_")]

        return {"w": pick("w"), "x": pick("x"), "y": "y", "u": pick("u")}

    @staticmethod
    def _schema_columns(schema: Dict[str, Any]) -> Dict[str, List[str]]:
        def as_list(value: Any) -> List[str]:
            if value is None:
                return []
            return [value] if isinstance(value, str) else list(value)

        out = {key: as_list(schema.get(key)) for key in ("w", "x", "y", "u")}
        if len(out["y"]) != 1:
            raise IngestionError(f"schema 必须恰好声明一列 y，实际 {out['y']}")
        return out

    @staticmethod
    def _numeric_column(values: pd.Series, column: str) -> np.ndarray:
        """非数值、空值、NaN、Inf 都报出第一个出错的单元格（行号从 1 开始，不含表头）"""
        parsed = pd.to_numeric(values.str.strip(), errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(parsed)
        if bad.any():
            row = int(np.argmax(bad))
            raise IngestionError(f"单元格不是有限数值: {values.iloc[row]!r}", row=row + 1, column=column)
        return parsed

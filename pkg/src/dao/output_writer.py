import json
import math
from pathlib import Path
from typing import Any, Dict, List

import pandas as pd


class OutputWriter:
    """输出写入器：只负责写入报告文件和统计"""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        self.stats = {"total": 0, "json": 0, "csv": 0}

    def write_json(self, filename: str, data: Dict[str, Any]) -> Path:
        """NaN/Inf 写成 null，保证输出是合法 JSON"""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        output_path = self.output_dir / filename
        with output_path.open("w", encoding="utf-8") as f:
            json.dump(json_safe(data), f, indent=2, ensure_ascii=False, allow_nan=False)
        self._count("json")
        return output_path

    def write_csv(self, filename: str, rows: List[Dict[str, Any]]) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        output_path = self.output_dir / filename
        pd.DataFrame(rows).to_csv(output_path, index=False, float_format="%.17g", lineterminator="\n")
        self._count("csv")
        return output_path

    @staticmethod
    def read_json(path: Path) -> Dict[str, Any]:
        with Path(path).open("r", encoding="utf-8") as f:
            return json.load(f)

    def get_stats(self) -> Dict:
        """获取统计信息"""
        return self.stats.copy()

    def _count(self, kind: str) -> None:
        self.stats["total"] += 1
        self.stats[kind] += 1


def json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if hasattr(value, "tolist"):
        return json_safe(value.tolist())
    return value

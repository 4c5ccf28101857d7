from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np


@dataclass
class MethodSummary:
    """
    单个方法在全部重复上的结果
    per_seed 与重复一一对应，失败的格子为 None 并在 errors 里记录原因
    """

    method: str
    per_seed: List[Optional[float]] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    errors: List[Dict[str, Any]] = field(default_factory=list)
    extras: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def successful(self) -> List[float]:
        return [v for v in self.per_seed if v is not None]

    @property
    def median(self) -> Optional[float]:
        values = self.successful
        return float(np.median(values)) if values else None

    @property
    def sd(self) -> Optional[float]:
        """总体标准差 (ddof=0)，单次重复时为 0"""
        values = self.successful
        return float(np.std(values)) if values else None

    @classmethod
    def create(cls, data: Dict[str, Any]) -> "MethodSummary":
        return cls(
            method=data["method"],
            per_seed=list(data.get("per_seed", [])),
            seeds=[int(s) for s in data.get("seeds", [])],
            errors=list(data.get("errors", [])),
            extras=list(data.get("extras", [])),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "median": self.median,
            "sd": self.sd,
            "n_ok": len(self.successful),
            "per_seed": list(self.per_seed),
            "seeds": list(self.seeds),
            "errors": list(self.errors),
            "extras": list(self.extras),
        }


@dataclass
class BenchReport:
    """基准测试报告；JSON 是权威格式，CSV 是派生视图"""

    benchmark: str
    n_train: int
    n_test: int
    repetitions: int
    seed: int
    methods: Dict[str, MethodSummary] = field(default_factory=dict)
    config_hash: str = ""
    environment: Dict[str, Any] = field(default_factory=dict)
    wall_clock_seconds: float = 0.0

    @classmethod
    def create(cls, data: Dict[str, Any]) -> "BenchReport":
        return cls(
            benchmark=str(data["benchmark"]),
            n_train=int(data["n_train"]),
            n_test=int(data["n_test"]),
            repetitions=int(data["repetitions"]),
            seed=int(data.get("seed", 0)),
            methods={m["method"]: MethodSummary.create(m) for m in data.get("methods", [])},
            config_hash=data.get("config_hash", ""),
            environment=dict(data.get("environment", {})),
            wall_clock_seconds=float(data.get("wall_clock_seconds", 0.0)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "benchmark": self.benchmark,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "repetitions": self.repetitions,
            "seed": self.seed,
            "methods": [summary.to_dict() for summary in self.methods.values()],
            "config_hash": self.config_hash,
            "environment": dict(self.environment),
            "wall_clock_seconds": self.wall_clock_seconds,
        }

    def summary_rows(self) -> List[Dict[str, Any]]:
        return [
            {
                "benchmark": self.benchmark,
                "method": s.method,
                "median_mse": s.median,
                "sd_mse": s.sd,
                "n_ok": len(s.successful),
                "n_failed": len(s.errors),
            }
            for s in self.methods.values()
        ]

    def per_seed_rows(self) -> List[Dict[str, Any]]:
        """每个 (方法, 重复) 一行，供外部作图"""
        rows = []
        for s in self.methods.values():
            for rep, value in enumerate(s.per_seed):
                rows.append(
                    {
                        "benchmark": self.benchmark,
                        "n_train": self.n_train,
                        "method": s.method,
                        "repetition": rep,
                        "seed": s.seeds[rep] if rep < len(s.seeds) else None,
                        "mse": value,
                    }
                )
        return rows

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.model.errors import ConfigurationError

METHODS = (
    "spice_net",
    "spice_net_approx",
    "adj_u",
    "adj_w",
    "no_adj",
    "linear_gaussian_corrected",
    "discrete_matrix_adjust",
)
NEURAL_METHODS = METHODS[:5]


class OptimizerConfig(BaseModel):
    """Adam + 自适应学习率的公共参数"""

    model_config = ConfigDict(extra="ignore")

    epochs: int = Field(1, ge=1)
    minibatch_count: int = Field(1, ge=1)
    initial_lr: float = Field(1e-3, gt=0)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    # 自适应规则: 监控值连续 lr_patience 个 epoch 未改善 lr_tol 时 lr /= lr_factor
    lr_factor: float = Field(5.0, gt=1)
    lr_patience: int = Field(2, ge=1)
    lr_tol: float = Field(1e-6, ge=0)
    lr_floor: float = Field(1e-6, gt=0)
    # 监控值为最近 lr_window 个 epoch 平均损失的均值
    lr_window: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)


class TrainConfig(OptimizerConfig):
    """第一步生成网络的训练配置"""

    epochs: int = Field(4000, ge=1)
    minibatch_count: int = Field(10, ge=1)
    initial_lr: float = Field(1e-3, gt=0)
    lr_window: int = Field(100, ge=1)
    energy_power: float = 1.0
    samples_per_obs: int = Field(2, ge=2)

    @field_validator("energy_power")
    @classmethod
    def _power_is_one(cls, value: float) -> float:
        if value != 1.0:
            raise ValueError("能量损失的幂参数只支持 1")
        return value


class RegressionConfig(OptimizerConfig):
    """第二步回归调整网络: 单隐层 100 个 ReLU，全批量，平方损失"""

    hidden_width: int = Field(100, ge=1)
    epochs: int = Field(2000, ge=1)
    minibatch_count: int = Field(1, ge=1)
    initial_lr: float = Field(0.01, gt=0)


class EstimationConfig(BaseModel):
    """一次 estimate() 的全部参数"""

    model_config = ConfigDict(extra="ignore")

    generator: TrainConfig = Field(default_factory=TrainConfig)
    regression: RegressionConfig = Field(default_factory=RegressionConfig)
    seed: int = Field(0, ge=0)
    confounder_samples: int = Field(1, ge=1)
    ace_step: float = Field(0.01, gt=0)
    grid_size: int = Field(20, ge=2)
    head_init: Optional[Dict[str, Any]] = None
    noise_family: Optional[str] = None

    def seeded(self, seed: int) -> "EstimationConfig":
        """把同一个种子下发到两步训练"""
        return self.model_copy(
            update={
                "seed": seed,
                "generator": self.generator.model_copy(update={"seed": seed}),
                "regression": self.regression.model_copy(update={"seed": seed}),
            }
        )

    def config_hash(self) -> str:
        return _hash(self.model_dump(mode="json"))


class RunConfig(BaseModel):
    """基准测试/模拟的运行配置"""

    model_config = ConfigDict(extra="ignore")

    benchmark: Optional[str] = None
    data_path: Optional[str] = None
    mechanism_path: Optional[str] = None
    treatment_kind: str = "continuous"
    methods: List[str] = Field(default_factory=lambda: ["spice_net"])
    n_train: int = Field(2000, ge=1)
    n_test: int = Field(500, ge=1)
    repetitions: int = Field(20, ge=1)
    seed: int = Field(0, ge=0)
    overrides: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    output_dir: str = "./output"
    n_jobs: int = 1

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("methods 不能为空")
        unknown = [m for m in value if m not in METHODS]
        if unknown:
            raise ValueError(f"未知方法: {unknown}，可选: {list(METHODS)}")
        return list(dict.fromkeys(value))

    @model_validator(mode="after")
    def _one_source(self) -> "RunConfig":
        if (self.benchmark is None) == (self.data_path is None):
            raise ValueError("benchmark 与 data_path 必须且只能指定一个")
        return self

    @classmethod
    def from_dict(cls, raw_data: Dict[str, Any]) -> "RunConfig":
        return parse_config(cls, raw_data)

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    @property
    def output_dir_path(self) -> Path:
        """返回: Path对象（已创建）"""
        dir_path = Path(self.output_dir)
        dir_path.mkdir(parents=True, exist_ok=True)
        if not dir_path.is_dir():
            raise NotADirectoryError(f"输出目录路径不是有效目录: {self.output_dir}")
        return dir_path

    def estimation_config(self, method: str) -> EstimationConfig:
        """默认配置 ← overrides["*"] ← overrides[method]"""
        merged: Dict[str, Any] = {}
        for key in ("*", method):
            merged = _deep_merge(merged, self.overrides.get(key, {}))
        return parse_config(EstimationConfig, merged)

    def config_hash(self) -> str:
        """并行度与输出目录不影响结果，不计入哈希"""
        payload = {k: v for k, v in self.to_dict().items() if k not in ("n_jobs", "output_dir")}
        return _hash(payload)


def parse_config(model: type, data: Dict[str, Any]):
    """pydantic 校验失败统一转为 ConfigurationError"""
    try:
        return model.model_validate(data or {})
    except ValidationError as e:
        raise ConfigurationError(f"{model.__name__} 配置非法:\n{e}") from e


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _hash(payload: Dict[str, Any]) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

"""
EstimationService - 因果函数估计服务
职责：按方法名调度 core 引擎（标准化 → 第一步生成网络 → 第二步回归调整 → 反标准化）
"""

import logging
from typing import Any, Callable, Dict, Optional

import numpy as np

from src.core.adjustment import regression_adjust
from src.core.discrete import causal_function_discrete, empirical_joint, matrix_adjust
from src.core.generator import GeneratorNet, build_generator, sample_confounder_rows, train_generator
from src.core.linear_gaussian import empirical_moments, linear_causal_estimate
from src.core.noise_head import NoiseHead
from src.core.simulator import destandardize_estimate, standardize
from src.model.config import METHODS, EstimationConfig
from src.model.dataset import Dataset
from src.model.errors import ConfigurationError
from src.model.estimate import CausalEstimate
from src.model.mechanism import DiscreteJoint
from src.model.scm import ErrorMechanism

logger = logging.getLogger(__name__)

SPICE_METHODS = ("spice_net", "spice_net_approx")


class EstimationService:
    """因果函数估计服务"""

    def __init__(self):
        # 最近一次训练的生成网络（供持久化）
        self.last_generator: Optional[GeneratorNet] = None
        # 最近一次矩阵调整恢复的 p(U, X, Y)
        self.last_joint: Optional[DiscreteJoint] = None

        self.stats = {"runs": 0, "generators_trained": 0}

        self.on_progress: Optional[Callable[[str], None]] = None
        self.on_complete: Optional[Callable[[Dict[str, Any]], None]] = None
        self.on_error: Optional[Callable[[Exception], None]] = None

    def set_callbacks(
        self,
        on_progress: Optional[Callable[[str], None]] = None,
        on_complete: Optional[Callable[[Dict[str, Any]], None]] = None,
        on_error: Optional[Callable[[Exception], None]] = None,
    ):
        """设置回调函数"""
        self.on_progress = on_progress
        self.on_complete = on_complete
        self.on_error = on_error

    # ==================== 公共API ====================

    def estimate(
        self,
        method: str,
        data: Dataset,
        mechanism: Optional[ErrorMechanism] = None,
        cfg: Optional[EstimationConfig] = None,
        generator: Optional[GeneratorNet] = None,
    ) -> CausalEstimate:
        """
        spice_net / spice_net_approx: 训练生成网络 → 每个观测抽一个 ÃUᵢ → 回归调整
        给出 generator 时跳过第一步训练，直接用已保存的生成网络
        adj_u: 调整真实 U；adj_w: 调整代理 W；no_adj: 不调整
        linear_gaussian_corrected / discrete_matrix_adjust: 闭式估计
        返回原始尺度上的估计
        """
        if method not in METHODS:
            raise ConfigurationError(f"未知方法: {method}，可选: {list(METHODS)}")
        if generator is not None and method not in SPICE_METHODS:
            raise ConfigurationError(f"方法 {method} 不使用生成网络")
        cfg = cfg or EstimationConfig()
        cfg = cfg.seeded(cfg.seed)
        provenance = {"method": method, "config_hash": cfg.config_hash(), "seed": cfg.seed}
        self.stats["runs"] += 1
        self._log(f"🚀 {method}: n={data.n}, seed={cfg.seed}")

        try:
            if method == "linear_gaussian_corrected":
                result = self._linear_gaussian(data, mechanism, provenance)
            elif method == "discrete_matrix_adjust":
                result = self._discrete(data, mechanism, provenance)
            else:
                result = self._neural(method, data, mechanism, cfg, provenance, generator)
        except Exception as e:
            self._log(f"❌ {method} 失败: {e}", is_error=True)
            if self.on_error:
                self.on_error(e)
            raise

        self._log(f"✅ {method} 完成")
        if self.on_complete:
            self.on_complete({"method": method, **provenance})
        return result

    def fit_generator(
        self,
        method: str,
        data: Dataset,
        mechanism: Optional[ErrorMechanism],
        cfg: EstimationConfig,
    ) -> GeneratorNet:
        """第一步: 在标准化数据上训练生成网络"""
        head = self._noise_head(method, data, mechanism, cfg)
        gen = build_generator(data.d, head, cfg.seed, p=data.p)
        gen = train_generator(gen, data, cfg.generator)
        self.stats["generators_trained"] += 1
        self.last_generator = gen
        self._log(f"   生成网络最终能量损失 {gen.history['loss'][-1]:.5f}")
        return gen

    def estimate_from_joint(self, joint: DiscreteJoint, mechanism: Optional[ErrorMechanism]) -> CausalEstimate:
        """
        已汇总的 p(W, X, Y) 表直接做矩阵调整（不需要逐行数据）
        处理取值只有 0/1 时按二值处理变量对待
        """
        if joint.first_axis != "w":
            raise ConfigurationError("矩阵调整的输入表第一个轴必须是代理 W")
        try:
            levels = np.asarray(joint.x_labels, dtype=float)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"处理变量取值必须是数值: {joint.x_labels}") from e
        treatment_kind = "binary" if set(levels.tolist()) <= {0.0, 1.0} else "continuous"
        provenance = {"method": "discrete_matrix_adjust", "source": "joint_table"}
        self.stats["runs"] += 1
        self._log(f"🚀 discrete_matrix_adjust: 联合表 {joint.sizes}")
        try:
            result = self._discrete_estimate(
                joint, mechanism, treatment_kind, levels.min(keepdims=True), levels.max(keepdims=True), provenance
            )
        except Exception as e:
            self._log(f"❌ discrete_matrix_adjust 失败: {e}", is_error=True)
            if self.on_error:
                self.on_error(e)
            raise
        self._log("✅ discrete_matrix_adjust 完成")
        if self.on_complete:
            self.on_complete(dict(provenance))
        return result

    # ==================== 内部 ====================

    def _neural(
        self,
        method: str,
        data: Dataset,
        mechanism: Optional[ErrorMechanism],
        cfg: EstimationConfig,
        provenance: Dict[str, Any],
        generator: Optional[GeneratorNet] = None,
    ) -> CausalEstimate:
        std = standardize(data)
        extras: Dict[str, Any] = {}

        if method == "adj_u":
            if std.u_hidden is None:
                raise ConfigurationError("adj_u 需要隐藏混杂列 u（数据中没有 u 列）")
            z = std.u_hidden
        elif method == "adj_w":
            z = std.w
        elif method == "no_adj":
            z = None
        else:
            if generator is None:
                gen = self.fit_generator(method, std, mechanism, cfg)
            else:
                gen = self._loaded_generator(method, generator, std)
                extras["loaded_generator"] = True
            z = sample_confounder_rows(gen, std.x, std.y, cfg.seed, cfg.confounder_samples)
            extras["final_energy_loss"] = gen.history["loss"][-1] if gen.history.get("loss") else None
            extras["generator"] = dict(gen.metadata)
            if method == "spice_net_approx":
                extras["learned_noise"] = gen.learned_noise()
                extras["scale_trace"] = list(gen.history["scale"])

        est = regression_adjust(
            z,
            std.x,
            std.y,
            cfg=cfg.regression,
            treatment_kind=std.treatment_kind,
            scale="standardized",
            provenance=provenance,
        )
        est.extras.update(extras)
        return destandardize_estimate(est, std.standardization)

    def _loaded_generator(self, method: str, gen: GeneratorNet, data: Dataset) -> GeneratorNet:
        """已保存的生成网络必须与数据维度和方法的噪声头模式一致"""
        if (gen.d, gen.p) != (data.d, data.p):
            raise ConfigurationError(f"生成网络维度 (d={gen.d}, p={gen.p}) 与数据 (d={data.d}, p={data.p}) 不符")
        expected = "fixed" if method == "spice_net" else "learnable"
        if gen.head.mode != expected:
            raise ConfigurationError(f"{method} 需要 {expected} 噪声头，已保存的生成网络是 {gen.head.mode}")
        self.last_generator = gen
        self._log("   使用已保存的生成网络，跳过训练")
        return gen

    def _noise_head(
        self,
        method: str,
        data: Dataset,
        mechanism: Optional[ErrorMechanism],
        cfg: EstimationConfig,
    ) -> NoiseHead:
        if method == "spice_net":
            if mechanism is None:
                raise ConfigurationError("spice_net 需要已知的误差机制（--mechanism）")
            if mechanism.proxy_dim != data.d:
                raise ConfigurationError(f"误差机制维度 {mechanism.proxy_dim} 与代理维度 {data.d} 不符")
            return NoiseHead.for_mechanism(mechanism, data.standardization)

        family = cfg.noise_family or (cfg.head_init or {}).get("family")
        if family is None and mechanism is not None and mechanism.kind == "additive":
            family = mechanism.noise.family
        if family is None:
            raise ConfigurationError("spice_net_approx 需要 E 的分布族（noise_family、head_init 或误差机制）")
        # 上限为标准化后 W 的经验标准差
        cap = data.w.std(axis=0)
        return NoiseHead.learnable(family, data.d, cap, cfg.head_init)

    def _linear_gaussian(
        self, data: Dataset, mechanism: Optional[ErrorMechanism], provenance: Dict[str, Any]
    ) -> CausalEstimate:
        if data.d != 1 or data.p != 1 or data.treatment_kind != "continuous":
            raise ConfigurationError("线性高斯校正只适用于一维连续 (W, X, Y)")
        if mechanism is None or mechanism.kind != "additive":
            raise ConfigurationError("线性高斯校正需要加性误差机制以给出 σ²_E")
        moments = empirical_moments(data.w, data.x, data.y)
        var_e = float(mechanism.noise.variance()[0])
        low, high = data.x_hull()
        return linear_causal_estimate(
            moments,
            float(data.x.mean()),
            float(data.y.mean()),
            var_e,
            float(low[0]),
            float(high[0]),
            provenance,
        )

    def _discrete(
        self, data: Dataset, mechanism: Optional[ErrorMechanism], provenance: Dict[str, Any]
    ) -> CausalEstimate:
        if data.d != 1 or data.p != 1:
            raise ConfigurationError("矩阵调整只适用于一维离散 (W, X)")
        low, high = data.x_hull()
        joint = empirical_joint(data.w, data.x, data.y)
        return self._discrete_estimate(joint, mechanism, data.treatment_kind, low, high, provenance)

    def _discrete_estimate(
        self,
        joint: DiscreteJoint,
        mechanism: Optional[ErrorMechanism],
        treatment_kind: str,
        low: np.ndarray,
        high: np.ndarray,
        provenance: Dict[str, Any],
    ) -> CausalEstimate:
        if mechanism is None or mechanism.kind != "discrete":
            raise ConfigurationError("矩阵调整需要离散误差机制")
        joint_u = matrix_adjust(joint, mechanism.discrete)
        self.last_joint = joint_u

        def fn(points: np.ndarray) -> np.ndarray:
            return np.array([causal_function_discrete(joint_u, float(x)) for x in points[:, 0]])

        return CausalEstimate(
            fn=fn,
            treatment_kind=treatment_kind,
            x_low=low,
            x_high=high,
            provenance=provenance,
            extras={"adjustment": dict(joint_u.metadata), "adjusted_joint": joint_u.to_records()},
        )

    def _log(self, message: str, is_error: bool = False):
        """日志输出（带回调）"""
        callback = getattr(self, "on_progress", None)
        if callback:
            callback(message)
        elif is_error:
            logger.error(message)
        else:
            logger.info(message)


def estimate(
    method: str,
    data: Dataset,
    mechanism: Optional[ErrorMechanism] = None,
    cfg: Optional[EstimationConfig] = None,
) -> CausalEstimate:
    """无状态的快捷入口"""
    return EstimationService().estimate(method, data, mechanism, cfg)

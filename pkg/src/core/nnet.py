"""
最小前馈网络引擎
全连接层 + ReLU、He 初始化、反向传播、Adam + 自适应学习率，以及经验能量损失
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.rng import stream
from src.model.errors import ConfigurationError, TrainingDivergedError
from src.model.network import NetSpec, ParamState

logger = logging.getLogger(__name__)


@dataclass
class ForwardCache:
    """前向传播缓存: 每层（拼接噪声后的）输入和预激活值"""

    layer_inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]


# ==================== 初始化 / 前向 / 反向 ====================


def he_init(spec: NetSpec, seed: int, lr: float = 1e-3) -> ParamState:
    """权重 ~ N(0, 2/fan_in)，偏置为 0；fan_in 含噪声单元"""
    params: Dict[str, np.ndarray] = {}
    for i, layer in enumerate(spec.layers):
        rng = stream(seed, f"he/W{i}")
        params[f"W{i}"] = rng.standard_normal((layer.in_width, layer.out_width)) * np.sqrt(2.0 / layer.in_width)
        params[f"b{i}"] = np.zeros(layer.out_width)
    return ParamState(params=params, lr=lr)


def forward(
    state: ParamState,
    spec: NetSpec,
    inputs: np.ndarray,
    noises: Optional[Sequence[np.ndarray]] = None,
) -> Tuple[np.ndarray, ForwardCache]:
    """
    noises: 每个注入点一块 (B, noise_layout[i])，按层顺序排列，只包含宽度 > 0 的层
    返回 (输出 (B, out), 缓存)
    """
    h = np.asarray(inputs, dtype=float)
    if h.ndim == 1:
        h = h[:, None] if spec.input_width == 1 else h[None, :]
    if h.shape[1] != spec.input_width:
        raise ConfigurationError(f"输入宽度 {h.shape[1]} 与网络定义 {spec.input_width} 不符")

    sites = [i for i, width in enumerate(spec.noise_layout) if width > 0]
    noises = list(noises or [])
    if len(noises) != len(sites):
        raise ConfigurationError(f"需要 {len(sites)} 块噪声，实际 {len(noises)} 块")
    noise_at = dict(zip(sites, noises))

    cache = ForwardCache([], [])
    for i, layer in enumerate(spec.layers):
        if i in noise_at:
            block = np.asarray(noise_at[i], dtype=float)
            if block.shape != (h.shape[0], spec.noise_layout[i]):
                raise ConfigurationError(
                    f"第 {i} 层噪声形状 {block.shape} 应为 {(h.shape[0], spec.noise_layout[i])}"
                )
            h = np.hstack([h, block])
        pre = h @ state.weight(i) + state.bias(i)
        cache.layer_inputs.append(h)
        cache.pre_activations.append(pre)
        h = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
    return h, cache


def backward(state: ParamState, spec: NetSpec, cache: ForwardCache, upstream: np.ndarray) -> Dict[str, np.ndarray]:
    """反向累积；upstream 是损失对网络输出的梯度 (B, out)"""
    grads: Dict[str, np.ndarray] = {}
    delta = np.asarray(upstream, dtype=float)
    for i in reversed(range(len(spec.layers))):
        if spec.layers[i].activation == "relu":
            delta = delta * (cache.pre_activations[i] > 0)
        grads[f"W{i}"] = cache.layer_inputs[i].T @ delta
        grads[f"b{i}"] = delta.sum(axis=0)
        if i > 0:
            # 去掉本层追加的噪声列，只把梯度传回上一层输出
            carried = spec.layers[i].in_width - spec.noise_layout[i]
            delta = (delta @ state.weight(i).T)[:, :carried]
    return grads


def adam_step(state: ParamState, grads: Dict[str, np.ndarray], cfg) -> ParamState:
    """
    带偏差校正的 Adam 原地更新
    cfg 需提供 adam_beta1 / adam_beta2 / adam_eps
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"参数 {name} 的梯度出现 NaN/Inf", state.epoch, state.snapshot())

    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    state.step += 1
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        state.params[name] -= state.lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


# ==================== 损失 ====================


def energy_loss(observed, sample_1, sample_2) -> float:
    """½(‖o−s₁‖ + ‖o−s₂‖) − ½‖s₁−s₂‖"""
    o, s1, s2 = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (observed, sample_1, sample_2))
    if not (o.shape == s1.shape == s2.shape):
        raise ConfigurationError(f"维度不一致: {o.shape}, {s1.shape}, {s2.shape}")
    return float(0.5 * (np.linalg.norm(o - s1) + np.linalg.norm(o - s2)) - 0.5 * np.linalg.norm(s1 - s2))


def energy_loss_batch(
    observed: np.ndarray, sample_1: np.ndarray, sample_2: np.ndarray
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    批量能量损失（按行平均）
    返回 (loss, ∂loss/∂s₁, ∂loss/∂s₂)；范数在零点取次梯度 0
    """
    loss, (g1, g2) = energy_score_batch(observed, [sample_1, sample_2])
    return loss, g1, g2


def energy_score_batch(observed: np.ndarray, samples: Sequence[np.ndarray]) -> Tuple[float, List[np.ndarray]]:
    """
    每个观测配 m 个样本的经验能量得分
        (1/m) Σ_j ‖o − s_j‖ − 1/(2m(m−1)) Σ_{j≠l} ‖s_j − s_l‖
    m = 2 时即 energy_loss
    """
    o = np.asarray(observed, dtype=float)
    samples = [np.asarray(s, dtype=float) for s in samples]
    m = len(samples)
    if m < 2:
        raise ConfigurationError(f"每个观测至少需要 2 个样本: {m}")
    if any(s.shape != o.shape for s in samples):
        raise ConfigurationError(f"样本形状与观测 {o.shape} 不一致")

    batch = o.shape[0]
    per_row = np.zeros((batch, 1))
    grads = [np.zeros_like(o) for _ in range(m)]
    for j, s in enumerate(samples):
        diff = s - o
        norm = np.linalg.norm(diff, axis=1, keepdims=True)
        per_row += norm / m
        grads[j] += _unit(diff, norm) / m
    pair_weight = 1.0 / (m * (m - 1))
    for j in range(m):
        for l in range(j + 1, m):
            diff = samples[j] - samples[l]
            norm = np.linalg.norm(diff, axis=1, keepdims=True)
            per_row -= pair_weight * norm
            unit = _unit(diff, norm)
            grads[j] -= pair_weight * unit
            grads[l] += pair_weight * unit
    return float(per_row.mean()), [g / batch for g in grads]


def mse_loss_batch(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """平方损失均值及其对 pred 的梯度"""
    pred = np.asarray(pred, dtype=float)
    residual = pred - np.asarray(target, dtype=float).reshape(pred.shape)
    return float(np.mean(residual**2)), 2.0 * residual / residual.size


def _unit(diff: np.ndarray, norm: np.ndarray) -> np.ndarray:
    out = np.zeros_like(diff)
    nonzero = norm[:, 0] > 0
    out[nonzero] = diff[nonzero] / norm[nonzero]
    return out


# ==================== 训练工具 ====================


class AdaptiveLr:
    """
    自适应学习率: 监控值连续 patience 个 epoch 未比历史最优低 tol，就 lr /= factor
    监控值是最近 window 个 epoch 损失的均值（window=1 即原始 epoch 损失）
    lr 单调不增，下限 floor
    """

    def __init__(
        self,
        initial_lr: float,
        factor: float = 5.0,
        patience: int = 2,
        tol: float = 1e-6,
        floor: float = 1e-6,
        window: int = 1,
    ):
        if initial_lr <= 0:
            raise ConfigurationError(f"初始学习率必须 > 0: {initial_lr}")
        self.lr = float(initial_lr)
        self.factor = factor
        self.patience = patience
        self.tol = tol
        self.floor = min(floor, self.lr)
        self.best = np.inf
        self.bad_epochs = 0
        self.reductions = 0
        self._recent: deque = deque(maxlen=window)

    @classmethod
    def from_config(cls, cfg) -> "AdaptiveLr":
        return cls(cfg.initial_lr, cfg.lr_factor, cfg.lr_patience, cfg.lr_tol, cfg.lr_floor, cfg.lr_window)

    def update(self, epoch_loss: float) -> float:
        self._recent.append(float(epoch_loss))
        monitored = float(np.mean(self._recent))
        if monitored < self.best - self.tol:
            self.best = monitored
            self.bad_epochs = 0
            return self.lr

        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.bad_epochs = 0
            reduced = max(self.lr / self.factor, self.floor)
            if reduced < self.lr:
                logger.info("学习率下调: %.3g → %.3g", self.lr, reduced)
                self.lr = reduced
                self.reductions += 1
        return self.lr

    def to_dict(self) -> Dict[str, float]:
        return {
            "factor": self.factor,
            "patience": self.patience,
            "tol": self.tol,
            "floor": self.floor,
            "window": self._recent.maxlen,
            "final_lr": self.lr,
            "reductions": self.reductions,
        }


def minibatches(n: int, count: int, rng: np.random.Generator) -> List[np.ndarray]:
    """打乱后等分为 count 批，最后一批吸收余数"""
    if n < 1 or count < 1:
        raise ConfigurationError(f"非法的分批参数: n={n}, count={count}")
    count = min(count, n)
    order = rng.permutation(n)
    size = n // count
    batches = [order[i * size : (i + 1) * size] for i in range(count - 1)]
    batches.append(order[(count - 1) * size :])
    return batches

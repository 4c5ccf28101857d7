"""
SPICE-Net 第一步: 以能量损失训练 W | (X, Y) 的生成网络
    W = g(x, y, ε) + e，g 的输出维度等于代理维度 d，e 由噪声头抽取
训练后 g(x, y, ε) 即混杂 ÃU 的样本
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from src.core.nnet import AdaptiveLr, adam_step, backward, energy_score_batch, forward, he_init, minibatches
from src.core.noise_head import NoiseHead
from src.core.rng import stream
from src.model.config import TrainConfig
from src.model.dataset import Dataset
from src.model.errors import ConfigurationError, TrainingDivergedError
from src.model.network import LayerSpec, NetSpec, ParamState
from src.model.noise import NoiseDistribution

logger = logging.getLogger(__name__)

# 隐层宽度（含注入的噪声单元）
HIDDEN_WIDTHS = (10, 15, 25, 15, 10)
# 输入层与前 4 个隐层各追加 1 个标准高斯噪声单元
NOISE_PER_SITE = 1
NOISE_SITES = 5


def generator_spec(p: int, d: int) -> NetSpec:
    """
    输入 (x, y, ε₁)；每个注入点的噪声单元计入下一层的输入宽度
    最后一层线性输出 d 维（加噪前输出）
    """
    if d < 1 or p < 1:
        raise ConfigurationError(f"维度必须为正: p={p}, d={d}")
    noise_layout = [NOISE_PER_SITE] * NOISE_SITES + [0]
    layers: List[LayerSpec] = []
    in_width = p + 1 + NOISE_PER_SITE
    for i, width in enumerate(HIDDEN_WIDTHS):
        out_width = width - noise_layout[i + 1]
        layers.append(LayerSpec(in_width, out_width, "relu"))
        in_width = out_width + noise_layout[i + 1]
    layers.append(LayerSpec(in_width, d, "linear"))
    return NetSpec(p + 1, layers, noise_layout)


@dataclass
class GeneratorNet:
    spec: NetSpec
    head: NoiseHead
    state: ParamState
    seed: int = 0
    history: Dict[str, List[Any]] = field(default_factory=lambda: {"loss": [], "lr": [], "scale": []})
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.spec.output_width

    @property
    def p(self) -> int:
        return self.spec.input_width - 1

    def learned_noise(self) -> Dict[str, Any]:
        return self.head.to_dict(self.state.params)

    def to_dict(self) -> Dict[str, Any]:
        """持久化格式: 结构 + 噪声头 + 行优先展平的权重 + 训练元数据"""
        return {
            "spec": self.spec.to_dict(),
            "head": {
                "family": self.head.family,
                "mode": self.head.mode,
                "dimension": self.head.dimension,
                "fixed": None if self.head.fixed is None else self.head.fixed.to_dict(),
                "cap": None if self.head.cap is None else self.head.cap.tolist(),
            },
            "params": {
                name: {"shape": list(value.shape), "values": value.reshape(-1).tolist()}
                for name, value in self.state.params.items()
            },
            "seed": self.seed,
            "lr": self.state.lr,
            "history": {k: [_plain(v) for v in values] for k, values in self.history.items()},
            "metadata": dict(self.metadata),
        }

    @classmethod
    def create(cls, data: Dict[str, Any]) -> "GeneratorNet":
        spec = NetSpec.create(data["spec"])
        head_data = data["head"]
        if head_data["mode"] == "fixed":
            head = NoiseHead.fixed_head(NoiseDistribution.create(head_data["fixed"]))
        else:
            head = NoiseHead(head_data["family"], "learnable", int(head_data["dimension"]), cap=head_data["cap"])
        params = {
            name: np.asarray(item["values"], dtype=float).reshape(item["shape"])
            for name, item in data["params"].items()
        }
        state = ParamState(params=params, lr=float(data.get("lr", 1e-3)))
        if head.mode == "learnable":
            head.init = {k[len("head."):]: v.copy() for k, v in params.items() if k.startswith("head.")}
        gen = cls(spec, head, state, seed=int(data.get("seed", 0)), metadata=dict(data.get("metadata", {})))
        gen.history.update(data.get("history", {}))
        return gen


def build_generator(d: int, head: NoiseHead, seed: int, p: int = 1) -> GeneratorNet:
    """按固定结构建网并做 He 初始化；可学习噪声头的参数并入 ParamState"""
    if d < 1:
        raise ConfigurationError(f"代理维度必须 ≥ 1: {d}")
    if head.dimension != d:
        raise ConfigurationError(f"噪声头维度 {head.dimension} 与代理维度 {d} 不符")
    spec = generator_spec(p, d)
    state = he_init(spec, seed)
    for name, value in head.initial_params().items():
        state.add(name, value)
    return GeneratorNet(
        spec,
        head,
        state,
        seed=seed,
        metadata={"noise_layout": list(spec.noise_layout), "noise_units_per_site": NOISE_PER_SITE},
    )


def pre_noise_output(
    gen: GeneratorNet, inputs: np.ndarray, rng: np.random.Generator
) -> Tuple[np.ndarray, Any]:
    """g(x, y, ε)：抽取注入噪声后前向传播"""
    noises = [rng.standard_normal((inputs.shape[0], width)) for width in gen.spec.noise_layout if width > 0]
    return forward(gen.state, gen.spec, inputs, noises)


def generate(gen: GeneratorNet, x, y, seed: int, tag: str = "generate") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    对每行 (x, y) 生成一个代理样本
    返回 (w, g, e)，w = g + e
    """
    inputs = _inputs(gen, x, y)
    rng = stream(seed, tag)
    g, _ = pre_noise_output(gen, inputs, rng)
    e, _ = gen.head.sample(inputs.shape[0], rng, gen.state.params)
    return g + e, g, e


def train_generator(
    gen: GeneratorNet,
    data: Dataset,
    cfg: TrainConfig,
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> GeneratorNet:
    """
    每个观测配 cfg.samples_per_obs 组独立的 (ε, e)，最小化经验能量损失
    fixed 头没有可训练参数；learnable 头的梯度经重参数化的 e 传入
    """
    if not data.is_standardized:
        raise ConfigurationError("生成网络只接受标准化后的数据")
    if data.d != gen.d or data.p != gen.p:
        raise ConfigurationError(f"数据维度 (p={data.p}, d={data.d}) 与网络 (p={gen.p}, d={gen.d}) 不符")

    state = gen.state
    state.lr = cfg.initial_lr
    schedule = AdaptiveLr.from_config(cfg)
    inputs = _inputs(gen, data.x, data.y)
    observed = data.w
    n = data.n
    m = cfg.samples_per_obs

    logger.debug("开始训练生成网络: n=%d epochs=%d head=%s/%s", n, cfg.epochs, gen.head.family, gen.head.mode)
    for epoch in range(cfg.epochs):
        state.epoch = epoch
        rng = stream(cfg.seed, f"generator/epoch/{epoch}")
        total = 0.0
        for rows in minibatches(n, cfg.minibatch_count, rng):
            batch = rows.size
            caches, auxes, outputs = [], [], []
            for _ in range(m):
                g, cache = pre_noise_output(gen, inputs[rows], rng)
                e, aux = gen.head.sample(batch, rng, state.params)
                caches.append(cache)
                auxes.append(aux)
                outputs.append(g + e)

            loss, upstream = energy_score_batch(observed[rows], outputs)
            if not np.isfinite(loss):
                raise TrainingDivergedError("能量损失出现 NaN/Inf", epoch, state.snapshot())

            grads: Dict[str, np.ndarray] = {}
            for cache, aux, up in zip(caches, auxes, upstream):
                for name, value in backward(state, gen.spec, cache, up).items():
                    grads[name] = grads[name] + value if name in grads else value
                for name, value in gen.head.grad(up, aux, state.params).items():
                    grads[name] = grads[name] + value if name in grads else value
            adam_step(state, grads, cfg)
            total += loss * batch

        epoch_loss = total / n
        gen.history["loss"].append(epoch_loss)
        gen.history["lr"].append(state.lr)
        gen.history["scale"].append(gen.head.scale(state.params).tolist())
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss)
        if epoch % 100 == 0:
            logger.debug("epoch %d: energy loss %.5f lr %.2e", epoch, epoch_loss, state.lr)
        state.lr = schedule.update(epoch_loss)

    gen.metadata.update(
        {
            "epochs_run": cfg.epochs,
            "final_loss": gen.history["loss"][-1],
            "final_lr": state.lr,
            "lr_schedule": schedule.to_dict(),
            "adam": {"beta1": cfg.adam_beta1, "beta2": cfg.adam_beta2, "eps": cfg.adam_eps},
            "samples_per_obs": m,
            "train_seed": cfg.seed,
        }
    )
    logger.info("生成网络训练完成: 最终能量损失 %.5f", gen.history["loss"][-1])
    return gen


def sample_confounder(gen: GeneratorNet, x, y: float, m: int, seed: int) -> np.ndarray:
    """在固定 (x, y) 处抽取 m 个加噪前输出，返回 (m, d)"""
    if m < 0:
        raise ConfigurationError(f"样本数不能为负: {m}")
    if m == 0:
        return np.empty((0, gen.d))
    x_row = np.broadcast_to(np.asarray(x, dtype=float).reshape(1, -1), (m, gen.p))
    inputs = _inputs(gen, x_row, np.full(m, float(y)))
    g, _ = pre_noise_output(gen, inputs, stream(seed, "confounder"))
    return g


def sample_confounder_rows(gen: GeneratorNet, x, y, seed: int, draws: int = 1) -> np.ndarray:
    """每个观测 (Xᵢ, Yᵢ) 处的 ÃUᵢ；draws > 1 时取多次抽样的均值"""
    if draws < 1:
        raise ConfigurationError(f"抽样次数必须 ≥ 1: {draws}")
    inputs = _inputs(gen, x, y)
    rng = stream(seed, "confounder/rows")
    total = np.zeros((inputs.shape[0], gen.d))
    for _ in range(draws):
        g, _ = pre_noise_output(gen, inputs, rng)
        total += g
    return total / draws


def _inputs(gen: GeneratorNet, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float).reshape(-1, 1)
    if x.shape[0] != y.shape[0]:
        raise ConfigurationError(f"x 行数 {x.shape[0]} 与 y 行数 {y.shape[0]} 不符")
    if x.shape[1] != gen.p:
        raise ConfigurationError(f"处理变量维度 {x.shape[1]} 与网络 p={gen.p} 不符")
    return np.hstack([x, y])


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value

"""
前馈网络引擎: He 初始化、前向/反向、Adam、自适应学习率与能量损失
"""

import numpy as np
import pytest

from src.core.nnet import (
    AdaptiveLr,
    adam_step,
    backward,
    energy_loss,
    energy_loss_batch,
    energy_score_batch,
    forward,
    he_init,
    minibatches,
    mse_loss_batch,
)
from src.core.rng import stream
from src.model.config import OptimizerConfig
from src.model.errors import ConfigurationError, TrainingDivergedError
from src.model.network import LayerSpec, NetSpec, ParamState


def _noisy_spec(rng: np.random.Generator) -> NetSpec:
    """输入 2 维，前两层各注入 1 个噪声单元，隐层宽度 ≤ 8"""
    h1, h2 = (int(v) for v in rng.integers(2, 8, size=2))
    return NetSpec(
        2,
        [LayerSpec(3, h1, "relu"), LayerSpec(h1 + 1, h2, "relu"), LayerSpec(h2, 2, "linear")],
        [1, 1, 0],
    )


def _energy(state, spec, inputs, noises_a, noises_b, observed):
    out_a, cache_a = forward(state, spec, inputs, noises_a)
    out_b, cache_b = forward(state, spec, inputs, noises_b)
    loss, (grad_a, grad_b) = energy_score_batch(observed, [out_a, out_b])
    return loss, (out_a, cache_a, grad_a), (out_b, cache_b, grad_b)


# ==================== 初始化 ====================


def test_he_init_weight_variance():
    spec = NetSpec.mlp(10, [50], 1)
    weights = np.concatenate([he_init(spec, seed).weight(0).reshape(-1) for seed in range(40)])
    assert weights.var() == pytest.approx(0.2, rel=0.1)


def test_he_init_biases_zero_and_deterministic():
    spec = NetSpec.mlp(3, [8, 4], 2)
    a, b = he_init(spec, 7), he_init(spec, 7)
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])
    assert not np.any(a.bias(0))
    assert not np.array_equal(he_init(spec, 8).weight(0), a.weight(0))


def test_zero_width_layer_rejected():
    with pytest.raises(ConfigurationError):
        NetSpec.mlp(3, [0], 1)


def test_final_layer_must_be_linear():
    with pytest.raises(ConfigurationError):
        NetSpec(2, [LayerSpec(2, 2, "relu")])


# ==================== 前向 ====================


def test_forward_zero_weights_gives_last_bias():
    spec = NetSpec.mlp(3, [4], 2)
    state = he_init(spec, 0)
    for name in state.params:
        state.params[name][...] = 0.0
    state.params["b1"][:] = [1.5, -2.0]
    out, _ = forward(state, spec, np.ones((5, 3)))
    np.testing.assert_array_equal(out, np.tile([1.5, -2.0], (5, 1)))


def test_forward_identity_linear_layer():
    spec = NetSpec(2, [LayerSpec(2, 2, "linear")])
    state = ParamState(params={"W0": np.eye(2), "b0": np.zeros(2)})
    x = np.array([[1.0, -3.0], [0.5, 2.0]])
    out, _ = forward(state, spec, x)
    np.testing.assert_array_equal(out, x)


def test_forward_width_mismatch():
    rng = stream(0, "spec")
    spec = _noisy_spec(rng)
    state = he_init(spec, 0)
    x = np.zeros((4, 2))
    with pytest.raises(ConfigurationError):
        forward(state, spec, np.zeros((4, 3)), [np.zeros((4, 1)), np.zeros((4, 1))])
    with pytest.raises(ConfigurationError):
        forward(state, spec, x, [np.zeros((4, 1))])
    with pytest.raises(ConfigurationError):
        forward(state, spec, x, [np.zeros((4, 2)), np.zeros((4, 1))])


# ==================== 能量损失 ====================


@pytest.mark.parametrize(
    "obs, s1, s2, expected",
    [
        (0.0, 0.0, 0.0, 0.0),
        (0.0, 1.0, -1.0, 0.0),
        (0.0, 1.0, 1.0, 1.0),
        ([1.0, 2.0], [1.0, 2.0], [1.0, 2.0], 0.0),
    ],
)
def test_energy_loss_hand_values(obs, s1, s2, expected):
    assert energy_loss(obs, s1, s2) == pytest.approx(expected)


def test_energy_loss_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        energy_loss([0.0, 1.0], [0.0], [1.0])


def test_energy_loss_batch_matches_rowwise_mean():
    rng = stream(1, "energy")
    o, s1, s2 = (rng.standard_normal((6, 3)) for _ in range(3))
    loss, _, _ = energy_loss_batch(o, s1, s2)
    expected = np.mean([energy_loss(o[i], s1[i], s2[i]) for i in range(6)])
    assert loss == pytest.approx(expected, rel=1e-12)


def test_energy_gradient_wrt_sample_finite_difference():
    rng = stream(2, "energy")
    o, s1, s2 = (rng.standard_normal((4, 2)) for _ in range(3))
    _, g1, _ = energy_loss_batch(o, s1, s2)
    h = 1e-6
    for i in range(4):
        for j in range(2):
            plus, minus = s1.copy(), s1.copy()
            plus[i, j] += h
            minus[i, j] -= h
            numeric = (energy_loss_batch(o, plus, s2)[0] - energy_loss_batch(o, minus, s2)[0]) / (2 * h)
            assert g1[i, j] == pytest.approx(numeric, rel=1e-5, abs=1e-9)


def test_energy_subgradient_zero_at_coincident_points():
    o = np.zeros((1, 2))
    loss, g1, g2 = energy_loss_batch(o, o.copy(), o.copy())
    assert loss == 0.0
    assert not np.any(g1) and not np.any(g2)


def test_energy_score_general_m_reduces_to_pair_form():
    rng = stream(3, "energy")
    o, s1, s2 = (rng.standard_normal((5, 2)) for _ in range(3))
    pair, _, _ = energy_loss_batch(o, s1, s2)
    general, grads = energy_score_batch(o, [s1, s2])
    assert general == pytest.approx(pair)
    assert len(grads) == 2
    with pytest.raises(ConfigurationError):
        energy_score_batch(o, [s1])


def test_network_energy_gradient_check():
    """20 个随机小网络、每个 5 个参数分量，共 100 个点"""
    h = 1e-6
    checked = 0
    nets = 0
    for trial in range(200):
        if nets == 20:
            break
        rng = stream(trial, "gradcheck")
        spec = _noisy_spec(rng)
        state = he_init(spec, trial)
        inputs = rng.standard_normal((4, 2))
        observed = rng.standard_normal((4, 2))
        noises_a = [rng.standard_normal((4, 1)) for _ in range(2)]
        noises_b = [rng.standard_normal((4, 1)) for _ in range(2)]

        _, (out_a, cache_a, grad_a), (out_b, cache_b, grad_b) = _energy(
            state, spec, inputs, noises_a, noises_b, observed
        )
        pre = np.concatenate([p.reshape(-1) for p in cache_a.pre_activations + cache_b.pre_activations])
        distances = np.concatenate(
            [np.linalg.norm(a - b, axis=1) for a, b in ((out_a, observed), (out_b, observed), (out_a, out_b))]
        )
        if np.min(np.abs(pre)) <= 1e-3 or np.min(distances) <= 1e-3:
            continue
        nets += 1

        analytic = backward(state, spec, cache_a, grad_a)
        for name, value in backward(state, spec, cache_b, grad_b).items():
            analytic[name] = analytic[name] + value

        names = sorted(state.params)
        for _ in range(5):
            name = names[int(rng.integers(len(names)))]
            idx = tuple(int(rng.integers(s)) for s in state.params[name].shape)
            original = state.params[name][idx]
            state.params[name][idx] = original + h
            up = _energy(state, spec, inputs, noises_a, noises_b, observed)[0]
            state.params[name][idx] = original - h
            down = _energy(state, spec, inputs, noises_a, noises_b, observed)[0]
            state.params[name][idx] = original
            numeric = (up - down) / (2 * h)
            a = analytic[name][idx]
            assert abs(a - numeric) <= 1e-4 * max(abs(a), abs(numeric)) + 1e-8, (name, idx, a, numeric)
            checked += 1
    assert nets == 20
    assert checked == 100


def test_energy_loss_prefers_true_distribution_on_grid():
    """N(0,1) 数据上，位置-尺度高斯采样器的经验能量损失在 (0, 1) 处最小"""
    rng = stream(4, "propriety")
    n = 10_000
    data = rng.standard_normal((n, 1))
    z1, z2 = rng.standard_normal((n, 1)), rng.standard_normal((n, 1))
    grid = [(mu, sigma) for mu in np.arange(-1.0, 1.01, 0.25) for sigma in np.arange(0.25, 2.01, 0.25)]
    losses = [energy_loss_batch(data, mu + sigma * z1, mu + sigma * z2)[0] for mu, sigma in grid]
    mu, sigma = grid[int(np.argmin(losses))]
    assert mu == pytest.approx(0.0)
    assert sigma == pytest.approx(1.0)


def test_mse_loss_batch_gradient():
    pred = np.array([[1.0], [2.0], [4.0]])
    loss, grad = mse_loss_batch(pred, np.array([1.0, 1.0, 1.0]))
    assert loss == pytest.approx((0 + 1 + 9) / 3)
    np.testing.assert_allclose(grad[:, 0], [0.0, 2.0 / 3, 6.0 / 3])


# ==================== Adam 与学习率 ====================


def test_adam_reaches_quadratic_minimizer():
    target = np.array([1.0, -2.0])
    state = ParamState(params={"theta": np.zeros(2)}, lr=0.05)
    cfg = OptimizerConfig()
    for _ in range(500):
        adam_step(state, {"theta": 2.0 * (state.params["theta"] - target)}, cfg)
    np.testing.assert_allclose(state.params["theta"], target, atol=1e-3)


def test_adam_zero_gradient_is_fixed_point():
    state = ParamState(params={"theta": np.array([0.3, -0.7])})
    adam_step(state, {"theta": np.zeros(2)}, OptimizerConfig())
    np.testing.assert_array_equal(state.params["theta"], [0.3, -0.7])
    assert state.step == 1


def test_adam_non_finite_gradient_raises_with_epoch():
    state = ParamState(params={"theta": np.zeros(1)}, epoch=17)
    with pytest.raises(TrainingDivergedError) as info:
        adam_step(state, {"theta": np.array([np.nan])}, OptimizerConfig())
    assert info.value.epoch == 17
    assert "theta" in info.value.snapshot


def test_adaptive_lr_reduces_after_patience():
    schedule = AdaptiveLr(1e-2, factor=5.0, patience=2)
    assert schedule.update(1.0) == pytest.approx(1e-2)
    assert schedule.update(1.0) == pytest.approx(1e-2)
    assert schedule.update(1.0) == pytest.approx(2e-3)
    assert schedule.update(0.5) == pytest.approx(2e-3)
    assert schedule.reductions == 1


def test_adaptive_lr_never_increases_and_respects_floor():
    rng = stream(5, "lr")
    schedule = AdaptiveLr(1e-3, floor=1e-6, window=3)
    lrs = [schedule.update(v) for v in rng.random(500)]
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))
    assert min(lrs) >= 1e-6


def test_minibatches_partition_rows():
    batches = minibatches(10, 3, stream(0, "batches"))
    assert [b.size for b in batches] == [3, 3, 4]
    np.testing.assert_array_equal(np.sort(np.concatenate(batches)), np.arange(10))
    with pytest.raises(ConfigurationError):
        minibatches(0, 1, stream(0, "batches"))

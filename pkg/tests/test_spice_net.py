"""
SPICE-Net: 生成网络结构、训练、混杂抽样、回归调整、ACE/MSE 与估计服务调度
"""

import numpy as np
import pytest

from src.core.adjustment import ace, mse_eval, regression_adjust
from src.core.benchmarks import benchmark_mechanism, benchmark_spec
from src.core.generator import (
    HIDDEN_WIDTHS,
    build_generator,
    generate,
    generator_spec,
    sample_confounder,
    sample_confounder_rows,
    train_generator,
)
from src.core.noise_head import NoiseHead
from src.core.rng import stream
from src.core.simulator import sample_dataset, standardize
from src.dao.model_dao import ModelDAO
from src.model.config import EstimationConfig, RegressionConfig, RunConfig, TrainConfig
from src.model.dataset import ColumnScale, Dataset, Standardization
from src.model.errors import ConfigurationError, InsufficientDataError, UnsupportedInterventionError
from src.model.estimate import CausalEstimate
from src.model.noise import NoiseDistribution
from src.service.bench_service import run_cell
from src.service.estimation_service import EstimationService


def _fixed_head(d: int = 1) -> NoiseHead:
    if d == 1:
        return NoiseHead.fixed_head(NoiseDistribution.gaussian(0.0, 1.0))
    return NoiseHead.fixed_head(NoiseDistribution.multivariate_gaussian(np.zeros(d), np.eye(d)))


def _linear_estimate(slope: float = 1.0, offset: float = 0.0, kind: str = "continuous") -> CausalEstimate:
    return CausalEstimate(
        fn=lambda pts: slope * pts[:, 0] + offset,
        treatment_kind=kind,
        x_low=np.array([-5.0]),
        x_high=np.array([5.0]),
    )


# ==================== 生成网络结构 ====================


@pytest.mark.parametrize("d", [1, 3])
def test_generator_spec_widths_include_noise_units(d):
    spec = generator_spec(1, d)
    assert spec.input_width == 2
    assert spec.output_width == d
    assert spec.total_noise == 5
    assert list(spec.noise_layout) == [1, 1, 1, 1, 1, 0]
    widths = [layer.out_width + spec.noise_layout[i + 1] for i, layer in enumerate(spec.layers[:-1])]
    assert widths == list(HIDDEN_WIDTHS)
    assert spec.layers[-1].activation == "linear"


def test_build_generator_rejects_head_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        build_generator(3, _fixed_head(1), seed=0)


def test_generate_output_is_pre_noise_plus_head_noise():
    gen = build_generator(3, _fixed_head(3), seed=1)
    rng = stream(0, "inputs")
    x, y = rng.standard_normal(50), rng.standard_normal(50)
    w, g, e = generate(gen, x, y, seed=5)
    assert w.shape == g.shape == e.shape == (50, 3)
    np.testing.assert_array_equal(w, g + e)
    again, _, _ = generate(gen, x, y, seed=5)
    np.testing.assert_array_equal(w, again)


def test_sample_confounder_shapes_and_determinism():
    gen = build_generator(1, _fixed_head(), seed=2)
    assert sample_confounder(gen, 0.3, -0.1, 0, seed=0).shape == (0, 1)
    a = sample_confounder(gen, 0.3, -0.1, 40, seed=9)
    b = sample_confounder(gen, 0.3, -0.1, 40, seed=9)
    assert a.shape == (40, 1)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample_confounder(gen, 0.3, -0.1, 40, seed=10))
    with pytest.raises(ConfigurationError):
        sample_confounder(gen, 0.3, -0.1, -1, seed=0)


def test_sample_confounder_rows_averages_draws():
    gen = build_generator(1, _fixed_head(), seed=3)
    rng = stream(1, "inputs")
    x, y = rng.standard_normal(30), rng.standard_normal(30)
    single = sample_confounder_rows(gen, x, y, seed=0)
    averaged = sample_confounder_rows(gen, x, y, seed=0, draws=20)
    assert single.shape == averaged.shape == (30, 1)
    assert not np.array_equal(single, averaged)
    with pytest.raises(ConfigurationError):
        sample_confounder_rows(gen, x, y, seed=0, draws=0)


# ==================== 训练 ====================


def test_train_generator_requires_standardized_data(small_train_config):
    data = sample_dataset(benchmark_spec("A"), 100, 0)
    gen = build_generator(1, _fixed_head(), seed=0)
    with pytest.raises(ConfigurationError):
        train_generator(gen, data, small_train_config)


def test_train_generator_reduces_energy_loss_and_keeps_fixed_head():
    data = standardize(sample_dataset(benchmark_spec("A"), 500, 0))
    head = NoiseHead.for_mechanism(benchmark_mechanism("A"), data.standardization)
    before = head.fixed.to_dict()
    gen = build_generator(1, head, seed=0)
    cfg = TrainConfig(epochs=60, minibatch_count=2, initial_lr=0.01, lr_window=5)
    train_generator(gen, data, cfg)

    losses = gen.history["loss"]
    assert len(losses) == 60
    assert np.mean(losses[-5:]) < np.mean(losses[:5])
    assert all(b <= a for a, b in zip(gen.history["lr"], gen.history["lr"][1:]))
    assert gen.head.fixed.to_dict() == before
    assert not any(name.startswith("head.") for name in gen.state.params)


def test_train_generator_fits_constant_proxy():
    """W ≡ c 且噪声头几乎为零时，加噪前输出收敛到 c"""
    rng = stream(0, "constant")
    n, c = 100, 0.5
    unit = ColumnScale(0.0, 1.0)
    data = Dataset(
        w=np.full(n, c),
        x=rng.standard_normal(n),
        y=rng.standard_normal(n),
        standardization=Standardization(w=[unit], x=[unit], y=unit),
    )
    gen = build_generator(1, NoiseHead.fixed_head(NoiseDistribution.gaussian(0.0, 1e-6)), seed=0)
    train_generator(gen, data, TrainConfig(epochs=300, minibatch_count=1, initial_lr=0.01, lr_window=5))
    _, g, _ = generate(gen, data.x, data.y, seed=1)
    assert np.median(np.abs(g - c)) < 0.05


def test_learnable_head_init_clamped_below_cap():
    head = NoiseHead.learnable("gaussian", 1, cap=1.0, init={"loc": [1.0], "scale": [5.0]})
    assert head.scale()[0] == pytest.approx(0.999)
    assert head.distribution().loc[0] == pytest.approx(1.0)


def test_learnable_head_rejects_indefinite_covariance():
    cov = [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    with pytest.raises(ConfigurationError):
        NoiseHead.learnable("multivariate_gaussian", 3, cap=1.0, init={"covariance": cov})


def test_model_dao_round_trip(tmp_path, small_train_config):
    data = standardize(sample_dataset(benchmark_spec("A"), 200, 0))
    gen = build_generator(1, NoiseHead.learnable("gaussian", 1, cap=1.0), seed=0)
    train_generator(gen, data, small_train_config)

    path = ModelDAO.save(gen, tmp_path / "gen.json")
    loaded = ModelDAO.load(path)
    assert loaded.spec.to_dict() == gen.spec.to_dict()
    assert loaded.metadata["noise_layout"] == [1, 1, 1, 1, 1, 0]
    w_a, _, _ = generate(gen, data.x, data.y, seed=3)
    w_b, _, _ = generate(loaded, data.x, data.y, seed=3)
    np.testing.assert_array_equal(w_a, w_b)


def test_model_dao_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        ModelDAO.load(tmp_path / "nope.json")


# ==================== 回归调整 ====================


def test_regression_adjust_recovers_identity():
    rng = stream(0, "identity")
    x = rng.standard_normal(200)
    z = rng.standard_normal((200, 1))
    est = regression_adjust(z, x, x.copy(), cfg=RegressionConfig(seed=0))
    grid = np.linspace(-1.5, 1.5, 7)
    np.testing.assert_allclose(est(grid), grid, atol=0.05)
    assert est.extras["adjustment_width"] == 1


def test_regression_adjust_without_adjustment(small_regression_config):
    rng = stream(1, "identity")
    x = rng.standard_normal(100)
    est = regression_adjust(None, x, 2.0 * x, cfg=small_regression_config, grid=np.array([0.0, 10.0]))
    assert est.extras["adjustment_width"] == 0
    assert est.extras["grid"]["extrapolated"] == [False, True]


def test_regression_adjust_too_few_rows():
    with pytest.raises(InsufficientDataError):
        regression_adjust(None, np.arange(5.0), np.arange(5.0))


# ==================== ACE 与 MSE ====================


def test_ace_continuous_identity_and_quadratic():
    xs = stream(2, "ace").uniform(-1.0, 1.0, 100)
    assert ace(_linear_estimate(), xs).value == pytest.approx(1.0)
    quadratic = CausalEstimate(
        fn=lambda pts: pts[:, 0] ** 2 + pts[:, 0] + 1.0,
        treatment_kind="continuous",
        x_low=np.array([-5.0]),
        x_high=np.array([5.0]),
    )
    assert ace(quadratic, xs).value == pytest.approx(np.mean(2.0 * xs + 1.0), abs=1e-8)


def test_ace_flags_extrapolation():
    result = ace(_linear_estimate(), np.array([0.0, 10.0]))
    assert result.extrapolated


def test_ace_binary():
    est = _linear_estimate(2.0, 1.0, kind="binary")
    assert ace(est, np.array([0.0, 1.0, 1.0])).value == pytest.approx(2.0)
    with pytest.raises(UnsupportedInterventionError):
        ace(est, np.zeros(5))


def test_mse_eval_against_truth():
    test_x = stream(3, "mse").standard_normal(200)
    assert mse_eval(_linear_estimate(), "A_gaussian", test_x) == pytest.approx(0.0)
    assert mse_eval(_linear_estimate(offset=0.1), "A_gaussian", test_x) == pytest.approx(0.01)
    assert mse_eval(_linear_estimate(kind="binary"), "B_binary", np.array([0.0, 1.0])) == pytest.approx(0.0)
    assert mse_eval(_linear_estimate(), lambda pts: pts[:, 0] + 0.2, test_x) == pytest.approx(0.04)


# ==================== 估计服务 ====================


def test_estimate_rejects_unknown_method():
    data = sample_dataset(benchmark_spec("A"), 50, 0)
    with pytest.raises(ConfigurationError):
        EstimationService().estimate("magic", data)


def test_adj_u_requires_hidden_confounder(small_estimation_config):
    data = sample_dataset(benchmark_spec("A"), 50, 0)
    data.u_hidden = None
    errors = []
    service = EstimationService()
    service.set_callbacks(on_progress=lambda _: None, on_error=errors.append)
    with pytest.raises(ConfigurationError):
        service.estimate("adj_u", data, cfg=small_estimation_config)
    assert len(errors) == 1


def test_spice_net_requires_matching_mechanism(small_estimation_config):
    data = sample_dataset(benchmark_spec("A"), 50, 0)
    with pytest.raises(ConfigurationError):
        EstimationService().estimate("spice_net", data, None, small_estimation_config)
    with pytest.raises(ConfigurationError):
        EstimationService().estimate("spice_net", data, benchmark_mechanism("D"), small_estimation_config)
    with pytest.raises(ConfigurationError):
        EstimationService().estimate("spice_net_approx", data, None, small_estimation_config)


def test_adj_w_matches_destandardized_regression(small_estimation_config):
    data = sample_dataset(benchmark_spec("C"), 150, 4)
    est = EstimationService().estimate("adj_w", data, cfg=small_estimation_config)

    std = standardize(data)
    inner = regression_adjust(std.w, std.x, std.y, cfg=small_estimation_config.seeded(0).regression)
    meta = std.standardization
    grid = np.linspace(*(float(v[0]) for v in data.x_hull()), 20)
    expected = meta.inverse_y(inner.evaluate(meta.transform_x(grid[:, None])))
    np.testing.assert_allclose(est(grid), expected, rtol=0, atol=1e-10)
    assert est.scale == "original"
    assert est.provenance["method"] == "adj_w"


def test_spice_net_extras(small_estimation_config):
    data = sample_dataset(benchmark_spec("A"), 200, 0)
    service = EstimationService()
    est = service.estimate("spice_net", data, benchmark_mechanism("A"), small_estimation_config)
    assert np.isfinite(est.extras["final_energy_loss"])
    assert est.extras["generator"]["noise_layout"] == [1, 1, 1, 1, 1, 0]
    assert service.last_generator is not None
    assert service.stats == {"runs": 1, "generators_trained": 1}
    assert np.all(np.isfinite(est(np.linspace(-1.0, 1.0, 5))))


def test_spice_net_approx_scale_stays_below_cap(small_estimation_config):
    data = sample_dataset(benchmark_spec("A"), 200, 1)
    cfg = small_estimation_config.model_copy(update={"noise_family": "gaussian"})
    est = EstimationService().estimate("spice_net_approx", data, None, cfg)
    trace = np.asarray(est.extras["scale_trace"], dtype=float)
    assert trace.shape == (small_estimation_config.generator.epochs, 1)
    assert np.all(trace > 0) and np.all(trace <= 1.0 + 1e-9)
    assert est.extras["learned_noise"]["family"] == "gaussian"


def test_saved_generator_skips_training(small_estimation_config):
    data = sample_dataset(benchmark_spec("A"), 200, 0)
    trainer = EstimationService()
    fresh = trainer.estimate("spice_net", data, benchmark_mechanism("A"), small_estimation_config)

    service = EstimationService()
    reused = service.estimate(
        "spice_net", data, benchmark_mechanism("A"), small_estimation_config, trainer.last_generator
    )
    grid = np.linspace(-1.0, 1.0, 7)
    np.testing.assert_allclose(reused(grid), fresh(grid), rtol=0, atol=1e-12)
    assert reused.extras["loaded_generator"] is True
    assert service.stats == {"runs": 1, "generators_trained": 0}


def test_saved_generator_must_fit_method_and_data(small_estimation_config):
    data = sample_dataset(benchmark_spec("A"), 200, 0)
    service = EstimationService()
    service.estimate("spice_net", data, benchmark_mechanism("A"), small_estimation_config)
    gen = service.last_generator
    cfg = small_estimation_config.model_copy(update={"noise_family": "gaussian"})
    with pytest.raises(ConfigurationError):
        service.estimate("spice_net_approx", data, None, cfg, gen)
    with pytest.raises(ConfigurationError):
        service.estimate("adj_w", data, None, small_estimation_config, gen)
    wide = sample_dataset(benchmark_spec("D"), 200, 0)
    with pytest.raises(ConfigurationError):
        service.estimate("spice_net", wide, benchmark_mechanism("D"), small_estimation_config, gen)


def test_linear_gaussian_corrected_on_benchmark_a():
    data = sample_dataset(benchmark_spec("A"), 20_000, 0)
    est = EstimationService().estimate("linear_gaussian_corrected", data, benchmark_mechanism("A"))
    slope = float(est(1.0)[0] - est(0.0)[0])
    assert slope == pytest.approx(1.0, abs=0.1)


def test_linear_gaussian_corrected_rejects_binary_treatment():
    data = sample_dataset(benchmark_spec("B"), 100, 0)
    with pytest.raises(ConfigurationError):
        EstimationService().estimate("linear_gaussian_corrected", data, benchmark_mechanism("B"))


# ==================== 基准复现 (慢) ====================


@pytest.mark.slow
def test_confounder_samples_track_conditional_mean():
    data = standardize(sample_dataset(benchmark_spec("A"), 2000, 0))
    service = EstimationService()
    gen = service.fit_generator("spice_net", data, benchmark_mechanism("A"), EstimationConfig().seeded(0))
    sampled = sample_confounder_rows(gen, data.x, data.y, seed=0, draws=50)[:, 0]
    design = np.column_stack([np.ones(data.n), data.x[:, 0], data.y])
    coef, *_ = np.linalg.lstsq(design, data.u_hidden[:, 0], rcond=None)
    assert np.corrcoef(sampled, design @ coef)[0, 1] > 0.9


@pytest.mark.slow
def test_benchmark_a_method_ordering():
    cfg = RunConfig(benchmark="A_gaussian", methods=["adj_u", "spice_net", "adj_w"], n_train=2000, n_test=500)
    medians = {}
    for method in cfg.methods:
        mses = [run_cell(cfg, method, rep)["mse"] for rep in range(5)]
        medians[method] = float(np.median(mses))
    assert medians["adj_u"] < medians["spice_net"] < medians["adj_w"]


def _median_mse(cfg: RunConfig, method: str, reps: int = 5) -> float:
    return float(np.median([run_cell(cfg, method, rep)["mse"] for rep in range(reps)]))


@pytest.mark.slow
def test_benchmark_d_spice_net_beats_adjust_w():
    cfg = RunConfig(benchmark="D_highdim", methods=["spice_net", "adj_w"], n_train=2000, n_test=500)
    assert _median_mse(cfg, "spice_net") < _median_mse(cfg, "adj_w")


@pytest.mark.slow
def test_benchmark_a_spice_net_approx_beats_no_adjustment():
    cfg = RunConfig(benchmark="A_gaussian", methods=["spice_net_approx", "no_adj"], n_train=2000, n_test=500)
    assert _median_mse(cfg, "spice_net_approx") < _median_mse(cfg, "no_adj")


@pytest.mark.slow
def test_benchmark_d_adjusting_loaded_confounder_matches_adjusting_u():
    spec = benchmark_spec("D")
    loading = benchmark_mechanism("D").A
    cfg = EstimationConfig()
    on_u, on_au, on_w = [], [], []
    for rep in range(5):
        train = sample_dataset(spec, 2000, rep, "train")
        test = sample_dataset(spec, 500, rep, "test")
        loaded = Dataset(
            w=train.w, x=train.x, y=train.y, u_hidden=train.u_hidden @ loading.T, seed=train.seed
        )
        service = EstimationService()
        on_u.append(mse_eval(service.estimate("adj_u", train, cfg=cfg.seeded(rep)), "D", test.x))
        on_au.append(mse_eval(service.estimate("adj_u", loaded, cfg=cfg.seeded(rep)), "D", test.x))
        on_w.append(mse_eval(service.estimate("adj_w", train, cfg=cfg.seeded(rep)), "D", test.x))
    u, au, w = (float(np.median(v)) for v in (on_u, on_au, on_w))
    assert max(u, au) < w
    assert max(u, au) / min(u, au) < 2.0

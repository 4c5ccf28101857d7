"""
完备性数值检验: 傅里叶变换求积、零点扫描、非单射见证、目录与 check-mechanism 服务
"""

import numpy as np
import pytest

from src.core.benchmarks import benchmark_mechanism
from src.core.fourier import (
    EVIDENCE_LABEL,
    check_spice_assumptions,
    cid_kernel,
    gaussian_ft_magnitude,
    infinitely_divisible,
    noninjective_witness,
    numeric_ft,
    scan_for_zeros,
)
from src.model.density import DensitySpec
from src.model.errors import ConfigurationError, CoverageError
from src.model.mechanism import DiscreteMechanism
from src.model.noise import NoiseDistribution
from src.model.scm import ErrorMechanism
from src.service.check_service import CheckService

PROBES = (0.0, -0.5, 0.5, -1.0, 1.0, -2.0, 2.0, -5.0, 5.0)


def _gaussian(loc: float = 0.0, scale: float = 1.0) -> DensitySpec:
    return DensitySpec("gaussian", {"loc": loc, "scale": scale})


# ==================== 闭式与数值傅里叶变换 ====================


def test_gaussian_closed_form_values():
    assert gaussian_ft_magnitude(0.0, 1.0) == pytest.approx(0.398942, abs=1e-6)
    assert gaussian_ft_magnitude(1.0, 1.0) == pytest.approx(0.241971, abs=1e-6)
    with pytest.raises(ConfigurationError):
        gaussian_ft_magnitude(1.0, 0.0)


@pytest.mark.parametrize("t", PROBES)
def test_numeric_ft_matches_gaussian_closed_form(t):
    value = numeric_ft(_gaussian(), t)
    assert abs(value.value) == pytest.approx(gaussian_ft_magnitude(t, 1.0), abs=1e-6)
    assert abs(value.value.imag) < 1e-8
    assert value.error < 1e-6


def test_numeric_ft_magnitude_independent_of_mean():
    assert abs(numeric_ft(_gaussian(loc=3.0), 1.5).value) == pytest.approx(
        abs(numeric_ft(_gaussian(), 1.5).value), abs=1e-9
    )


@pytest.mark.parametrize(
    "density",
    [
        DensitySpec("uniform", {"low": -1.0, "high": 1.0}),
        DensitySpec("exponential", {"rate": 2.0}),
        DensitySpec("laplace", {"loc": 0.0, "scale": 2.0}),
    ],
)
def test_numeric_ft_at_zero_is_total_mass(density):
    assert numeric_ft(density, 0.0).value.real == pytest.approx(1.0 / np.sqrt(2.0 * np.pi), abs=1e-6)


def test_numeric_ft_rejects_short_window():
    with pytest.raises(CoverageError):
        numeric_ft(_gaussian(), 0.0, window=(-1.0, 1.0))
    with pytest.raises(ConfigurationError):
        numeric_ft(_gaussian(), 0.0, panels=10)


# ==================== 零点扫描 ====================


def test_gaussian_has_no_zero():
    scan = scan_for_zeros(_gaussian())
    assert scan.status == "no_zero_found"
    assert not scan.candidates
    assert scan.to_dict()["evidence"] == EVIDENCE_LABEL


def test_laplace_has_no_zero():
    scan = scan_for_zeros(DensitySpec("laplace", {"loc": 0.0, "scale": 1.0}))
    assert scan.status == "no_zero_found"


def test_uniform_zero_near_pi():
    scan = scan_for_zeros(DensitySpec("uniform", {"low": -1.0, "high": 1.0}))
    assert scan.near_zero
    assert abs(scan.t_star) == pytest.approx(np.pi, abs=1e-4)
    assert scan.value <= 1e-8


def test_symmetric_mixture_zero_near_quarter_pi():
    mixture = DensitySpec("gaussian_mixture", {"weights": [0.5, 0.5], "locs": [-2.0, 2.0], "scales": [0.5, 0.5]})
    scan = scan_for_zeros(mixture, (-3.0, 3.0), 0.01)
    assert scan.near_zero
    assert abs(scan.t_star) == pytest.approx(np.pi / 4, abs=1e-4)


def test_scan_is_monotone_in_floor():
    uniform = DensitySpec("uniform", {"low": -1.0, "high": 1.0})
    strict = scan_for_zeros(uniform, (0.0, 5.0), 0.01, floor=1e-20)
    loose = scan_for_zeros(uniform, (0.0, 5.0), 0.01, floor=1e-8)
    assert strict.candidates == loose.candidates
    assert loose.near_zero or not strict.near_zero


def test_scan_argument_validation():
    with pytest.raises(ConfigurationError):
        scan_for_zeros(_gaussian(), (1.0, -1.0))
    with pytest.raises(ConfigurationError):
        scan_for_zeros(_gaussian(), step=0.0)


# ==================== 非单射见证 ====================


def test_witness_vanishes_for_even_map():
    result = noninjective_witness(np.square, _gaussian(), [-1.0, 0.0, 1.0, 2.0], a=2.0)
    refined = noninjective_witness(np.square, _gaussian(), [-1.0, 0.0, 1.0, 2.0], a=2.0, panels=2 * result.panels)
    assert result.max_abs < 1e-8
    assert abs(refined.max_abs - result.max_abs) < 1e-10


def test_witness_detects_injective_map():
    result = noninjective_witness(lambda u: u, _gaussian(), [-1.0, 0.0, 1.0, 2.0], a=2.0)
    assert result.max_abs > 1e-3


def test_zero_witness_is_exactly_zero():
    result = noninjective_witness(np.square, _gaussian(), [0.0, 1.0], delta=np.zeros_like)
    assert result.max_abs == 0.0


def test_witness_argument_validation():
    with pytest.raises(ConfigurationError):
        noninjective_witness(np.square, _gaussian(), [0.0], a=0.0)
    with pytest.raises(ConfigurationError):
        noninjective_witness(np.square, _gaussian(), [0.0], panels=3)


# ==================== 目录与假设总检 ====================


def test_catalog_lookups():
    assert infinitely_divisible("Laplace") == "known_id"
    assert infinitely_divisible("uniform") == "unknown"
    assert cid_kernel("gaussian") == "known_cid"
    assert cid_kernel("exponential") == "unknown"


def test_spice_assumptions_benchmark_a():
    report = check_spice_assumptions(benchmark_mechanism("A"), t_range=(-5.0, 5.0), step=0.05)
    assert report["all_hold"]
    assert report["fourier_nonvanishing"]["status"] == "no_zero_found"


def test_spice_assumptions_highdim_catalog_only():
    report = check_spice_assumptions(benchmark_mechanism("D"))
    assert report["dims_ok"] == {"holds": True, "d": 3, "k": 2}
    assert report["full_column_rank"]["holds"]
    assert report["fourier_nonvanishing"]["holds"] is None
    assert report["all_hold"]


def test_spice_assumptions_fail_on_rank_and_dims():
    mech = ErrorMechanism.additive(NoiseDistribution.gaussian(), A=[[1.0, 1.0]])
    report = check_spice_assumptions(mech, t_range=(-2.0, 2.0), step=0.1)
    assert not report["dims_ok"]["holds"]
    assert not report["full_column_rank"]["holds"]
    assert not report["all_hold"]


def test_density_validation():
    with pytest.raises(ConfigurationError):
        DensitySpec("uniform", {"low": 1.0, "high": 1.0})
    with pytest.raises(ConfigurationError):
        DensitySpec("gaussian_mixture", {"weights": [0.5, 0.4], "locs": [0, 1], "scales": [1, 1]})
    with pytest.raises(ConfigurationError):
        DensitySpec("cauchy")
    with pytest.raises(ConfigurationError):
        DensitySpec.from_noise(NoiseDistribution.multivariate_gaussian([0.0, 0.0], np.eye(2)))


# ==================== check-mechanism 服务 ====================


def test_check_service_fourier_mode():
    result = CheckService().check_mechanism("fourier", density=_gaussian(), t_range=(-5.0, 5.0), step=0.05)
    assert result["mode"] == "fourier"
    assert max(p["abs_error"] for p in result["probes"]) < 1e-6
    assert result["scan"]["status"] == "no_zero_found"
    assert result["catalog"] == {"infinitely_divisible": "known_id", "cid_kernel": "known_cid"}


def test_check_service_witness_mode_from_mechanism():
    result = CheckService().check_mechanism("witness", mechanism=benchmark_mechanism("A"))
    assert result["max_abs"] < 1e-8
    assert result["refinement_change"] < 1e-10


def test_check_service_rank_mode():
    mech = ErrorMechanism.from_discrete(DiscreteMechanism([[0.5, 0.5], [0.5, 0.5]]))
    result = CheckService().check_mechanism("rank", mechanism=mech)
    assert result["kind"] == "discrete"
    assert result["status"] == "not_complete"


def test_check_service_errors():
    service = CheckService()
    with pytest.raises(ConfigurationError):
        service.check_mechanism("bogus", density=_gaussian())
    with pytest.raises(ConfigurationError):
        service.check_mechanism("fourier")
    with pytest.raises(ConfigurationError):
        service.check_mechanism("witness", density=_gaussian(), g="cube")

"""
CheckService - 误差机制与线性高斯模型的诊断服务
职责：check-mechanism (rank / fourier / witness) 与 linear-gaussian 两个子命令
"""

import logging
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np

from src.core.discrete import check_full_column_rank
from src.core.fourier import (
    DEFAULT_FLOOR,
    DEFAULT_PANELS,
    check_spice_assumptions,
    cid_kernel,
    gaussian_ft_magnitude,
    infinitely_divisible,
    noninjective_witness,
    numeric_ft,
    scan_for_zeros,
)
from src.core.linear_gaussian import (
    bias_term,
    corrected_estimator,
    empirical_moments,
    ols_coeff_adjust_u,
    ols_coeff_adjust_w,
    population_covariance,
    simulate_linear,
)
from src.model.density import DensitySpec
from src.model.errors import ConfigurationError, SpiceError
from src.model.linear import LinearScmParams
from src.model.scm import ErrorMechanism

logger = logging.getLogger(__name__)

CHECK_MODES = ("rank", "fourier", "witness")
# numeric_ft 与闭式对照的 t 取值
PROBE_T = (0.0, -0.5, 0.5, -1.0, 1.0, -2.0, 2.0, -5.0, 5.0)
WITNESS_MAPS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "square": np.square,
    "identity": lambda u: u,
}
DEFAULT_W_GRID = (-1.0, 0.0, 1.0, 2.0)


class CheckService:
    """诊断服务"""

    def __init__(self):
        self.stats = {"checks": 0}

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

    # ==================== check-mechanism ====================

    def check_mechanism(
        self,
        mode: str,
        density: Optional[DensitySpec] = None,
        mechanism: Optional[ErrorMechanism] = None,
        t_range=(-10.0, 10.0),
        step: float = 0.01,
        floor: float = DEFAULT_FLOOR,
        g: str = "square",
        a: float = 2.0,
        w_grid: Sequence[float] = DEFAULT_W_GRID,
        panels: int = DEFAULT_PANELS,
    ) -> Dict[str, Any]:
        """
        rank: 离散机制做满列秩检验，加性机制做四条假设的总检
        fourier: 数值傅里叶变换、闭式对照、零点扫描与目录归属
        witness: 偶函数 g 下的非单射反例积分
        """
        if mode not in CHECK_MODES:
            raise ConfigurationError(f"未知检验模式: {mode}，可选: {list(CHECK_MODES)}")
        self.stats["checks"] += 1
        self._log(f"🚀 check-mechanism --mode {mode}")

        try:
            if mode == "rank":
                result = self._rank(mechanism)
            else:
                density = self._density(density, mechanism)
                if mode == "fourier":
                    result = self._fourier(density, t_range, step, floor, panels)
                else:
                    result = self._witness(density, g, a, w_grid, panels)
        except SpiceError as e:
            self._log(f"❌ 检验失败: {e}", is_error=True)
            if self.on_error:
                self.on_error(e)
            raise

        result = {"mode": mode, **result}
        self._log("✅ 检验完成")
        if self.on_complete:
            self.on_complete(result)
        return result

    # ==================== linear-gaussian ====================

    def linear_gaussian(
        self,
        params: LinearScmParams,
        sigma_e: Optional[float] = None,
        n: Optional[int] = None,
        seed: int = 0,
    ) -> Dict[str, Any]:
        """
        总体矩上的三个系数与偏差分解；给出 n 时附带蒙特卡洛矩上的同一组量
        sigma_e 缺省取 params.var_e
        """
        var_e = params.var_e if sigma_e is None else float(sigma_e)
        self.stats["checks"] += 1
        self._log(f"🚀 linear-gaussian: σ²_E={var_e}")

        moments = population_covariance(params)
        result: Dict[str, Any] = {
            "params": params.to_dict(),
            "sigma_e": var_e,
            "population": {
                "moments": moments.to_dict(),
                **self._coefficients(moments, var_e),
                "bias_term": bias_term(params),
            },
        }
        if n is not None:
            if n < 2:
                raise ConfigurationError(f"蒙特卡洛样本量必须 ≥ 2: {n}")
            u, w, x, y = simulate_linear(params, n, seed)
            sample = empirical_moments(w, x, y, u)
            coefficients = self._coefficients(sample, var_e)
            result["monte_carlo"] = {
                "n": n,
                "seed": seed,
                "moments": sample.to_dict(),
                **coefficients,
                "bias_adjust_w": _difference(coefficients["adjust_w"], coefficients["adjust_u"]),
            }
        self._log("✅ linear-gaussian 完成")
        return result

    # ==================== 内部 ====================

    def _rank(self, mechanism: Optional[ErrorMechanism]) -> Dict[str, Any]:
        if mechanism is None:
            raise ConfigurationError("rank 模式需要误差机制文件（--mechanism）")
        if mechanism.kind == "discrete":
            return {"kind": "discrete", **check_full_column_rank(mechanism.discrete).to_dict()}
        return {"kind": "additive", **check_spice_assumptions(mechanism)}

    @staticmethod
    def _density(density: Optional[DensitySpec], mechanism: Optional[ErrorMechanism]) -> DensitySpec:
        if density is not None:
            return density
        if mechanism is not None and mechanism.kind == "additive":
            return DensitySpec.from_noise(mechanism.noise)
        raise ConfigurationError("fourier / witness 模式需要一维噪声密度（--density 或加性 --mechanism）")

    def _fourier(self, density: DensitySpec, t_range, step: float, floor: float, panels: int) -> Dict[str, Any]:
        probes = []
        for t in PROBE_T:
            value = numeric_ft(density, t, panels)
            probe = {"t": t, **value.to_dict()}
            if density.family == "gaussian":
                probe["closed_form"] = gaussian_ft_magnitude(t, float(density.params["scale"]))
                probe["abs_error"] = abs(abs(value.value) - probe["closed_form"])
            probes.append(probe)

        scan = scan_for_zeros(density, tuple(t_range), step, floor, panels)
        if scan.near_zero:
            self._log(f"⚠️ 在 t≈{scan.t_star:.6f} 处 |f̂| ≤ {floor:g}")
        return {
            "density": density.to_dict(),
            "probes": probes,
            "scan": scan.to_dict(),
            "catalog": {
                "infinitely_divisible": infinitely_divisible(density.family),
                "cid_kernel": cid_kernel(density.family),
            },
        }

    def _witness(self, density: DensitySpec, g: str, a: float, w_grid: Sequence[float], panels: int) -> Dict[str, Any]:
        if g not in WITNESS_MAPS:
            raise ConfigurationError(f"未知映射 g: {g}，可选: {list(WITNESS_MAPS)}")
        coarse = noninjective_witness(WITNESS_MAPS[g], density, w_grid, a=a, panels=panels)
        fine = noninjective_witness(WITNESS_MAPS[g], density, w_grid, a=a, panels=2 * panels)
        return {
            "density": density.to_dict(),
            "g": g,
            "a": a,
            "witness": "sign",
            **coarse.to_dict(),
            "refined_max_abs": fine.max_abs,
            "refinement_change": abs(fine.max_abs - coarse.max_abs),
        }

    @staticmethod
    def _coefficients(moments, var_e: float) -> Dict[str, Optional[float]]:
        out: Dict[str, Any] = {
            "adjust_u": ols_coeff_adjust_u(moments) if moments.has_confounder else None,
            "adjust_w": ols_coeff_adjust_w(moments),
        }
        try:
            out["corrected"] = corrected_estimator(moments, var_e)
        except SpiceError as e:
            out["corrected"] = None
            out["corrected_error"] = {"type": type(e).__name__, "message": str(e)}
        return out

    def _log(self, message: str, is_error: bool = False):
        """日志输出（带回调）"""
        callback = getattr(self, "on_progress", None)
        if callback:
            callback(message)
        elif is_error:
            logger.error(message)
        else:
            logger.info(message)


def _difference(a: Optional[float], b: Optional[float]) -> Optional[float]:
    if a is None or b is None:
        return None
    return a - b

"""
BenchService - 模拟 / 基准测试 / 导入 / 报告合并
职责：调用 DAO 与 core 引擎，按 (方法, 重复) 网格并行运行，每个格子独立播种
"""

import logging
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import scipy
from joblib import Parallel, delayed
from tqdm import tqdm

from src.core.adjustment import MIN_ROWS, mse_eval
from src.core.benchmarks import approx_head_init, benchmark_mechanism, benchmark_spec
from src.core.rng import stream
from src.core.simulator import sample_dataset
from src.dao.dataset_dao import DatasetDAO
from src.dao.mechanism_dao import MechanismDAO
from src.dao.output_writer import OutputWriter
from src.model.config import RunConfig
from src.model.dataset import Dataset
from src.model.errors import ConfigurationError, MergeError, SpiceError
from src.model.report import BenchReport, MethodSummary
from src.model.scm import BenchmarkId, ErrorMechanism
from src.service.estimation_service import EstimationService

logger = logging.getLogger(__name__)

REPORT_JSON = "bench_report.json"
SUMMARY_CSV = "bench_summary.csv"
PER_SEED_CSV = "bench_per_seed.csv"
MERGED_CSV = "merged_per_seed.csv"
COMPARISON_CSV = "comparison.csv"
# 写进报告的单元格附加信息
CELL_EXTRAS = ("final_energy_loss", "learned_noise", "adjustment_width", "final_loss")


def run_cell(
    cfg: RunConfig,
    method: str,
    rep: int,
    data: Optional[Dataset] = None,
    mechanism: Optional[ErrorMechanism] = None,
) -> Dict[str, Any]:
    """
    单个 (方法, 重复) 格子，种子为 seed + rep
    基准模式: 重新采样训练/测试集，对真值因果函数评估
    CSV 模式: 按种子切分 data，参照函数取训练集上的 Adj.-U 估计
    任何异常都记为该格子的错误条目，不向外抛出
    """
    seed = cfg.seed + rep
    cell: Dict[str, Any] = {"method": method, "rep": rep, "seed": seed, "mse": None, "extras": {}, "error": None}
    try:
        est_cfg = cfg.estimation_config(method).seeded(seed)
        service = EstimationService()

        if cfg.benchmark is not None:
            bid = BenchmarkId.parse(cfg.benchmark)
            spec = benchmark_spec(bid)
            train = sample_dataset(spec, cfg.n_train, seed, "train")
            test = sample_dataset(spec, cfg.n_test, seed, "test")
            mechanism = benchmark_mechanism(bid)
            if method == "spice_net_approx" and est_cfg.head_init is None:
                est_cfg = est_cfg.model_copy(update={"head_init": approx_head_init(bid)})
            reference: Any = bid
        else:
            train, test = split_dataset(data, cfg.n_test, seed)
            ref_cfg = cfg.estimation_config("adj_u").seeded(seed)
            reference = service.estimate("adj_u", train, None, ref_cfg).evaluate

        est = service.estimate(method, train, mechanism, est_cfg)
        cell["mse"] = mse_eval(est, reference, test.x)
        cell["extras"] = {k: est.extras[k] for k in CELL_EXTRAS if k in est.extras}
    except SpiceError as e:
        cell["error"] = _cell_error(rep, seed, e)
    except Exception as e:  # noqa: BLE001
        logger.exception("❌ %s rep=%d 出现意外异常", method, rep)
        cell["error"] = {**_cell_error(rep, seed, e), "unexpected": True}
    return cell


def _cell_error(rep: int, seed: int, error: Exception) -> Dict[str, Any]:
    return {"rep": rep, "seed": seed, "type": type(error).__name__, "message": str(error)}


def split_dataset(data: Optional[Dataset], n_test: int, seed: int):
    """按 (seed, "split") 随机流打乱行，前 n_test 行为测试集"""
    if data is None:
        raise ConfigurationError("CSV 模式缺少数据集")
    if data.n - n_test < MIN_ROWS:
        raise ConfigurationError(f"数据只有 {data.n} 行，扣除 n_test={n_test} 后训练集不足 {MIN_ROWS} 行")
    order = stream(seed, "split").permutation(data.n)
    return data.subset(np.sort(order[n_test:])), data.subset(np.sort(order[:n_test]))


class BenchService:
    """基准测试服务"""

    def __init__(self):
        self.stats = {"cells": 0, "failed_cells": 0, "files": 0}

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

    # ==================== simulate ====================

    def simulate(self, cfg: RunConfig) -> List[Path]:
        """每个重复写出训练/测试 CSV 与 manifest，种子为 seed + rep"""
        if cfg.benchmark is None:
            raise ConfigurationError("simulate 需要 benchmark")
        bid = BenchmarkId.parse(cfg.benchmark)
        spec = benchmark_spec(bid)
        out_dir = cfg.output_dir_path
        self._log(f"🚀 模拟 {bid.value}: {cfg.repetitions} 次重复, n_train={cfg.n_train}, n_test={cfg.n_test}")

        paths = []
        for rep in range(cfg.repetitions):
            seed = cfg.seed + rep
            for split, n in (("train", cfg.n_train), ("test", cfg.n_test)):
                data = sample_dataset(spec, n, seed, split)
                path = out_dir / f"{bid.value}_rep{rep:03d}_{split}.csv"
                extra = {"benchmark": bid.value, "repetition": rep, "spec": spec.to_dict()}
                paths.append(DatasetDAO.save(data, path, extra))
                self._log(f"   📄 {path.name}")
        self.stats["files"] += len(paths)
        self._log(f"✅ 写出 {len(paths)} 个数据文件")
        return paths

    # ==================== bench ====================

    def bench(self, cfg: RunConfig) -> BenchReport:
        """
        (方法, 重复) 网格并行运行；joblib 保持提交顺序，汇总是单线程归约
        报告 JSON 与并行度无关（wall_clock_seconds 除外）
        """
        data, mechanism, name = self._bench_inputs(cfg)
        cells = [(method, rep) for method in cfg.methods for rep in range(cfg.repetitions)]
        self._log(f"🚀 基准测试 {name}: {len(cfg.methods)} 个方法 × {cfg.repetitions} 次重复")

        start = time.perf_counter()
        iterator = cells if self.on_progress else tqdm(cells, desc=name, unit="cell")
        results = Parallel(n_jobs=cfg.n_jobs)(
            delayed(run_cell)(cfg, method, rep, data, mechanism) for method, rep in iterator
        )
        elapsed = time.perf_counter() - start

        report = BenchReport(
            benchmark=name,
            n_train=cfg.n_train,
            n_test=cfg.n_test,
            repetitions=cfg.repetitions,
            seed=cfg.seed,
            config_hash=cfg.config_hash(),
            environment=environment(),
            wall_clock_seconds=elapsed,
        )
        for method in cfg.methods:
            report.methods[method] = MethodSummary(method)
        for cell in results:
            summary = report.methods[cell["method"]]
            summary.per_seed.append(cell["mse"])
            summary.seeds.append(cell["seed"])
            summary.extras.append(cell["extras"])
            if cell["error"] is not None:
                summary.errors.append(cell["error"])
                self.stats["failed_cells"] += 1
                self._log(f"⚠️ {cell['method']} rep={cell['rep']}: {cell['error']['message']}", is_error=True)
        self.stats["cells"] += len(results)

        writer = OutputWriter(cfg.output_dir_path)
        writer.write_json(REPORT_JSON, report.to_dict())
        writer.write_csv(SUMMARY_CSV, report.summary_rows())
        writer.write_csv(PER_SEED_CSV, report.per_seed_rows())
        self.stats["files"] += writer.get_stats()["total"]

        for row in report.summary_rows():
            self._log(f"   {row['method']}: median MSE {row['median_mse']}, sd {row['sd_mse']}")
        self._log(f"✅ 基准测试完成，用时 {elapsed:.1f}s")
        if self.on_complete:
            self.on_complete(report.to_dict())
        return report

    # ==================== ingest ====================

    def ingest(
        self,
        path: Union[str, Path],
        schema: Optional[Dict[str, Any]] = None,
        out: Optional[Union[str, Path]] = None,
    ) -> Dataset:
        """校验外部 CSV；给出 out 时按本项目格式写出（附 manifest）"""
        data = DatasetDAO.load(path, schema)
        self._log(f"📂 导入 {Path(path).name}: n={data.n}, d={data.d}, p={data.p}, k={data.k}")
        if out is not None:
            DatasetDAO.save(data, out, {"ingested_from": Path(path).name})
            self.stats["files"] += 1
            self._log(f"✅ 写出 {Path(out).name}")
        return data

    # ==================== report ====================

    def report(self, paths: Sequence[Union[str, Path]], out_dir: Union[str, Path]) -> Dict[str, Any]:
        """
        合并多个 bench_report.json: 逐种子长表 (供外部作图) 与方法对比表
        benchmark 或 n_test 不一致时报 MergeError
        """
        if not paths:
            raise ConfigurationError("report 至少需要一个报告文件")
        reports = []
        for path in paths:
            try:
                reports.append((Path(path), BenchReport.create(OutputWriter.read_json(path))))
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigurationError(f"报告文件格式错误: {path}\n错误: {e}") from e

        first = reports[0][1]
        for path, rep in reports[1:]:
            if rep.benchmark != first.benchmark or rep.n_test != first.n_test:
                raise MergeError(
                    f"报告不兼容: {path.name} ({rep.benchmark}, n_test={rep.n_test}) "
                    f"与 ({first.benchmark}, n_test={first.n_test})"
                )

        merged, comparison = [], []
        for path, rep in reports:
            merged.extend({"report": path.stem, **row} for row in rep.per_seed_rows())
            comparison.extend({"report": path.stem, "n_train": rep.n_train, **row} for row in rep.summary_rows())

        writer = OutputWriter(Path(out_dir))
        merged_path = writer.write_csv(MERGED_CSV, merged)
        comparison_path = writer.write_csv(COMPARISON_CSV, comparison)
        self.stats["files"] += 2
        self._log(f"✅ 合并 {len(reports)} 个报告，共 {len(merged)} 行")
        return {
            "reports": [str(p) for p, _ in reports],
            "rows": len(merged),
            "merged": str(merged_path),
            "comparison": str(comparison_path),
        }

    # ==================== 内部 ====================

    def _bench_inputs(self, cfg: RunConfig):
        if cfg.benchmark is not None:
            return None, None, BenchmarkId.parse(cfg.benchmark).value

        data = DatasetDAO.load(cfg.data_path)
        if data.treatment_kind != cfg.treatment_kind:
            if cfg.treatment_kind == "binary" and not np.all(np.isin(data.x, (0.0, 1.0))):
                raise ConfigurationError("treatment_kind=binary，但处理列不全是 0/1")
            data = replace(data, treatment_kind=cfg.treatment_kind)
        mechanism = MechanismDAO.load(cfg.mechanism_path) if cfg.mechanism_path else None
        return data, mechanism, Path(cfg.data_path).stem

    def _log(self, message: str, is_error: bool = False):
        """日志输出（带回调）"""
        callback = getattr(self, "on_progress", None)
        if callback:
            callback(message)
        elif is_error:
            logger.warning(message)
        else:
            logger.info(message)


def environment() -> Dict[str, str]:
    """报告中的运行环境记录（不含主机名与时间）"""
    return {
        "python": sys.version.split()[0],
        "platform": platform.system(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }

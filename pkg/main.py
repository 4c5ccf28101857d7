"""
spice-proxy 命令行入口
子命令: simulate / bench / estimate / ingest / report / check-mechanism / linear-gaussian
结果 JSON 写到 stdout，日志写到 stderr
退出码: 0 成功, 2 配置错误, 3 数据错误, 4 数值失败
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from src.core.adjustment import ace
from src.dao.config_dao import ConfigDAO
from src.dao.dataset_dao import DatasetDAO
from src.dao.mechanism_dao import MechanismDAO
from src.dao.model_dao import ModelDAO
from src.dao.output_writer import OutputWriter, json_safe
from src.model.config import METHODS, RunConfig
from src.model.errors import ConfigurationError, SpiceError
from src.model.estimate import CausalEstimate, grid_points
from src.model.linear import LinearScmParams
from src.service.bench_service import BenchService
from src.service.check_service import CHECK_MODES, WITNESS_MAPS, CheckService
from src.service.estimation_service import EstimationService

logger = logging.getLogger("spice")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spice", description="单代理因果效应识别与估计")
    parser.add_argument("-v", "--verbose", action="store_true", help="输出 DEBUG 日志")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="生成基准数据集的训练/测试 CSV")
    p.add_argument("--config", help="RunConfig JSON")
    p.add_argument("--benchmark", help="A_gaussian / B_binary / C_exponential / D_highdim")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--reps", type=int, dest="repetitions")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="output_dir")

    p = sub.add_parser("bench", help="按 (方法, 重复) 网格运行基准测试")
    p.add_argument("--config", help="RunConfig JSON")
    p.add_argument("--benchmark")
    p.add_argument("--data", dest="data_path", help="外部 CSV（替代 benchmark）")
    p.add_argument("--mechanism", dest="mechanism_path")
    p.add_argument("--methods", nargs="+")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--reps", type=int, dest="repetitions")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-jobs", type=int)
    p.add_argument("--out", dest="output_dir")

    p = sub.add_parser("estimate", help="在单个数据集上估计因果函数")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--data", help="观测数据 CSV")
    p.add_argument("--joint", help="长格式 p(W, X, Y) 联合表 CSV（仅 discrete_matrix_adjust）")
    p.add_argument("--mechanism", help="误差机制 JSON")
    p.add_argument("--calibration", help="校准读数 CSV，据此构造高斯误差机制")
    p.add_argument("--config", help="EstimationConfig JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="结果 JSON 的写出路径")
    p.add_argument("--save-model", help="保存训练好的生成网络")
    p.add_argument("--load-model", help="加载已保存的生成网络，跳过第一步训练")
    p.add_argument("--save-joint", help="保存矩阵调整恢复的 p(U, X, Y) 联合表 CSV")

    p = sub.add_parser("ingest", help="校验外部 CSV")
    p.add_argument("path")
    p.add_argument("--schema", help="列映射 JSON: {w: [...], x: [...], y: ..., u: [...]}")
    p.add_argument("--out", help="以本项目格式写出（附 manifest）")

    p = sub.add_parser("report", help="合并多个基准测试报告")
    p.add_argument("paths", nargs="*")
    p.add_argument("--out", default=".")

    p = sub.add_parser("check-mechanism", help="误差机制诊断")
    p.add_argument("--density", help="一维噪声密度 JSON")
    p.add_argument("--mechanism", help="误差机制 JSON")
    p.add_argument("--mode", required=True, choices=CHECK_MODES)
    p.add_argument("--t-min", type=float, default=-10.0)
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--floor", type=float, default=1e-8)
    p.add_argument("--g", default="square", choices=sorted(WITNESS_MAPS))
    p.add_argument("--a", type=float, default=2.0)
    p.add_argument("--w-grid", type=float, nargs="+", default=[-1.0, 0.0, 1.0, 2.0])

    p = sub.add_parser("linear-gaussian", help="线性高斯模型的系数与偏差分解")
    p.add_argument("--params", help="LinearScmParams JSON（缺省全 1）")
    p.add_argument("--sigma-e", type=float)
    p.add_argument("--n", type=int, help="蒙特卡洛样本量")
    p.add_argument("--seed", type=int, default=0)
    return parser


# ==================== 子命令 ====================


def cmd_simulate(args) -> Dict[str, Any]:
    cfg = _run_config(args)
    paths = BenchService().simulate(cfg)
    return {"files": [str(p) for p in paths], "config_hash": cfg.config_hash()}


def cmd_bench(args) -> Dict[str, Any]:
    cfg = _run_config(args)
    report = BenchService().bench(cfg)
    return {"report": str(Path(cfg.output_dir) / "bench_report.json"), "summary": report.summary_rows()}


def cmd_estimate(args) -> Dict[str, Any]:
    if args.mechanism and args.calibration:
        raise ConfigurationError("--mechanism 与 --calibration 只能给一个")
    if bool(args.data) == bool(args.joint):
        raise ConfigurationError("--data 与 --joint 必须且只能给一个")
    mechanism = None
    if args.mechanism:
        mechanism = MechanismDAO.load(args.mechanism)
    elif args.calibration:
        mechanism = MechanismDAO.load_calibration(args.calibration)
    if args.joint:
        return _estimate_joint(args, mechanism)

    data = DatasetDAO.load(args.data)
    cfg = ConfigDAO.load_estimation(args.config)
    if args.seed is not None:
        cfg = cfg.seeded(args.seed)
    generator = ModelDAO.load(args.load_model) if args.load_model else None

    service = EstimationService()
    est = service.estimate(args.method, data, mechanism, cfg, generator)
    result = {"method": args.method, "data": str(args.data), **est.to_dict(_grid(est, data.x, cfg.grid_size))}
    # 离散矩阵调整只在观测到的处理水平上有定义
    if est.p == 1 and (args.method != "discrete_matrix_adjust" or est.treatment_kind == "binary"):
        result["ace"] = ace(est, data, cfg.ace_step).to_dict()

    if args.save_model:
        if service.last_generator is None:
            raise ConfigurationError(f"方法 {args.method} 没有生成网络可保存")
        result["model"] = str(ModelDAO.save(service.last_generator, args.save_model))
    _save_joint(args, service, result)
    _write_result(args.out, result)
    return result


def cmd_ingest(args) -> Dict[str, Any]:
    schema = ConfigDAO.load_json(args.schema) if args.schema else None
    data = BenchService().ingest(args.path, schema, args.out)
    return {"rows": data.n, "dims": {"d": data.d, "p": data.p, "k": data.k}, "columns": data.column_names()}


def cmd_report(args) -> Dict[str, Any]:
    return BenchService().report(args.paths, args.out)


def cmd_check_mechanism(args) -> Dict[str, Any]:
    density = MechanismDAO.load_density(args.density) if args.density else None
    mechanism = MechanismDAO.load(args.mechanism) if args.mechanism else None
    return CheckService().check_mechanism(
        args.mode,
        density=density,
        mechanism=mechanism,
        t_range=(args.t_min, args.t_max),
        step=args.step,
        floor=args.floor,
        g=args.g,
        a=args.a,
        w_grid=args.w_grid,
    )


def cmd_linear_gaussian(args) -> Dict[str, Any]:
    params = LinearScmParams.create(ConfigDAO.load_json(args.params)) if args.params else LinearScmParams()
    return CheckService().linear_gaussian(params, args.sigma_e, args.n, args.seed)


COMMANDS = {
    "simulate": cmd_simulate,
    "bench": cmd_bench,
    "estimate": cmd_estimate,
    "ingest": cmd_ingest,
    "report": cmd_report,
    "check-mechanism": cmd_check_mechanism,
    "linear-gaussian": cmd_linear_gaussian,
}


# ==================== 辅助 ====================


def _run_config(args) -> RunConfig:
    """配置文件 ← 命令行参数（命令行优先）"""
    raw: Dict[str, Any] = {}
    if args.config:
        raw = ConfigDAO.load_run(args.config).to_dict()
    for key in ("benchmark", "data_path", "mechanism_path", "methods", "n_train", "n_test",
                "repetitions", "seed", "n_jobs", "output_dir"):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if getattr(args, "data_path", None) is not None:
        raw["benchmark"] = None
    elif getattr(args, "benchmark", None) is not None:
        raw["data_path"] = None
    return RunConfig.from_dict(raw)


def _estimate_joint(args, mechanism) -> Dict[str, Any]:
    """联合表输入: 只支持矩阵调整"""
    if args.method != "discrete_matrix_adjust":
        raise ConfigurationError("--joint 只能用于 discrete_matrix_adjust")
    joint = MechanismDAO.load_joint(args.joint)
    service = EstimationService()
    est = service.estimate_from_joint(joint, mechanism)
    levels = np.asarray(joint.x_labels, dtype=float)
    result = {"method": args.method, "joint": str(args.joint), **est.to_dict(levels)}
    if est.treatment_kind == "binary":
        theta = est.evaluate([0.0, 1.0])
        result["ace"] = {"value": float(theta[1] - theta[0]), "extrapolated": False}
    _save_joint(args, service, result)
    _write_result(args.out, result)
    return result


def _save_joint(args, service: EstimationService, result: Dict[str, Any]) -> None:
    if not args.save_joint:
        return
    if service.last_joint is None:
        raise ConfigurationError(f"方法 {args.method} 没有恢复的联合表可保存")
    result["joint_u"] = str(MechanismDAO.save_joint(service.last_joint, args.save_joint))


def _write_result(out: Optional[str], result: Dict[str, Any]) -> None:
    if out:
        path = Path(out)
        OutputWriter(path.parent).write_json(path.name, result)


def _grid(est: CausalEstimate, observed_x: np.ndarray, size: int) -> Optional[np.ndarray]:
    if est.p != 1:
        return None
    if est.provenance.get("method") == "discrete_matrix_adjust":
        return np.unique(observed_x)
    if est.treatment_kind == "binary":
        return np.array([0.0, 1.0])
    return grid_points(est.x_low, est.x_high, size)


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        result = COMMANDS[args.command](args)
    except SpiceError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"❌ 文件读写失败: {e}")
        return 3
    print(json.dumps(json_safe(result), ensure_ascii=False, indent=2, allow_nan=False))
    return 0


if __name__ == "__main__":
    sys.exit(main())

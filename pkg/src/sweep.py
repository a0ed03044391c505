"""
参数扫描模块

在平均场、精确与半经典引擎上做 Λ × N 扫描。每个 (Λ, N, 方法) 网格点是
进程池中的独立任务；单点失败记录在结果中，不中断整个扫描。
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import bisect

from src import __version__
from src.heuristics import (
    lambda_critical,
    zbar_closed_form,
    zbar_mc_average,
    zbar_meanfield_closed,
)
from src.manybody import exact_trajectory, exact_zbar
from src.meanfield import IntegratorConfig, integrate_gpe, meanfield_zbar
from src.models import (
    BASIS_ORDERING,
    DimerParams,
    DimerTrapError,
    MeanFieldState,
    TimeSeries,
)


logger = logging.getLogger(__name__)


THREADS_ENV = "DIMER_TRAP_THREADS"


class SweepValidationError(DimerTrapError, ValueError):
    """扫描配置无效或结果无法比较"""
    pass


class Method(str, Enum):
    """z̄ 的计算方法，值即命令行与输出文件中的名称"""

    MEANFIELD_NUMERIC = "meanfield-numeric"
    MEANFIELD_CLOSED = "meanfield-closed"
    EXACT_QUANTUM = "exact-quantum"
    SEMICLASSICAL_CLOSED = "semiclassical-closed"
    SEMICLASSICAL_MC = "semiclassical-mc"

    @property
    def needs_particle_number(self) -> bool:
        return self not in (Method.MEANFIELD_NUMERIC, Method.MEANFIELD_CLOSED)

    @property
    def is_semiclassical(self) -> bool:
        return self in (Method.SEMICLASSICAL_CLOSED, Method.SEMICLASSICAL_MC)


def parse_methods(names: Iterable[str]) -> Tuple[Method, ...]:
    methods = []
    for name in names:
        try:
            methods.append(Method(name.strip()))
        except ValueError:
            valid = ", ".join(m.value for m in Method)
            raise SweepValidationError(f"unknown method '{name}' (valid: {valid})") from None
    return tuple(methods)


@dataclass(frozen=True)
class SweepConfig:
    """
    Λ × N × 方法网格

    Attributes:
        lambda_grid: 严格递增的 Λ 值
        n_list: 粒子数（为空时只跑平均场）
        window: 平均窗口（以 t0 为单位）
        methods: 要运行的引擎
        seed: Monte-Carlo 网格点的基础种子
        samples: 每个网格点的 Monte-Carlo 样本数
        dt_fraction: GPE 步长（以 t0 为单位）
        dt_sample: 采样间隔（以 t0 为单位）
        J: 隧穿率（ħ = 1）
        threads: 进程池大小上限（None 时取环境变量或 CPU 数）
        name: 日志与输出头部使用的名称
    """
    lambda_grid: Tuple[float, ...]
    n_list: Tuple[int, ...] = ()
    window: Tuple[float, float] = (0.0, 100.0)
    methods: Tuple[Method, ...] = (Method.MEANFIELD_NUMERIC, Method.MEANFIELD_CLOSED)
    seed: int = 0
    samples: int = 1_000_000
    dt_fraction: float = 1e-3
    dt_sample: float = 1e-2
    J: float = 1.0
    threads: Optional[int] = None
    name: str = "sweep"

    def __post_init__(self) -> None:
        object.__setattr__(self, "lambda_grid", tuple(float(x) for x in self.lambda_grid))
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "window", tuple(float(x) for x in self.window))
        object.__setattr__(self, "methods", parse_methods(self.methods))

    def validate(self) -> None:
        """
        验证配置

        Raises:
            SweepValidationError: 列出全部问题
        """
        errors = []
        if not self.lambda_grid:
            errors.append("lambda_grid must not be empty")
        elif any(b <= a for a, b in zip(self.lambda_grid, self.lambda_grid[1:])):
            errors.append("lambda_grid must be strictly increasing")
        if any(not math.isfinite(x) or x < 0 for x in self.lambda_grid):
            errors.append("lambda_grid values must be finite and non-negative")
        if len(self.window) != 2 or self.window[0] < 0 or self.window[1] <= self.window[0]:
            errors.append(f"window must satisfy 0 <= start < end, got {self.window}")
        if not self.methods:
            errors.append("at least one method is required")
        if any(n < 1 for n in self.n_list):
            errors.append("particle numbers must be >= 1")
        if any(m.needs_particle_number for m in self.methods) and not self.n_list:
            errors.append("exact and semiclassical methods need a non-empty n_list")
        if not self.J > 0:
            errors.append("J must be positive")
        if not 0 < self.dt_sample <= 0.02:
            errors.append("dt_sample must lie in (0, 1/50] (units of t0)")
        if not 0 < self.dt_fraction <= self.dt_sample:
            errors.append("dt_fraction must be positive and not exceed dt_sample")
        if self.samples < 10_000 and Method.SEMICLASSICAL_MC in self.methods:
            errors.append("samples must be >= 10000")
        if errors:
            raise SweepValidationError("; ".join(errors))

    def metadata(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "lambda_grid": ",".join(_fmt(x) for x in self.lambda_grid),
            "n_list": ",".join(str(n) for n in self.n_list),
            "methods": ",".join(m.value for m in self.methods),
            "window": f"{_fmt(self.window[0])},{_fmt(self.window[1])}",
            "seed": self.seed,
            "samples": self.samples,
            "dt": _fmt(self.dt_fraction),
            "dt_sample": _fmt(self.dt_sample),
            "J": _fmt(self.J),
            "basis": BASIS_ORDERING,
            "code_version": __version__,
        }


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class SweepCell:
    """单个 (Λ, N, 方法) 结果；平均场方法的 N 为 None"""
    lam: float
    N: Optional[int]
    method: Method
    zbar: float = math.nan
    err: Optional[float] = None
    status: str = "ok"
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SweepResult:
    cells: List[SweepCell]
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def failed(self) -> List[SweepCell]:
        return [c for c in self.cells if not c.ok]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "lambda": [c.lam for c in self.cells],
                "N": pd.array([c.N for c in self.cells], dtype="Int64"),
                "method": [c.method.value for c in self.cells],
                "zbar": [c.zbar for c in self.cells],
                "err": [np.nan if c.err is None else c.err for c in self.cells],
                "status": [c.status for c in self.cells],
                "message": [c.message for c in self.cells],
            }
        )

    def select(self, method: Method, N: Optional[int] = None) -> List[SweepCell]:
        return [c for c in self.cells if c.method == method and (N is None or c.N == N)]


@dataclass(frozen=True)
class _CellTask:
    index: int
    lam: float
    N: Optional[int]
    method: Method
    window: Tuple[float, float]
    J: float
    seed: int
    samples: int
    dt_fraction: float
    dt_sample: float


def _compute_cell(task: _CellTask) -> SweepCell:
    """计算一个网格点；数值与参数错误转为错误记录"""
    try:
        zbar, err = _evaluate(task)
        lower = 0.0 if task.method.is_semiclassical else -1.0
        if not (lower - 1e-12 <= zbar <= 1.0 + 1e-12):
            raise ArithmeticError(f"zbar={zbar} outside [{lower}, 1]")
        return SweepCell(task.lam, task.N, task.method, zbar=zbar, err=err)
    except (DimerTrapError, ArithmeticError, ValueError) as e:
        return SweepCell(
            task.lam, task.N, task.method, status="error", message=f"{type(e).__name__}: {e}"
        )


def _evaluate(task: _CellTask) -> Tuple[float, Optional[float]]:
    method = task.method
    if method == Method.MEANFIELD_CLOSED:
        return zbar_meanfield_closed(task.lam), None
    if method == Method.SEMICLASSICAL_CLOSED:
        return zbar_closed_form(task.lam, task.N), None
    if method == Method.SEMICLASSICAL_MC:
        estimate = zbar_mc_average(task.lam, task.N, task.samples, seed=[task.seed, task.index])
        return estimate.mean, estimate.stderr

    params = DimerParams.from_lambda(task.lam, N=task.N or 2, J=task.J)
    t0 = params.t0()
    window = (task.window[0] * t0, task.window[1] * t0)
    if method == Method.MEANFIELD_NUMERIC:
        cfg = IntegratorConfig.for_params(
            params,
            t_end=window[1],
            dt_fraction=task.dt_fraction,
            sample_fraction=task.dt_sample,
        )
        return meanfield_zbar(params, window, cfg), None
    if method == Method.EXACT_QUANTUM:
        return exact_zbar(params, window, dt_sample=task.dt_sample * t0), None
    raise SweepValidationError(f"unhandled method {method}")


def build_tasks(cfg: SweepConfig) -> List[_CellTask]:
    """按 Λ、方法、N 的顺序展开网格；平均场方法每个 Λ 只占一个网格点"""
    tasks = []
    for lam in cfg.lambda_grid:
        for method in cfg.methods:
            n_values: Sequence[Optional[int]] = cfg.n_list if method.needs_particle_number else (None,)
            for N in n_values:
                tasks.append(
                    _CellTask(
                        index=len(tasks),
                        lam=lam,
                        N=N,
                        method=method,
                        window=cfg.window,
                        J=cfg.J,
                        seed=cfg.seed,
                        samples=cfg.samples,
                        dt_fraction=cfg.dt_fraction,
                        dt_sample=cfg.dt_sample,
                    )
                )
    return tasks


def resolve_workers(threads: Optional[int] = None) -> int:
    """进程池大小：显式值优先，其次 DIMER_TRAP_THREADS，最后 CPU 数"""
    if threads is None:
        env = os.getenv(THREADS_ENV, "").strip()
        if env:
            try:
                threads = int(env)
            except ValueError:
                logger.warning(f"忽略非整数的 {THREADS_ENV}={env!r}")
    if threads is None:
        threads = os.cpu_count() or 1
    return max(1, int(threads))


def run_sweep(cfg: SweepConfig) -> SweepResult:
    """
    计算 ``cfg`` 中的每个 (Λ, N, 方法) 网格点

    Args:
        cfg: 扫描配置

    Returns:
        SweepResult: 全部网格点结果（含错误记录）与元数据

    Raises:
        SweepValidationError: 配置无效时
    """
    cfg.validate()
    tasks = build_tasks(cfg)
    workers = min(resolve_workers(cfg.threads), len(tasks))
    logger.info(f"扫描 '{cfg.name}'：{len(tasks)} 个网格点，{workers} 个进程")

    cells: List[SweepCell] = []
    if workers == 1:
        results: Iterable[SweepCell] = map(_compute_cell, tasks)
        cells = [_log_cell(cell, i, len(tasks)) for i, cell in enumerate(results)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_compute_cell, tasks, chunksize=1)
            cells = [_log_cell(cell, i, len(tasks)) for i, cell in enumerate(results)]

    failed = sum(1 for c in cells if not c.ok)
    if failed:
        logger.warning(f"扫描 '{cfg.name}'：{len(cells)} 个网格点中 {failed} 个失败")
    return SweepResult(cells=cells, metadata=cfg.metadata())


def _log_cell(cell: SweepCell, i: int, total: int) -> SweepCell:
    label = f"[{i + 1}/{total}] Λ={cell.lam:.4g} N={cell.N if cell.N is not None else '-'} {cell.method.value}"
    if cell.ok:
        logger.info(f"{label}: zbar={cell.zbar:.6f}")
    else:
        logger.error(f"{label}: {cell.message}")
    return cell


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryRecord:
    method: Method
    params: DimerParams
    series: TimeSeries
    metadata: Dict[str, Any] = field(default_factory=dict)

    def windowed(self, end_in_t0: float) -> TimeSeries:
        return self.series.window(self.series.t_start, end_in_t0 * self.params.t0())


def run_trajectory(
    params: DimerParams,
    t_end: float,
    method: Method,
    dt_sample: Optional[float] = None,
    dt_fraction: float = 1e-3,
) -> TrajectoryRecord:
    """
    从全左初态出发在 [0, t_end] 上的 z(t)

    实际使用的 GPE 步长以 t0 为单位写入元数据，按输出头部重跑时从该步长开始。

    Args:
        params: 物理参数
        t_end: 终止时间（绝对单位）
        method: meanfield-numeric 或 exact-quantum
        dt_sample: 采样间隔（绝对单位），默认 t0/100
        dt_fraction: GPE 初始步长（以 t0 为单位）

    Returns:
        TrajectoryRecord: 轨迹及其元数据

    Raises:
        SweepValidationError: 方法不支持轨迹时
    """
    method = Method(method)
    t0 = params.t0()
    if dt_sample is None:
        dt_sample = t0 / 100.0
    if method == Method.MEANFIELD_NUMERIC:
        cfg = IntegratorConfig.for_params(
            params, t_end=t_end, dt_fraction=dt_fraction, sample_fraction=dt_sample / t0
        )
        trajectory = integrate_gpe(MeanFieldState.all_left(), params, cfg)
        series = trajectory.z
        extra: Dict[str, Any] = {"dt": _fmt(trajectory.dt_used / t0), "halvings": trajectory.halvings}
    elif method == Method.EXACT_QUANTUM:
        series = exact_trajectory(params, t_end=t_end, dt_sample=dt_sample)
        extra = {"basis": BASIS_ORDERING}
    else:
        raise SweepValidationError(f"trajectories need meanfield-numeric or exact-quantum, got {method.value}")

    metadata = {
        "method": method.value,
        **{k: _fmt(v) if isinstance(v, float) else v for k, v in params.to_dict().items()},
        "t_end": _fmt(t_end / t0),
        "dt_sample": _fmt(series.dt / t0),
        "code_version": __version__,
        **extra,
    }
    logger.info(
        f"轨迹 {method.value} Λ={params.scaled_interaction():.4g} N={params.N}："
        f"{len(series)} 个采样点，最小 z={series.minimum():.4f}"
    )
    return TrajectoryRecord(method=method, params=params, series=series, metadata=metadata)


# ---------------------------------------------------------------------------
# Critical interaction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalCurveRow:
    """临界曲线的一行；无法计算的量为 NaN，原因写在 error"""
    N: float
    lambda_alpha: float
    asymptote: float
    crossing: float = math.nan
    error: str = ""


def run_lambda_critical_curve(
    N_grid: Sequence[float],
    alpha: float,
    bracket: Tuple[float, float] = (0.01, 10.0),
) -> List[CriticalCurveRow]:
    """
    在 ``N_grid`` 上计算 Λ_α，并用二分法求 z̄_closed(Λ, N) = α 的交点做交叉验证

    某个 N 的 Λ_α 无定义或交点求不出时，该行记录 NaN 与错误信息，其余行照常计算。

    Args:
        N_grid: 粒子数列表
        alpha: 阈值 α
        bracket: 二分法区间

    Returns:
        List[CriticalCurveRow]: 每个 N 一行
    """
    rows = []
    for N in N_grid:
        errors = []
        full = asymptote = crossing = math.nan
        try:
            crit = lambda_critical(N, alpha)
            full, asymptote = crit.full, crit.asymptote
        except (DimerTrapError, ValueError) as e:
            logger.warning(f"N={N:g} 的 Λ_α 无定义: {e}")
            errors.append(str(e))

        def excess(lam: float) -> float:
            return zbar_closed_form(lam, N) - alpha

        try:
            lo, hi = bracket
            if excess(lo) >= 0.0 or excess(hi) <= 0.0:
                raise SweepValidationError(f"bracket {bracket} does not enclose the crossing")
            crossing = bisect(excess, lo, hi, xtol=1e-12)
        except (DimerTrapError, ValueError, RuntimeError) as e:
            logger.warning(f"N={N:g} 的交点未找到: {e}")
            errors.append(str(e))
        rows.append(CriticalCurveRow(N, full, asymptote, crossing, error="; ".join(errors)))
    return rows


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    baseline: Method
    test: Method
    cells: pd.DataFrame
    max_abs: float
    mean_abs: float
    max_abs_outside_band: float
    band: float


def _ok_frame(result: SweepResult, method: Method) -> pd.DataFrame:
    frame = result.to_frame()
    frame = frame[(frame["method"] == method.value) & (frame["status"] == "ok")]
    return frame[["lambda", "N", "zbar"]].assign(lam_key=frame["lambda"].round(12))


def compare(
    result: SweepResult,
    baseline_method: Method,
    test_method: Method,
    exclude_band: float = 0.0,
    band_center: float = 2.0,
) -> ComparisonReport:
    """
    逐点比较 |z̄_test - z̄_baseline|

    平均场网格点（无 N）与另一方法的每个 N 配对。

    Args:
        result: 扫描结果
        baseline_method: 基准方法
        test_method: 待比较方法
        exclude_band: 统计带外最大偏差时排除 |Λ - band_center| < exclude_band
        band_center: 排除带中心

    Returns:
        ComparisonReport: 逐点偏差、最大值、平均值与带外最大值

    Raises:
        SweepValidationError: 两种方法没有共同网格点时
    """
    baseline_method = Method(baseline_method)
    test_method = Method(test_method)
    base = _ok_frame(result, baseline_method)
    test = _ok_frame(result, test_method)
    suffixes = ("_baseline", "_test")
    if base["N"].isna().all() or test["N"].isna().all():
        merged = base.merge(test, on="lam_key", suffixes=suffixes)
        n_column = merged["N_test"].fillna(merged["N_baseline"])
    else:
        merged = base.merge(test, on=["lam_key", "N"], suffixes=suffixes)
        n_column = merged["N"]
    if merged.empty:
        raise SweepValidationError(
            f"{baseline_method.value} and {test_method.value} share no grid cells"
        )
    cells = pd.DataFrame(
        {
            "lambda": merged["lambda_baseline"].to_numpy(),
            "N": n_column.to_numpy(),
            "baseline": merged["zbar_baseline"].to_numpy(),
            "test": merged["zbar_test"].to_numpy(),
        }
    )
    cells["abs_diff"] = (cells["test"] - cells["baseline"]).abs()
    outside = cells[(cells["lambda"] - band_center).abs() >= exclude_band]
    return ComparisonReport(
        baseline=baseline_method,
        test=test_method,
        cells=cells,
        max_abs=float(cells["abs_diff"].max()),
        mean_abs=float(cells["abs_diff"].mean()),
        max_abs_outside_band=float(outside["abs_diff"].max()) if not outside.empty else 0.0,
        band=exclude_band,
    )


def transition_width(
    result: SweepResult,
    method: Method,
    N: Optional[int] = None,
    low: float = 0.1,
    high: float = 0.4,
) -> float:
    """
    z̄ 首次从 ``low`` 升到 ``high`` 所跨的 Λ 区间宽度（线性插值）

    Raises:
        SweepValidationError: 曲线达不到某一水平时
    """
    cells = sorted((c for c in result.select(Method(method), N) if c.ok), key=lambda c: c.lam)
    lam = np.array([c.lam for c in cells])
    z = np.array([c.zbar for c in cells])
    return _crossing(lam, z, high) - _crossing(lam, z, low)


def _crossing(lam: np.ndarray, z: np.ndarray, level: float) -> float:
    above = np.flatnonzero(z >= level)
    if above.size == 0:
        raise SweepValidationError(f"curve never reaches {level}")
    k = int(above[0])
    if k == 0:
        return float(lam[0])
    z0, z1 = z[k - 1], z[k]
    return float(lam[k - 1] + (level - z0) * (lam[k] - lam[k - 1]) / (z1 - z0))

"""
图形预设模块

每个预设是一份带版本号的命名配置，一条命令即可重新生成对应的数据文件与 gnuplot 脚本。
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.models import DimerParams
from src.output import (
    write_critical_csv,
    write_gnuplot_script,
    write_sweep_csv,
    write_trajectory_csv,
)
from src.sweep import (
    Method,
    SweepConfig,
    SweepResult,
    SweepValidationError,
    compare,
    run_lambda_critical_curve,
    run_sweep,
    run_trajectory,
    transition_width,
)


logger = logging.getLogger(__name__)


PRESET_VERSION = "1"


def _grid(start: float, stop: float, step: float) -> List[float]:
    count = int(round((stop - start) / step)) + 1
    return [round(start + k * step, 10) for k in range(count)]


def _refined(coarse: Tuple[float, float, float], fine: Tuple[float, float, float]) -> Tuple[float, ...]:
    return tuple(sorted(set(_grid(*coarse)) | set(_grid(*fine))))


# Λ 采样：步长 0.1，并在 [1.5, 2.5] 上加密到 0.02
FIG1_LAMBDA_GRID = _refined((0.0, 10.0, 0.1), (1.5, 2.5, 0.02))
FIG3_LAMBDA_GRID = _refined((0.1, 6.0, 0.1), (1.5, 2.5, 0.05))
FIG3_N_LIST = (50, 100, 200, 400)
FIG4_N_GRID = tuple(int(n) for n in np.unique(np.round(np.logspace(np.log10(50.0), 6.0, 61))))


@dataclass(frozen=True)
class FigurePreset:
    """
    图形预设

    Attributes:
        name: 预设名称（同时是输出文件名前缀）
        kind: "sweep"、"trajectory" 或 "critical"
        description: 一行说明
        sweep: 扫描配置（kind == "sweep"）
        params: 轨迹参数（kind == "trajectory"）
        t_end: 轨迹长度，单位 t0
        panels: 轨迹子图的右端点，单位 t0
        n_grid: 临界曲线的粒子数网格
        alpha: 阈值 α
        band: 比较时排除的 |Λ - 2| 带宽
    """
    name: str
    kind: str
    description: str
    sweep: Optional[SweepConfig] = None
    params: Optional[DimerParams] = None
    t_end: float = 0.0
    panels: Tuple[float, ...] = ()
    n_grid: Tuple[int, ...] = ()
    alpha: float = 0.001
    band: float = 0.0
    version: str = PRESET_VERSION

    def metadata(self) -> Dict[str, str]:
        return {"subcommand": "reproduce", "preset": self.name, "preset_version": self.version}


@dataclass
class PresetOutcome:
    name: str
    paths: List[Path] = field(default_factory=list)
    partial: bool = False
    summary: Dict[str, float] = field(default_factory=dict)


PRESETS: Dict[str, FigurePreset] = {
    "fig1": FigurePreset(
        name="fig1",
        kind="sweep",
        description="mean-field z̄(Λ): numeric integration against the closed form",
        sweep=SweepConfig(
            lambda_grid=FIG1_LAMBDA_GRID,
            methods=(Method.MEANFIELD_NUMERIC, Method.MEANFIELD_CLOSED),
            name="fig1",
        ),
        band=0.5,
    ),
    "fig2": FigurePreset(
        name="fig2",
        kind="trajectory",
        description="exact z(t) for N=100, Λ=2, J=1 over 30 t0 and 1000 t0",
        params=DimerParams.from_lambda(2.0, N=100, J=1.0),
        t_end=1000.0,
        panels=(30.0, 1000.0),
    ),
    "fig3": FigurePreset(
        name="fig3",
        kind="sweep",
        description="exact z̄(Λ) against the fluctuation closed form for several N",
        sweep=SweepConfig(
            lambda_grid=FIG3_LAMBDA_GRID,
            n_list=FIG3_N_LIST,
            methods=(Method.EXACT_QUANTUM, Method.SEMICLASSICAL_CLOSED),
            name="fig3",
        ),
        band=0.3,
    ),
    "fig4": FigurePreset(
        name="fig4",
        kind="critical",
        description="critical interaction Λ_α(N) for α = 0.001",
        n_grid=FIG4_N_GRID,
        alpha=0.001,
    ),
}


def run_preset(
    preset: FigurePreset,
    output_dir: Path,
    threads: Optional[int] = None,
) -> PresetOutcome:
    """
    运行一个图形预设并写出 CSV 与 gnuplot 脚本

    Args:
        preset: 图形预设
        output_dir: 输出目录
        threads: 扫描进程池大小上限

    Returns:
        PresetOutcome: 写出的文件、是否部分失败以及比较摘要
    """
    output_dir = Path(output_dir)
    outcome = PresetOutcome(name=preset.name)
    logger.info(f"运行预设 {preset.name} (版本 {preset.version}): {preset.description}")

    if preset.kind == "sweep":
        assert preset.sweep is not None
        cfg = replace(preset.sweep, threads=threads)
        result = run_sweep(cfg)
        csv_path = write_sweep_csv(result, output_dir / f"{preset.name}.csv", preset.metadata())
        outcome.paths += [
            csv_path,
            write_gnuplot_script(csv_path, "sweep", cfg.methods, cfg.n_list, preset.description),
        ]
        outcome.partial = bool(result.failed)
        outcome.summary = _sweep_summary(result, cfg, preset.band)

    elif preset.kind == "trajectory":
        assert preset.params is not None
        t0 = preset.params.t0()
        record = run_trajectory(preset.params, preset.t_end * t0, Method.EXACT_QUANTUM)
        csv_path = write_trajectory_csv(record, output_dir / f"{preset.name}.csv", extra_metadata=preset.metadata())
        outcome.paths.append(csv_path)
        for end in preset.panels[:-1]:
            short = record.windowed(end)
            outcome.paths.append(
                write_trajectory_csv(
                    record,
                    output_dir / f"{preset.name}_{end:g}t0.csv",
                    series=short,
                    extra_metadata=preset.metadata(),
                )
            )
            outcome.summary[f"min_z_{end:g}t0"] = short.minimum()
        outcome.summary[f"min_z_{preset.t_end:g}t0"] = record.series.minimum()
        outcome.paths.append(
            write_gnuplot_script(csv_path, "trajectory", title=preset.description, panels=list(preset.panels))
        )

    elif preset.kind == "critical":
        rows = run_lambda_critical_curve(preset.n_grid, preset.alpha)
        metadata = {**preset.metadata(), "alpha": repr(preset.alpha), "n_list": ",".join(str(n) for n in preset.n_grid)}
        csv_path = write_critical_csv(rows, output_dir / f"{preset.name}.csv", metadata)
        outcome.paths += [csv_path, write_gnuplot_script(csv_path, "critical", title=preset.description)]
        outcome.partial = any(r.error for r in rows)
        outcome.summary["lambda_alpha_at_max_N"] = rows[-1].lambda_alpha

    else:
        raise SweepValidationError(f"unknown preset kind '{preset.kind}'")

    for key, value in outcome.summary.items():
        logger.info(f"{preset.name}: {key}={value:.6f}")
    return outcome


def _sweep_summary(result: SweepResult, cfg: SweepConfig, band: float) -> Dict[str, float]:
    """数值/精确方法与闭式近似的偏差，以及各 N 的转变宽度"""
    summary: Dict[str, float] = {}
    numeric = [m for m in cfg.methods if m in (Method.MEANFIELD_NUMERIC, Method.EXACT_QUANTUM)]
    closed = [m for m in cfg.methods if m in (Method.MEANFIELD_CLOSED, Method.SEMICLASSICAL_CLOSED)]
    for baseline in numeric:
        for test in closed:
            try:
                report = compare(result, baseline, test, exclude_band=band)
            except SweepValidationError as e:
                logger.warning(f"无法比较 {baseline.value} 与 {test.value}: {e}")
                continue
            summary[f"max_diff_{test.value}_vs_{baseline.value}"] = report.max_abs_outside_band
    if Method.EXACT_QUANTUM in cfg.methods:
        for N in cfg.n_list:
            try:
                summary[f"transition_width_N{N}"] = transition_width(result, Method.EXACT_QUANTUM, N)
            except SweepValidationError as e:
                logger.warning(f"N={N} 的转变宽度无法确定: {e}")
    return summary

"""
输出格式化模块

把扫描结果、轨迹和临界曲线写成带 ``# key=value`` 元数据头的 CSV 文件，
并在旁边生成可复现图形布局的 gnuplot 脚本。
"""

import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from src.models import TimeSeries
from src.sweep import CriticalCurveRow, Method, SweepResult, TrajectoryRecord


logger = logging.getLogger(__name__)


FLOAT_FORMAT = "%.12g"

# 点表示数值/精确结果，线表示闭式近似
_LINE_METHODS = (Method.MEANFIELD_CLOSED, Method.SEMICLASSICAL_CLOSED)


def _header(kind: str, metadata: Mapping[str, Any], status: str) -> str:
    """
    生成元数据头

    时间戳单独占一行，其余行在相同配置下逐字节一致。
    """
    created = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    lines = [f"# format=dimer-trap-{kind}", f"# created={created}"]
    for key, value in metadata.items():
        lines.append(f"# {key}={value}")
    lines.append(f"# status={status}")
    return "\n".join(lines) + "\n"


def _write(path: Path, header: str, frame: pd.DataFrame) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(header)
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    logger.info(f"已写入 {path}")
    return path


def write_sweep_csv(
    result: SweepResult,
    path: Path,
    extra_metadata: Optional[Mapping[str, Any]] = None,
) -> Path:
    """
    写入扫描结果 CSV

    Args:
        result: 扫描结果
        path: 输出文件路径
        extra_metadata: 追加到头部的元数据（例如预设名称、子命令）

    Returns:
        Path: 写入的文件路径
    """
    metadata = {**(extra_metadata or {}), **result.metadata}
    status = "partial" if result.failed else "complete"
    frame = result.to_frame()
    return _write(Path(path), _header("sweep", metadata, status), frame)


def trajectory_frame(series: TimeSeries, t0: float) -> pd.DataFrame:
    return pd.DataFrame({"t_over_t0": series.times / t0, "z": series.values})


def write_trajectory_csv(
    record: TrajectoryRecord,
    path: Path,
    series: Optional[TimeSeries] = None,
    extra_metadata: Optional[Mapping[str, Any]] = None,
) -> Path:
    """
    写入 z(t) 轨迹

    第一列为 t/t0；头部记录 t0 及其所用的时间单位。

    Args:
        record: 轨迹记录
        path: 输出文件路径
        series: 要写入的序列，None 时写入完整轨迹
        extra_metadata: 追加到头部的元数据

    Returns:
        Path: 写入的文件路径
    """
    series = record.series if series is None else series
    t0 = record.params.t0()
    metadata = {
        **(extra_metadata or {}),
        **record.metadata,
        "window": f"{series.t_start / t0!r},{series.t_end / t0!r}",
        "time_unit": series.units,
        "t0": repr(t0),
    }
    return _write(Path(path), _header("trajectory", metadata, "complete"), trajectory_frame(series, t0))


def write_critical_csv(
    rows: Sequence[CriticalCurveRow],
    path: Path,
    extra_metadata: Optional[Mapping[str, Any]] = None,
) -> Path:
    """写入临界相互作用曲线 (N, Λ_α, 渐近式, 二分交点)"""
    frame = pd.DataFrame(
        {
            "N": [r.N for r in rows],
            "lambda_alpha": [r.lambda_alpha for r in rows],
            "asymptote": [r.asymptote for r in rows],
            "crossing": [r.crossing for r in rows],
            "error": [r.error for r in rows],
        }
    )
    status = "partial" if any(r.error for r in rows) else "complete"
    return _write(Path(path), _header("critical", dict(extra_metadata or {}), status), frame)


def read_metadata(path: Path) -> Dict[str, str]:
    """读取输出文件头部的 ``# key=value`` 元数据"""
    metadata: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                metadata[key.strip()] = value.strip()
    return metadata


def read_data(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def _plot_clause(csv_name: str, method: Method, N: Optional[int], title: str) -> str:
    n_filter = f" && column(2) == {N}" if N is not None else ""
    select = f'(strcol(3) eq "{method.value}"{n_filter} ? $4 : 1/0)'
    style = "lines lw 2" if method in _LINE_METHODS else "points pt 3"
    return f"'{csv_name}' using 1:{select} with {style} title '{title}'"


def write_gnuplot_script(
    csv_path: Path,
    kind: str,
    methods: Sequence[Method] = (),
    n_list: Sequence[int] = (),
    title: str = "",
    panels: Optional[List[float]] = None,
) -> Path:
    """
    在 CSV 旁生成 gnuplot 脚本

    Args:
        csv_path: 数据文件
        kind: "sweep"、"trajectory" 或 "critical"
        methods: 扫描中的方法（决定点/线样式）
        n_list: 粒子数列表；多于一个时每个 N 一个子图
        title: 图标题
        panels: 轨迹窗口的右端点（单位 t0），每个一个子图

    Returns:
        Path: 脚本路径
    """
    csv_path = Path(csv_path)
    name = csv_path.name
    lines = [
        "# gnuplot script generated by dimer-trap",
        "set datafile separator ','",
        "set key top left",
        "set terminal pngcairo size 1200,900",
        f"set output '{csv_path.stem}.png'",
    ]
    if kind == "sweep":
        lines += ["set xlabel 'Lambda = U(N-1)/J'", "set ylabel 'time-averaged imbalance'", "set yrange [-0.05:1.05]"]
        panel_ns: List[Optional[int]] = list(n_list) if n_list else [None]
        if len(panel_ns) > 1:
            cols = 2
            rows = (len(panel_ns) + 1) // 2
            lines.append(f"set multiplot layout {rows},{cols} title '{title}'")
        for N in panel_ns:
            clauses = []
            for method in methods:
                cell_n = N if method.needs_particle_number else None
                label = method.value if N is None or not method.needs_particle_number else f"{method.value} N={N}"
                clauses.append(_plot_clause(name, method, cell_n, label))
            if len(panel_ns) > 1:
                lines.append(f"set title 'N = {N}'")
            elif title:
                lines.append(f"set title '{title}'")
            lines.append("plot " + ", \\\n     ".join(clauses))
        if len(panel_ns) > 1:
            lines.append("unset multiplot")
    elif kind == "trajectory":
        lines += ["set xlabel 't / t0'", "set ylabel 'z(t)'", "set yrange [-1.05:1.05]"]
        ends = panels or [None]
        if len(ends) > 1:
            lines.append(f"set multiplot layout 1,{len(ends)} title '{title}'")
        for end in ends:
            if end is not None:
                lines.append(f"set xrange [0:{end:g}]")
            lines.append(f"plot '{name}' using 1:2 with lines notitle")
        if len(ends) > 1:
            lines.append("unset multiplot")
    elif kind == "critical":
        lines += [
            "set logscale x",
            "set xlabel 'N'",
            "set ylabel 'critical Lambda'",
            f"set title '{title}'",
            f"plot '{name}' using 1:2 with lines lw 2 title 'full', \\\n"
            f"     '{name}' using 1:3 with lines dt 2 title 'asymptote', \\\n"
            f"     '{name}' using 1:4 with points pt 3 title 'bisection'",
        ]
    else:
        raise ValueError(f"unknown plot kind '{kind}'")

    script = csv_path.with_suffix(".plt")
    script.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"已写入 {script}")
    return script


def format_value(name: str, value: float) -> str:
    """单值结果的标准输出格式"""
    return f"{name}={value:.6f}" if np.isfinite(value) else f"{name}=nan"

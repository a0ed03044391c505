"""
单元测试：扫描框架

测试网格校验、单元格并行计算、误差记录、临界相互作用曲线与结果比较。
"""

import math

import numpy as np
import pytest

from src.heuristics import zbar_closed_form, zbar_meanfield_closed
from src.models import DimerParams
from src.sweep import (
    THREADS_ENV,
    Method,
    SweepCell,
    SweepConfig,
    SweepResult,
    SweepValidationError,
    build_tasks,
    compare,
    parse_methods,
    resolve_workers,
    run_lambda_critical_curve,
    run_sweep,
    run_trajectory,
    transition_width,
)


class TestSweepConfig:
    """测试扫描配置校验"""

    def test_empty_grid(self):
        """测试空 Λ 网格被拒绝"""
        with pytest.raises(SweepValidationError, match="must not be empty"):
            SweepConfig(lambda_grid=()).validate()

    def test_non_increasing_grid(self):
        """测试非严格递增网格被拒绝"""
        with pytest.raises(SweepValidationError, match="strictly increasing"):
            SweepConfig(lambda_grid=(1.0, 1.0, 2.0)).validate()

    def test_quantum_method_needs_n_list(self):
        """测试精确方法缺少 N 列表时报错"""
        with pytest.raises(SweepValidationError, match="n_list"):
            SweepConfig(lambda_grid=(1.0,), methods=("exact-quantum",)).validate()

    def test_errors_reported_together(self):
        """测试多个问题一次报告"""
        cfg = SweepConfig(lambda_grid=(2.0, 1.0), window=(5.0, 1.0), J=-1.0)
        with pytest.raises(SweepValidationError) as exc_info:
            cfg.validate()
        message = str(exc_info.value)
        assert "strictly increasing" in message
        assert "window" in message
        assert "J must be positive" in message

    def test_unknown_method(self):
        """测试未知方法名"""
        with pytest.raises(SweepValidationError, match="unknown method"):
            parse_methods(["exact"])

    def test_metadata_keys(self):
        """测试元数据包含复现所需的全部键"""
        metadata = SweepConfig(lambda_grid=(1.0, 2.5), n_list=(50,), seed=7).metadata()
        for key in ("name", "lambda_grid", "n_list", "methods", "window", "seed",
                    "samples", "dt", "dt_sample", "J", "basis", "code_version"):
            assert key in metadata
        assert metadata["lambda_grid"] == "1.0,2.5"
        assert metadata["seed"] == 7

    def test_task_layout(self):
        """测试平均场方法每个 Λ 只有一个单元格"""
        cfg = SweepConfig(
            lambda_grid=(1.0, 2.0),
            n_list=(50, 100),
            methods=("meanfield-closed", "semiclassical-closed"),
        )
        tasks = build_tasks(cfg)
        assert len(tasks) == 2 * (1 + 2)
        assert [t.index for t in tasks] == list(range(6))
        assert [t.N for t in tasks[:3]] == [None, 50, 100]


class TestResolveWorkers:
    """测试进程池大小"""

    def test_explicit_value(self, monkeypatch):
        """测试显式值优先于环境变量"""
        monkeypatch.setenv(THREADS_ENV, "5")
        assert resolve_workers(2) == 2

    def test_environment(self, monkeypatch):
        """测试环境变量"""
        monkeypatch.setenv(THREADS_ENV, "3")
        assert resolve_workers() == 3

    def test_invalid_environment_ignored(self, monkeypatch):
        """测试非整数环境变量被忽略"""
        monkeypatch.setenv(THREADS_ENV, "many")
        assert resolve_workers() >= 1

    def test_lower_bound(self):
        """测试至少一个工作进程"""
        assert resolve_workers(0) == 1


class TestRunSweep:
    """测试扫描执行"""

    def test_closed_form_cells(self):
        """测试闭式方法的单元格与直接调用一致"""
        cfg = SweepConfig(
            lambda_grid=(1.0, 2.0, 3.0),
            n_list=(100,),
            methods=("meanfield-closed", "semiclassical-closed"),
            threads=1,
        )
        result = run_sweep(cfg)
        assert len(result.cells) == 6
        assert not result.failed
        for cell in result.select(Method.MEANFIELD_CLOSED):
            assert cell.N is None
            assert cell.zbar == zbar_meanfield_closed(cell.lam)
        for cell in result.select(Method.SEMICLASSICAL_CLOSED, 100):
            assert cell.zbar == zbar_closed_form(cell.lam, 100)
        assert result.metadata["methods"] == "meanfield-closed,semiclassical-closed"

    def test_values_in_range(self):
        """测试半经典结果落在 [0, 1]"""
        cfg = SweepConfig(
            lambda_grid=(0.5, 1.9, 2.1, 8.0),
            n_list=(50, 400),
            methods=("semiclassical-closed",),
            threads=1,
        )
        for cell in run_sweep(cfg).cells:
            assert 0.0 <= cell.zbar <= 1.0

    def test_monte_carlo_deterministic(self):
        """测试相同种子的 Monte-Carlo 扫描结果完全相同"""
        cfg = SweepConfig(
            lambda_grid=(1.5, 3.0),
            n_list=(100,),
            methods=("semiclassical-mc",),
            samples=20_000,
            seed=11,
            threads=1,
        )
        first = run_sweep(cfg)
        second = run_sweep(cfg)
        assert first.cells == second.cells
        assert all(c.err is not None and c.err >= 0 for c in first.cells)

    def test_monte_carlo_cells_use_distinct_streams(self):
        """测试不同单元格使用不同的随机流"""
        cfg = SweepConfig(
            lambda_grid=(3.0, 3.0 + 1e-9),
            n_list=(100,),
            methods=("semiclassical-mc",),
            samples=20_000,
            threads=1,
        )
        a, b = run_sweep(cfg).cells
        assert a.zbar != b.zbar

    def test_capacity_failure_recorded(self):
        """测试 N 超出容量时记录为单元格错误而非中止"""
        cfg = SweepConfig(
            lambda_grid=(1.0,),
            n_list=(10, 6000),
            methods=("exact-quantum",),
            window=(0.0, 1.0),
            threads=1,
        )
        result = run_sweep(cfg)
        assert len(result.cells) == 2
        assert result.cells[0].ok
        assert [c.N for c in result.failed] == [6000]
        assert "CapacityError" in result.failed[0].message
        assert math.isnan(result.failed[0].zbar)

    def test_frame_columns(self):
        """测试结果表的列与缺失值"""
        cfg = SweepConfig(lambda_grid=(1.0,), methods=("meanfield-closed",), threads=1)
        frame = run_sweep(cfg).to_frame()
        assert list(frame.columns) == ["lambda", "N", "method", "zbar", "err", "status", "message"]
        assert frame["N"].isna().all()
        assert frame["err"].isna().all()

    def test_invalid_config_raises(self):
        """测试无效配置在计算前报错"""
        with pytest.raises(SweepValidationError):
            run_sweep(SweepConfig(lambda_grid=()))

    @pytest.mark.slow
    def test_meanfield_transition(self):
        """测试平均场数值扫描：阈值以下为零，阈值以上与闭式解一致"""
        cfg = SweepConfig(
            lambda_grid=(0.5, 1.0, 1.5, 1.8, 2.2, 2.5, 3.0, 4.0, 6.0, 8.0, 10.0),
            threads=2,
        )
        result = run_sweep(cfg)
        assert not result.failed
        numeric = {c.lam: c.zbar for c in result.select(Method.MEANFIELD_NUMERIC)}
        assert all(abs(z) < 0.02 for lam, z in numeric.items() if lam <= 1.8)
        assert numeric[2.2] > 0.45
        report = compare(result, Method.MEANFIELD_CLOSED, Method.MEANFIELD_NUMERIC, exclude_band=0.5)
        assert report.max_abs_outside_band < 0.08

    @pytest.mark.slow
    def test_exact_transition_sharpens_with_n(self):
        """测试精确 z̄ 与涨落闭式解一致，且过渡宽度随 N 单调收窄"""
        n_list = (50, 100, 200, 400)
        cfg = SweepConfig(
            lambda_grid=tuple(np.round(np.arange(0.5, 6.0001, 0.1), 10)),
            n_list=n_list,
            methods=("exact-quantum", "semiclassical-closed"),
            threads=4,
        )
        result = run_sweep(cfg)
        assert not result.failed
        report = compare(result, Method.SEMICLASSICAL_CLOSED, Method.EXACT_QUANTUM, exclude_band=0.3)
        assert report.max_abs_outside_band < 0.1
        widths = [transition_width(result, Method.EXACT_QUANTUM, N) for N in n_list]
        assert all(b <= a for a, b in zip(widths, widths[1:]))


class TestCompare:
    """测试方法间比较"""

    def setup_method(self):
        """设置测试环境"""
        cfg = SweepConfig(
            lambda_grid=(1.0, 1.9, 2.5, 4.0),
            n_list=(50, 100),
            methods=("meanfield-closed", "semiclassical-closed"),
            threads=1,
        )
        self.result = run_sweep(cfg)

    def test_self_comparison_zero(self):
        """测试方法与自身比较恒为零"""
        report = compare(self.result, Method.SEMICLASSICAL_CLOSED, Method.SEMICLASSICAL_CLOSED)
        assert report.max_abs == 0.0
        assert report.mean_abs == 0.0
        assert len(report.cells) == 8

    def test_meanfield_pairs_with_every_n(self):
        """测试平均场单元格与每个 N 配对"""
        report = compare(self.result, Method.MEANFIELD_CLOSED, Method.SEMICLASSICAL_CLOSED)
        assert len(report.cells) == 8
        assert sorted(set(report.cells["N"].astype(int))) == [50, 100]

    def test_band_excluded(self):
        """测试排除 Λ=2 附近区间后的最大差值"""
        report = compare(
            self.result, Method.MEANFIELD_CLOSED, Method.SEMICLASSICAL_CLOSED, exclude_band=0.6
        )
        outside = report.cells[(report.cells["lambda"] - 2.0).abs() >= 0.6]
        assert report.max_abs_outside_band == pytest.approx(outside["abs_diff"].max())
        assert report.max_abs >= report.max_abs_outside_band

    def test_disjoint_methods(self):
        """测试无共同单元格时报错"""
        with pytest.raises(SweepValidationError, match="share no grid cells"):
            compare(self.result, Method.MEANFIELD_CLOSED, Method.EXACT_QUANTUM)


class TestTransitionWidth:
    """测试过渡宽度"""

    def test_linear_interpolation(self):
        """测试按线性插值求 0.1 与 0.4 的穿越点"""
        cells = [
            SweepCell(lam, 100, Method.EXACT_QUANTUM, zbar=z)
            for lam, z in [(1.0, 0.0), (2.0, 0.2), (3.0, 0.6), (4.0, 0.9)]
        ]
        result = SweepResult(cells=cells)
        assert transition_width(result, Method.EXACT_QUANTUM, 100) == pytest.approx(1.0)

    def test_never_reached(self):
        """测试曲线达不到上限时报错"""
        cells = [SweepCell(lam, 100, Method.EXACT_QUANTUM, zbar=0.2) for lam in (1.0, 2.0)]
        with pytest.raises(SweepValidationError):
            transition_width(SweepResult(cells=cells), Method.EXACT_QUANTUM, 100)


class TestCriticalCurve:
    """测试临界相互作用曲线"""

    def test_reference_point(self):
        """测试 N=100 的 Λ_α 与二分法穿越点一致"""
        (row,) = run_lambda_critical_curve([100], alpha=0.001)
        assert row.lambda_alpha == pytest.approx(1.5530, abs=1e-3)
        assert row.crossing == pytest.approx(row.lambda_alpha, abs=1e-8)
        assert row.error == ""

    def test_meanfield_limit(self):
        """测试 N=10⁶ 时 Λ_α 接近 2"""
        (row,) = run_lambda_critical_curve([1e6], alpha=0.001)
        assert abs(row.lambda_alpha - 2.0) < 0.01

    def test_monotone_in_n(self):
        """测试 Λ_α 随 N 单调不减"""
        rows = run_lambda_critical_curve(np.logspace(np.log10(50), 6, 25), alpha=0.001)
        values = [r.lambda_alpha for r in rows]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_undefined_point_recorded(self):
        """测试某个 N 的 Λ_α 无定义时只记录该行，其余行照常计算"""
        rows = run_lambda_critical_curve([1, 100], alpha=0.45)
        assert len(rows) == 2
        assert math.isnan(rows[0].lambda_alpha)
        assert math.isnan(rows[0].asymptote)
        assert "no critical interaction" in rows[0].error
        assert math.isfinite(rows[0].crossing)
        assert rows[1].error == ""
        assert rows[1].lambda_alpha == pytest.approx(2.0 / (1.0 - 1.2815515655446004 / 10.0), rel=1e-9)

    def test_bad_bracket_recorded(self):
        """测试区间不含根时按 N 记录错误"""
        (row,) = run_lambda_critical_curve([100], alpha=0.001, bracket=(3.0, 10.0))
        assert math.isnan(row.crossing)
        assert "bracket" in row.error
        assert row.lambda_alpha == pytest.approx(1.5530, abs=1e-3)


class TestRunTrajectory:
    """测试单条轨迹"""

    def test_meanfield_rabi(self):
        """测试 U=0 时 z(t)=cos(2πt/t0)"""
        params = DimerParams(J=1.0, U=0.0, N=2)
        t0 = params.t0()
        record = run_trajectory(params, t_end=2 * t0, method=Method.MEANFIELD_NUMERIC)
        expected = np.cos(2 * math.pi * record.series.times / t0)
        np.testing.assert_allclose(record.series.values, expected, atol=1e-6)
        assert record.metadata["method"] == "meanfield-numeric"
        assert record.metadata["t_end"] == "2.0"
        assert "halvings" in record.metadata

    def test_exact_single_particle(self):
        """测试 N=1 精确轨迹同样给出余弦"""
        params = DimerParams(J=1.0, U=0.0, N=1)
        t0 = params.t0()
        record = run_trajectory(params, t_end=t0, method="exact-quantum")
        expected = np.cos(2 * math.pi * record.series.times / t0)
        np.testing.assert_allclose(record.series.values, expected, atol=1e-10)
        assert "basis" in record.metadata

    def test_windowed(self):
        """测试按 t0 截取轨迹"""
        params = DimerParams(J=1.0, U=0.0, N=1)
        record = run_trajectory(params, t_end=2 * params.t0(), method="exact-quantum")
        part = record.windowed(1.0)
        assert part.t_end == pytest.approx(params.t0())

    def test_unsupported_method(self):
        """测试闭式方法不能生成轨迹"""
        with pytest.raises(SweepValidationError):
            run_trajectory(DimerParams(J=1.0), t_end=1.0, method=Method.MEANFIELD_CLOSED)

"""
单元测试：平均场动力学

测试 GPE 右端项、RK4 积分与步长减半、解析 Rabi 解以及时间平均 z̄。
"""

import math

import numpy as np
import pytest

from src.meanfield import (
    IntegrationAccuracyError,
    IntegratorConfig,
    gpe_rhs,
    integrate_gpe,
    meanfield_energy_series,
    meanfield_zbar,
    rabi_amplitude,
    rabi_state,
)
from src.models import (
    DimerParams,
    MeanFieldState,
    ParameterError,
    meanfield_energy_per_particle,
)


class TestGpeRhs:
    """测试 GPE 右端项"""

    def test_noninteracting_all_left(self):
        """测试 U=0 全左态：ċ_L=0, ċ_R=iJ/2ħ"""
        d_l, d_r = gpe_rhs(MeanFieldState.all_left(), DimerParams(J=1.0, U=0.0))
        assert d_l == 0
        assert d_r == pytest.approx(0.5j)

    def test_symmetric_state_phase_rotation(self):
        """测试对称本征态只做相位旋转"""
        c = 1 / math.sqrt(2)
        d_l, d_r = gpe_rhs(MeanFieldState(c, c), DimerParams(J=1.0))
        assert d_l == pytest.approx(0.5j * c)
        assert d_r == pytest.approx(0.5j * c)

    def test_interacting_all_left(self):
        """测试 U>0 全左态的导数模长"""
        params = DimerParams(J=1.0, U=0.04, N=101, hbar=1.0)
        d_l, d_r = gpe_rhs(MeanFieldState.all_left(), params)
        assert abs(d_l) == pytest.approx(0.04 * 100)
        assert abs(d_r) == pytest.approx(0.5)


class TestIntegratorConfig:
    """测试积分配置"""

    def test_defaults_in_units_of_t0(self):
        """测试默认步长与采样间隔"""
        params = DimerParams(J=1.0)
        cfg = IntegratorConfig.for_params(params)
        assert cfg.dt == pytest.approx(1e-3 * params.t0())
        assert cfg.t_end == pytest.approx(100 * params.t0())
        assert cfg.sample_every == 10

    def test_invalid_values(self):
        """测试非法配置被拒绝"""
        with pytest.raises(ParameterError):
            IntegratorConfig(dt=0.0, t_end=1.0)
        with pytest.raises(ParameterError):
            IntegratorConfig(dt=0.1, t_end=-1.0)
        with pytest.raises(ParameterError):
            IntegratorConfig(dt=0.1, t_end=1.0, sample_every=0)


class TestRabiOracle:
    """测试无相互作用解析解"""

    def test_resonant_full_transfer(self):
        """测试 Δ=0, t=πħ/J 时粒子全部转移"""
        params = DimerParams(J=1.0)
        assert abs(rabi_amplitude(math.pi, params)) ** 2 == pytest.approx(1.0)

    def test_detuned_maximum(self):
        """测试 Δ=J 时最大转移为 1/2"""
        params = DimerParams(J=1.0, eps_R=1.0)
        t = np.linspace(0.0, 20.0, 20001)
        assert np.max(np.abs(rabi_amplitude(t, params)) ** 2) == pytest.approx(0.5, abs=1e-6)

    def test_common_energy_shift(self):
        """测试相同的在位能只改变相位"""
        t = np.linspace(0.0, 5.0, 11)
        base = rabi_amplitude(t, DimerParams(J=1.0))
        shifted = rabi_amplitude(t, DimerParams(J=1.0, eps_L=0.7, eps_R=0.7))
        np.testing.assert_allclose(np.abs(shifted) ** 2, np.abs(base) ** 2, atol=1e-14)
        np.testing.assert_allclose(shifted, base * np.exp(-0.7j * t), atol=1e-14)

    def test_state_normalized(self):
        """测试解析态保持归一化"""
        c_l, c_r = rabi_state(np.linspace(0, 10, 50), DimerParams(J=1.0, eps_L=0.3, eps_R=-0.9))
        np.testing.assert_allclose(np.abs(c_l) ** 2 + np.abs(c_r) ** 2, 1.0, atol=1e-14)

    @pytest.mark.parametrize("delta", [0.0, 0.5, 2.0])
    def test_numeric_matches_analytic(self, delta):
        """测试 U=0 时数值积分与解析 |c_R|² 在 10 个 Rabi 周期内一致"""
        params = DimerParams(J=1.0, U=0.0, N=2, eps_R=delta)
        cfg = IntegratorConfig.for_params(params, t_end=10 * params.t0())
        trajectory = integrate_gpe(MeanFieldState.all_left(), params, cfg)
        analytic = np.abs(rabi_amplitude(trajectory.z.times, params)) ** 2
        numeric = np.abs(trajectory.amplitudes[:, 1]) ** 2
        assert np.max(np.abs(numeric - analytic)) < 1e-6

    def test_population_cosine(self):
        """测试 Λ=0 时 z(t)=cos(Jt/ħ)，且 z(t0)=1"""
        params = DimerParams(J=1.0)
        cfg = IntegratorConfig.for_params(params, t_end=params.t0())
        trajectory = integrate_gpe(MeanFieldState.all_left(), params, cfg)
        np.testing.assert_allclose(trajectory.z.values, np.cos(trajectory.z.times), atol=1e-6)
        assert trajectory.z.values[-1] == pytest.approx(1.0, abs=1e-6)


class TestIntegrateGpe:
    """测试 GPE 积分"""

    def test_symmetric_state_stationary(self):
        """测试对称态在 Λ=0 时保持 z=0"""
        params = DimerParams(J=1.0)
        cfg = IntegratorConfig.for_params(params, t_end=5 * params.t0())
        c = 1 / math.sqrt(2)
        trajectory = integrate_gpe(MeanFieldState(c, c), params, cfg)
        assert np.max(np.abs(trajectory.z.values)) < 1e-10

    def test_time_reversal(self):
        """测试积分、共轭、再积分回到初态的共轭"""
        params = DimerParams.from_lambda(3.0)
        cfg = IntegratorConfig.for_params(params, t_end=5 * params.t0())
        initial = MeanFieldState.from_population(0.2, 0.3)
        forward = integrate_gpe(initial, params, cfg)
        c_l, c_r = forward.final_amplitudes()
        back = integrate_gpe(MeanFieldState(c_l.conjugate(), c_r.conjugate()), params, cfg)
        end_l, end_r = back.final_amplitudes()
        assert abs(end_l - initial.c_L.conjugate()) < 1e-7
        assert abs(end_r - initial.c_R.conjugate()) < 1e-7

    def test_sampling_grid_ends_on_t_end(self):
        """测试采样网格恰好结束于 t_end"""
        params = DimerParams(J=1.0)
        cfg = IntegratorConfig(dt=0.013, t_end=1.0, sample_every=7)
        trajectory = integrate_gpe(MeanFieldState.all_left(), params, cfg)
        assert trajectory.z.t_end == pytest.approx(1.0, abs=1e-12)

    def test_accuracy_error_carries_drift(self):
        """测试达不到漂移目标时抛出携带漂移值的错误"""
        params = DimerParams.from_lambda(10.0)
        cfg = IntegratorConfig(dt=0.1, t_end=5.0, sample_every=1, max_halvings=0)
        with pytest.raises(IntegrationAccuracyError) as exc_info:
            integrate_gpe(MeanFieldState.all_left(), params, cfg)
        error = exc_info.value
        assert error.energy_drift > cfg.energy_tol or error.norm_drift > cfg.norm_tol
        assert error.dt == pytest.approx(0.1)

    def test_energy_series_matches_pointwise(self):
        """测试向量化能量与逐点能量一致"""
        params = DimerParams(J=1.0, U=0.05, N=41, eps_L=0.2)
        states = [MeanFieldState.from_population(p, 0.4) for p in (0.0, 0.3, 0.9)]
        amplitudes = np.array([s.as_array() for s in states])
        expected = [meanfield_energy_per_particle(s, params) for s in states]
        np.testing.assert_allclose(meanfield_energy_series(amplitudes, params), expected, atol=1e-14)

    @pytest.mark.slow
    @pytest.mark.parametrize("lam", [0.0, 1.0, 1.9, 2.1, 4.0, 10.0])
    def test_conservation_over_100_t0(self, lam):
        """测试 100 t0 内范数漂移 < 1e-10、能量漂移 < 1e-8"""
        params = DimerParams.from_lambda(lam)
        trajectory = integrate_gpe(MeanFieldState.all_left(), params, IntegratorConfig.for_params(params))
        assert trajectory.norm_drift < 1e-10
        assert trajectory.energy_drift < 1e-8

    @pytest.mark.slow
    def test_self_trapping_keeps_z_positive(self):
        """测试 Λ>2 时 z(t) 在 100 t0 内始终为正"""
        params = DimerParams.from_lambda(2.5)
        trajectory = integrate_gpe(MeanFieldState.all_left(), params, IntegratorConfig.for_params(params))
        assert trajectory.z.minimum() > 0.0


class TestMeanfieldZbar:
    """测试平均场时间平均"""

    def test_noninteracting_zero(self):
        """测试 Λ=0 时 z̄=0"""
        assert meanfield_zbar(DimerParams(J=1.0)) == pytest.approx(0.0, abs=1e-6)

    def test_window_beyond_integration(self):
        """测试窗口超出积分区间时报错"""
        params = DimerParams(J=1.0)
        cfg = IntegratorConfig.for_params(params, t_end=params.t0())
        with pytest.raises(ParameterError):
            meanfield_zbar(params, (0.0, 2 * params.t0()), cfg)

    @pytest.mark.slow
    def test_below_threshold(self):
        """测试 Λ=1.5 时 z̄≈0"""
        assert meanfield_zbar(DimerParams.from_lambda(1.5)) == pytest.approx(0.0, abs=0.02)

    @pytest.mark.slow
    def test_above_threshold(self):
        """测试 Λ=3 与 Λ=4 时接近闭式结果"""
        assert meanfield_zbar(DimerParams.from_lambda(3.0)) == pytest.approx(0.873, abs=0.05)
        assert meanfield_zbar(DimerParams.from_lambda(4.0)) == pytest.approx(0.93, abs=0.02)

"""
平均场动力学模块

对双阱的离散 Gross-Pitaevskii 方程做定步长经典 Runge-Kutta 积分，
范数与能量漂移超标时自动减半步长；同时提供无相互作用两模解析解
（用作数值积分的对照）以及从全左初态出发的时间平均不平衡度 z̄。
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike

from src.models import (
    DimerParams,
    DimerTrapError,
    MeanFieldState,
    ParameterError,
    TimeSeries,
    time_average,
)


logger = logging.getLogger(__name__)


NORM_DRIFT_TARGET = 1e-10
ENERGY_DRIFT_TARGET = 1e-8
MAX_HALVINGS = 6

# 固定时长内 RK4 漂移按 dt^5 缩放：每减半一次改善 32 倍
_RK4_DRIFT_GAIN_PER_HALVING = 32.0


class IntegrationAccuracyError(DimerTrapError, ArithmeticError):
    """步长减半到上限后漂移仍超标"""

    def __init__(self, message: str, norm_drift: float, energy_drift: float, dt: float):
        super().__init__(message)
        self.norm_drift = norm_drift
        self.energy_drift = energy_drift
        self.dt = dt


@dataclass(frozen=True)
class IntegratorConfig:
    """
    integrate_gpe 的步长控制

    Attributes:
        dt: 初始步长（绝对时间单位）
        t_end: 终止时间
        sample_every: 按初始步长计的采样间隔步数
        max_halvings: 步长减半次数上限
        norm_tol: |c_L|² + |c_R|² 允许的漂移
        energy_tol: H/N 允许的漂移（以 J 为单位）
    """
    dt: float
    t_end: float
    sample_every: int = 10
    max_halvings: int = MAX_HALVINGS
    norm_tol: float = NORM_DRIFT_TARGET
    energy_tol: float = ENERGY_DRIFT_TARGET

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ParameterError(f"t_end must be positive, got {self.t_end}")
        if int(self.sample_every) != self.sample_every or self.sample_every < 1:
            raise ParameterError(f"sample_every must be an integer >= 1, got {self.sample_every}")
        if self.max_halvings < 0:
            raise ParameterError("max_halvings must be >= 0")

    @classmethod
    def for_params(
        cls,
        params: DimerParams,
        t_end: Optional[float] = None,
        dt_fraction: float = 1e-3,
        sample_fraction: float = 1e-2,
    ) -> "IntegratorConfig":
        """
        以 t0 为单位的默认配置

        Args:
            params: 物理参数，提供 t0
            t_end: 终止时间（绝对单位），默认 100 t0
            dt_fraction: 初始步长 / t0
            sample_fraction: 采样间隔 / t0

        Returns:
            IntegratorConfig: 步长配置
        """
        t0 = params.t0()
        stride = max(1, int(round(sample_fraction / dt_fraction)))
        return cls(
            dt=dt_fraction * t0,
            t_end=100.0 * t0 if t_end is None else t_end,
            sample_every=stride,
        )


@dataclass(frozen=True)
class GpeTrajectory:
    """integrate_gpe 的结果：z(t)、采样振幅与漂移统计"""
    z: TimeSeries
    amplitudes: np.ndarray
    dt_used: float
    halvings: int
    norm_drift: float
    energy_drift: float

    def final_amplitudes(self) -> Tuple[complex, complex]:
        c_l, c_r = self.amplitudes[-1]
        return complex(c_l), complex(c_r)


def gpe_rhs(state: MeanFieldState, params: DimerParams) -> Tuple[complex, complex]:
    """耦合离散 Gross-Pitaevskii 方程的时间导数 (ċ_L, ċ_R)"""
    return _rhs(state.c_L, state.c_R, params)


def _rhs(c_l: complex, c_r: complex, params: DimerParams) -> Tuple[complex, complex]:
    g = params.U * (params.N - 1)
    d_l = -0.5 * params.J * c_r + (params.eps_L + g * abs(c_l) ** 2) * c_l
    d_r = -0.5 * params.J * c_l + (params.eps_R + g * abs(c_r) ** 2) * c_r
    return -1j * d_l / params.hbar, -1j * d_r / params.hbar


def _rk4_run(
    c_l: complex,
    c_r: complex,
    params: DimerParams,
    dt: float,
    n_samples: int,
    stride: int,
) -> np.ndarray:
    """经典 RK4 推进，每 ``stride`` 步记录一次振幅"""
    hop = 0.5 * params.J / params.hbar
    g = params.U * (params.N - 1) / params.hbar
    e_l = params.eps_L / params.hbar
    e_r = params.eps_R / params.hbar
    h = dt
    h2 = 0.5 * dt
    h6 = dt / 6.0

    def f(a: complex, b: complex) -> Tuple[complex, complex]:
        na = a.real * a.real + a.imag * a.imag
        nb = b.real * b.real + b.imag * b.imag
        return (
            -1j * ((e_l + g * na) * a - hop * b),
            -1j * ((e_r + g * nb) * b - hop * a),
        )

    out = np.empty((n_samples, 2), dtype=complex)
    out[0] = (c_l, c_r)
    a, b = c_l, c_r
    for k in range(1, n_samples):
        for _ in range(stride):
            k1a, k1b = f(a, b)
            k2a, k2b = f(a + h2 * k1a, b + h2 * k1b)
            k3a, k3b = f(a + h2 * k2a, b + h2 * k2b)
            k4a, k4b = f(a + h * k3a, b + h * k3b)
            a = a + h6 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
            b = b + h6 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        out[k] = (a, b)
    return out


def meanfield_energy_series(amplitudes: np.ndarray, params: DimerParams) -> np.ndarray:
    """沿采样振幅轨迹的 H/N（向量化）"""
    c_l = amplitudes[:, 0]
    c_r = amplitudes[:, 1]
    n_l = np.abs(c_l) ** 2
    n_r = np.abs(c_r) ** 2
    hopping = -params.J * np.real(np.conj(c_l) * c_r)
    return (
        hopping
        + 0.5 * params.U * (params.N - 1) * (n_l ** 2 + n_r ** 2)
        + params.eps_L * n_l
        + params.eps_R * n_r
    )


def _drifts(amplitudes: np.ndarray, params: DimerParams) -> Tuple[float, float]:
    norms = np.sum(np.abs(amplitudes) ** 2, axis=1)
    energies = meanfield_energy_series(amplitudes, params)
    norm_drift = float(np.max(np.abs(norms - norms[0])))
    energy_drift = float(np.max(np.abs(energies - energies[0])) / params.J)
    return norm_drift, energy_drift


def integrate_gpe(
    initial: MeanFieldState,
    params: DimerParams,
    cfg: IntegratorConfig,
) -> GpeTrajectory:
    """
    从 ``initial`` 积分 Gross-Pitaevskii 方程到 ``cfg.t_end``

    采样网格由初始步长与采样间隔确定；每次减半步长时采样间隔步数加倍，
    采样时刻保持不变。某次积分漂移超标时，按 RK4 误差阶外推还需减半的
    次数后重新积分。

    Args:
        initial: 初始振幅
        params: 物理参数
        cfg: 步长控制

    Returns:
        GpeTrajectory: 轨迹、实际步长与漂移

    Raises:
        IntegrationAccuracyError: 减半 ``cfg.max_halvings`` 次后漂移仍超标时
    """
    sample_dt = cfg.dt * cfg.sample_every
    n_intervals = max(1, int(math.ceil(cfg.t_end / sample_dt - 1e-9)))
    # 拉伸采样间隔，使网格恰好终止于 t_end
    sample_dt = cfg.t_end / n_intervals
    n_samples = n_intervals + 1

    halvings = 0
    while True:
        stride = cfg.sample_every * (2 ** halvings)
        dt = sample_dt / stride
        amplitudes = _rk4_run(initial.c_L, initial.c_R, params, dt, n_samples, stride)
        norm_drift, energy_drift = _drifts(amplitudes, params)
        logger.debug(
            f"GPE 积分 Λ={params.scaled_interaction():.4g} dt={dt:.3e} 减半 {halvings} 次，"
            f"范数漂移 {norm_drift:.2e}，能量漂移 {energy_drift:.2e}"
        )
        if norm_drift < cfg.norm_tol and energy_drift < cfg.energy_tol:
            break
        if halvings >= cfg.max_halvings:
            raise IntegrationAccuracyError(
                f"drift targets missed after {halvings} halvings at dt={dt:.3e}: "
                f"norm drift {norm_drift:.3e}, energy drift {energy_drift:.3e}",
                norm_drift=norm_drift,
                energy_drift=energy_drift,
                dt=dt,
            )
        ratio = max(norm_drift / cfg.norm_tol, energy_drift / cfg.energy_tol)
        extra = int(math.ceil(math.log(ratio) / math.log(_RK4_DRIFT_GAIN_PER_HALVING)))
        halvings = min(cfg.max_halvings, halvings + max(1, extra))
        logger.info(f"漂移超标，步长减半至第 {halvings} 次后重新积分")

    z = 1.0 - 2.0 * np.abs(amplitudes[:, 1]) ** 2
    series = TimeSeries(
        t_start=0.0,
        dt=sample_dt,
        values=z,
        meta={"dt": dt, "halvings": halvings, "method": "meanfield-numeric"},
    )
    return GpeTrajectory(
        z=series,
        amplitudes=amplitudes,
        dt_used=dt,
        halvings=halvings,
        norm_drift=norm_drift,
        energy_drift=energy_drift,
    )


def rabi_state(t: ArrayLike, params: DimerParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    从全左初态出发的无相互作用解析振幅 (c_L(t), c_R(t))

    忽略 U。记 Δ = ε_R - ε_L，Ω = √(J²+Δ²)/2ħ：
        c_R(t) = i J/√(J²+Δ²) e^{-i(ε_L+ε_R)t/2ħ} sin(Ωt)
        c_L(t) = e^{-i(ε_L+ε_R)t/2ħ} [cos(Ωt) + i Δ/√(J²+Δ²) sin(Ωt)]

    Args:
        t: 时间（标量或数组）
        params: 物理参数

    Returns:
        Tuple[np.ndarray, np.ndarray]: 与 t 同形状的 (c_L, c_R)
    """
    t = np.asarray(t, dtype=float)
    delta = params.eps_R - params.eps_L
    root = math.hypot(params.J, delta)
    omega = root / (2.0 * params.hbar)
    phase = np.exp(-0.5j * (params.eps_L + params.eps_R) * t / params.hbar)
    s = np.sin(omega * t)
    c_r = 1j * (params.J / root) * phase * s
    c_l = phase * (np.cos(omega * t) + 1j * (delta / root) * s)
    return c_l, c_r


def rabi_amplitude(t: ArrayLike, params: DimerParams) -> Union[complex, np.ndarray]:
    """无相互作用两模解的右阱振幅 c_R(t)；标量 t 返回 complex"""
    c_r = rabi_state(t, params)[1]
    return complex(c_r) if np.ndim(c_r) == 0 else c_r


def meanfield_zbar(
    params: DimerParams,
    window: Optional[Tuple[float, float]] = None,
    cfg: Optional[IntegratorConfig] = None,
) -> float:
    """
    从全左初态出发的时间平均不平衡度 z̄ = 1 - 2p̄

    Args:
        params: 物理参数
        window: 平均窗口（绝对时间单位），默认 [0, 100 t0]
        cfg: 步长控制，默认由 IntegratorConfig.for_params 生成

    Returns:
        float: z̄

    Raises:
        ParameterError: 积分终止时间早于窗口终点时
        IntegrationAccuracyError: 漂移无法满足要求时
    """
    if window is None:
        window = (0.0, 100.0 * params.t0())
    if cfg is None:
        cfg = IntegratorConfig.for_params(params, t_end=window[1])
    elif cfg.t_end < window[1]:
        raise ParameterError(f"integration ends at {cfg.t_end} before window end {window[1]}")
    trajectory = integrate_gpe(MeanFieldState.all_left(), params, cfg)
    return time_average(trajectory.z, window)

"""
精确多体动力学模块

在 Fock 基 |N-n, n> 中构造 Bose-Hubbard 二聚体哈密顿量。哈密顿量是实对称
三对角矩阵，只对角化一次，各时刻的态由本征分量的相位旋转得到。
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from src.models import (
    PROPAGATED_NORM_TOL,
    DimerParams,
    DimerTrapError,
    FockVector,
    ParameterError,
    TimeSeries,
    time_average,
)


logger = logging.getLogger(__name__)


MAX_PARTICLES = 5000
RECONSTRUCTION_TOL = 1e-9
ORTHOGONALITY_TOL = 1e-10

# 每块传播的时间点数
_CHUNK = 2048


class CapacityError(DimerTrapError):
    """粒子数超过稠密传播子的上限"""
    pass


class SpectralError(DimerTrapError, ArithmeticError):
    """本征分解失败或幺正性丢失"""

    def __init__(self, message: str, **diagnostics: float):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class FockHamiltonian:
    """对称三对角哈密顿量：``diag`` 有 N+1 项，``offdiag`` 有 N 项"""
    N: int
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self) -> None:
        if self.diag.shape != (self.N + 1,) or self.offdiag.shape != (self.N,):
            raise ParameterError(
                f"inconsistent tridiagonal shapes {self.diag.shape}, {self.offdiag.shape} for N={self.N}"
            )

    @property
    def dimension(self) -> int:
        return self.N + 1

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """不构造稠密矩阵计算 H @ vec；vec 形状为 (dim,) 或 (dim, k)"""
        vec = np.asarray(vec)
        diag = self.diag if vec.ndim == 1 else self.diag[:, None]
        off = self.offdiag if vec.ndim == 1 else self.offdiag[:, None]
        out = diag * vec
        out[:-1] += off * vec[1:]
        out[1:] += off * vec[:-1]
        return out

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.diag)), np.max(np.abs(self.offdiag), initial=0.0)))


def build_hamiltonian(params: DimerParams, max_particles: int = MAX_PARTICLES) -> FockHamiltonian:
    """
    在基 |N-n, n>（n = 0..N）中构造二聚体哈密顿量

    Args:
        params: 物理参数
        max_particles: 粒子数上限

    Returns:
        FockHamiltonian: 三对角哈密顿量

    Raises:
        CapacityError: N 超过 ``max_particles`` 时
    """
    N = params.N
    if N > max_particles:
        raise CapacityError(f"N={N} exceeds the dense propagator cap of {max_particles}")
    n = np.arange(N + 1, dtype=float)
    left = N - n
    diag = (
        0.5 * params.U * (left * (left - 1.0) + n * (n - 1.0))
        + params.eps_L * left
        + params.eps_R * n
    )
    m = n[:-1]
    offdiag = -0.5 * params.J * np.sqrt((m + 1.0) * (N - m))
    return FockHamiltonian(N=N, diag=diag, offdiag=offdiag)


def energy_expectation(psi: FockVector, H: FockHamiltonian) -> float:
    value = np.vdot(psi.amps, H.apply(psi.amps))
    return float(value.real)


@dataclass(frozen=True)
class SpectralPropagator:
    """本征分解 H = V diag(E) V^T，V 为正交矩阵"""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    hbar: float = 1.0

    @classmethod
    def from_hamiltonian(cls, H: FockHamiltonian, hbar: float = 1.0) -> "SpectralPropagator":
        """
        对角化 H 并检查重构残差与正交性

        Args:
            H: 三对角哈密顿量
            hbar: 约化普朗克常数

        Returns:
            SpectralPropagator: 谱传播子

        Raises:
            SpectralError: 求解失败或检查不通过时，附带诊断量
        """
        try:
            energies, vectors = eigh_tridiagonal(H.diag, H.offdiag)
        except (LinAlgError, ValueError) as e:
            raise SpectralError(f"tridiagonal eigensolver failed for N={H.N}: {e}") from e

        scale = max(H.max_abs(), np.finfo(float).tiny)
        residual = float(np.max(np.abs(H.apply(vectors) - vectors * energies))) / scale
        orthogonality = float(np.max(np.abs(vectors.T @ vectors - np.eye(H.dimension))))
        gaps = np.diff(energies)
        min_gap = float(gaps.min()) if gaps.size else math.inf
        if residual > RECONSTRUCTION_TOL or orthogonality > ORTHOGONALITY_TOL:
            raise SpectralError(
                f"spectral decomposition inaccurate for N={H.N}: "
                f"residual {residual:.2e}, orthogonality error {orthogonality:.2e}, "
                f"min level gap {min_gap:.2e}",
                residual=residual,
                orthogonality=orthogonality,
                min_gap=min_gap,
            )
        logger.debug(
            f"N={H.N} 的谱：重构残差 {residual:.1e}，正交误差 {orthogonality:.1e}，"
            f"最小能级间隔 {min_gap:.2e}"
        )
        return cls(eigenvalues=energies, eigenvectors=vectors, hbar=hbar)

    @property
    def dimension(self) -> int:
        return self.eigenvalues.size

    def evolve(self, psi0: np.ndarray, times: np.ndarray) -> np.ndarray:
        """振幅 ψ(t) = V exp(-iEt/ħ) V^T ψ0，每个时刻一列"""
        coeffs = self.eigenvectors.T @ psi0
        phases = np.exp(-1j * np.outer(self.eigenvalues, times) / self.hbar)
        return self.eigenvectors @ (coeffs[:, None] * phases)


def _check_psi0(psi0: FockVector, dimension: int) -> None:
    if psi0.dimension != dimension:
        raise ParameterError(
            f"state dimension {psi0.dimension} does not match Hamiltonian dimension {dimension}"
        )
    drift = abs(psi0.norm() - 1.0)
    if drift > PROPAGATED_NORM_TOL:
        raise ParameterError(f"initial Fock state not normalized (|norm - 1| = {drift:.2e})")


def _check_unitarity(block: np.ndarray, t: np.ndarray) -> None:
    norms = np.sqrt(np.sum(np.abs(block) ** 2, axis=0))
    worst = int(np.argmax(np.abs(norms - 1.0)))
    drift = float(abs(norms[worst] - 1.0))
    if drift > PROPAGATED_NORM_TOL:
        raise SpectralError(
            f"propagation lost unitarity at t={t[worst]:.6g}: |norm - 1| = {drift:.2e}",
            norm_drift=drift,
        )


def propagate(
    psi0: FockVector,
    H: FockHamiltonian,
    times: Sequence[float],
    hbar: float = 1.0,
    propagator: Optional[SpectralPropagator] = None,
) -> List[FockVector]:
    """
    把 ``psi0`` 传播到 ``times`` 中的每个时刻

    Args:
        psi0: 归一化初态
        H: 哈密顿量
        times: 时刻列表
        hbar: 约化普朗克常数
        propagator: 预先对角化的传播子，None 时现算

    Returns:
        List[FockVector]: 各时刻的态

    Raises:
        ParameterError: 初态维数不符或未归一化时
        SpectralError: 本征分解失败或范数漂移超过 1e-10 时
    """
    _check_psi0(psi0, H.dimension)
    if propagator is None:
        propagator = SpectralPropagator.from_hamiltonian(H, hbar=hbar)
    times = np.asarray(times, dtype=float)
    states: List[FockVector] = []
    for start in range(0, times.size, _CHUNK):
        t = times[start:start + _CHUNK]
        block = propagator.evolve(psi0.amps, t)
        _check_unitarity(block, t)
        states.extend(FockVector(block[:, k].copy()) for k in range(t.size))
    return states


def imbalance_series(psi: Sequence[FockVector], times: Sequence[float]) -> TimeSeries:
    """均匀时间网格上的 z(t_k) = Σ_n |ψ_k[n]|² (N-2n)/N"""
    times = np.asarray(times, dtype=float)
    if len(psi) != times.size:
        raise ParameterError(f"{len(psi)} states for {times.size} times")
    if times.size < 2:
        raise ParameterError("imbalance series needs at least 2 times")
    dims = {v.dimension for v in psi}
    if len(dims) != 1:
        raise ParameterError(f"inconsistent Fock dimensions {sorted(dims)}")
    steps = np.diff(times)
    dt = float(steps.mean())
    if np.max(np.abs(steps - dt)) > 1e-9 * max(abs(dt), 1.0):
        raise ParameterError("imbalance series needs a uniform time grid")
    values = np.clip([v.imbalance() for v in psi], -1.0, 1.0)
    return TimeSeries(t_start=float(times[0]), dt=dt, values=values)


def _uniform_grid(a: float, b: float, dt_sample: float) -> np.ndarray:
    n_intervals = max(1, int(math.ceil((b - a) / dt_sample - 1e-9)))
    return np.linspace(a, b, n_intervals + 1)


def _imbalance_samples(
    propagator: SpectralPropagator,
    psi0: FockVector,
    times: np.ndarray,
) -> np.ndarray:
    N = psi0.N
    weights = (N - 2.0 * np.arange(N + 1)) / N
    z = np.empty(times.size)
    for start in range(0, times.size, _CHUNK):
        t = times[start:start + _CHUNK]
        block = propagator.evolve(psi0.amps, t)
        _check_unitarity(block, t)
        z[start:start + t.size] = weights @ (np.abs(block) ** 2)
    return np.clip(z, -1.0, 1.0)


def exact_trajectory(
    params: DimerParams,
    t_end: float,
    dt_sample: Optional[float] = None,
    t_start: float = 0.0,
) -> TimeSeries:
    """从 |N,0> 出发在 [t_start, t_end] 均匀网格上的 z(t)（默认 dt = t0/100），按块计算不保存态矢量"""
    if dt_sample is None:
        dt_sample = params.t0() / 100.0
    if not dt_sample > 0 or not t_end > t_start:
        raise ParameterError(f"bad time grid: [{t_start}, {t_end}] with dt={dt_sample}")
    H = build_hamiltonian(params)
    propagator = SpectralPropagator.from_hamiltonian(H, hbar=params.hbar)
    times = _uniform_grid(t_start, t_end, dt_sample)
    values = _imbalance_samples(propagator, FockVector.basis(params.N, 0), times)
    return TimeSeries(
        t_start=float(times[0]),
        dt=float(times[1] - times[0]),
        values=values,
        meta={"method": "exact-quantum", "basis": "n=right"},
    )


def exact_zbar(
    params: DimerParams,
    window: Optional[Tuple[float, float]] = None,
    dt_sample: Optional[float] = None,
) -> float:
    """
    从 |N,0> 出发的时间平均不平衡度

    Args:
        params: 物理参数
        window: 平均窗口（绝对时间单位），默认 [0, 100 t0]
        dt_sample: 采样间隔，默认 t0/100

    Returns:
        float: z̄

    Raises:
        ParameterError: dt_sample 超过 t0/50 时
        CapacityError: N 超过上限时
    """
    t0 = params.t0()
    if window is None:
        window = (0.0, 100.0 * t0)
    if dt_sample is None:
        dt_sample = t0 / 100.0
    if dt_sample > t0 / 50.0 * (1.0 + 1e-12):
        raise ParameterError(f"dt_sample={dt_sample:.4g} exceeds t0/50={t0 / 50.0:.4g}")
    series = exact_trajectory(params, t_end=window[1], dt_sample=dt_sample, t_start=window[0])
    return time_average(series, window)

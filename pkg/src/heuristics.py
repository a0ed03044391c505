"""
闭式近似模块

提供时间平均不平衡度 z̄ 的各种闭式与半经典估计：平均场自洽解、
带粒子数涨落修正的解及其高斯平均（Monte-Carlo、自适应求积、
Gauss-Hermite 与闭式近似）、阈值 α 对应的临界相互作用，
以及它们用到的标准正态分布函数。
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy import integrate
from scipy.special import ndtr, ndtri

from src.models import DimerParams, DimerTrapError, ParameterError


logger = logging.getLogger(__name__)


MIN_MC_SAMPLES = 10_000
_MC_CHUNK = 1_000_000

SeedLike = Union[int, Sequence[int]]
FloatOrArray = Union[float, np.ndarray]


class DomainError(DimerTrapError, ValueError):
    """特殊函数参数超出定义域"""
    pass


# ---------------------------------------------------------------------------
# 标准正态分布
# ---------------------------------------------------------------------------

def normal_pdf(x: ArrayLike) -> np.ndarray:
    """φ(x) = exp(-x²/2)/√(2π)"""
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def normal_cdf(x: ArrayLike) -> np.ndarray:
    """Φ(x) = [1 + erf(x/√2)]/2，尾部由 ndtr 保证精度"""
    return ndtr(x)


def normal_quantile(q: ArrayLike) -> np.ndarray:
    """
    分位数函数 Φ^{-1}(q) = √2 erf^{-1}(2q - 1)

    Args:
        q: 概率值（标量或数组）

    Returns:
        np.ndarray: 对应的分位数

    Raises:
        DomainError: 任一 q 不在 (0, 1) 内时
    """
    arr = np.asarray(q, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError(f"quantile argument must lie in (0, 1), got {q}")
    return ndtri(arr)


# ---------------------------------------------------------------------------
# 粒子数涨落模型
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FluctuationModel:
    """
    N 粒子时 z̄ 的高斯涨落模型

    N 可以是 ``math.inf``（平均场极限，σ_N = 0）。
    """
    N: float

    def __post_init__(self) -> None:
        if not self.N >= 1:
            raise ParameterError(f"N must be >= 1, got {self.N}")

    @property
    def sigma_N(self) -> float:
        """δz̄ 的标准差 1/(2√N)"""
        return 0.0 if math.isinf(self.N) else 1.0 / (2.0 * math.sqrt(self.N))

    @staticmethod
    def x0(lam: float) -> float:
        """阈值 1/Λ - 1/2，要求 Λ > 0"""
        return 1.0 / lam - 0.5

    def x_star(self, lam: float) -> float:
        """平台点 max(x0, (x0 + σ_N)/2, 0)"""
        x0 = self.x0(lam)
        return max(x0, 0.5 * (x0 + self.sigma_N), 0.0)


def number_fluctuation_std(N: float, p: float) -> float:
    """
    右阱粒子数的涨落 Δn_R = √(N p (1-p))

    Args:
        N: 粒子数
        p: 右阱占据概率

    Returns:
        float: 粒子数标准差

    Raises:
        ParameterError: p 不在 [0, 1] 或 N < 1 时
    """
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must lie in [0, 1], got {p}")
    if not N >= 1:
        raise ParameterError(f"N must be >= 1, got {N}")
    return math.sqrt(N * p * (1.0 - p))


def amplitude_std(N: float, p: float) -> float:
    """振幅的涨落 std(p_amp) = Δn_R/N"""
    return number_fluctuation_std(N, p) / N


# ---------------------------------------------------------------------------
# 平均场振荡的启发式描述
# ---------------------------------------------------------------------------

def _check_p_bar(p_bar: float) -> None:
    if not 0.0 <= p_bar <= 0.5:
        raise ParameterError(f"p_bar must lie in [0, 1/2], got {p_bar}")


def p_amp(lam: float, p_bar: float) -> float:
    """振荡振幅 1/(1 + Λ²(1-2p̄)²)"""
    _check_p_bar(p_bar)
    return 1.0 / (1.0 + (lam * (1.0 - 2.0 * p_bar)) ** 2)


def omega_lambda(lam: float, p_bar: float, params: Optional[DimerParams] = None) -> float:
    """振荡频率 ω_Λ = √(1 + Λ²(1-2p̄)²) J/2ħ"""
    _check_p_bar(p_bar)
    params = params or DimerParams()
    return math.sqrt(1.0 + (lam * (1.0 - 2.0 * p_bar)) ** 2) * params.J / (2.0 * params.hbar)


def heuristic_p_of_t(
    t: ArrayLike,
    lam: float,
    p_bar: float,
    params: Optional[DimerParams] = None,
) -> np.ndarray:
    """
    对称双阱中的右阱占据 p(t) = p_amp sin²(ω_Λ t)

    Args:
        t: 时间（标量或数组）
        lam: 标度相互作用 Λ
        p_bar: 时间平均占据 p̄ ∈ [0, 1/2]
        params: 提供 J 与 ħ，默认 J = ħ = 1

    Returns:
        np.ndarray: 与 t 同形状的 p(t)
    """
    return p_amp(lam, p_bar) * np.sin(omega_lambda(lam, p_bar, params) * np.asarray(t)) ** 2


# ---------------------------------------------------------------------------
# 平均场闭式解
# ---------------------------------------------------------------------------

def zbar_meanfield_closed(lam: float) -> float:
    """
    平均场时间平均不平衡度 z̄(Λ)

    |Λ| <= 2 时为 0，否则取三次方程的正根 1/2 + √(1/4 - 1/Λ²)。

    Args:
        lam: 标度相互作用 Λ

    Returns:
        float: z̄ ∈ [0, 1)

    Raises:
        ParameterError: Λ 为 NaN 时
    """
    if math.isnan(lam):
        raise ParameterError("lambda must not be NaN")
    if abs(lam) <= 2.0:
        return 0.0
    return 0.5 + math.sqrt(0.25 - 1.0 / (lam * lam))


def cubic_residual(zbar: float, lam: float) -> float:
    """z̄³ - z̄² + z̄/Λ²，自洽解处为零"""
    return zbar ** 3 - zbar ** 2 + zbar / (lam * lam)


# ---------------------------------------------------------------------------
# 带涨落修正的自洽解
# ---------------------------------------------------------------------------

def zbar_fluct(lam: float, delta_zbar: ArrayLike) -> FloatOrArray:
    """
    单个涨落实现 δz̄ 下的 z̄(Λ, δz̄)

    (δz̄ + 1/2)² - 1/Λ² <= 0 处为 0，否则为 1/2 - δz̄ + √((δz̄ + 1/2)² - 1/Λ²)。

    Args:
        lam: 标度相互作用 Λ > 0
        delta_zbar: 涨落 δz̄（标量或数组）

    Returns:
        标量输入返回 float，数组输入返回同形状数组

    Raises:
        ParameterError: Λ <= 0 时
    """
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    delta = np.asarray(delta_zbar, dtype=float)
    disc = (delta + 0.5) ** 2 - 1.0 / (lam * lam)
    value = np.where(disc > 0.0, 0.5 - delta + np.sqrt(np.maximum(disc, 0.0)), 0.0)
    return float(value) if value.ndim == 0 else value


def dressed_cubic_residual(zbar: float, lam: float, delta: float) -> float:
    """最低阶修正三次方程 z̄³ + (2δ-1)z̄² + (1/Λ² - 2δ)z̄ 的残差"""
    return zbar ** 3 + (2.0 * delta - 1.0) * zbar ** 2 + (1.0 / lam ** 2 - 2.0 * delta) * zbar


def fixed_point_residual(zbar: float, lam: float, delta: float) -> float:
    """
    z̄ = 1 - 1/(1 + Λ²(z̄+δ)²) 的残差，两边乘以 (1 + Λ²(z̄+δ)²)/Λ²

    等于 z̄/Λ² + (z̄+δ)²(z̄-1) = dressed_cubic_residual + δ²(z̄-1)；
    在修正三次方程的根上只剩 δ²(z̄-1)，即最低阶近似略去的项。
    """
    return zbar / (lam * lam) + (zbar + delta) ** 2 * (zbar - 1.0)


def _lower_tail_edge(lam: float) -> float:
    return -1.0 / lam - 0.5


@dataclass(frozen=True)
class MonteCarloEstimate:
    """样本均值及其标准误差"""
    mean: float
    stderr: float
    samples: int


def zbar_mc_average(
    lam: float,
    N: float,
    samples: int = 1_000_000,
    seed: SeedLike = 0,
    include_lower_tail: bool = False,
) -> MonteCarloEstimate:
    """
    对 δz̄ = ζ/(2√N)（ζ 为标准正态变量）做 Monte-Carlo 平均

    默认 δz̄ < -1/Λ - 1/2 的实现记为零，与闭式近似的适用区一致；
    ``include_lower_tail`` 为 True 时按修正公式计算这些实现，对应大 Λ 修正。

    Args:
        lam: 标度相互作用 Λ >= 0
        N: 粒子数
        samples: 样本数，至少 MIN_MC_SAMPLES
        seed: 随机数种子（整数或整数序列）
        include_lower_tail: 是否计入下尾

    Returns:
        MonteCarloEstimate: 均值、标准误差与样本数

    Raises:
        ParameterError: 样本数不足或 N < 1 时
    """
    if samples < MIN_MC_SAMPLES:
        raise ParameterError(f"need at least {MIN_MC_SAMPLES} samples, got {samples}")
    model = FluctuationModel(N)
    if lam == 0:
        return MonteCarloEstimate(mean=0.0, stderr=0.0, samples=samples)
    sigma = model.sigma_N
    rng = np.random.default_rng(seed)
    edge = _lower_tail_edge(lam)
    total = 0.0
    total_sq = 0.0
    remaining = samples
    while remaining > 0:
        size = min(remaining, _MC_CHUNK)
        delta = sigma * rng.standard_normal(size)
        values = zbar_fluct(lam, delta)
        if not include_lower_tail:
            values = np.where(delta < edge, 0.0, values)
        total += float(values.sum())
        total_sq += float(np.dot(values, values))
        remaining -= size
    mean = total / samples
    variance = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    logger.debug(f"Monte-Carlo Λ={lam:.4g} N={N:g}: {samples} 个样本，均值 {mean:.6f}")
    return MonteCarloEstimate(mean=mean, stderr=math.sqrt(variance / samples), samples=samples)


def dropped_term(lam: float, N: float) -> float:
    """推导闭式近似时略去的项 σ_N φ(x0/σ_N)；Λ = 0 或 N = ∞ 时为 0"""
    model = FluctuationModel(N)
    if lam == 0:
        return 0.0
    sigma = model.sigma_N
    if sigma == 0.0:
        return 0.0
    return float(sigma * normal_pdf(model.x0(lam) / sigma))


def _root_part(x: ArrayLike, lam: float) -> np.ndarray:
    return np.sqrt(np.maximum((0.5 + np.asarray(x)) ** 2 - 1.0 / (lam * lam), 0.0))


def zbar_integral_form(lam: float, N: float, include_lower_tail: bool = False) -> float:
    """
    用自适应求积计算修正 z̄ 的高斯平均（不做平台近似）

    写成 1/2 Φ(-x0/σ) - σφ(x0/σ) + ∫_{x0}^∞ √((1/2+x)² - 1/Λ²) φ(x/σ)/σ dx。

    Args:
        lam: 标度相互作用 Λ >= 0
        N: 粒子数
        include_lower_tail: 是否计入 δz̄ < -1/Λ - 1/2 的贡献

    Returns:
        float: 平均后的 z̄
    """
    model = FluctuationModel(N)
    if lam == 0:
        return 0.0
    sigma = model.sigma_N
    if sigma == 0.0:
        return zbar_meanfield_closed(lam)
    x0 = model.x0(lam)
    upper = max(x0, 0.0) + 40.0 * sigma

    def density(x: float) -> float:
        return float(normal_pdf(x / sigma)) / sigma

    def integrand(x: float) -> float:
        return float(_root_part(x, lam)) * density(x)

    value = 0.5 * float(normal_cdf(-x0 / sigma)) - dropped_term(lam, N)
    if x0 < upper:
        value += integrate.quad(integrand, x0, upper, limit=200, epsabs=1e-13, epsrel=1e-12)[0]
    if include_lower_tail:
        edge = _lower_tail_edge(lam)

        def tail(x: float) -> float:
            return (0.5 - x + float(_root_part(x, lam))) * density(x)

        lower = edge - 40.0 * sigma
        if lower < edge:
            value += integrate.quad(tail, lower, edge, limit=200, epsabs=1e-13)[0]
    return value


def zbar_gauss_hermite_average(lam: float, N: float, points: int = 64) -> float:
    """
    用 Gauss-Hermite 求积计算修正 z̄ 的高斯平均

    x0 处的跳变部分解析积出，求积只作用于连续的根式项。
    """
    model = FluctuationModel(N)
    if lam == 0:
        return 0.0
    sigma = model.sigma_N
    if sigma == 0.0:
        return zbar_meanfield_closed(lam)
    x0 = model.x0(lam)
    nodes, weights = np.polynomial.hermite.hermgauss(points)
    delta = math.sqrt(2.0) * sigma * nodes
    root = np.where(delta > x0, _root_part(delta, lam), 0.0)
    smooth = float(np.dot(weights, root)) / math.sqrt(math.pi)
    return 0.5 * float(normal_cdf(-x0 / sigma)) - dropped_term(lam, N) + smooth


# ---------------------------------------------------------------------------
# 带涨落的闭式近似
# ---------------------------------------------------------------------------

def _prefactor(model: FluctuationModel, lam: float) -> float:
    x_star = model.x_star(lam)
    return 0.5 + math.sqrt(max((0.5 + x_star) ** 2 - 1.0 / (lam * lam), 0.0))


def _check_lambda(lam: float) -> None:
    if not (lam >= 0 and not math.isnan(lam)):
        raise ParameterError(f"lambda must be non-negative, got {lam}")


def zbar_closed_form(lam: float, N: float) -> float:
    """
    带涨落的闭式近似 (1/2 + √((1/2 + x*)² - 1/Λ²)) Φ(-x0/σ_N)

    Args:
        lam: 标度相互作用 Λ >= 0
        N: 粒子数，``math.inf`` 时退化为平均场闭式解

    Returns:
        float: z̄ ∈ [0, 1]

    Raises:
        ParameterError: Λ 为负或 NaN，或 N < 1 时
    """
    _check_lambda(lam)
    model = FluctuationModel(N)
    if lam == 0:
        return 0.0
    sigma = model.sigma_N
    if sigma == 0.0:
        return zbar_meanfield_closed(lam)
    x0 = model.x0(lam)
    return _prefactor(model, lam) * float(normal_cdf(-x0 / sigma))


def zbar_closed_form_corrected(lam: float, N: float) -> float:
    """计入 -1/Λ - 1/2 以下涨落的闭式近似；Λ → ∞ 时趋于 1"""
    _check_lambda(lam)
    model = FluctuationModel(N)
    if lam == 0:
        return 0.0
    sigma = model.sigma_N
    if sigma == 0.0:
        return zbar_meanfield_closed(lam)
    weight = float(normal_cdf((0.5 - 1.0 / lam) / sigma) + normal_cdf((-0.5 - 1.0 / lam) / sigma))
    return min(_prefactor(model, lam) * weight, 1.0)


@dataclass(frozen=True)
class CriticalInteraction:
    """临界相互作用 Λ_α：完整表达式与大 N 渐近式"""
    N: float
    alpha: float
    full: float
    asymptote: float


def lambda_critical(N: float, alpha: float) -> CriticalInteraction:
    """
    闭式近似 z̄ 达到阈值 α 时的相互作用 Λ_α

    Args:
        N: 粒子数，可为 ``math.inf``
        alpha: 阈值 α ∈ (0, 1/2)

    Returns:
        CriticalInteraction: 完整表达式与渐近式

    Raises:
        DomainError: α 不在 (0, 1/2) 内或表达式没有正值时
        ParameterError: N < 1 时
    """
    if not 0.0 < alpha < 0.5:
        raise DomainError(f"alpha must lie in (0, 1/2), got {alpha}")
    if not N >= 1:
        raise ParameterError(f"N must be >= 1, got {N}")
    q = float(normal_quantile(2.0 * alpha))
    inv_sqrt_n = 0.0 if math.isinf(N) else 1.0 / math.sqrt(N)
    denominator = 1.0 - q * inv_sqrt_n
    if denominator <= 0.0:
        raise DomainError(f"no critical interaction for N={N}, alpha={alpha}")
    return CriticalInteraction(
        N=N,
        alpha=alpha,
        full=2.0 / denominator,
        asymptote=2.0 + 2.0 * q * inv_sqrt_n,
    )

"""
Data models for the Bose-Hubbard dimer.

This module defines the value types shared by every engine (physical parameters,
mean-field amplitudes, Fock-space vectors, sampled time series) together with the
observables computed directly from them.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid


# Normalization tolerance at construction; propagated states use PROPAGATED_NORM_TOL.
CONSTRUCTION_NORM_TOL = 1e-12
PROPAGATED_NORM_TOL = 1e-10

# Basis convention: index n counts particles in the RIGHT well, |N,0> is index 0.
BASIS_ORDERING = "n=right-well occupation, index 0 = |N,0>"


class DimerTrapError(Exception):
    """Base class for every error raised by this package."""
    pass


class ParameterError(DimerTrapError, ValueError):
    """Invalid physical parameters or state."""
    pass


class RangeError(DimerTrapError, ValueError):
    """Averaging window outside the sampled range."""
    pass


@dataclass(frozen=True)
class DimerParams:
    """Physical configuration of the double well.

    Attributes:
        J: Tunneling rate (energy units), J > 0
        U: On-site interaction (energy units)
        N: Particle count, N >= 1
        eps_L: On-site energy of the left well
        eps_R: On-site energy of the right well
        hbar: Reduced Planck constant (action units)
    """
    J: float = 1.0
    U: float = 0.0
    N: int = 100
    eps_L: float = 0.0
    eps_R: float = 0.0
    hbar: float = 1.0

    def __post_init__(self) -> None:
        errors = []
        if not (math.isfinite(self.J) and self.J > 0):
            errors.append("J must be positive")
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 1:
            errors.append("N must be an integer >= 1")
        if not (math.isfinite(self.hbar) and self.hbar > 0):
            errors.append("hbar must be positive")
        for name in ("U", "eps_L", "eps_R"):
            if not math.isfinite(getattr(self, name)):
                errors.append(f"{name} must be finite")
        if errors:
            raise ParameterError("; ".join(errors))
        object.__setattr__(self, "N", int(self.N))

    @classmethod
    def from_lambda(
        cls,
        lam: float,
        N: int = 2,
        J: float = 1.0,
        eps_L: float = 0.0,
        eps_R: float = 0.0,
        hbar: float = 1.0,
    ) -> "DimerParams":
        """Build parameters from the scaled interaction Λ = U(N-1)/J.

        The mean-field equations only see U(N-1), so N=2 is a valid carrier for
        pure mean-field work.

        Raises:
            ParameterError: if N == 1 and Λ != 0 (no interaction energy with one particle)
        """
        if N == 1:
            if lam != 0:
                raise ParameterError("lambda != 0 is impossible with N = 1")
            return cls(J=J, U=0.0, N=1, eps_L=eps_L, eps_R=eps_R, hbar=hbar)
        return cls(J=J, U=lam * J / (N - 1), N=N, eps_L=eps_L, eps_R=eps_R, hbar=hbar)

    def scaled_interaction(self) -> float:
        """Λ = U(N-1)/J."""
        return self.U * (self.N - 1) / self.J

    def t0(self) -> float:
        """Rabi period 2πħ/J of the noninteracting dimer."""
        return 2.0 * math.pi * self.hbar / self.J

    def to_dict(self) -> Dict[str, Any]:
        return {
            "J": self.J,
            "U": self.U,
            "N": self.N,
            "eps_L": self.eps_L,
            "eps_R": self.eps_R,
            "hbar": self.hbar,
            "lambda": self.scaled_interaction(),
        }


def lambda_(params: DimerParams) -> float:
    """Scaled interaction Λ = U(N-1)/J, the single control parameter of the dimer.

    Args:
        params: Physical configuration

    Returns:
        float: Λ (0 for N = 1)
    """
    return params.scaled_interaction()


@dataclass(frozen=True)
class MeanFieldState:
    """Pair of complex on-site amplitudes (c_L, c_R) with unit norm."""
    c_L: complex
    c_R: complex

    def __post_init__(self) -> None:
        object.__setattr__(self, "c_L", complex(self.c_L))
        object.__setattr__(self, "c_R", complex(self.c_R))
        drift = abs(self.norm() - 1.0)
        if drift > CONSTRUCTION_NORM_TOL:
            raise ParameterError(f"mean-field state not normalized (|norm - 1| = {drift:.3e})")

    @classmethod
    def all_left(cls) -> "MeanFieldState":
        return cls(1.0 + 0j, 0j)

    @classmethod
    def from_population(cls, p: float, theta: float = 0.0) -> "MeanFieldState":
        """Amplitude-phase form c_L = √(1-p), c_R = √p·exp(iθ)."""
        if not 0.0 <= p <= 1.0:
            raise ParameterError(f"population p must lie in [0, 1], got {p}")
        return cls(complex(math.sqrt(1.0 - p)), math.sqrt(p) * complex(math.cos(theta), math.sin(theta)))

    def norm(self) -> float:
        return abs(self.c_L) ** 2 + abs(self.c_R) ** 2

    def p(self) -> float:
        return abs(self.c_R) ** 2

    def z(self) -> float:
        return 1.0 - 2.0 * self.p()

    def theta(self) -> float:
        """Relative phase arg(c_R) - arg(c_L), reduced to (-π, π]."""
        d = math.atan2(self.c_R.imag, self.c_R.real) - math.atan2(self.c_L.imag, self.c_L.real)
        return math.pi - ((math.pi - d) % (2.0 * math.pi))

    def with_global_phase(self, phi: float) -> "MeanFieldState":
        rot = complex(math.cos(phi), math.sin(phi))
        return MeanFieldState(rot * self.c_L, rot * self.c_R)

    def as_array(self) -> np.ndarray:
        return np.array([self.c_L, self.c_R], dtype=complex)


def meanfield_energy_per_particle(state: MeanFieldState, params: DimerParams) -> float:
    """Classical Hamiltonian per particle H/N for the amplitudes of ``state``."""
    c_l, c_r = state.c_L, state.c_R
    n_l = abs(c_l) ** 2
    n_r = abs(c_r) ** 2
    energy = (
        -0.5 * params.J * (c_l.conjugate() * c_r + c_r.conjugate() * c_l)
        + 0.5 * params.U * (params.N - 1) * (n_l * n_l + n_r * n_r)
        + params.eps_L * n_l
        + params.eps_R * n_r
    )
    assert abs(energy.imag) < 1e-14, f"energy has imaginary part {energy.imag}"
    return energy.real


@dataclass(frozen=True)
class FockVector:
    """Amplitudes over the basis |N-n, n>, n = particles in the right well."""
    amps: np.ndarray

    def __post_init__(self) -> None:
        amps = np.asarray(self.amps, dtype=complex)
        if amps.ndim != 1 or amps.size < 2:
            raise ParameterError(f"Fock vector needs N+1 >= 2 amplitudes, got shape {amps.shape}")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def basis(cls, N: int, n: int = 0) -> "FockVector":
        """Number state |N-n, n>."""
        if not 0 <= n <= N:
            raise ParameterError(f"occupation n={n} outside 0..{N}")
        amps = np.zeros(N + 1, dtype=complex)
        amps[n] = 1.0
        return cls(amps)

    @property
    def N(self) -> int:
        return self.amps.size - 1

    @property
    def dimension(self) -> int:
        return self.amps.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def imbalance(self) -> float:
        """<n_L - n_R>/N."""
        n = np.arange(self.dimension)
        weights = (self.N - 2 * n) / self.N
        return float(np.dot(np.abs(self.amps) ** 2, weights))


@dataclass(frozen=True)
class TimeSeries:
    """Scalar observable sampled on a uniform time grid.

    Attributes:
        t_start: Time of the first sample
        dt: Sampling interval (> 0)
        values: Samples
        units: Unit of t_start and dt, written to trajectory file headers
    """
    t_start: float
    dt: float
    values: np.ndarray
    units: str = "hbar/J"
    meta: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ParameterError(f"time step must be positive, got {self.dt}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ParameterError("time series values must be one-dimensional")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.values.size)

    @property
    def t_end(self) -> float:
        return self.t_start + self.dt * (self.values.size - 1)

    def _inside(self, a: float, b: float) -> np.ndarray:
        tol = 1e-9 * self.dt
        if b < a:
            raise RangeError(f"window [{a}, {b}] is reversed")
        if a < self.t_start - tol or b > self.t_end + tol:
            raise RangeError(
                f"window [{a}, {b}] outside sampled range [{self.t_start}, {self.t_end}]"
            )
        t = self.times
        return (t >= a - tol) & (t <= b + tol)

    def window(self, a: float, b: float) -> "TimeSeries":
        mask = self._inside(a, b)
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            raise RangeError(f"no samples inside window [{a}, {b}]")
        return TimeSeries(
            t_start=float(self.times[idx[0]]),
            dt=self.dt,
            values=self.values[idx],
            units=self.units,
            meta=dict(self.meta),
        )

    def minimum(self) -> float:
        return float(self.values.min())


def time_average(series: TimeSeries, window: Optional[Tuple[float, float]] = None) -> float:
    """Trapezoidal mean of the samples inside ``window``.

    Raises:
        RangeError: if the window leaves the sampled range or holds fewer than 2 samples
    """
    a, b = window if window is not None else (series.t_start, series.t_end)
    mask = series._inside(a, b)
    values = series.values[mask]
    if values.size < 2:
        raise RangeError(f"window [{a}, {b}] holds {values.size} sample(s), need at least 2")
    times = series.times[mask]
    span = times[-1] - times[0]
    mean = trapezoid(values, times) / span
    # keep the mean inside the sample range despite rounding
    return float(min(max(mean, values.min()), values.max()))

"""Fourier-coefficient states on the truncated lattice, weighted norms and initial data.

A state holds the coefficients ``u(n)`` for ``n = -N..N`` of

    q(x) = sum_n u(n) exp(i n x),   u(n) = (1/2pi) int q(x) exp(-i n x) dx

on the circle ``[-pi, pi)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

#: Sign convention in force: u'(n) = -i n^s u(n) + 2i sum u u conj(u),
#: Lambda2 = -i sum n^s |v|^2, linear comparison multiplier exp(i t (-n^s + 4P)).
CONVENTION = "udot=-i*n^s*u+2i*conv;Lambda2=-i*sum(n^s|v|^2);H4=+i*sum_l0"


class TruncationError(ValueError):
    """Raised when the lattice is too small for the requested data."""


@dataclass(frozen=True, eq=False)
class FourierState:
    N: int
    coeffs: np.ndarray
    convention_tag: str = CONVENTION

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.shape != (2 * self.N + 1,):
            raise ValueError(f"expected {2 * self.N + 1} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("state contains non-finite coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, N: int, convention_tag: str = CONVENTION) -> "FourierState":
        return cls(N, np.zeros(2 * N + 1, dtype=np.complex128), convention_tag)

    @classmethod
    def from_modes(cls, N: int, modes: dict, convention_tag: str = CONVENTION) -> "FourierState":
        """Build a state from a ``{mode: amplitude}`` mapping."""
        c = np.zeros(2 * N + 1, dtype=np.complex128)
        for n, a in modes.items():
            if abs(n) > N:
                raise TruncationError(f"mode {n} outside [-{N}, {N}]")
            c[n + N] = a
        return cls(N, c, convention_tag)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def __getitem__(self, n: int) -> complex:
        return complex(self.coeffs[n + self.N])

    def _check_compatible(self, other: "FourierState"):
        if self.N != other.N or self.convention_tag != other.convention_tag:
            raise ValueError(
                f"incompatible states: N={self.N}/{other.N}, "
                f"tags {self.convention_tag!r}/{other.convention_tag!r}"
            )

    def replace(self, coeffs) -> "FourierState":
        return FourierState(self.N, coeffs, self.convention_tag)

    def __add__(self, other: "FourierState") -> "FourierState":
        self._check_compatible(other)
        return self.replace(self.coeffs + other.coeffs)

    def __sub__(self, other: "FourierState") -> "FourierState":
        self._check_compatible(other)
        return self.replace(self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "FourierState":
        return self.replace(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "FourierState":
        return self.replace(-self.coeffs)

    def distance(self, other: "FourierState", p: float = 2.0) -> float:
        self._check_compatible(other)
        return weighted_norm(self - other, NormSpec(p))

    def padded(self, N: int) -> "FourierState":
        """Embed into a larger lattice (zero fill)."""
        if N < self.N:
            raise TruncationError("cannot pad to a smaller lattice")
        c = np.zeros(2 * N + 1, dtype=np.complex128)
        c[N - self.N:N + self.N + 1] = self.coeffs
        return FourierState(N, c, self.convention_tag)


@dataclass(frozen=True)
class NormSpec:
    p: float = 2.0
    delta: float = 0.0

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"norm exponent must be >= 1, got {self.p}")
        if not self.delta >= 0:
            raise ValueError(f"weight delta must be >= 0, got {self.delta}")

    @property
    def label(self) -> str:
        p = "inf" if np.isinf(self.p) else f"{self.p:g}"
        return f"l{p}" if self.delta == 0 else f"l{p},{self.delta:g}"


@dataclass(frozen=True)
class Cutoff:
    """Even smooth cutoff: 1 on ``|x| <= plateau``, 0 on ``|x| >= taper``, quintic joint."""

    plateau: float = 1.2
    taper: float = np.pi / 2 + 0.2

    def __post_init__(self):
        if not 0 < self.plateau < self.taper < np.pi:
            raise ValueError("cutoff requires 0 < plateau < taper < pi")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        t = np.clip((np.abs(x) - self.plateau) / (self.taper - self.plateau), 0.0, 1.0)
        # 6t^5 - 15t^4 + 10t^3: C^2 at both ends
        return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


@dataclass(frozen=True)
class InitialDataSpec:
    profile: str = "gaussian"
    epsilon: float = 0.1
    cutoff: Cutoff = field(default_factory=Cutoff)
    amplitude: float = 1.0
    # for profile="custom": f(x) on [-pi, pi), scaled as eps^{-1/2} f(x/eps)
    custom: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.profile not in ("gaussian", "custom"):
            raise ValueError(f"unknown profile {self.profile!r}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.profile == "custom" and self.custom is None:
            raise ValueError("custom profile needs a sampling function")

    def physical(self, x: np.ndarray) -> np.ndarray:
        eps = self.epsilon
        if self.profile == "gaussian":
            base = np.exp(-(x / eps) ** 2)
        else:
            base = np.asarray(self.custom(x / eps), dtype=np.complex128)
        return self.amplitude * eps**-0.5 * base * self.cutoff(x)


TAIL_TOLERANCE = 1e-9


def make_initial_data(spec: InitialDataSpec, N: int, oversample: int = 8) -> FourierState:
    """Fourier coefficients of ``spec.physical`` by the trapezoidal rule.

    The grid carries ``oversample * (2N+1)`` points; the spectral mass the fine grid
    sees beyond ``|n| > N`` must stay below ``TAIL_TOLERANCE`` of the total.
    """
    M = oversample * (2 * N + 1)
    x = -np.pi + 2 * np.pi * np.arange(M) / M
    q = spec.physical(x)
    # trapezoid on a periodic grid == DFT / M; shift so index 0 sits at x = -pi
    full = np.fft.fft(q) / M * np.exp(1j * np.pi * np.fft.fftfreq(M, 1.0 / M))
    k = np.fft.fftfreq(M, 1.0 / M).astype(int)
    inside = np.abs(k) <= N
    mass = np.abs(full) ** 2
    total = mass.sum()
    if total > 0:
        tail = mass[~inside].sum() / total
        if tail > TAIL_TOLERANCE:
            raise TruncationError(
                f"spectral tail beyond N={N} holds {tail:.2e} of the mass "
                f"(eps={spec.epsilon}); increase N"
            )
    coeffs = np.zeros(2 * N + 1, dtype=np.complex128)
    coeffs[k[inside] + N] = full[inside]
    return FourierState(N, coeffs)


def weighted_norm(state: FourierState, spec: NormSpec = NormSpec()) -> float:
    """``(sum |u(n)|^p e^{delta |n| p})^{1/p}``, supremum for ``p = inf``."""
    a = np.abs(state.coeffs)
    if spec.delta:
        a = a * np.exp(spec.delta * np.abs(state.modes))
    if np.isinf(spec.p):
        return float(a.max(initial=0.0))
    if spec.p == 1:
        return float(a.sum())
    if spec.p == 2:
        return float(np.sqrt(np.sum(a * a)))
    return float(np.sum(a**spec.p) ** (1.0 / spec.p))


def class_constant(state: FourierState, epsilon: float, delta: float = 0.0) -> float:
    """Smallest C with ``||u||_inf <= C eps^{1/2}`` and ``||u||_1 <= C eps^{-1/2}``."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    sup = weighted_norm(state, NormSpec(np.inf, delta))
    one = weighted_norm(state, NormSpec(1.0, delta))
    return max(sup * epsilon**-0.5, one * epsilon**0.5)


def power(state: FourierState) -> float:
    """``P = sum |u(n)|^2`` (equals ``||q||_2^2 / 2pi``)."""
    return float(np.sum(np.abs(state.coeffs) ** 2))


def random_state(N: int, rng: np.random.Generator, amplitude: float = 1.0) -> FourierState:
    c = rng.standard_normal(2 * N + 1) + 1j * rng.standard_normal(2 * N + 1)
    return FourierState(N, amplitude * c)

"""Time integration of the truncated NLS mode system.

Convention::

    u'(n) = -i n^s u(n) + 2 i g sum_{m1+m2-m3=n} u(m1) u(m2) conj(u(m3))

with ``s`` the dispersion exponent (2, or 4 for the biharmonic variant) and
``g = +1`` focusing, ``g = -1`` defocusing. The conserved real energy is
``E = sum n^s |u|^2 - g sum_{l(m)=0} u u conj(u) conj(u)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import List

import numpy as np
import scipy.fft as sfft
from scipy.integrate import solve_ivp

from .lattice import FourierState, power

SCHEMES = ("strang-splitstep", "rk4-interaction-picture")


class StepInstability(RuntimeError):
    pass


class ToleranceNotMet(RuntimeError):
    pass


@dataclass(frozen=True)
class SchemeSpec:
    scheme: str = "strang-splitstep"
    dt: float = 1e-3
    dispersion_exponent: int = 2
    focusing: bool = True
    # splitstep only: 2 is plain Strang, 4 and 6 compose Strang substeps (Suzuki)
    order: int = 2

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.dispersion_exponent not in (2, 4):
            raise ValueError("dispersion exponent must be 2 or 4")
        if self.order not in (2, 4, 6):
            raise ValueError("composition order must be 2, 4 or 6")

    @property
    def gamma(self) -> float:
        return 1.0 if self.focusing else -1.0


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: List[FourierState]
    power: np.ndarray
    energy: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    @property
    def initial(self) -> FourierState:
        return self.states[0]

    @property
    def final(self) -> FourierState:
        return self.states[-1]


# -- dealiased transforms ---------------------------------------------------------

@lru_cache(maxsize=None)
def grid_size(N: int) -> int:
    """Smallest fast FFT length >= 4N+2: cubic terms then land on |n| <= N without wraparound."""
    return sfft.next_fast_len(4 * N + 2)


def to_grid(coeffs: np.ndarray, N: int, M: int | None = None) -> np.ndarray:
    """Values of ``q(x_j) = sum_n u(n) e^{i n x_j}`` on ``x_j = 2 pi j / M``."""
    M = M or grid_size(N)
    full = np.zeros(M, dtype=np.complex128)
    full[: N + 1] = coeffs[N:]
    if N:
        full[-N:] = coeffs[:N]
    return sfft.ifft(full) * M


def from_grid(values: np.ndarray, N: int) -> np.ndarray:
    M = values.shape[-1]
    full = sfft.fft(values) / M
    out = np.empty(2 * N + 1, dtype=np.complex128)
    out[N:] = full[: N + 1]
    if N:
        out[:N] = full[-N:]
    return out


def _nonlinear(coeffs: np.ndarray, N: int) -> np.ndarray:
    q = to_grid(coeffs, N)
    return 2.0 * from_grid(np.abs(q) ** 2 * q, N)


def nonlinear_term(state: FourierState) -> FourierState:
    """``2 sum_{m1+m2-m3=n} u(m1) u(m2) conj(u(m3))`` for ``|n| <= N``."""
    return state.replace(_nonlinear(state.coeffs, state.N))


@lru_cache(maxsize=None)
def _triple_index(K: int) -> np.ndarray:
    i = np.arange(K)
    i3 = i[:, None, None] + i[None, :, None] - i[None, None, :]
    return np.where((i3 >= 0) & (i3 < K), i3, K)  # K points at a zero pad


def nonlinear_term_direct(coeffs: np.ndarray) -> np.ndarray:
    """Same cubic convolution by explicit O(N^3) summation (reference for small N)."""
    K = len(coeffs)
    cb = np.append(np.conj(coeffs), 0.0)
    pair = np.outer(coeffs, coeffs)
    return 2.0 * np.einsum("ab,abn->n", pair, cb[_triple_index(K)])


def dispersion(N: int, sigma: int) -> np.ndarray:
    return np.arange(-N, N + 1, dtype=np.float64) ** sigma


def hamiltonian_energy(state: FourierState, sigma: int = 2, focusing: bool = True) -> float:
    """Real energy ``sum n^s |u|^2 - g sum_{l=0} u u conj(u) conj(u)``."""
    c = state.coeffs
    kinetic = np.sum(dispersion(state.N, sigma) * np.abs(c) ** 2)
    q = to_grid(c, state.N)
    quartic = np.mean(np.abs(q) ** 4)  # exact: |q|^4 has modes up to 4N < M
    g = 1.0 if focusing else -1.0
    return float(kinetic - g * quartic)


def linear_flow(state: FourierState, t: float, P: float, sigma: int = 2) -> FourierState:
    """Multiply mode ``n`` by ``exp(i t (-n^s + 4P))``."""
    return state.replace(state.coeffs * np.exp(1j * t * (-dispersion(state.N, sigma) + 4.0 * P)))


def plane_wave_oracle(a: complex, n0: int, t: float, N: int | None = None):
    """Exact single-mode solution and its distance to the linear comparison flow.

    ``u(n0, t) = a exp(i t (-n0^2 + 2|a|^2))``; the comparison flow uses ``P = |a|^2``
    and differs by ``2|a| |sin(|a|^2 t)|`` in every norm.
    """
    N = abs(n0) if N is None else N
    r2 = abs(a) ** 2
    state = FourierState.from_modes(N, {n0: a * np.exp(1j * t * (-(n0**2) + 2.0 * r2))})
    return state, 2.0 * abs(a) * abs(np.sin(r2 * t))


# -- steppers ---------------------------------------------------------------------

def suzuki_weights(order: int) -> list:
    """Substep fractions of Suzuki's fractal composition of Strang steps.

    Each level replaces a step by five, ``(p, p, 1-4p, p, p)`` with
    ``p = 1/(4 - 4^(1/(k+1)))``; smaller error constants than the triple jump.
    """
    w = [1.0]
    for k in range(2, order, 2):
        p = 1.0 / (4.0 - 4.0 ** (1.0 / (k + 1)))
        w = [a * b for a in (p, p, 1.0 - 4.0 * p, p, p) for b in w]
    return w


class Stepper:
    """Precomputes the multipliers for one lattice/scheme pair; ``dt`` may be negative."""

    def __init__(self, N: int, scheme: SchemeSpec, dt: float | None = None):
        self.N = N
        self.scheme = scheme
        self.dt = scheme.dt if dt is None else dt
        self.omega = dispersion(N, scheme.dispersion_exponent)
        self.gamma = scheme.gamma
        self.M = grid_size(N)
        h = self.dt
        self.half = np.exp(-0.5j * self.omega * h)
        self.full = self.half * self.half
        if scheme.scheme == "strang-splitstep":
            self.stages = [(np.exp(-0.5j * self.omega * w * h), w * h)
                           for w in suzuki_weights(scheme.order)]

    def rhs_nonlinear(self, c: np.ndarray) -> np.ndarray:
        return 1j * self.gamma * _nonlinear(c, self.N)

    def __call__(self, c: np.ndarray) -> np.ndarray:
        if self.scheme.scheme == "strang-splitstep":
            # every substep is unitary on |n| <= N, so l2 moves only by rounding
            for half, h in self.stages:
                c = half * c
                q = to_grid(c, self.N, self.M)
                q = q * np.exp(2j * self.gamma * h * np.abs(q) ** 2)
                c = half * from_grid(q, self.N)
            return c
        # Lawson RK4 on w = e^{i Omega t} u
        h = self.dt
        f = self.rhs_nonlinear
        k1 = f(c)
        a = self.half * (c + 0.5 * h * k1)
        k2 = f(a)
        b = self.half * c + 0.5 * h * k2
        k3 = f(b)
        d = self.full * c + h * self.half * k3
        k4 = f(d)
        return self.full * c + h / 6.0 * (self.full * k1 + 2.0 * self.half * (k2 + k3) + k4)


def step(state: FourierState, scheme: SchemeSpec, P: float | None = None) -> FourierState:
    """One time step. ``P`` is accepted for interface symmetry and unused by the schemes."""
    before = power(state)
    out = state.replace(Stepper(state.N, scheme)(state.coeffs))
    _check_power(before, power(out))
    return out


def _check_power(before: float, after: float, tol: float = 1e-6):
    if before > 0 and abs(after - before) > tol * before:
        raise StepInstability(f"l2 power drifted by {abs(after - before) / before:.2e} in one step")


def evolve(state: FourierState, T: float, scheme: SchemeSpec, snapshot_every: int = 1,
           reverse: bool = False) -> Trajectory:
    """Iterate ``step`` up to ``T``; record every ``snapshot_every``-th state.

    The step count is ``round(T / dt)``; the final time is within ``dt`` of ``T``.
    ``reverse`` integrates backwards in time (recorded times stay increasing offsets).
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be >= 1")
    nsteps = max(1, int(round(T / scheme.dt)))
    sigma = scheme.dispersion_exponent
    stepper = Stepper(state.N, scheme, -scheme.dt if reverse else scheme.dt)
    c = state.coeffs
    p_prev = power(state)
    times, states, pw, en = [0.0], [state], [p_prev], [hamiltonian_energy(state, sigma, scheme.focusing)]
    for k in range(1, nsteps + 1):
        c = stepper(c)
        p = float(np.sum(np.abs(c) ** 2))
        _check_power(p_prev, p)
        p_prev = p
        if k % snapshot_every == 0 or k == nsteps:
            s = state.replace(c)
            times.append(k * scheme.dt)
            states.append(s)
            pw.append(p)
            en.append(hamiltonian_energy(s, sigma, scheme.focusing))
    return Trajectory(np.array(times), states, np.array(pw), np.array(en))


def _split(c):
    return np.concatenate([c.real, c.imag])


def _join(y):
    K = len(y) // 2
    return y[:K] + 1j * y[K:]


def ode_oracle(state: FourierState, T: float, tol: float = 1e-11, sigma: int = 2,
               focusing: bool = True, t_eval=None):
    """Reference solution with DOP853 and the direct convolution right-hand side.

    Returns the final state, or the list of states at ``t_eval`` when given.
    """
    if state.N > 16:
        raise ValueError("ode_oracle uses O(N^3) sums; restrict to N <= 16")
    omega = dispersion(state.N, sigma)
    g = 1.0 if focusing else -1.0

    def rhs(t, y):
        c = _join(y)
        return _split(-1j * omega * c + 1j * g * nonlinear_term_direct(c))

    sol = solve_ivp(rhs, (0.0, T), _split(state.coeffs), method="DOP853",
                    rtol=tol, atol=tol, t_eval=t_eval)
    if not sol.success:
        raise ToleranceNotMet(sol.message)
    if t_eval is None:
        return state.replace(_join(sol.y[:, -1]))
    return [state.replace(_join(sol.y[:, k])) for k in range(sol.y.shape[1])]


def ode_rhs(state: FourierState, sigma: int = 2, focusing: bool = True) -> FourierState:
    """``u'`` of the truncated system at ``state`` (direct sums, small N)."""
    g = 1.0 if focusing else -1.0
    c = state.coeffs
    return state.replace(-1j * dispersion(state.N, sigma) * c + 1j * g * nonlinear_term_direct(c))

"""Numeric normal-form changes of variables and the transformed-equation residual.

The generators are the truncated-lattice polynomials built by ``hambra``::

    F1 = sum_{l=0, q!=0} v(m1) v(m2) conj(v(m3)) conj(v(m4)) / (2 (m1-m3)(m2-m3))
    F2 = G - conj(G),
    G  = sum v(p1) v(p2) v(p3) conj(v(p4)) conj(v(p5)) conj(v(p6)) / (q6 (p2-p6)(p6-p3))

where the sextic sum runs over ``p4, p5 != p1``, ``p2, p3 != p6``, ``q6 != 0`` and an
intermediate bracket mode ``n = p4+p5-p1 = p2+p3-p6`` inside the lattice. Both are
evaluated numerically here; the tests tie them back to the exact polynomials.

Writing ``beta = (p1-p4)(p1-p5)`` and ``alpha = (p2-p6)(p6-p3)`` one has
``q6 = 2 (alpha + beta)``, so for every ``n`` the sextic sum collapses to a
correlation of two histograms over integer keys with the kernel ``1/(2s)``.
That correlation is done by FFT, which brings the gradient from O(N^5) to
O(N^3 log N).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .dynamics import Trajectory, dispersion
from .lattice import FourierState, power

F2_MODE_CAP = 64


class SelfConvergenceError(RuntimeError):
    pass


class SpacingError(ValueError):
    pass


@dataclass(frozen=True)
class FlowSpec:
    generator: str = "F1"
    s: float = 1.0
    substeps: int = 16

    def __post_init__(self):
        if self.generator not in ("F1", "F2"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.substeps < 4:
            raise ValueError("substeps must be >= 4")
        if abs(self.s) > 1:
            raise ValueError("|s| must be <= 1")


# -- dF1/dconj(w) -----------------------------------------------------------------

def _f1_grad(w: np.ndarray) -> np.ndarray:
    """``sum_{m1,m2 != n} w(m1) w(m2) conj(w(m1+m2-n)) / ((m1-n)(m2-n))``."""
    K = len(w)
    N = (K - 1) // 2
    # pad so every n + j (|j| <= 2N) and n + j + k stays addressable
    pad = 4 * N
    W = np.zeros(K + 2 * pad, dtype=np.complex128)
    W[pad:pad + K] = w
    Wb = np.conj(W)
    n_idx = np.arange(K) + pad
    offs = np.arange(-2 * N, 2 * N + 1)
    offs = offs[offs != 0]
    A = W[n_idx[:, None] + offs[None, :]] / offs[None, :]          # w(n+j)/j
    out = np.zeros(K, dtype=np.complex128)
    for j in offs:
        # sum_k w(n+k)/k * conj(w(n+j+k))
        S = np.sum(A * Wb[n_idx[:, None] + j + offs[None, :]], axis=1)
        out += W[n_idx + j] / j * S
    return out


def f1_gradient(state: FourierState) -> FourierState:
    return state.replace(_f1_grad(state.coeffs))


# -- dF2/dconj(w) -----------------------------------------------------------------

class _SexticTables:
    """Index tables for one lattice size: triples ``(c, a, b)`` with ``n = a+b-c`` in range."""

    def __init__(self, N: int):
        K = 2 * N + 1
        r = np.arange(-N, N + 1)
        c, a, b = (g.ravel() for g in np.meshgrid(r, r, r, indexing="ij"))
        n = a + b - c
        keep = (np.abs(n) <= N) & (a != c) & (b != c)
        c, a, b, n = c[keep], a[keep], b[keep], n[keep]
        key = (c - a) * (c - b)
        self.N, self.K = N, K
        self.c, self.a, self.b = c + N, a + N, b + N
        self.kmin = int(key.min()) if key.size else 0
        R = int(key.max()) - self.kmin + 1 if key.size else 1
        self.R = R
        self.key = key.astype(np.float64)
        self.flat = (n + N) * R + (key - self.kmin)
        self.keys_row = np.arange(R) + self.kmin
        with np.errstate(divide="ignore"):
            self.inv_key_row = np.where(self.keys_row != 0, 1.0 / np.where(self.keys_row != 0, self.keys_row, 1), 0.0)
        # kernel 1/(2s), s = key1 - key2 in (-R, R), zero at s = 0; circular length >= 2R-1
        L = sfft.next_fast_len(2 * R - 1)
        s = np.arange(L)
        s = np.where(s < R, s, s - L).astype(np.float64)
        kern = np.zeros(L)
        nz = (s != 0) & (np.abs(s) < R)
        kern[nz] = 0.5 / s[nz]
        self.L = L
        self.kern_hat = sfft.fft(kern)
        self.direct = R <= 256

    def correlate(self, H: np.ndarray) -> np.ndarray:
        """``out[n, k1] = sum_k2 H[n, k2] kern(k1 - k2)`` for rows of ``H``."""
        R = self.R
        if self.direct:
            s = np.arange(R)[:, None] - np.arange(R)[None, :]
            k = np.zeros(s.shape)
            k[s != 0] = 0.5 / s[s != 0]
            return H @ k.T
        out = np.empty_like(H)
        step = max(1, int(2**24 // self.L))
        for lo in range(0, H.shape[0], step):
            block = sfft.fft(H[lo:lo + step], n=self.L, axis=1)
            out[lo:lo + step] = sfft.ifft(block * self.kern_hat[None, :], axis=1)[:, :R]
        return out


@lru_cache(maxsize=8)
def _tables(N: int) -> _SexticTables:
    return _SexticTables(N)


def _bincount(idx, weights, K):
    return np.bincount(idx, weights.real, K) + 1j * np.bincount(idx, weights.imag, K)


def _f2_grad(v: np.ndarray) -> np.ndarray:
    t = _tables((len(v) - 1) // 2)
    K, R = t.K, t.R
    if t.c.size == 0:
        return np.zeros(K, dtype=np.complex128)
    vb = np.conj(v)
    c, a, b = t.c, t.a, t.b
    # H[n, key] = sum v(c) conj(v(a)) conj(v(b)); every other histogram is a conjugate
    # of this one, possibly scaled by -1/key
    w = v[c] * vb[a] * vb[b]
    H = _bincount(t.flat, w, K * R).reshape(K, R)
    A = t.correlate(H).ravel()[t.flat]                          # (H * kern)
    Bc = t.correlate(H * t.inv_key_row[None, :]).ravel()[t.flat]  # ((H/key) * kern)
    inv = 1.0 / t.key
    # dF2/dconj(v) = dG/dy at (v, conj v) - dG/dx at (conj v, v). The a- and b-slot
    # scatters coincide under the a <-> b symmetry of the triple set, hence the 2.
    C2 = -np.conj(Bc)            # dG/dH1 at (v, conj v)
    E2 = A * inv                 # -dG/dH2 / key at (v, conj v)
    C2s = -Bc                    # same at (conj v, v)
    E2s = np.conj(A) * inv
    g = 2.0 * _bincount(a, (C2 - E2s) * v[c] * vb[b], K)
    g += _bincount(c, (E2 - C2s) * v[a] * v[b], K)
    return g


def f2_value(state: FourierState) -> complex:
    """``F2`` at ``state`` via the same histogram factorisation."""
    v = state.coeffs
    t = _tables(state.N)
    if t.c.size == 0:
        return 0j
    vb = np.conj(v)
    H = _bincount(t.flat, v[t.c] * vb[t.a] * vb[t.b], t.K * t.R).reshape(t.K, t.R)
    H2 = -np.conj(H) * t.inv_key_row[None, :]
    G = np.sum(H * t.correlate(H2))
    # G(conj v, v) = conj(G(v, conj v)) since every coefficient is real
    return complex(G - np.conj(G))


def f2_gradient(state: FourierState, override: bool = False) -> FourierState:
    if state.N > F2_MODE_CAP and not override:
        raise ValueError(f"f2_gradient guarded to N <= {F2_MODE_CAP}; pass override=True")
    return state.replace(_f2_grad(state.coeffs))


def f1_value(state: FourierState) -> complex:
    """``F1`` at ``state``: ``(1/2) sum_n conj(v(n)) dF1/dconj(v(n))`` (degree-2 homogeneity in conj v)."""
    return complex(0.5 * np.sum(np.conj(state.coeffs) * _f1_grad(state.coeffs)))


GRADIENTS: dict = {"F1": _f1_grad, "F2": _f2_grad}


# -- flows ------------------------------------------------------------------------

def _rk4(grad: Callable, w: np.ndarray, s: float, substeps: int) -> np.ndarray:
    h = s / substeps
    for _ in range(substeps):
        k1 = grad(w)
        k2 = grad(w + 0.5 * h * k1)
        k3 = grad(w + 0.5 * h * k2)
        k4 = grad(w + h * k3)
        w = w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return w


def flow_F(state: FourierState, spec: FlowSpec, check: bool = True,
           tol: float = 1e-6, override: bool = False) -> FourierState:
    """Time-``s`` map of ``dw/ds = dF/dconj(w)`` by classical RK4.

    With ``check`` the map is recomputed with doubled substeps and the two results
    must agree to ``tol`` in l2.
    """
    if spec.generator == "F2" and state.N > F2_MODE_CAP and not override:
        raise ValueError(f"F2 flow guarded to N <= {F2_MODE_CAP}; pass override=True")
    if spec.s == 0:
        return state
    grad = GRADIENTS[spec.generator]
    w = _rk4(grad, state.coeffs, spec.s, spec.substeps)
    if check:
        w2 = _rk4(grad, state.coeffs, spec.s, 2 * spec.substeps)
        diff = float(np.linalg.norm(w - w2))
        if not diff <= tol:  # NaN counts as failure
            raise SelfConvergenceError(
                f"{spec.generator} flow changed by {diff:.2e} when doubling substeps"
            )
        w = w2
    return state.replace(w)


@dataclass(frozen=True)
class NormalFormMap:
    """The change of variables ``u = X_F1^1(X_F2^1(v))``; ``generators`` may drop either flow."""

    generators: Sequence[str] = ("F1", "F2")
    substeps: int = 16
    f2_substeps: int | None = None  # defaults to ``substeps``
    check: bool = True
    override: bool = False

    def _apply(self, state, order, s):
        for g in order:
            if g in self.generators:
                n = self.f2_substeps if g == "F2" and self.f2_substeps else self.substeps
                state = flow_F(state, FlowSpec(g, s, n), self.check, override=self.override)
        return state


def u_to_v(state: FourierState, nf: NormalFormMap = NormalFormMap()) -> FourierState:
    return nf._apply(state, ("F1", "F2"), -1.0)


def v_to_u(state: FourierState, nf: NormalFormMap = NormalFormMap()) -> FourierState:
    return nf._apply(state, ("F2", "F1"), 1.0)


def linear_multiplier(N: int, P: float, sigma: int = 2) -> np.ndarray:
    """``L(n) = -n^s + 4P``; the leading transformed flow is ``exp(i L t)``."""
    return -dispersion(N, sigma) + 4.0 * P


def residual_E(traj: Trajectory, P: float | None = None, nf: NormalFormMap = NormalFormMap(),
               dt: float | None = None, sigma: int = 2, return_v: bool = False):
    """Error term of the transformed equation at every interior snapshot.

    Each snapshot is pulled back to ``v``; ``w(t) = exp(-iLt) v(t)`` is differenced
    centrally and ``E = exp(iLt) w'(t)``. Returns ``(times, [FourierState, ...])``,
    plus a dict ``{snapshot index: v}`` of the pullbacks when ``return_v``.
    Snapshots that no difference uses (the middle of three) are not pulled back.
    """
    times = np.asarray(traj.times)
    if len(times) < 3:
        raise SpacingError("need at least three snapshots")
    gaps = np.diff(times)
    h = float(gaps.mean())
    if not np.allclose(gaps, h, rtol=1e-9, atol=1e-15):
        raise SpacingError("snapshots must be evenly spaced")
    if dt is not None and h > 10 * dt * (1 + 1e-12):
        raise SpacingError(f"snapshot spacing {h:g} exceeds 10 dt = {10 * dt:g}")
    if P is None:
        P = power(traj.initial)
    N = traj.initial.N
    L = linear_multiplier(N, P, sigma)
    needed = sorted({k + d for k in range(1, len(times) - 1) for d in (-1, 1)})
    vs = {k: u_to_v(traj.states[k], nf) for k in needed}
    w = {k: np.exp(-1j * L * times[k]) * vs[k].coeffs for k in needed}
    out = []
    for k in range(1, len(times) - 1):
        dw = (w[k + 1] - w[k - 1]) / (2.0 * h)
        out.append(traj.states[k].replace(np.exp(1j * L * times[k]) * dw))
    if return_v:
        return times[1:-1], out, vs
    return times[1:-1], out

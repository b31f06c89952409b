"""Exact polynomial Hamiltonians on the truncated integer Fourier lattice.

A monomial ``v(m_1)...v(m_a) conj(v(k_1))...conj(v(k_b))`` is keyed by the pair of
ascending index tuples ``((m_1, ..., m_a), (k_1, ..., k_b))``. Coefficients are
Gaussian rationals stored as ``(re, im)`` pairs of ``gmpy2.mpq``; no arithmetic on
them ever rounds. The coefficient of a key absorbs every ordering of its factors,
so ``i * sum_{ordered l(m)=0} v v conj(v) conj(v)`` stores ``i * (number of orderings)``.

Poisson bracket::

    {A, B} = sum_n dA/dv(n) dB/dconj(v(n)) - dA/dconj(v(n)) dB/dv(n)

With this bracket the flow ``dw/ds = dF/dconj(w)`` of an imaginary generator
satisfies ``d/ds G(w(s)) = {G, F}(w(s))``.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from gmpy2 import mpq

from .lattice import FourierState

ZERO = mpq(0)
ONE = mpq(1)
MAX_NSYM = 12

Key = tuple  # ((unconj...), (conj...))


def gq(re=0, im=0) -> tuple:
    """Gaussian rational ``re + i im``."""
    return (mpq(re), mpq(im))


def _mul(a, b):
    ar, ai = a
    br, bi = b
    if not ai and not bi:
        return (ar * br, ZERO)
    if not ar and not br:
        return (-(ai * bi), ZERO)
    if not ai and not br:
        return (ZERO, ar * bi)
    if not ar and not bi:
        return (ZERO, ai * br)
    return (ar * br - ai * bi, ar * bi + ai * br)


def _div(a, b):
    br, bi = b
    den = br * br + bi * bi
    if not den:
        raise ZeroDivisionError("division by zero Gaussian rational")
    return _mul(a, (br / den, -bi / den))


def _is_zero(c) -> bool:
    return not c[0] and not c[1]


def _to_complex(c) -> complex:
    return complex(float(c[0]), float(c[1]))


def _merge(a: tuple, b: tuple) -> tuple:
    if not a:
        return b
    if not b:
        return a
    return tuple(sorted(a + b))


def momentum(key: Key) -> int:
    """``l(m) = sum(unconj) - sum(conj)``."""
    return sum(key[0]) - sum(key[1])


def multiplicity(key: Key) -> int:
    """Number of ordered index tuples collapsing onto ``key``."""
    out = 1
    for side in key:
        out *= math.factorial(len(side))
        for c in Counter(side).values():
            out //= math.factorial(c)
    return out


class TruncationOverflow(ValueError):
    pass


class ResonantSourceError(ValueError):
    def __init__(self, offending):
        self.offending = list(offending)
        shown = ", ".join(map(str, self.offending[:8]))
        more = "" if len(self.offending) <= 8 else f" (+{len(self.offending) - 8} more)"
        super().__init__(f"source has resonant monomials: {shown}{more}")


@dataclass(frozen=True)
class Monomial:
    unconj: tuple
    conj: tuple
    coeff: tuple = (ONE, ZERO)

    def __post_init__(self):
        object.__setattr__(self, "unconj", tuple(sorted(self.unconj)))
        object.__setattr__(self, "conj", tuple(sorted(self.conj)))
        object.__setattr__(self, "coeff", gq(*self.coeff))

    @property
    def key(self) -> Key:
        return (self.unconj, self.conj)

    @property
    def momentum(self) -> int:
        return momentum(self.key)

    @property
    def degree(self) -> int:
        return len(self.unconj) + len(self.conj)


class PolyHamiltonian:
    """Sparse polynomial in ``v(n), conj(v(n))`` for ``|n| <= N_sym``; treat as immutable."""

    __slots__ = ("terms", "N_sym", "_compiled")

    def __init__(self, terms: Mapping[Key, tuple] | None = None, N_sym: int = 0):
        self.N_sym = N_sym
        clean = {}
        for key, c in (terms or {}).items():
            c = gq(*c)
            if _is_zero(c):
                continue
            for idx in key[0] + key[1]:
                if abs(idx) > N_sym:
                    raise TruncationOverflow(f"index {idx} outside [-{N_sym}, {N_sym}]")
            clean[(tuple(sorted(key[0])), tuple(sorted(key[1])))] = c
        self.terms = clean
        self._compiled = None

    @classmethod
    def _trusted(cls, terms: dict, N_sym: int) -> "PolyHamiltonian":
        # caller guarantees canonical keys, nonzero coefficients and in-range indices
        out = cls.__new__(cls)
        out.terms = terms
        out.N_sym = N_sym
        out._compiled = None
        return out

    @classmethod
    def from_monomials(cls, monomials: Iterable[Monomial], N_sym: int) -> "PolyHamiltonian":
        acc = defaultdict(lambda: (ZERO, ZERO))
        for m in monomials:
            c = acc[m.key]
            acc[m.key] = (c[0] + m.coeff[0], c[1] + m.coeff[1])
        return cls(acc, N_sym)

    def monomials(self):
        for (u, c), coeff in sorted(self.terms.items()):
            yield Monomial(u, c, coeff)

    def __len__(self) -> int:
        return len(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, PolyHamiltonian) and self.terms == other.terms

    def __repr__(self) -> str:
        return f"PolyHamiltonian({len(self.terms)} terms, N_sym={self.N_sym})"

    def coefficient(self, unconj, conj) -> tuple:
        return self.terms.get((tuple(sorted(unconj)), tuple(sorted(conj))), (ZERO, ZERO))

    def degrees(self) -> set:
        return {len(u) + len(c) for u, c in self.terms}

    def _combine(self, other: "PolyHamiltonian", sign: int) -> "PolyHamiltonian":
        out = dict(self.terms)
        for key, c in other.terms.items():
            a = out.get(key, (ZERO, ZERO))
            s = (a[0] + sign * c[0], a[1] + sign * c[1])
            if _is_zero(s):
                out.pop(key, None)
            else:
                out[key] = s
        return PolyHamiltonian._trusted(out, max(self.N_sym, other.N_sym))

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return self.scale(gq(-1))

    def scale(self, factor) -> "PolyHamiltonian":
        factor = gq(*factor) if isinstance(factor, tuple) else gq(factor)
        if _is_zero(factor):
            return PolyHamiltonian({}, self.N_sym)
        return PolyHamiltonian._trusted(
            {k: _mul(c, factor) for k, c in self.terms.items()}, self.N_sym
        )

    def conjugate(self) -> "PolyHamiltonian":
        """The polynomial ``conj(H(v))`` written again in ``v, conj(v)``."""
        return PolyHamiltonian._trusted(
            {(c, u): (re, -im) for (u, c), (re, im) in self.terms.items()}, self.N_sym
        )

    def max_abs_coefficient(self) -> mpq:
        """Largest ``max(|re|, |im|)`` over all coefficients (exact)."""
        return max((max(abs(re), abs(im)) for re, im in self.terms.values()), default=ZERO)

    def map_coefficients(self, fn) -> "PolyHamiltonian":
        return PolyHamiltonian({k: fn(k, c) for k, c in self.terms.items()}, self.N_sym)

    # -- floating-point evaluation -------------------------------------------------
    def _compile(self):
        if self._compiled is None:
            groups = defaultdict(lambda: ([], [], []))
            for (u, c), coeff in self.terms.items():
                g = groups[(len(u), len(c))]
                g[0].append(u)
                g[1].append(c)
                g[2].append(_to_complex(coeff))
            compiled = []
            for (du, dc), (us, cs, coeffs) in groups.items():
                compiled.append((
                    np.array(us, dtype=np.int64).reshape(len(us), du),
                    np.array(cs, dtype=np.int64).reshape(len(cs), dc),
                    np.array(coeffs, dtype=np.complex128),
                ))
            self._compiled = compiled
        return self._compiled


def _derivatives(terms: Mapping[Key, tuple], side: int) -> dict:
    """``{n: [(reduced key, coeff * multiplicity), ...]}`` for d/dv(n) (side 0) or d/dconj v(n) (side 1)."""
    out = defaultdict(list)
    for key, coeff in terms.items():
        idx = key[side]
        prev = None
        for j, n in enumerate(idx):
            if n == prev:
                continue
            prev = n
            k = idx.count(n)
            reduced = idx[:j] + idx[j + 1:]
            rkey = (reduced, key[1]) if side == 0 else (key[0], reduced)
            out[n].append((rkey, coeff if k == 1 else _mul(coeff, (mpq(k), ZERO))))
    return out


def poisson_bracket(A: PolyHamiltonian, B: PolyHamiltonian) -> PolyHamiltonian:
    """Exact ``{A, B}``."""
    if A.N_sym != B.N_sym:
        raise ValueError(f"lattice truncations differ: {A.N_sym} vs {B.N_sym}")
    acc: dict = {}
    for sign, (sa, sb) in ((1, (0, 1)), (-1, (1, 0))):
        dA = _derivatives(A.terms, sa)
        dB = _derivatives(B.terms, sb)
        for n, alist in dA.items():
            blist = dB.get(n)
            if not blist:
                continue
            for (au, ac), ca in alist:
                for (bu, bc), cb in blist:
                    key = (_merge(au, bu), _merge(ac, bc))
                    p = _mul(ca, cb)
                    old = acc.get(key)
                    if old is None:
                        acc[key] = p if sign > 0 else (-p[0], -p[1])
                    elif sign > 0:
                        acc[key] = (old[0] + p[0], old[1] + p[1])
                    else:
                        acc[key] = (old[0] - p[0], old[1] - p[1])
    N = A.N_sym
    for key in acc:
        for idx in key[0] + key[1]:
            if abs(idx) > N:
                raise TruncationOverflow(f"bracket produced index {idx} beyond N_sym={N}")
    return PolyHamiltonian._trusted({k: c for k, c in acc.items() if not _is_zero(c)}, N)


# -- standard Hamiltonians --------------------------------------------------------

def lambda2(N_sym: int, sigma: int = 2) -> PolyHamiltonian:
    """Quadratic part ``-i sum n^sigma |v(n)|^2``."""
    return PolyHamiltonian({((n,), (n,)): gq(0, -(n**sigma)) for n in range(-N_sym, N_sym + 1)}, N_sym)


def power_functional(N_sym: int) -> PolyHamiltonian:
    """``Q = sum |v(n)|^2``."""
    return PolyHamiltonian({((n,), (n,)): gq(1) for n in range(-N_sym, N_sym + 1)}, N_sym)


def quartic_hamiltonian(N_sym: int, coeff=(0, 1)) -> PolyHamiltonian:
    """``coeff * sum_{l(m)=0} v(m1) v(m2) conj(v(m3)) conj(v(m4))`` over ordered tuples."""
    c = gq(*coeff)
    acc = Counter()
    rng = range(-N_sym, N_sym + 1)
    for m1 in rng:
        for m2 in rng:
            for m3 in rng:
                m4 = m1 + m2 - m3
                if abs(m4) <= N_sym:
                    acc[((min(m1, m2), max(m1, m2)), (min(m3, m4), max(m3, m4)))] += 1
    return PolyHamiltonian({k: _mul(c, (mpq(v), ZERO)) for k, v in acc.items()}, N_sym)


def ordered_coefficient(key: Key, coeff) -> tuple:
    """Per-ordering coefficient (canonical coefficient divided by the multiplicity)."""
    return _div(gq(*coeff), (mpq(multiplicity(key)), ZERO))


# -- resonance analysis -----------------------------------------------------------

def _diagonal_weights(lam: PolyHamiltonian) -> dict:
    w = {}
    for (u, c), coeff in lam.terms.items():
        if len(u) != 1 or u != c:
            raise ValueError("lambda2 must be diagonal quadratic")
        w[u[0]] = coeff
    return w


def ad_eigenvalue(key: Key, weights: Mapping[int, tuple]) -> tuple:
    """Eigenvalue of ``M -> {Lambda2, M}`` on the monomial ``key``."""
    re = ZERO
    im = ZERO
    for n in key[1]:
        c = weights.get(n)
        if c is not None:
            re += c[0]
            im += c[1]
    for n in key[0]:
        c = weights.get(n)
        if c is not None:
            re -= c[0]
            im -= c[1]
    return (re, im)


def frequency_mismatch(key: Key, sigma: int = 2) -> int:
    """``q(m) = sum unconj^sigma - sum conj^sigma``."""
    return sum(m**sigma for m in key[0]) - sum(m**sigma for m in key[1])


@dataclass(frozen=True)
class ResonanceSplit:
    nonresonant: PolyHamiltonian
    resonant: PolyHamiltonian


def resonance_split(H: PolyHamiltonian, lam: PolyHamiltonian) -> ResonanceSplit:
    weights = _diagonal_weights(lam)
    nr, r = {}, {}
    for key, c in H.terms.items():
        (r if _is_zero(ad_eigenvalue(key, weights)) else nr)[key] = c
    return ResonanceSplit(
        PolyHamiltonian._trusted(nr, H.N_sym), PolyHamiltonian._trusted(r, H.N_sym)
    )


def split_r1_r2(Hres: PolyHamiltonian, lam: PolyHamiltonian | None = None):
    """Split a resonant quartic into ``(r1, r2)``.

    ``r1 = -sum_a c_aa |v(a)|^4`` with ``c_aa`` the diagonal coefficients of ``Hres``,
    ``r2 = Hres - r1``. For ``Hres = k * sum_{l=0,q=0}`` this gives ``r1 = -k sum |v|^4``
    and ``r2 = 2k sum_{a,b} |v(a)|^2 |v(b)|^2``.
    """
    lam = lam if lam is not None else lambda2(Hres.N_sym)
    weights = _diagonal_weights(lam)
    bad = [k for k in Hres.terms if len(k[0]) != 2 or len(k[1]) != 2
           or not _is_zero(ad_eigenvalue(k, weights))]
    if bad:
        raise ValueError(f"input-not-resonant: {bad[:8]}")
    r1 = {}
    for (u, c), coeff in Hres.terms.items():
        if u == c and u[0] == u[1]:
            r1[(u, c)] = (-coeff[0], -coeff[1])
    r1 = PolyHamiltonian._trusted(r1, Hres.N_sym)
    return r1, Hres - r1


def solve_homological(lam: PolyHamiltonian, source: PolyHamiltonian) -> PolyHamiltonian:
    """``F`` with ``{lam, F} + source = 0``; every source monomial must be nonresonant."""
    weights = _diagonal_weights(lam)
    out, offending = {}, []
    for key, c in source.terms.items():
        ev = ad_eigenvalue(key, weights)
        if _is_zero(ev):
            offending.append(key)
            continue
        out[key] = _div((-c[0], -c[1]), ev)
    if offending:
        raise ResonantSourceError(sorted(offending))
    return PolyHamiltonian._trusted(out, source.N_sym)


# -- the two generators and their identities --------------------------------------

@dataclass
class NormalForm:
    N_sym: int
    lambda2: PolyHamiltonian
    H4: PolyHamiltonian
    H4_nr: PolyHamiltonian
    H4_r: PolyHamiltonian
    H4_r1: PolyHamiltonian
    H4_r2: PolyHamiltonian
    Q: PolyHamiltonian
    F1: PolyHamiltonian
    B: PolyHamiltonian  # 1/2 {H4_nr, F1}
    B_nr: PolyHamiltonian
    F2: PolyHamiltonian

    def identity_residuals(self, include_f2_r2: bool = True) -> dict:
        """Residual polynomials that must vanish identically."""
        res = {
            "lambda2_F1_plus_H4nr": poisson_bracket(self.lambda2, self.F1) + self.H4_nr,
            "lambda2_F2_plus_Bnr": poisson_bracket(self.lambda2, self.F2) + self.B_nr,
            "H4r2_F1": poisson_bracket(self.H4_r2, self.F1),
            "F1_Q": poisson_bracket(self.F1, self.Q),
            "F2_Q": poisson_bracket(self.F2, self.Q),
        }
        if include_f2_r2:
            res["H4r2_F2"] = poisson_bracket(self.H4_r2, self.F2)
        return res


def build_normal_form(N_sym: int, sigma: int = 2, F1: PolyHamiltonian | None = None,
                      with_F2: bool = True) -> NormalForm:
    """Construct all pieces of the two-step reduction on ``|n| <= N_sym``.

    ``F1`` may be supplied to audit a modified generator; by default it is the
    homological solution for ``H4_nr``.
    """
    if not 0 <= N_sym <= MAX_NSYM:
        raise ValueError(f"N_sym must lie in [0, {MAX_NSYM}], got {N_sym}")
    lam = lambda2(N_sym, sigma)
    H4 = quartic_hamiltonian(N_sym)
    split = resonance_split(H4, lam)
    r1, r2 = split_r1_r2(split.resonant, lam)
    if F1 is None:
        F1 = solve_homological(lam, split.nonresonant)
    if with_F2:
        B = poisson_bracket(split.nonresonant, F1).scale(gq(mpq(1, 2)))
        B_nr = resonance_split(B, lam).nonresonant
        F2 = solve_homological(lam, B_nr)
    else:
        B = B_nr = F2 = PolyHamiltonian({}, N_sym)
    return NormalForm(N_sym, lam, H4, split.nonresonant, split.resonant, r1, r2,
                      power_functional(N_sym), F1, B, B_nr, F2)


def build_F1_F2(N_sym: int, sigma: int = 2):
    """``(F1, F2, diagnostics)``; diagnostics hold every identity residual polynomial."""
    nf = build_normal_form(N_sym, sigma)
    return nf.F1, nf.F2, nf.identity_residuals()


# -- numeric evaluation -----------------------------------------------------------

def _values(H: PolyHamiltonian, state: FourierState):
    if state.N < H.N_sym:
        raise ValueError(f"state lattice N={state.N} smaller than N_sym={H.N_sym}")
    return state.coeffs, np.conj(state.coeffs), state.N


def evaluate(H: PolyHamiltonian, state: FourierState) -> complex:
    v, vb, N = _values(H, state)
    total = 0j
    for U, C, coeff in H._compile():
        total += np.sum(coeff * np.prod(v[U + N], axis=1) * np.prod(vb[C + N], axis=1))
    return complex(total)


def gradient_eval(H: PolyHamiltonian, state: FourierState) -> FourierState:
    """``dH/dconj(v(k))`` for every lattice mode ``k``."""
    v, vb, N = _values(H, state)
    out = np.zeros(2 * N + 1, dtype=np.complex128)
    for U, C, coeff in H._compile():
        base = coeff * np.prod(v[U + N], axis=1)
        dc = C.shape[1]
        cv = vb[C + N]
        for s in range(dc):
            rest = np.prod(np.delete(cv, s, axis=1), axis=1) if dc > 1 else 1.0
            np.add.at(out, C[:, s] + N, base * rest)
    return state.replace(out)

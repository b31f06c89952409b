"""Deviation metrics, epsilon-scaling fits and verification reports."""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import hambra
from .dynamics import SchemeSpec, Trajectory, evolve, linear_flow
from .lattice import CONVENTION, FourierState, InitialDataSpec, NormSpec, make_initial_data, power, weighted_norm
from .nfflow import NormalFormMap, residual_E


class DegenerateInput(ValueError):
    pass


@dataclass
class DeviationReport:
    times: np.ndarray
    deviations: Dict[str, np.ndarray]
    norms: Dict[str, NormSpec]
    P: float
    convention_tag: str = CONVENTION
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, label: str) -> np.ndarray:
        return self.deviations[label]

    @property
    def final(self) -> Dict[str, float]:
        return {k: float(v[-1]) for k, v in self.deviations.items()}


@dataclass
class ScalingFit:
    points: List[Tuple[float, float]]
    slope: float
    intercept: float
    r2: float

    def within(self, lo: float, hi: float, r2_min: float = 0.0) -> bool:
        return lo <= self.slope <= hi and self.r2 >= r2_min


def deviation_curve(traj: Trajectory, P: Optional[float] = None,
                    norms: Sequence[NormSpec] | NormSpec = NormSpec(2.0), sigma: int = 2,
                    metadata: Optional[dict] = None) -> DeviationReport:
    """``|| u(t) - exp(it(-n^s + 4P)) u(0) ||`` per snapshot and per requested norm."""
    if isinstance(norms, NormSpec):
        norms = [norms]
    u0 = traj.initial
    if P is None:
        P = power(u0)
    devs = {ns.label: np.empty(len(traj.times)) for ns in norms}
    for k, (t, s) in enumerate(zip(traj.times, traj.states)):
        diff = s - linear_flow(u0, t, P, sigma)
        for ns in norms:
            devs[ns.label][k] = weighted_norm(diff, ns)
    return DeviationReport(np.asarray(traj.times), devs, {ns.label: ns for ns in norms}, P,
                           u0.convention_tag, dict(metadata or {}))


def scaling_fit(points: Sequence[Tuple[float, float]]) -> ScalingFit:
    """Least-squares line through ``(log eps, log value)``."""
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 3:
        raise DegenerateInput(f"need at least 3 points, got {len(pts)}")
    x = np.log([e for e, _ in pts])
    vals = np.array([v for _, v in pts])
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise DegenerateInput("scaling fit needs finite positive values")
    if np.ptp(x) == 0:
        raise DegenerateInput("epsilon values must be distinct")
    y = np.log(vals)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return ScalingFit(pts, float(slope), float(intercept), float(r2))


# -- symbolic identities ----------------------------------------------------------

IDENTITY_NAMES = {
    "lambda2_F1_plus_H4nr": "{Lambda2,F1} + H4_nr",
    "lambda2_F2_plus_Bnr": "{Lambda2,F2} + 1/2{H4_nr,F1}_nr",
    "H4r2_F1": "{H4_r2,F1}",
    "H4r2_F2": "{H4_r2,F2}",
    "F1_Q": "{F1,Q}",
    "F2_Q": "{F2,Q}",
}


def identity_report(N_sym: int, corrupt: Optional[Callable] = None, sigma: int = 2) -> dict:
    """Run the exact identity suite and report residual sizes.

    ``corrupt`` (fault injection) receives the exact ``F1`` and returns a modified one;
    the rest of the chain is rebuilt from it.
    """
    t0 = time.perf_counter()
    F1 = None
    if corrupt is not None:
        F1 = corrupt(hambra.build_normal_form(N_sym, sigma, with_F2=False).F1)
    nf = hambra.build_normal_form(N_sym, sigma, F1=F1)
    residuals = nf.identity_residuals()
    identities = {}
    for key, poly in residuals.items():
        identities[key] = {
            "name": IDENTITY_NAMES[key],
            "max_residual": str(poly.max_abs_coefficient()),
            "nonzero_terms": len(poly),
            "nonzero_monomials": [list(map(list, k)) for k in sorted(poly.terms)[:20]],
            "pass": len(poly) == 0,
        }
    f1_ok, f1_bad = f1_closed_form_check(nf.F1)
    return {
        "N_sym": N_sym,
        "convention_tag": CONVENTION,
        "counts": {name: len(getattr(nf, name)) for name in
                   ("H4", "H4_nr", "H4_r", "H4_r1", "H4_r2", "F1", "B", "B_nr", "F2")},
        "identities": identities,
        "f1_closed_form": {"pass": f1_ok, "mismatches": f1_bad[:20]},
        "pass": all(v["pass"] for v in identities.values()) and f1_ok,
        "seconds": time.perf_counter() - t0,
    }


def f1_closed_form_check(F1: hambra.PolyHamiltonian):
    """Every per-ordering F1 coefficient has modulus ``1/|2(m1-m3)(m2-m3)|`` (exact)."""
    bad = []
    for key, coeff in F1.terms.items():
        (m1, m2), (m3, _m4) = key
        re, im = hambra.ordered_coefficient(key, coeff)
        target = hambra.mpq(1, abs(2 * (m1 - m3) * (m2 - m3)))
        if re * re + im * im != target * target:
            bad.append([list(key[0]), list(key[1])])
    return not bad, bad


# -- normal-form sweeps -----------------------------------------------------------

@dataclass
class NormalFormSample:
    eps: float
    u: FourierState
    v: FourierState
    E: FourierState
    E_time: float


def normal_form_sample(eps: float, N: int, nf: NormalFormMap, h: float = 1e-4,
                       dt: float = 1e-5, scheme: str = "strang-splitstep") -> NormalFormSample:
    """Pull back Gaussian data and extract E at ``t = h`` from snapshots ``0, h, 2h``."""
    u0 = make_initial_data(InitialDataSpec(epsilon=eps), N)
    traj = evolve(u0, 2 * h, SchemeSpec(scheme, dt), snapshot_every=int(round(h / dt)))
    times, Es, vs = residual_E(traj, power(u0), nf, dt=dt, return_v=True)
    return NormalFormSample(eps, u0, vs[0], Es[0], float(times[0]))


def _map(fn, items, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def nearness_report(samples: Sequence[NormalFormSample],
                    norms: Sequence[NormSpec] = (NormSpec(np.inf), NormSpec(1.0))) -> dict:
    """Scaling fits of ``||u - v||`` per norm, plus the l2 mismatch per epsilon."""
    fits = {}
    for ns in norms:
        fits[ns.label] = scaling_fit([(s.eps, weighted_norm(s.u - s.v, ns)) for s in samples])
    l2 = {s.eps: abs(weighted_norm(s.u) - weighted_norm(s.v)) / weighted_norm(s.u) for s in samples}
    return {"fits": fits, "l2_relative_mismatch": l2}


def error_term_report(samples: Sequence[NormalFormSample],
                      norms: Sequence[NormSpec] = (NormSpec(np.inf), NormSpec(2.0))) -> dict:
    return {ns.label: scaling_fit([(s.eps, weighted_norm(s.E, ns)) for s in samples]) for ns in norms}


def _deviation_cell(args):
    eps, N, T, dt, sigma, order, p = args
    u0 = make_initial_data(InitialDataSpec(epsilon=eps), N)
    scheme = SchemeSpec("strang-splitstep", dt, dispersion_exponent=sigma, order=order)
    traj = evolve(u0, T, scheme, snapshot_every=max(1, int(round(T / dt))))
    rep = deviation_curve(traj, power(u0), NormSpec(p), sigma)
    return eps, float(rep.deviations[NormSpec(p).label][-1])


def theorem_sweep(eps_list: Sequence[float], N: int = 256, T: float = 1.0, dt: float = 1e-3,
                  sigma: int = 2, order: int = 2, p: float = 2.0, workers: int = 1):
    """Final-time deviation from the comparison flow for each epsilon, and its slope."""
    cells = [(e, N, T, dt, sigma, order, p) for e in eps_list]
    values = dict(_map(_deviation_cell, cells, workers))
    points = sorted(values.items())
    return points, scaling_fit(points)


def time_envelope(eps: float, T_list: Sequence[float], N: int = 256, dt: float = 1e-3,
                  sigma: int = 2, p: float = 2.0) -> dict:
    """Deviation at each horizon and the growth factor between consecutive horizons."""
    u0 = make_initial_data(InitialDataSpec(epsilon=eps), N)
    Ts = sorted(T_list)
    stride = np.gcd.reduce([int(round(T / dt)) for T in Ts])
    traj = evolve(u0, Ts[-1], SchemeSpec("strang-splitstep", dt, dispersion_exponent=sigma),
                  snapshot_every=int(stride))
    rep = deviation_curve(traj, power(u0), NormSpec(p), sigma)
    dev = rep.deviations[NormSpec(p).label]
    values = {T: float(dev[np.argmin(np.abs(traj.times - T))]) for T in Ts}
    factors = [values[b] / values[a] for a, b in zip(Ts, Ts[1:])]
    return {"values": values, "factors": factors}

import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from nlsquasi.analysis import (
    DegenerateInput,
    NormalFormSample,
    deviation_curve,
    error_term_report,
    identity_report,
    nearness_report,
    scaling_fit,
    theorem_sweep,
    time_envelope,
)
from nlsquasi.dynamics import SchemeSpec, Trajectory, evolve, linear_flow, plane_wave_oracle
from nlsquasi.lattice import FourierState, InitialDataSpec, NormSpec, make_initial_data, random_state


def plane_wave_traj():
    u0 = FourierState.from_modes(3, {3: 0.3})
    return evolve(u0, 1.0, SchemeSpec(dt=1e-3), snapshot_every=100)


class TestDeviationCurve:
    def test_starts_at_zero(self):
        rep = deviation_curve(plane_wave_traj(), norms=[NormSpec(2), NormSpec(np.inf)])
        assert rep["l2"][0] == 0 and rep["linf"][0] == 0

    def test_plane_wave_closed_form(self):
        tr = plane_wave_traj()
        rep = deviation_curve(tr, norms=[NormSpec(2), NormSpec(np.inf)])
        expect = [plane_wave_oracle(0.3, 3, t)[1] for t in tr.times]
        assert np.max(np.abs(rep["l2"] - expect)) <= 1e-8
        assert np.array_equal(rep["l2"], rep["linf"])

    def test_linear_trajectory_with_zero_power(self):
        u0 = random_state(4, np.random.default_rng(0), 0.2)
        times = np.linspace(0, 1, 5)
        tr = Trajectory(times, [linear_flow(u0, t, 0.0) for t in times], np.zeros(5), np.zeros(5))
        rep = deviation_curve(tr, P=0.0)
        assert np.max(rep["l2"]) <= 1e-15

    def test_phase_invariance(self):
        u0 = make_initial_data(InitialDataSpec(epsilon=0.3), 32)
        a = deviation_curve(evolve(u0, 0.1, SchemeSpec(dt=1e-3), snapshot_every=20))
        b = deviation_curve(evolve(u0 * np.exp(1.3j), 0.1, SchemeSpec(dt=1e-3), snapshot_every=20))
        assert np.max(np.abs(a["l2"] - b["l2"])) <= 1e-10

    def test_gaussian_curve(self):
        u0 = make_initial_data(InitialDataSpec(epsilon=0.1), 256)
        rep = deviation_curve(evolve(u0, 1.0, SchemeSpec(dt=1e-3), snapshot_every=100),
                              metadata={"eps": 0.1})
        vals = rep["l2"][1:]
        assert np.all(np.isfinite(vals)) and np.all(vals > 0)
        assert rep.metadata["eps"] == 0.1 and rep.final["l2"] == vals[-1]


class TestScalingFit:
    def test_exact_power_laws(self):
        fit = scaling_fit([(0.4, 0.4), (0.2, 0.2), (0.1, 0.1)])
        assert fit.slope == pytest.approx(1.0) and fit.r2 == pytest.approx(1.0)
        assert scaling_fit([(0.4, 0.16), (0.2, 0.04), (0.1, 0.01)]).slope == pytest.approx(2.0)

    @pytest.mark.parametrize("pts", [
        [(0.4, 1.0), (0.2, 1.0)],
        [(0.4, 1.0), (0.2, 0.0), (0.1, 1.0)],
        [(0.4, 1.0), (0.2, -1.0), (0.1, 1.0)],
        [(0.2, 1.0), (0.2, 2.0), (0.2, 3.0)],
    ])
    def test_degenerate(self, pts):
        with pytest.raises(DegenerateInput):
            scaling_fit(pts)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0.01, 10.0), min_size=4, max_size=4), st.floats(1e-3, 1e3))
    def test_scale_equivariance(self, vals, c):
        eps = [0.4, 0.2, 0.1, 0.05]
        a = scaling_fit(list(zip(eps, vals)))
        b = scaling_fit([(e, c * v) for e, v in zip(eps, vals)])
        assert b.slope == pytest.approx(a.slope, abs=1e-12)
        assert b.intercept - a.intercept == pytest.approx(np.log(c), abs=1e-10)

    def test_within(self):
        fit = scaling_fit([(0.4, 0.4), (0.2, 0.2), (0.1, 0.1)])
        assert fit.within(0.8, 1.3, 0.95) and not fit.within(1.2, 1.8)


class TestIdentityReport:
    def test_trivial_lattice(self):
        rep = identity_report(0)
        assert rep["pass"] and all(v["max_residual"] == "0" for v in rep["identities"].values())

    def test_nsym4(self):
        rep = identity_report(4)
        assert rep["pass"] and rep["counts"]["F1"] > 0 and rep["counts"]["F2"] > 0

    def test_fault_injection(self):
        target = ((-1, 2), (0, 1))

        def corrupt(F1):
            assert target in F1.terms
            return F1.map_coefficients(lambda k, v: (v[0] + mpq(1, 7), v[1]) if k == target else v)

        rep = identity_report(2, corrupt=corrupt)
        first = rep["identities"]["lambda2_F1_plus_H4nr"]
        assert not rep["pass"] and not first["pass"]
        assert first["nonzero_terms"] == 1
        assert first["nonzero_monomials"] == [[list(target[0]), list(target[1])]]
        assert not rep["f1_closed_form"]["pass"]


def _sample(eps, u, v, E):
    return NormalFormSample(eps, u, v, E, 0.0)


class TestNormalFormReports:
    def test_zero_data_is_degenerate(self):
        z = FourierState.zeros(4)
        samples = [_sample(e, z, z, z) for e in (0.4, 0.2, 0.1)]
        with pytest.raises(DegenerateInput):
            nearness_report(samples)

    def test_synthetic_slopes(self):
        samples = []
        for e in (0.4, 0.2, 0.1):
            u = FourierState.from_modes(2, {0: 1.0})
            d = FourierState.from_modes(2, {1: e**1.5})
            samples.append(_sample(e, u, u - d, d * e))
        near = nearness_report(samples)
        assert near["fits"]["linf"].slope == pytest.approx(1.5)
        err = error_term_report(samples)
        assert err["l2"].slope == pytest.approx(2.5)


class TestSweeps:
    def test_theorem_sweep_small(self):
        pts, fit = theorem_sweep([0.4, 0.3, 0.2], N=64, T=0.05, dt=1e-3)
        assert [e for e, _ in pts] == [0.2, 0.3, 0.4]
        assert np.isfinite(fit.slope)

    def test_parallel_matches_serial(self):
        kw = dict(N=32, T=0.02, dt=1e-3)
        a, _ = theorem_sweep([0.4, 0.35, 0.3], **kw)
        b, _ = theorem_sweep([0.4, 0.35, 0.3], workers=2, **kw)
        assert a == b

    def test_envelope(self):
        env = time_envelope(0.3, [0.05, 0.1, 0.2], N=64)
        assert list(env["values"]) == [0.05, 0.1, 0.2] and len(env["factors"]) == 2

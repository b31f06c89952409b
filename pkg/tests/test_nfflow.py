from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlsquasi import hambra
from nlsquasi.dynamics import SchemeSpec, Trajectory, evolve, linear_flow, ode_oracle, ode_rhs
from nlsquasi.lattice import FourierState, InitialDataSpec, NormSpec, make_initial_data, power, random_state, weighted_norm
from nlsquasi.nfflow import (
    F2_MODE_CAP,
    FlowSpec,
    NormalFormMap,
    SelfConvergenceError,
    SpacingError,
    f1_gradient,
    f1_value,
    f2_gradient,
    f2_value,
    flow_F,
    linear_multiplier,
    residual_E,
    u_to_v,
    v_to_u,
)

seeds = st.integers(0, 2**32 - 1)


@lru_cache(maxsize=None)
def generators(N):
    nf = hambra.build_normal_form(N)
    return nf.F1, nf.F2


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


class TestGradients:
    def test_f1_hand_example(self):
        s = FourierState.from_modes(2, {0: 0.1, 1: 0.1})
        assert abs(f1_gradient(s)[2]) == pytest.approx(1e-3, rel=1e-12)

    @pytest.mark.parametrize("grad", [f1_gradient, f2_gradient])
    def test_single_mode_and_zero(self, grad):
        assert power(grad(FourierState.from_modes(5, {2: 0.7 + 0.1j}))) == 0
        assert power(grad(FourierState.zeros(5))) == 0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 4), seeds)
    def test_cross_validation(self, N, seed):
        F1, F2 = generators(N)
        s = random_state(N, np.random.default_rng(seed))
        assert rel(f1_gradient(s).coeffs, hambra.gradient_eval(F1, s).coeffs) <= 1e-12
        assert rel(f2_gradient(s).coeffs, hambra.gradient_eval(F2, s).coeffs) <= 1e-12

    def test_f2_on_two_modes(self):
        _, F2 = generators(1)
        s = FourierState.from_modes(1, {0: 0.3 - 0.2j, 1: 0.5 + 0.4j})
        assert np.allclose(f2_gradient(s).coeffs, hambra.gradient_eval(F2, s).coeffs, rtol=1e-12, atol=1e-15)

    def test_values_match_symbolic(self):
        F1, F2 = generators(3)
        s = random_state(3, np.random.default_rng(9))
        assert f1_value(s) == pytest.approx(hambra.evaluate(F1, s), rel=1e-12)
        assert f2_value(s) == pytest.approx(hambra.evaluate(F2, s), rel=1e-12)

    def test_cost_guard(self):
        big = FourierState.zeros(F2_MODE_CAP + 1)
        with pytest.raises(ValueError):
            f2_gradient(big)
        with pytest.raises(ValueError):
            flow_F(big, FlowSpec("F2", 1.0))
        assert power(f2_gradient(big, override=True)) == 0


class TestFlows:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            FlowSpec("F3", 1.0)
        with pytest.raises(ValueError):
            FlowSpec("F1", 1.5)
        with pytest.raises(ValueError):
            FlowSpec("F1", 1.0, substeps=2)

    def test_time_zero_identity(self):
        s = random_state(4, np.random.default_rng(1), 0.2)
        assert flow_F(s, FlowSpec("F2", 0.0)).distance(s) == 0

    @pytest.mark.parametrize("gen", ["F1", "F2"])
    def test_group_property_and_l2(self, gen):
        s = make_initial_data(InitialDataSpec(epsilon=0.4), 24)
        fwd = flow_F(s, FlowSpec(gen, 1.0))
        back = flow_F(fwd, FlowSpec(gen, -1.0))
        assert back.distance(s) <= 1e-8
        assert abs(power(fwd) - power(s)) <= 1e-8 * power(s)

    @settings(max_examples=10, deadline=None)
    @given(seeds, st.floats(0, 2 * np.pi))
    def test_phase_equivariance(self, seed, phi):
        s = random_state(6, np.random.default_rng(seed), 0.1)
        rot = np.exp(1j * phi)
        for gen in ("F1", "F2"):
            a = flow_F(s * rot, FlowSpec(gen, 1.0), check=False)
            b = flow_F(s, FlowSpec(gen, 1.0), check=False) * rot
            assert a.distance(b) <= 1e-10

    def test_self_convergence_failure(self):
        s = random_state(6, np.random.default_rng(2), 0.3)
        with pytest.raises(SelfConvergenceError):
            flow_F(s, FlowSpec("F1", 1.0, substeps=4), tol=1e-12)

    def test_maps_are_inverse(self):
        s = make_initial_data(InitialDataSpec(epsilon=0.4), 24)
        v = u_to_v(s)
        assert v_to_u(v).distance(s) <= 1e-8
        assert abs(power(v) - power(s)) <= 1e-8 * power(s)
        assert power(u_to_v(FourierState.zeros(8))) == 0

    def test_f1_nearness_slope(self):
        eps_list = (0.4, 0.2, 0.1)
        vals = []
        for eps in eps_list:
            u = make_initial_data(InitialDataSpec(epsilon=eps), 64)
            out = flow_F(u, FlowSpec("F1", 1.0), check=False)
            vals.append(weighted_norm(out - u, NormSpec(np.inf)))
        slope = np.polyfit(np.log(eps_list), np.log(vals), 1)[0]
        assert 1.2 <= slope <= 1.8


def _three_point(traj_states, h):
    return Trajectory(np.array([0.0, h, 2 * h]), traj_states, np.zeros(3), np.zeros(3))


class TestResidualE:
    def test_spacing_errors(self):
        s = FourierState.zeros(2)
        with pytest.raises(SpacingError):
            residual_E(Trajectory(np.array([0.0, 1.0]), [s, s], np.zeros(2), np.zeros(2)))
        with pytest.raises(SpacingError):
            residual_E(Trajectory(np.array([0.0, 1.0, 3.0]), [s] * 3, np.zeros(3), np.zeros(3)))
        with pytest.raises(SpacingError):
            residual_E(_three_point([s] * 3, 1e-2), dt=1e-4)

    def test_linear_dynamics_identity_map(self):
        u0 = random_state(6, np.random.default_rng(3), 0.2)
        h = 1e-3
        states = [linear_flow(u0, t, 0.0) for t in (0.0, h, 2 * h)]
        _, E = residual_E(_three_point(states, h), P=0.0, nf=NormalFormMap(generators=()))
        assert weighted_norm(E[0], NormSpec(np.inf)) <= 1e-9

    def test_linear_multiplier(self):
        assert np.array_equal(linear_multiplier(1, 0.25), np.array([0.0, 1.0, 0.0]))

    def test_oracle_second_order(self):
        """Central differences of the pulled-back oracle trajectory converge like h^2."""
        N = 8
        u0 = random_state(N, np.random.default_rng(5), 0.1)
        nf = NormalFormMap(substeps=32, check=False)
        P = power(u0)
        L = linear_multiplier(N, P)

        def direct(u):
            ud = ode_rhs(u).coeffs
            eta = 1e-5
            plus = u_to_v(u.replace(u.coeffs + eta * ud), nf).coeffs
            minus = u_to_v(u.replace(u.coeffs - eta * ud), nf).coeffs
            return (plus - minus) / (2 * eta) - 1j * L * u_to_v(u, nf).coeffs

        errs = []
        for h in (4e-3, 2e-3):
            states = ode_oracle(u0, 2 * h, 1e-13, t_eval=[0.0, h, 2 * h])
            _, E = residual_E(_three_point(states, h), P, nf)
            ref = direct(states[1])
            errs.append(np.linalg.norm(E[0].coeffs - ref) / np.linalg.norm(ref))
        assert errs[1] < 1e-3
        assert 3.0 <= errs[0] / errs[1] <= 5.0

    def test_all_interior_snapshots(self):
        u0 = make_initial_data(InitialDataSpec(epsilon=0.4), 16)
        tr = evolve(u0, 4e-4, SchemeSpec(dt=1e-4), snapshot_every=1)
        times, E, vs = residual_E(tr, nf=NormalFormMap(check=False), dt=1e-4, return_v=True)
        assert len(E) == len(tr.times) - 2 and np.allclose(times, tr.times[1:-1])
        assert set(vs) == set(range(len(tr.times)))

import math

import numpy as np
import pytest

from qpwave import (CoefficientField, FrequencyCollapse, InsufficientData,
                    ModelParams, NonConvergence, PreconditionFailed,
                    ResonantBox, SolverConfig, brute_force_oracle,
                    compare_with_oracle, decay_fit, evaluate_solution,
                    initial_field, omega0, p_step, q_step, solve,
                    weighted_tail_norm)

from conftest import golden_params


class TestInitialField:
    def test_anchored_amplitudes(self, params):
        q0 = initial_field(params)
        assert q0.get((1,), (0,)) == 0.5
        assert q0.get((-1,), (0,)) == 0.5
        assert q0.num_lattice_entries == 2

    def test_two_anchor_support(self):
        p = golden_params(b=2, anchors=((0,), (3,)), amplitudes=(1.0, 1.6))
        q0 = initial_field(p)
        assert q0.get((1, 0), (0,)) == 0.5
        assert q0.get((0, 1), (3,)) == 0.8
        assert q0.num_lattice_entries == 4

    def test_time_evaluation_at_zero(self, params):
        q0 = initial_field(params)
        assert evaluate_solution(q0, omega0(params), 0.0, (0,)) == \
            pytest.approx(1.0)

    def test_tail_is_zero(self, params):
        q0 = initial_field(params)
        assert weighted_tail_norm(q0, 0.1, params.resonant_set()) == 0.0


class TestQStep:
    def test_uncoupled_fixed_point(self, params_uncoupled):
        q0 = initial_field(params_uncoupled)
        om = q_step(q0, omega0(params_uncoupled), params_uncoupled)
        assert om == pytest.approx(omega0(params_uncoupled), abs=1e-15)

    def test_first_step_closed_form(self):
        # eps=0, p=2, b=1, a=1, delta=0.01, phase pi/2 so omega0^2 = 3:
        # omega^2 = 3 + binom(3,1) * 2^-2 * 0.01 = 3.0075
        p = ModelParams(b=1, d=1, p=2, m=3.0, eps=0.0, delta=0.01,
                        alpha=(0.0,), theta0=0.25, anchors=((0,),),
                        amplitudes=(1.0,))
        q0 = initial_field(p)
        om = q_step(q0, omega0(p), p)
        assert om[0] ** 2 == pytest.approx(3.0075, abs=1e-14)

    def test_anchor_values_required(self, params):
        bad = CoefficientField.from_entries({((1,), (0,)): 0.4}, 1, 1)
        with pytest.raises(PreconditionFailed):
            q_step(bad, omega0(params), params)

    def test_frequency_collapse(self):
        p = golden_params(eps=0.9, delta=0.0)
        entries = {((1,), (0,)): 0.5, ((1,), (1,)): -1000.0}
        q = CoefficientField.from_entries(entries, 1, 1)
        with pytest.raises(FrequencyCollapse):
            q_step(q, omega0(p), p)

    def test_frequency_amplitude_jacobian_scales_like_delta(self):
        # det(d omega / d a) ~ delta for b = 1, via finite differences of the
        # closed-form first step (centered inside the [1,2] amplitude box)
        for delta in (1e-3, 1e-4):
            p = golden_params(eps=0.0, delta=delta)
            h = 1e-6

            def omega_of(a):
                pa = ModelParams(b=1, d=1, p=2, m=p.m, eps=0.0, delta=delta,
                                 alpha=p.alpha, theta0=p.theta0,
                                 anchors=p.anchors, amplitudes=(a,))
                return q_step(initial_field(pa), omega0(pa), pa)[0]

            deriv = (omega_of(1.5 + h) - omega_of(1.5 - h)) / (2 * h)
            assert 0.05 * delta <= abs(deriv) <= 20.0 * delta


class TestPStep:
    def test_zero_residual_gives_zero_increment(self, params_uncoupled):
        q0 = initial_field(params_uncoupled)
        res = p_step(q0, omega0(params_uncoupled), params_uncoupled, 1,
                     SolverConfig(M=3))
        assert res.increment.num_lattice_entries == 0

    def test_increment_vanishes_on_resonant_set(self, params):
        q0 = initial_field(params)
        om = q_step(q0, omega0(params), params)
        res = p_step(q0, om, params, 1, SolverConfig(M=3))
        assert res.increment.get((1,), (0,)) == 0.0
        assert res.increment.get((-1,), (0,)) == 0.0
        assert res.increment.num_lattice_entries > 0

    def test_first_increment_order_of_couplings(self, params):
        q0 = initial_field(params)
        om = q_step(q0, omega0(params), params)
        res = p_step(q0, om, params, 1, SolverConfig(M=3))
        total = params.eps + params.delta
        assert res.increment.l2_norm() <= 50.0 * total

    def test_increment_symmetric(self, params):
        q0 = initial_field(params)
        om = q_step(q0, omega0(params), params)
        res = p_step(q0, om, params, 2, SolverConfig(M=3))
        for k, n, v in res.increment.canonical_items():
            assert res.increment.get(tuple(-x for x in k), n) == v

    def test_resonant_box_detected(self):
        # alpha = 1/4, theta0 = 1/4: phases pi/2 and 3pi/2 at n = 0 and 2
        # give mu_2 = mu_0 exactly, so D(+-1, +-2) = 0 in the stage box.
        p = ModelParams(b=1, d=1, p=2, m=2.5, eps=0.0, delta=0.0,
                        alpha=(0.25,), theta0=0.25, anchors=((0,),),
                        amplitudes=(1.0,))
        q0 = initial_field(p)
        with pytest.raises(ResonantBox) as err:
            p_step(q0, omega0(p), p, 1, SolverConfig(M=3))
        assert err.value.stage == 1

    def test_box_must_contain_resonant_set(self):
        p = golden_params(anchors=((30,),))
        q0 = initial_field(p)
        with pytest.raises(ResonantBox):
            p_step(q0, omega0(p), p, 1, SolverConfig(M=3))


class TestSolve:
    def test_uncoupled_returns_seed_at_stage_zero(self, params_uncoupled):
        sol = solve(params_uncoupled)
        assert sol.converged
        assert len(sol.trace) == 1
        assert sol.omega == pytest.approx(tuple(omega0(params_uncoupled)))
        assert sol.q.num_lattice_entries == 2

    def test_small_coupling_converges(self, params):
        sol = solve(params, SolverConfig(M=3, r_max=6))
        assert sol.converged
        assert sol.quality["final_residual_l2"] <= 1e-12
        assert sol.quality["anchors_exact"]

    def test_symmetry_exact_on_output(self, params):
        sol = solve(params, SolverConfig(M=3, r_max=6))
        for k, n, v in sol.q.canonical_items():
            assert sol.q.get(tuple(-x for x in k), n) == v

    def test_q_step_fixed_point_after_convergence(self, params):
        sol = solve(params, SolverConfig(M=3, r_max=6))
        om_again = q_step(sol.q, np.array(sol.omega), params)
        assert np.abs(om_again - np.array(sol.omega)).max() <= 1e-13

    def test_coupling_limit_enforced(self):
        p = golden_params(eps=0.2, delta=0.2)
        with pytest.raises(PreconditionFailed):
            solve(p)

    def test_failed_certificate_blocks_solve(self, params):
        from qpwave import check_alpha_dc
        failing = check_alpha_dc((0.0,), 5, 1e-2)
        assert not failing.passed
        with pytest.raises(PreconditionFailed):
            solve(params, certificates={"alpha_dc": failing})

    def test_stagnation_raises_non_convergence(self, params):
        config = SolverConfig(M=2, r_max=8, residual_floor=1e-30,
                              q_update_damping=1e-9)
        with pytest.raises(NonConvergence) as err:
            solve(params, config)
        assert err.value.trace is not None
        assert len(err.value.trace) >= 4


class TestBruteForceOracle:
    def test_uncoupled_exact_immediately(self, params_uncoupled):
        res = brute_force_oracle(params_uncoupled, 4)
        assert res.iterations == 0
        assert res.final_residual == 0.0
        assert res.omega == pytest.approx(tuple(omega0(params_uncoupled)))

    def test_quadratic_convergence_small_coupling(self, params):
        res = brute_force_oracle(params, 6)
        assert res.final_residual <= 1e-13
        hist = res.residual_history
        assert len(hist) >= 3
        # quadratic: each step roughly squares the residual
        for a, b in zip(hist[:-1], hist[1:]):
            if a < 1e-3 and b > 1e-15:
                assert b <= 10.0 * a ** 1.5

    def test_first_order_frequency_shift(self):
        # omega^2 - omega0^2 - 3 a^2 delta / 4 = O(delta^2) at p=2, eps=0
        for delta in (1e-3, 1e-4):
            p = golden_params(eps=0.0, delta=delta)
            res = brute_force_oracle(p, 5)
            lhs = abs(res.omega[0] ** 2 - omega0(p)[0] ** 2 - 0.75 * delta)
            assert lhs <= 50.0 * delta ** 2

    def test_size_guard(self):
        with pytest.raises(ValueError):
            brute_force_oracle(golden_params(), 70)


class TestOracleEquivalence:
    def test_staged_matches_oracle(self, params):
        sol = solve(params, SolverConfig(M=3, r_max=6))
        oracle = brute_force_oracle(params, 8)
        comp = compare_with_oracle(sol, oracle, 8)
        assert comp["sup_discrepancy"] <= 1e-9
        assert comp["omega_discrepancy"] <= 1e-9


class TestGeneralDimensions:
    def test_two_frequencies(self):
        p = golden_params(b=2, anchors=((0,), (1,)), amplitudes=(1.0, 1.3))
        sol = solve(p, SolverConfig(M=3, r_max=4))
        assert sol.converged
        oracle = brute_force_oracle(p, 5)
        comp = compare_with_oracle(sol, oracle, 5)
        assert comp["sup_discrepancy"] <= 1e-9
        assert comp["omega_discrepancy"] <= 1e-9
        # both frequencies modulated away from their linear values
        om0 = omega0(p)
        assert all(abs(w - w0) > 0 for w, w0 in zip(sol.omega, om0))
        assert sol.quality["weighted_tail"] < math.sqrt(p.eps + p.delta)

    def test_two_space_dimensions(self):
        import numpy as np
        p = ModelParams(b=1, d=2, p=2, m=2.5, eps=1e-3, delta=1e-3,
                        alpha=((math.sqrt(5) - 1) / 2, math.sqrt(2) - 1),
                        theta0=0.3455, anchors=((0, 0),), amplitudes=(1.0,))
        sol = solve(p, SolverConfig(M=3, r_max=3))
        assert sol.converged
        assert sol.quality["final_residual_l2"] <= 1e-12
        assert sol.quality["weighted_tail"] < math.sqrt(p.eps + p.delta)
        assert sol.quality["anchors_exact"]


class TestDecayFit:
    def test_synthetic_exponential(self):
        entries = {}
        for k in range(0, 6):
            for n in range(-5, 6):
                entries[((k,), (n,))] = math.exp(-0.7 * (k + abs(n)))
        q = CoefficientField.from_entries(entries, 1, 1)
        fit = decay_fit(q)
        assert fit.rate == pytest.approx(0.7, abs=1e-8)

    def test_seed_has_insufficient_data(self, params):
        q0 = initial_field(params)
        with pytest.raises(InsufficientData):
            decay_fit(q0, params.resonant_set())

    def test_converged_solution_rate_positive(self, params):
        sol = solve(params, SolverConfig(M=3, r_max=6))
        fit = decay_fit(sol.q, params.resonant_set())
        assert fit.rate > 0.5

    def test_stage_rates_stay_bounded_away_from_zero(self, params):
        sol = solve(params, SolverConfig(M=3, r_max=6))
        rates = [r.decay_rate for r in sol.trace if r.decay_rate is not None]
        assert rates
        assert min(rates) > 0.5

import numpy as np
import pytest

from ipag import (AdditiveNoiseOracle, BoxSet, ConstraintSet,
                  DegenerateWeights, ExactProjectionSolver, IndicatorOfSet,
                  InvalidHorizon, NonFiniteIterate, RestoringSolver,
                  SmoothObjective, StepSchedule, battery_problem,
                  ipag_schedule, make_indicator_composite, min_residual_curve,
                  output_distribution, run_composite, run_constrained)
from ipag.model import StochasticGradientOracle


class TestSchedule:
    def test_k1_L1(self):
        s = ipag_schedule(1.0, 10)
        a, g, lam, G, N, p, q = s.at(1)
        assert (a, g, lam, G) == (1.0, 0.25, 0.5, 1.0)
        assert (N, p, q) == (2, 2, 1)

    def test_k3_L2(self):
        s = ipag_schedule(2.0, 10)
        a, g, lam, G, N, p, q = s.at(3)
        assert a == 0.5
        assert g == 3.0 / 8.0
        assert lam == 0.25
        assert G == pytest.approx(1.0 / 6.0, rel=1e-15)
        assert (N, p, q) == (4, 4, 3)

    def test_step_coupling_all_k(self):
        for L in (0.5, 1.0, 7.3):
            s = ipag_schedule(L, 500)
            assert np.all(s.alpha * s.gamma <= s.lam + 1e-15)

    def test_closed_forms_large_horizon(self):
        for L in (0.5, 1.0, 7.3):
            s = ipag_schedule(L, 10_000)
            k = np.arange(1, 10_001, dtype=float)
            assert np.array_equal(s.alpha, 2.0 / (k + 1.0))
            assert np.array_equal(s.lam, np.full(10_000, 1.0 / (2.0 * L)))
            assert np.allclose(s.gamma, k / (4.0 * L), rtol=1e-14, atol=0)
            assert np.allclose(s.Gamma, 2.0 / (k * (k + 1.0)), rtol=1e-14,
                               atol=0)

    def test_invalid_horizon(self):
        with pytest.raises(InvalidHorizon):
            ipag_schedule(1.0, 1)

    def test_gamma_matches_recursion(self):
        s = ipag_schedule(3.0, 2000)
        from ipag import gamma_recursion
        assert np.max(np.abs(s.Gamma - gamma_recursion(s.alpha))) <= 1e-12


class TestOutputDistribution:
    def test_T4_exact(self):
        s = ipag_schedule(1.0, 4)
        probs = output_distribution(s, 4)
        assert np.allclose(probs, np.array([6.0, 12.0, 20.0]) / 38.0,
                           rtol=1e-15)

    def test_normalization_identity_even_T(self):
        # sum of unnormalized weights equals (L/32)(7T^3/24 + T^2 + 5T/6)
        for L in (0.5, 1.0, 7.3):
            for T in (4, 10, 40, 100):
                s = ipag_schedule(L, T)
                ks = np.arange(T // 2, T + 1)
                w = (1.0 - L * s.lam[ks - 1]) / (16.0 * s.lam[ks - 1]
                                                 * s.Gamma[ks - 1])
                closed = (L / 32.0) * (7.0 * T ** 3 / 24.0 + T ** 2
                                       + 5.0 * T / 6.0)
                assert w.sum() == pytest.approx(closed, rel=1e-10)

    def test_degenerate_weights(self):
        T = 4
        k = np.arange(1, T + 1, dtype=float)
        s = StepSchedule(alpha=2.0 / (k + 1.0), gamma=k * 1e-6,
                         lam=np.full(T, 1.0),           # lambda = 1/L with L=1
                         Gamma=2.0 / (k * (k + 1.0)),
                         batch=(k + 1).astype(int), p_budget=(k + 1).astype(int),
                         q_budget=k.astype(int), L=1.0)
        with pytest.raises(DegenerateWeights):
            output_distribution(s, 4)


def box_problem(n, L=2.0, noise_std=0.0, center=None):
    center = np.zeros(n) if center is None else center
    H = L * np.eye(n)
    obj = SmoothObjective(dim=n,
                          eval=lambda x: float(0.5 * (x - center) @ H @ (x - center)),
                          grad=lambda x: H @ (x - center), lipschitz_L=L)
    box = BoxSet(-10 * np.ones(n), 10 * np.ones(n))
    cs = ConstraintSet(box=box, constraints=(), slater_point=np.zeros(n))
    oracle = AdditiveNoiseOracle(grad=obj.grad, dim=n, noise_std=noise_std)
    return make_indicator_composite(obj, oracle, cs)


class CountingOracle(StochasticGradientOracle):
    """Wraps another oracle and records every (batch_size) request."""

    def __init__(self, base):
        self.base = base
        self.variance_bound_tau2 = base.variance_bound_tau2
        self.calls = []

    def sample_grad(self, point, batch_size, rng):
        self.calls.append(batch_size)
        return self.base.sample_grad(point, batch_size, rng)


class TestRunComposite:
    def test_linear_objective_one_step(self):
        n = 3
        c = np.array([1.0, -2.0, 0.5])
        obj = SmoothObjective(dim=n, eval=lambda x: float(c @ x),
                              grad=lambda x: c.copy(), lipschitz_L=1.0)
        box = BoxSet(-np.ones(n), np.ones(n))
        cs = ConstraintSet(box=box, constraints=(), slater_point=np.zeros(n))
        oracle = AdditiveNoiseOracle(grad=obj.grad, dim=n, noise_std=0.0)
        prob = make_indicator_composite(obj, oracle, cs)
        sched = ipag_schedule(1.0, 2)
        x0 = np.array([0.2, 0.1, -0.3])
        trace = run_composite(prob, sched, ExactProjectionSolver(), x0, None,
                              2, np.random.default_rng(0))
        gamma1 = sched.gamma[0]
        assert np.array_equal(trace.z_hist[0], x0)          # alpha_1 = 1
        assert np.array_equal(trace.x_hist[0],
                              box.project(x0 - gamma1 * c))

    def test_quadratic_converges(self):
        center = np.array([1.0, -2.0, 0.5, 0.0])
        prob = box_problem(4, L=2.0, center=center)
        sched = ipag_schedule(2.0, 300)
        trace = run_composite(prob, sched, ExactProjectionSolver(),
                              np.zeros(4), None, 300,
                              np.random.default_rng(1))
        assert trace.residual_sq[-1] <= 1e-8
        assert np.linalg.norm(trace.z_hist[-1] - center) <= 1e-3

    def test_seeded_determinism(self):
        prob = box_problem(4, noise_std=1.0)
        sched = ipag_schedule(2.0, 40)
        t1 = run_composite(prob, sched, ExactProjectionSolver(), np.ones(4),
                           None, 40, np.random.default_rng(42))
        t2 = run_composite(prob, sched, ExactProjectionSolver(), np.ones(4),
                           None, 40, np.random.default_rng(42))
        assert t1.output_index == t2.output_index
        assert np.array_equal(np.array(t1.residual_sq),
                              np.array(t2.residual_sq))
        for a, b in zip(t1.z_hist, t2.z_hist):
            assert np.array_equal(a, b)

    def test_one_shared_batch_per_iteration(self):
        prob = box_problem(3, noise_std=1.0)
        counter = CountingOracle(prob.oracle)
        prob = make_indicator_composite(prob.objective, counter,
                                        prob.nonsmooth.set)
        T = 25
        sched = ipag_schedule(2.0, T)
        trace = run_composite(prob, sched, ExactProjectionSolver(),
                              np.zeros(3), None, T, np.random.default_rng(2))
        assert counter.calls == [k + 1 for k in range(1, T + 1)]
        assert trace.grad_samples == sum(k + 1 for k in range(1, T + 1))
        assert trace.grad_samples == T * (T + 3) // 2

    def test_z_is_exact_convex_combination(self):
        prob = box_problem(3, noise_std=0.5)
        T = 30
        sched = ipag_schedule(2.0, T)
        x0 = np.full(3, 0.4)
        trace = run_composite(prob, sched, ExactProjectionSolver(), x0, None,
                              T, np.random.default_rng(3))
        for k in range(2, T + 1):
            a_k = sched.alpha[k - 1]
            recomputed = (1.0 - a_k) * trace.y_hist[k - 2] \
                + a_k * trace.x_hist[k - 2]
            assert np.array_equal(trace.z_hist[k - 1], recomputed)

    def test_output_index_in_window(self):
        prob = box_problem(2)
        T = 21
        sched = ipag_schedule(2.0, T)
        for seed in range(10):
            trace = run_composite(prob, sched, ExactProjectionSolver(),
                                  np.zeros(2), None, T,
                                  np.random.default_rng(seed))
            assert T // 2 <= trace.output_index <= T
            assert np.array_equal(trace.z_out,
                                  trace.z_hist[trace.output_index - 1])

    def test_nonfinite_guard(self):
        prob = box_problem(2)

        class NanOracle(StochasticGradientOracle):
            variance_bound_tau2 = 0.0

            def sample_grad(self, point, batch_size, rng):
                return np.array([np.nan, np.nan])

        bad = make_indicator_composite(prob.objective, NanOracle(),
                                       prob.nonsmooth.set)
        with pytest.raises(NonFiniteIterate):
            run_composite(bad, ipag_schedule(2.0, 5), ExactProjectionSolver(),
                          np.zeros(2), None, 5, np.random.default_rng(0))

    def test_infeasible_start_rejected(self):
        prob = box_problem(2)
        with pytest.raises(ValueError):
            run_composite(prob, ipag_schedule(2.0, 5), ExactProjectionSolver(),
                          np.full(2, 20.0), None, 5, np.random.default_rng(0))


class TestRunConstrained:
    def test_desk_scale_feasibility(self, qp_desk):
        comp = qp_desk.to_composite()
        sched = ipag_schedule(qp_desk.L, 30)
        trace = run_constrained(comp, sched, np.zeros(qp_desk.n), None, 30,
                                np.random.default_rng(7))
        cs = comp.nonsmooth.set
        for x, y in zip(trace.x_hist, trace.y_hist):
            assert cs.max_violation(x) <= 1e-10
            assert cs.max_violation(y) <= 1e-10
        assert max(trace.feas_margin) <= 1e-10

    def test_box_only_reduces_to_composite(self):
        prob = box_problem(3, noise_std=0.5, center=np.array([1.0, 2.0, -1.0]))
        T = 20
        sched = ipag_schedule(2.0, T)
        tc = run_composite(prob, sched, ExactProjectionSolver(), np.zeros(3),
                           None, T, np.random.default_rng(5))
        tr = run_constrained(prob, sched, np.zeros(3), None, T,
                             np.random.default_rng(5))
        for a, b in zip(tc.z_hist, tr.z_hist):
            assert np.array_equal(a, b)
        assert all(k == 0.0 for k in tr.kappa_x + tr.kappa_y)

    def test_T1_output_feasible(self, qp_small):
        comp = qp_small.to_composite()
        sched = ipag_schedule(qp_small.L, 2)
        trace = run_constrained(comp, sched, np.zeros(qp_small.n), None, 1,
                                np.random.default_rng(0))
        assert np.array_equal(trace.z_hist[0], np.zeros(qp_small.n))
        assert trace.output_index == 1
        assert comp.nonsmooth.set.max_violation(trace.z_out) <= 1e-10


class TestMinResidualCurve:
    def test_prefix_min(self):
        from ipag.solver import IpagTrace
        tr = IpagTrace(residual_sq=[4.0, 1.0, 2.0])
        assert min_residual_curve(tr) == [(1, 4.0), (2, 1.0), (3, 1.0)]

    def test_single_entry(self):
        from ipag.solver import IpagTrace
        tr = IpagTrace(residual_sq=[0.5])
        assert min_residual_curve(tr) == [(1, 0.5)]

    def test_monotone(self):
        prob = box_problem(3, noise_std=1.0)
        sched = ipag_schedule(2.0, 50)
        trace = run_composite(prob, sched, ExactProjectionSolver(),
                              np.zeros(3), None, 50, np.random.default_rng(9))
        curve = [v for _, v in min_residual_curve(trace)]
        assert all(b <= a for a, b in zip(curve, curve[1:]))

    def test_empty_trace(self):
        from ipag.solver import IpagTrace
        with pytest.raises(ValueError):
            min_residual_curve(IpagTrace())

import numpy as np
import pytest

from ipag import (OddDimension, analytic_battery, battery_problem,
                  enumerate_box_stationary_points, generate_qp, load_instance,
                  power_iteration, qp_full_gradient, qp_stochastic_gradient,
                  save_instance, stationarity_residual)
from ipag.problems import extreme_eigenvalues


class TestGenerateQp:
    def test_slater_margin(self):
        inst = generate_qp(4, 1, seed=0)
        v = inst.phi_values(np.zeros(4))
        assert -2.0 <= v[0] <= -1.0

    def test_negative_curvature(self):
        for seed in (0, 1, 7):
            inst = generate_qp(8, 2, seed=seed)
            lmin, _ = extreme_eigenvalues(inst.hessian())
            assert lmin < -1e-6

    def test_determinism(self):
        a = generate_qp(6, 2, seed=5, noise_std=2.0)
        b = generate_qp(6, 2, seed=5, noise_std=2.0)
        assert np.array_equal(a.A, b.A)
        assert np.array_equal(a.B, b.B)
        assert np.array_equal(a.D, b.D)
        assert np.array_equal(a.Q, b.Q)
        assert a.delta == b.delta and a.L == b.L

    def test_odd_dimension(self):
        with pytest.raises(OddDimension):
            generate_qp(5, 1, seed=0)

    def test_d_entries_integer_range(self):
        inst = generate_qp(10, 1, seed=2)
        assert np.all(inst.D == np.round(inst.D))
        assert inst.D.min() >= 1 and inst.D.max() <= 1000

    def test_d_two_point_mode(self):
        inst = generate_qp(10, 1, seed=2, d_two_point=True)
        assert set(np.unique(inst.D)) <= {1.0, 1000.0}

    def test_q_psd(self):
        inst = generate_qp(6, 3, seed=4)
        for i in range(inst.m):
            eigs = np.linalg.eigvalsh(inst.Q[i])
            assert eigs.min() >= -1e-10
            assert np.allclose(inst.Q[i], inst.Q[i].T)

    def test_L_matches_dense_eig_small_dim(self):
        # independent cross-check of the power-iteration spectral bound
        for seed in (0, 3, 9):
            inst = generate_qp(8, 2, seed=seed)
            eigs = np.linalg.eigvalsh(inst.hessian())
            L_dense = float(np.max(np.abs(eigs)))
            assert inst.L == pytest.approx(L_dense, rel=1e-6)
            assert inst.ell == pytest.approx(max(0.0, -eigs.min()), rel=1e-6)


class TestQpGradients:
    def test_grad_at_zero(self, qp_small):
        g = qp_full_gradient(qp_small, np.zeros(qp_small.n))
        assert np.allclose(g, -qp_small.tau_obj * qp_small.A.T @ qp_small.b)

    def test_finite_difference(self, qp_small):
        from ipag import finite_diff_check
        rng = np.random.default_rng(0)
        pts = [rng.uniform(-5, 5, qp_small.n) for _ in range(10)]
        err = finite_diff_check(lambda x: qp_full_gradient(qp_small, x),
                                qp_small.objective_value, pts, step=1e-6)
        assert err < 1e-5

    def test_delta_zero_is_least_squares(self):
        inst = generate_qp(6, 1, seed=8)
        object.__setattr__(inst, "delta", 0.0)
        rng = np.random.default_rng(1)
        x = rng.uniform(-3, 3, 6)
        g = qp_full_gradient(inst, x)
        assert np.allclose(g, inst.tau_obj * inst.A.T @ (inst.A @ x - inst.b))

    def test_sigma_zero_exact(self, qp_small):
        inst = generate_qp(qp_small.n, qp_small.m, seed=qp_small.seed,
                           noise_std=0.0)
        x = np.full(inst.n, 0.3)
        g = qp_stochastic_gradient(inst, x, 5, np.random.default_rng(0))
        assert np.array_equal(g, qp_full_gradient(inst, x))

    def test_noise_second_moment(self, qp_small):
        # E||xi_bar||^2 = tau_obj^2 sigma^2 trace(A'A) / N
        inst = qp_small
        tau2 = inst.tau_obj ** 2 * inst.noise_std ** 2 * float(
            np.trace(inst.A.T @ inst.A))
        x = np.zeros(inst.n)
        g_exact = qp_full_gradient(inst, x)
        rng = np.random.default_rng(2)
        for N in (1, 10):
            draws = 10_000
            acc = 0.0
            for _ in range(draws):
                xi = g_exact - qp_stochastic_gradient(inst, x, N, rng)
                acc += float(xi @ xi)
            assert acc / draws == pytest.approx(tau2 / N, rel=0.05)

    def test_large_batch_approaches_full(self, qp_small):
        inst = qp_small
        x = np.full(inst.n, -0.2)
        g_exact = qp_full_gradient(inst, x)
        tau2 = inst.tau_obj ** 2 * inst.noise_std ** 2 * float(
            np.trace(inst.A.T @ inst.A))
        N = 100_000
        g = qp_stochastic_gradient(inst, x, N, np.random.default_rng(3))
        # three standard errors of the batch-mean norm
        assert np.linalg.norm(g - g_exact) <= 3.0 * np.sqrt(tau2 / N)


class TestPowerIteration:
    def test_diagonal(self):
        H = np.diag([3.0, -5.0, 1.0])
        lam = power_iteration(lambda v: H @ v, 3)
        assert lam == pytest.approx(-5.0, rel=1e-7)

    def test_extreme_pair(self):
        rng = np.random.default_rng(4)
        M = rng.standard_normal((6, 6))
        H = 0.5 * (M + M.T)
        lmin, lmax = extreme_eigenvalues(H)
        eigs = np.linalg.eigvalsh(H)
        assert lmin == pytest.approx(eigs[0], rel=1e-6, abs=1e-8)
        assert lmax == pytest.approx(eigs[-1], rel=1e-6, abs=1e-8)


class TestAnalyticBattery:
    def test_names(self):
        names = [p.name for p in analytic_battery()]
        assert names == ["box_quadratic", "ball_quadratic", "nonconvex_box"]

    def test_box_quadratic_interior_minimum(self):
        p = battery_problem("box_quadratic")
        g = p.objective.grad(p.minimizer)
        assert np.linalg.norm(g) <= 1e-10
        assert p.constraint_set.box.contains(p.minimizer)

    def test_ball_quadratic_projection_fixed_point(self):
        p = battery_problem("ball_quadratic")
        comp = p.to_composite()
        rep = stationarity_residual(comp, p.minimizer)
        assert rep.residual_sq <= 1e-8

    def test_nonconvex_enumeration(self):
        p = battery_problem("nonconvex_box")
        assert len(p.stationary_points) >= 1
        comp = p.to_composite()
        for x in p.stationary_points:
            rep = stationarity_residual(comp, x)
            assert rep.residual_sq <= 1e-16


class TestKktEnumeration:
    def test_interior_minimum(self):
        H = np.eye(2)
        lin = np.array([-0.5, 0.25])
        pts = enumerate_box_stationary_points(H, lin, -np.ones(2), np.ones(2))
        assert any(np.allclose(p, [0.5, -0.25]) for p in pts)

    def test_indefinite_has_boundary_points(self):
        H = np.array([[1.0, 0.0], [0.0, -1.0]])
        lin = np.zeros(2)
        pts = enumerate_box_stationary_points(H, lin, -np.ones(2), np.ones(2))
        # saddle at origin plus the two minimizing faces x2 = +-1
        assert any(np.allclose(p, [0.0, 0.0]) for p in pts)
        assert any(np.allclose(p, [0.0, 1.0]) for p in pts)
        assert any(np.allclose(p, [0.0, -1.0]) for p in pts)

    def test_projected_gradient_conditions(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            M = rng.standard_normal((2, 2))
            H = 0.5 * (M + M.T)
            lin = rng.standard_normal(2)
            lo, hi = -np.ones(2), np.ones(2)
            for x in enumerate_box_stationary_points(H, lin, lo, hi):
                step = 1e-3
                moved = np.clip(x - step * (H @ x + lin), lo, hi)
                assert np.linalg.norm(moved - x) <= 1e-9


def test_serialization_round_trip(tmp_path, qp_small):
    path = tmp_path / "instance.txt"
    save_instance(qp_small, path)
    back = load_instance(path)
    assert np.array_equal(back.A, qp_small.A)
    assert np.array_equal(back.B, qp_small.B)
    assert np.array_equal(back.D, qp_small.D)
    assert np.array_equal(back.b, qp_small.b)
    assert np.array_equal(back.Q, qp_small.Q)
    assert np.array_equal(back.d, qp_small.d)
    assert np.array_equal(back.c, qp_small.c)
    assert back.delta == qp_small.delta
    assert back.noise_std == qp_small.noise_std
    assert back.L == pytest.approx(qp_small.L, rel=1e-12)

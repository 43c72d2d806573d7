import math

import numpy as np
import pytest

from cginvert.covariance import CovarianceParam
from cginvert.errors import DivergenceError
from cginvert.regularizer import ScaleRegularizer, cost
from cginvert.sensing import SensingModel
from cginvert.tikhonov import (
    NagdConfig,
    grad_u,
    r_u_step,
    tikhonov_exact,
    tikhonov_nagd,
    tikhonov_woodbury,
    u_objective,
)


def random_cov(kind, n, rng, scale=1.0):
    if kind == "scaled_identity":
        return CovarianceParam.scaled_identity(n, scale * rng.uniform(0.5, 2.0))
    if kind == "diagonal":
        return CovarianceParam.diagonal(n, scale * rng.uniform(0.5, 2.0, n))
    if kind == "tridiagonal":
        return CovarianceParam.tridiagonal(
            n, rng.uniform(0.5, 1.5, n) * math.sqrt(scale),
            rng.uniform(-0.3, 0.3, n - 1) * math.sqrt(scale))
    tril = rng.standard_normal(n * (n + 1) // 2) * 0.3 * math.sqrt(scale)
    tril[np.cumsum(np.arange(1, n + 1)) - 1] += math.sqrt(scale)
    return CovarianceParam.full(n, tril)


def make_instance(m, n, seed, cov_kind="scaled_identity"):
    rng = np.random.default_rng(seed)
    model = SensingModel(rng.standard_normal((m, n)) / math.sqrt(n))
    y = rng.standard_normal(m)
    z = rng.uniform(0.2, 2.0, n)
    p = random_cov(cov_kind, n, rng)
    return model, y, z, p


class TestCovariance:
    def test_materialized_formulas(self):
        n = 5
        rng = np.random.default_rng(0)
        lam = 0.7
        p = CovarianceParam.scaled_identity(n, lam, eps=1e-4)
        assert np.array_equal(p.materialize(), lam * np.eye(n))
        diag = rng.uniform(-1, 2, n)
        p = CovarianceParam.diagonal(n, diag, eps=1e-4)
        assert np.array_equal(p.materialize(), np.diag(np.maximum(diag, 1e-4)))
        d1, d2 = rng.standard_normal(n), rng.standard_normal(n - 1)
        p = CovarianceParam.tridiagonal(n, d1, d2, eps=1e-4)
        L = np.diag(d1) + np.diag(d2, -1)
        assert np.allclose(p.materialize(), L @ L.T + 1e-4 * np.eye(n), atol=0)
        tril = rng.standard_normal(n * (n + 1) // 2)
        p = CovarianceParam.full(n, tril, eps=1e-4)
        L = np.zeros((n, n))
        L[np.tril_indices(n)] = tril
        assert np.allclose(p.materialize(), L @ L.T + 1e-4 * np.eye(n), atol=0)

    @pytest.mark.parametrize("kind", ["scaled_identity", "diagonal",
                                      "tridiagonal", "full"])
    @pytest.mark.parametrize("n", [2, 7, 33, 64])
    def test_eigenvalue_floor(self, kind, n):
        rng = np.random.default_rng(n)
        if kind == "scaled_identity":
            p = CovarianceParam.scaled_identity(n, rng.uniform(-2, 2), eps=1e-4)
        elif kind == "diagonal":
            p = CovarianceParam.diagonal(n, rng.uniform(-2, 2, n), eps=1e-4)
        elif kind == "tridiagonal":
            p = CovarianceParam.tridiagonal(n, rng.standard_normal(n),
                                            rng.standard_normal(n - 1), eps=1e-4)
        else:
            p = CovarianceParam.full(n, rng.standard_normal(n * (n + 1) // 2),
                                     eps=1e-4)
        w = np.linalg.eigvalsh(p.materialize())
        assert w.min() >= 1e-4 - 1e-12

    def test_solve_and_quad_consistency(self):
        rng = np.random.default_rng(1)
        for kind in ("scaled_identity", "diagonal", "tridiagonal", "full"):
            p = random_cov(kind, 6, rng)
            x = rng.standard_normal(6)
            dense = p.materialize()
            assert p.apply(x) == pytest.approx(dense @ x, rel=1e-12)
            assert p.solve(x) == pytest.approx(np.linalg.solve(dense, x), rel=1e-9)
            assert p.quad_inv(x) == pytest.approx(
                x @ np.linalg.solve(dense, x), rel=1e-9)

    def test_init_default_realizes_exact_diagonal(self):
        for kind in ("scaled_identity", "diagonal", "tridiagonal", "full"):
            p = CovarianceParam.init_default(kind, 5, 0.1, eps=1e-4)
            assert np.allclose(p.materialize(), 0.1 * np.eye(5), atol=1e-15)


class TestExactSolve:
    def test_zero_scales_give_zero(self):
        model, y, _, p = make_instance(4, 7, 0)
        u = tikhonov_exact(np.zeros(7), model, y, p)
        assert u == pytest.approx(np.zeros(7), abs=1e-14)

    def test_identity_halves_measurements(self):
        model = SensingModel(np.eye(6))
        y = np.random.default_rng(1).standard_normal(6)
        p = CovarianceParam.scaled_identity(6, 1.0)
        u = tikhonov_exact(np.ones(6), model, y, p)
        assert u == pytest.approx(y / 2.0, rel=1e-12)

    def test_against_stacked_least_squares_oracle(self):
        model, y, z, p = make_instance(8, 12, 2, "tridiagonal")
        u = tikhonov_exact(z, model, y, p)
        # independent route: augmented least squares with a P^{-1/2} block
        az = model.dense_a() * z[None, :]
        w, v = np.linalg.eigh(p.materialize())
        p_inv_half = v @ np.diag(w ** -0.5) @ v.T
        big = np.vstack([az, p_inv_half])
        rhs = np.concatenate([y, np.zeros(12)])
        expect = np.linalg.lstsq(big, rhs, rcond=None)[0]
        assert np.linalg.norm(u - expect) <= 1e-9 * np.linalg.norm(expect)

    def test_residual_bound(self):
        model, y, z, p = make_instance(9, 6, 3)
        u = tikhonov_exact(z, model, y, p)
        az = model.dense_a() * z[None, :]
        g = az.T @ az + np.linalg.inv(p.materialize())
        rhs = az.T @ y
        assert np.linalg.norm(g @ u - rhs) < 1e-8 * np.linalg.norm(rhs)

    def test_unique_minimizer(self):
        model, y, z, p = make_instance(5, 8, 4)
        rng = np.random.default_rng(5)
        u_star = tikhonov_exact(z, model, y, p)
        f_star = u_objective(u_star, z, model, y, p)
        for _ in range(100):
            delta = rng.standard_normal(8) * rng.uniform(1e-4, 1.0)
            assert u_objective(u_star + delta, z, model, y, p) >= f_star


class TestWoodbury:
    @pytest.mark.parametrize("kind", ["scaled_identity", "diagonal",
                                      "tridiagonal", "full"])
    def test_matches_exact(self, kind):
        for seed in range(25):
            model, y, z, p = make_instance(6, 14, 100 + seed, kind)
            ue = tikhonov_exact(z, model, y, p)
            uw = tikhonov_woodbury(z, model, y, p)
            assert np.linalg.norm(ue - uw) <= 1e-8 * max(np.linalg.norm(ue), 1e-30)

    def test_scalar_measurement(self):
        rng = np.random.default_rng(6)
        model = SensingModel(rng.standard_normal((1, 5)))
        y = rng.standard_normal(1)
        z = rng.uniform(0.5, 1.5, 5)
        p = CovarianceParam.scaled_identity(5, 0.8)
        a_row = model.dense_a().ravel() * z
        expect = 0.8 * a_row * y[0] / (1.0 + 0.8 * float(a_row @ a_row))
        assert tikhonov_woodbury(z, model, y, p) == pytest.approx(
            expect.ravel(), rel=1e-12)

    def test_zero_scales(self):
        model, y, _, p = make_instance(4, 7, 7)
        assert tikhonov_woodbury(np.zeros(7), model, y, p) == pytest.approx(
            np.zeros(7), abs=1e-14)


class TestGradientStep:
    def test_fixed_point_at_solution(self):
        model, y, z, p = make_instance(6, 9, 8)
        u_star = tikhonov_exact(z, model, y, p)
        u_next = r_u_step(u_star, z, model, y, p, eta=0.01)
        assert np.linalg.norm(u_next - u_star) < 1e-8

    def test_zero_eta_is_identity(self):
        model, y, z, p = make_instance(6, 9, 9)
        u = np.random.default_rng(0).standard_normal(9)
        assert np.array_equal(r_u_step(u, z, model, y, p, 0.0), u)

    def test_grad_u_finite_differences(self):
        model, y, z, p = make_instance(4, 5, 10, "full")
        rng = np.random.default_rng(11)
        u = rng.standard_normal(5)
        g = grad_u(u, z, model, y, p)
        h = 1e-6
        for k in range(5):
            up, um = u.copy(), u.copy()
            up[k] += h
            um[k] -= h
            num = (u_objective(up, z, model, y, p)
                   - u_objective(um, z, model, y, p)) / (2 * h)
            assert abs(num - g[k]) <= 1e-6 * max(abs(num), 1.0)


class TestNagd:
    def well_conditioned(self, seed):
        # modest operator norm and a firm P^{-1} keep the condition number
        # low enough for the 100-step tolerance
        rng = np.random.default_rng(seed)
        model = SensingModel(rng.standard_normal((8, 16)) / math.sqrt(16))
        y = rng.standard_normal(8)
        z = rng.uniform(0.2, 1.5, 16)
        p = CovarianceParam.scaled_identity(16, 0.5)
        return model, y, z, p

    def test_hundred_steps_match_exact(self):
        for seed in range(10):
            model, y, z, p = self.well_conditioned(seed)
            u_star = tikhonov_exact(z, model, y, p)
            u = tikhonov_nagd(np.zeros(16), z, model, y, p, NagdConfig(steps=100))
            assert np.linalg.norm(u - u_star) <= 1e-4 * np.linalg.norm(u_star)

    def test_exact_start_is_fixed(self):
        model, y, z, p = self.well_conditioned(3)
        u_star = tikhonov_exact(z, model, y, p)
        u = tikhonov_nagd(u_star, z, model, y, p, NagdConfig(steps=25))
        assert np.linalg.norm(u - u_star) <= 1e-8 * max(np.linalg.norm(u_star), 1.0)

    def test_error_decays_with_steps(self):
        for seed in range(5):
            model, y, z, p = self.well_conditioned(20 + seed)
            u_star = tikhonov_exact(z, model, y, p)
            e10 = np.linalg.norm(
                tikhonov_nagd(np.zeros(16), z, model, y, p, NagdConfig(steps=10))
                - u_star)
            e100 = np.linalg.norm(
                tikhonov_nagd(np.zeros(16), z, model, y, p, NagdConfig(steps=100))
                - u_star)
            assert e100 < e10

    def test_objective_decreases_after_warmup(self):
        # momentum ripples make strict per-step decrease instance-specific;
        # this instance exhibits it
        model, y, z, p = self.well_conditioned(49)
        u, trace, _ = tikhonov_nagd(np.zeros(16), z, model, y, p,
                                    NagdConfig(steps=40), want_trace=True)
        f = [u_objective(t, z, model, y, p) for t in trace]
        assert all(f[j + 1] <= f[j] + 1e-12 for j in range(2, len(f) - 1))

    def test_accelerated_decay_bound(self):
        # robust across instances: gap_j <= C * gap_0 / (j+2)^2
        for seed in range(10):
            model, y, z, p = self.well_conditioned(seed)
            u_star = tikhonov_exact(z, model, y, p)
            f_star = u_objective(u_star, z, model, y, p)
            _, trace, _ = tikhonov_nagd(np.zeros(16), z, model, y, p,
                                        NagdConfig(steps=60), want_trace=True)
            f = [u_objective(t, z, model, y, p) for t in trace]
            gap0 = f[0] - f_star
            for j in range(1, len(f)):
                assert f[j] - f_star <= 8.0 * gap0 / (j + 2) ** 2

    def test_divergence_error_on_bad_eta(self):
        model, y, z, p = self.well_conditioned(31)
        with pytest.raises(DivergenceError):
            tikhonov_nagd(np.zeros(16), z, model, y, p,
                          NagdConfig(steps=200, eta=50.0))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NagdConfig(steps=0)

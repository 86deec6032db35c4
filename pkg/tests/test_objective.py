"""Tests for the InfoNCE loss, population functionals, and regularizer."""

import numpy as np
import pytest
from scipy.special import gammaln, ive

from ncegauss.objective import (LossParams, alignment_term, entropy_estimate,
                                entropy_gradient, infonce_grad, infonce_loss,
                                kl_to_gaussian, regularized_objective,
                                surrogate_jq, uniformity_potential)
from ncegauss.spherestats import sample_uniform_sphere, sample_vmf


def _naive_infonce(u, v, tau):
    """Direct softmax cross-entropy, no validation (finite-difference oracle)."""
    n = u.shape[0]
    logits = (u @ v.T) / tau
    total = 0.0
    for i in range(n):
        total += np.log(np.exp(logits[i]).sum()) - logits[i, i]
    return total / n


def _random_units(n, d, seed):
    g = np.random.default_rng(seed).standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


class TestInfonceLoss:
    def test_single_pair_is_zero(self):
        u = _random_units(1, 5, 0)
        assert infonce_loss(u, u.copy(), tau=0.3) == pytest.approx(0.0, abs=1e-12)

    def test_collapsed_batch_is_log_n(self):
        n = 17
        u = np.tile(_random_units(1, 6, 1), (n, 1))
        v = np.tile(_random_units(1, 6, 2), (n, 1))
        assert infonce_loss(u, v, tau=0.2) == pytest.approx(np.log(n), abs=1e-9)

    def test_orthogonal_two_pair_value(self):
        # logits diag 1, cross 0 at tau=1: loss = log(1 + e^-1)
        u = np.array([[1.0, 0.0], [0.0, 1.0]])
        v = u.copy()
        expected = np.log(1.0 + np.exp(-1.0))  # 0.313262...
        assert infonce_loss(u, v, tau=1.0) == pytest.approx(expected, abs=1e-12)

    def test_rejects_non_unit_rows(self):
        u = _random_units(4, 3, 3)
        with pytest.raises(ValueError):
            infonce_loss(1.01 * u, u, tau=1.0)

    def test_block_computation_matches_naive(self):
        u = _random_units(300, 8, 4)
        v = _random_units(300, 8, 5)
        assert infonce_loss(u, v, 0.4) == pytest.approx(_naive_infonce(u, v, 0.4), rel=1e-12)


class TestInfonceGrad:
    def test_single_pair_zero_grad(self):
        u = _random_units(1, 4, 6)
        gu, gv = infonce_grad(u, u.copy(), tau=0.5)
        assert np.allclose(gu, 0) and np.allclose(gv, 0)

    def test_symmetric_configuration_grads_sum_to_zero(self):
        # equal logits everywhere: softmax translation identity
        u = np.array([[1.0, 0.0], [1.0, 0.0]])
        v = np.array([[0.0, 1.0], [0.0, 1.0]])
        gu, gv = infonce_grad(u, v, tau=1.0)
        assert np.allclose(gu.sum(axis=0), 0, atol=1e-12)
        assert np.allclose(gv.sum(axis=0), 0, atol=1e-12)

    def test_matches_finite_difference(self):
        rng = np.random.default_rng(7)
        u = _random_units(8, 5, 8)
        v = _random_units(8, 5, 9)
        gu, gv = infonce_grad(u, v, tau=0.7)
        h = 1e-6
        for mat, grad in ((u, gu), (v, gv)):
            numeric = np.zeros_like(mat)
            for i in range(8):
                for j in range(5):
                    mat[i, j] += h
                    up = _naive_infonce(u, v, 0.7)
                    mat[i, j] -= 2 * h
                    down = _naive_infonce(u, v, 0.7)
                    mat[i, j] += h
                    numeric[i, j] = (up - down) / (2 * h)
            scale = np.maximum(np.abs(numeric), 1e-6)
            assert np.max(np.abs(grad - numeric) / scale) < 1e-4


class TestAlignment:
    def test_identical_and_antipodal(self):
        u = _random_units(50, 6, 10)
        assert alignment_term(u, u) == pytest.approx(1.0, abs=1e-12)
        assert alignment_term(u, -u) == pytest.approx(-1.0, abs=1e-12)

    def test_independent_uniform_near_zero(self):
        u = sample_uniform_sphere(100_000, 64, seed=11).points
        v = sample_uniform_sphere(100_000, 64, seed=12).points
        assert abs(alignment_term(u, v)) < 0.02


class TestUniformityPotential:
    def test_collapsed_rows_give_alpha(self):
        u = np.tile(_random_units(1, 5, 13), (40, 1))
        assert uniformity_potential(u, 3.0) == pytest.approx(3.0, abs=1e-9)

    def test_two_antipodal_points(self):
        e = np.zeros(4)
        e[0] = 1.0
        u = np.vstack([e, -e])
        alpha = 3.0
        expected = np.log((np.exp(alpha) + np.exp(-alpha)) / 2.0)
        assert uniformity_potential(u, alpha) == pytest.approx(expected, abs=1e-12)

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            uniformity_potential(_random_units(1, 4, 14), 2.0)

    def test_uniform_reference_and_vmf_ordering(self):
        # 10-fold resampled reference, plus the vMF(5) comparison
        d, alpha, n = 128, 10.0, 20_000
        vals = [uniformity_potential(sample_uniform_sphere(n, d, seed=20 + s).points, alpha)
                for s in range(10)]
        ref, se = np.mean(vals), np.std(vals, ddof=1) / np.sqrt(10)
        one = uniformity_potential(sample_uniform_sphere(n, d, seed=99).points, alpha)
        assert abs(one - ref) < 3 * np.std(vals, ddof=1) + 3 * se
        mu = np.zeros(d)
        mu[0] = 1.0
        tilted = uniformity_potential(sample_vmf(n, d, 5.0, mu, seed=31).points, alpha)
        assert tilted > max(vals)


class TestEntropyEstimate:
    def test_gaussian_closed_form(self):
        z = np.random.default_rng(15).standard_normal((50_000, 4))
        expected = 2.0 * np.log(2.0 * np.pi * np.e)  # (d/2) log(2 pi e)
        assert entropy_estimate(z) == pytest.approx(expected, abs=0.1)

    def test_scaling_law(self):
        z = np.random.default_rng(16).standard_normal((20_000, 3))
        shift = entropy_estimate(2.0 * z) - entropy_estimate(z)
        assert shift == pytest.approx(3 * np.log(2.0), abs=0.05)

    def test_unit_cube(self):
        z = np.random.default_rng(17).random((50_000, 2))
        assert entropy_estimate(z) == pytest.approx(0.0, abs=0.05)

    def test_duplicates_warn(self):
        z = np.ones((40, 2))
        z[20:] = 0.0
        with pytest.warns(UserWarning):
            entropy_estimate(z)

    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(18)
        z = 3.0 * rng.standard_normal((14, 3))  # well separated points
        h_val, grad = entropy_gradient(z)
        assert h_val == pytest.approx(entropy_estimate(z), abs=1e-9)
        h = 1e-6
        numeric = np.zeros_like(z)
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                z[i, j] += h
                up = entropy_estimate(z)
                z[i, j] -= 2 * h
                down = entropy_estimate(z)
                z[i, j] += h
                numeric[i, j] = (up - down) / (2 * h)
        assert np.max(np.abs(grad - numeric)) < 1e-4


class TestRegularizedObjective:
    def test_beta_zero_recovers_infonce_decomposition(self):
        u = _random_units(64, 8, 19)
        v = _random_units(64, 8, 20)
        z = 2.0 * np.random.default_rng(21).standard_normal((64, 8))
        params = LossParams(tau=0.5, beta=0.0)
        rep = regularized_objective(u, v, z, params)
        assert rep.regularized_j == pytest.approx(
            rep.uniformity_potential - params.alpha * rep.alignment, abs=1e-12)

    def test_optimal_gaussian_value(self):
        # z ~ N(0, (2 lam)^-1 I): -H + lam E||Z||^2 = -(d/2) log(pi/lam)
        # via H = (d/2) log(2 pi e sigma^2), sigma^2 = 1/(2 lam)
        d, lam = 8, 0.5
        rng = np.random.default_rng(22)
        z = rng.standard_normal((50_000, d)) / np.sqrt(2 * lam)
        u = _random_units(50_000, d, 23)
        params = LossParams(tau=0.5, beta=1.0, lam=lam)
        rep = regularized_objective(u, u.copy(), z, params)
        value = -rep.entropy_estimate + lam * rep.mean_sq_norm
        assert value == pytest.approx(-(d / 2) * np.log(np.pi / lam), abs=0.1)
        # same law: KL to the matching Gaussian is ~0 (B = R^d closed form)
        assert kl_to_gaussian(rep.entropy_estimate, rep.mean_sq_norm, d, lam) == \
            pytest.approx(0.0, abs=0.1)

    def test_unit_norm_rows_msn(self):
        u = _random_units(128, 6, 24)
        rep = regularized_objective(u, u.copy(), u, LossParams(tau=1.0))
        assert rep.mean_sq_norm == pytest.approx(1.0, abs=1e-12)

    def test_report_identity(self):
        u = _random_units(256, 8, 25)
        v = _random_units(256, 8, 26)
        z = np.random.default_rng(27).standard_normal((256, 8))
        params = LossParams(tau=0.2, beta=0.3, lam=2.0)
        rep = regularized_objective(u, v, z, params)
        recomposed = (rep.uniformity_potential - params.alpha * rep.alignment
                      + params.beta * (-rep.entropy_estimate + params.lam * rep.mean_sq_norm))
        assert rep.regularized_j == pytest.approx(recomposed, abs=1e-9)

    def test_ball_constraint(self):
        u = _random_units(32, 4, 28)
        z = 3.0 * u
        with pytest.raises(ValueError):
            regularized_objective(u, u.copy(), z, LossParams(tau=1.0, ball_radius=2.0))


class TestSurrogateJq:
    def test_uniform_mean_vanishes(self):
        u = sample_uniform_sphere(50_000, 32, seed=29).points
        phi = uniformity_potential(u, 4.0)
        assert surrogate_jq(u, 4.0, 0.25) == pytest.approx(phi, abs=0.01)

    def test_collapsed_rows(self):
        e = np.zeros(6)
        e[0] = 1.0
        u = np.tile(e, (30, 1))
        alpha, eta2 = 5.0, 0.4
        assert surrogate_jq(u, alpha, eta2) == pytest.approx(
            alpha - alpha * (1 - eta2), abs=1e-9)

    def test_eta2_one_reduces_to_phi(self):
        u = _random_units(100, 5, 30)
        assert surrogate_jq(u, 3.0, 1.0) == pytest.approx(
            uniformity_potential(u, 3.0), abs=1e-12)

    def test_eta2_out_of_range(self):
        with pytest.raises(ValueError):
            surrogate_jq(_random_units(10, 4, 31), 2.0, 1.5)


class TestPopulationConsistency:
    def test_large_batch_gap_small(self):
        # analytic Phi(uniform) vs (L_N - log N) + alpha*align for big N
        d, tau, n = 64, 0.5, 8192
        alpha = 1.0 / tau
        u = sample_uniform_sphere(n, d, seed=32).points
        v = sample_uniform_sphere(n, d, seed=33).points
        nu = d / 2 - 1
        phi_exact = gammaln(d / 2) + nu * (np.log(2) - np.log(alpha)) \
            + np.log(ive(nu, alpha)) + alpha
        pop = phi_exact - alpha * 0.0  # independent views: population alignment 0
        gap = abs(infonce_loss(u, v, tau) - np.log(n) - pop)
        assert gap < 0.05

    def test_gradient_end_to_end(self):
        # total loss through normalization vs finite differences on params
        from ncegauss.encoder import forward, grad_through_normalization_batch, \
            init_encoder, backward
        rng = np.random.default_rng(34)
        enc = init_encoder(6, 4, hidden=5, activation="relu", seed=35)
        x_a = rng.standard_normal((10, 6))
        x_b = rng.standard_normal((10, 6))
        tau = 0.4

        def total_loss():
            ua = forward(enc, x_a).normalized
            vb = forward(enc, x_b).normalized
            return infonce_loss(ua, vb, tau)

        emb_a = forward(enc, x_a)
        emb_b = forward(enc, x_b)
        gu, gv = infonce_grad(emb_a.normalized, emb_b.normalized, tau)
        graw_a = grad_through_normalization_batch(emb_a.raw, gu)
        graw_b = grad_through_normalization_batch(emb_b.raw, gv)
        ga = backward(enc, x_a, graw_a)
        gb = backward(enc, x_b, graw_b)
        analytic = [a + b for a, b in zip(ga, gb)]
        h = 1e-5
        for p, ag in zip(enc.parameters(), analytic):
            it = np.nditer(p, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = p[idx]
                p[idx] = orig + h
                up = total_loss()
                p[idx] = orig - h
                down = total_loss()
                p[idx] = orig
                numeric = (up - down) / (2 * h)
                assert abs(ag[idx] - numeric) <= 1e-3 * max(1.0, abs(numeric))
                it.iternext()

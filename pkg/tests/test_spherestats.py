"""Tests for sphere sampling, projections, and Gaussian-distance metrics."""

import numpy as np
import pytest
from scipy import stats
from scipy.special import ive

from ncegauss.spherestats import (empirical_gauss_distance, ks_to_standard_normal,
                                  project_scaled, sample_uniform_sphere, sample_vmf,
                                  scaled_projection_grid, tv_rate_bound,
                                  vmf_kl_uniform, vmf_mean_resultant)


class TestUniformSphere:
    def test_mean_vector_small(self):
        s = sample_uniform_sphere(100_000, 16, seed=1)
        assert np.linalg.norm(s.points.mean(axis=0)) < 0.02

    def test_coordinate_second_moment(self):
        s = sample_uniform_sphere(100_000, 16, seed=2)
        second = (s.points**2).mean(axis=0)
        assert np.all(np.abs(second - 1.0 / 16) < 0.005)

    def test_independent_pairs_uncorrelated(self):
        a = sample_uniform_sphere(100_000, 8, seed=3).points
        b = sample_uniform_sphere(100_000, 8, seed=4).points
        assert abs(np.mean(np.sum(a * b, axis=1))) < 0.01

    def test_unit_rows_and_dim_check(self):
        s = sample_uniform_sphere(1000, 5, seed=5)
        assert np.max(np.abs(np.linalg.norm(s.points, axis=1) - 1)) < 1e-9
        with pytest.raises(ValueError):
            sample_uniform_sphere(10, 1, seed=0)


class TestVmf:
    def test_kappa_zero_matches_uniform(self):
        mu = np.zeros(6)
        mu[0] = 1.0
        v = sample_vmf(100_000, 6, 0.0, mu, seed=6).points
        u = sample_uniform_sphere(100_000, 6, seed=7).points
        for j in range(6):
            ks = stats.ks_2samp(v[:, j], u[:, j]).statistic
            assert ks < 0.02

    def test_high_concentration(self):
        d = 8
        mu = np.full(d, 1.0 / np.sqrt(d))
        v = sample_vmf(20_000, d, 1e4, mu, seed=8).points
        mean = v.mean(axis=0)
        norm = np.linalg.norm(mean)
        assert norm > 0.99
        angle = np.arccos(np.clip(mean @ mu / norm, -1, 1))
        assert angle < 0.05

    def test_mean_resultant_quadrature_and_bessel(self):
        # sampler vs quadrature vs the I_{d/2}/I_{d/2-1} closed form
        d, kappa = 16, 5.0
        mu = np.zeros(d)
        mu[-1] = 1.0
        v = sample_vmf(100_000, d, kappa, mu, seed=9).points
        emp = float(np.mean(v @ mu))
        quad = vmf_mean_resultant(d, kappa)
        bessel = float(ive(d / 2, kappa) / ive(d / 2 - 1, kappa))
        assert quad == pytest.approx(bessel, abs=1e-9)
        assert emp == pytest.approx(quad, abs=0.01)

    def test_direction_must_be_unit(self):
        with pytest.raises(ValueError):
            sample_vmf(10, 4, 1.0, np.array([1.0, 1.0, 0.0, 0.0]), seed=0)

    def test_kl_quadrature_small_kappa_limit(self):
        # KL ~ kappa^2 / (2d) as kappa -> 0
        d, kappa = 32, 0.05
        assert vmf_kl_uniform(d, kappa) == pytest.approx(kappa**2 / (2 * d), rel=0.05)


class TestProjectScaled:
    def test_k_range_enforced(self):
        s = sample_uniform_sphere(100, 8, seed=10)
        with pytest.raises(ValueError):
            project_scaled(s, 8)  # k = d rejected
        with pytest.raises(ValueError):
            project_scaled(s, 5)  # k > d - 4

    def test_unit_variance_projection(self):
        s = sample_uniform_sphere(100_000, 512, seed=11)
        p = project_scaled(s, 1)
        assert abs(p.var() - 1.0) < 0.03  # E[d u_1^2] = 1 exactly

    def test_offdiagonal_covariance(self):
        s = sample_uniform_sphere(100_000, 512, seed=12)
        p = project_scaled(s, 2)
        cov = np.cov(p.T)
        assert abs(cov[0, 1]) < 0.02


class TestTvRateBound:
    def test_values(self):
        assert tv_rate_bound(1, 8) == pytest.approx(2.0)
        assert tv_rate_bound(1, 804) == pytest.approx(0.01)

    def test_monotone_in_d(self):
        vals = [tv_rate_bound(1, d) for d in (8, 16, 64, 256, 1024)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_range(self):
        with pytest.raises(ValueError):
            tv_rate_bound(5, 8)


class TestEmpiricalGaussDistance:
    def test_null_self_distance(self):
        z = np.random.default_rng(13).standard_normal((100_000, 1))
        dist = empirical_gauss_distance(z)
        assert dist["ks"] < 0.01

    def test_clt_improvement_with_dimension(self):
        proj = scaled_projection_grid(100_000, [16, 512], k=1, seed=14)
        ks16 = empirical_gauss_distance(proj[16])["ks"]
        ks512 = empirical_gauss_distance(proj[512])["ks"]
        assert ks512 < ks16

    def test_small_sample_warns(self):
        with pytest.warns(UserWarning):
            empirical_gauss_distance(np.random.default_rng(15).standard_normal((500, 1)))

    def test_tv_hist_2d_null(self):
        z = np.random.default_rng(16).standard_normal((200_000, 2))
        dist = empirical_gauss_distance(z)
        assert dist["tv_hist"] < 0.15  # 100x100 cells: MC noise dominates


class TestSphereInvariants:
    def test_rotation_invariance(self):
        rng = np.random.default_rng(17)
        q, _ = np.linalg.qr(rng.standard_normal((64, 64)))
        s = sample_uniform_sphere(50_000, 64, seed=18)
        base = ks_to_standard_normal(np.sqrt(64) * s.points[:, 0])
        rotated = ks_to_standard_normal(np.sqrt(64) * (s.points @ q.T)[:, 0])
        assert abs(base - rotated) < 0.01

    def test_clt_trend_along_dimension_grid(self):
        proj = scaled_projection_grid(50_000, [8, 32, 128, 512], k=1, seed=19)
        ks = [empirical_gauss_distance(proj[d])["ks"] for d in (8, 32, 128, 512)]
        assert all(a > b for a, b in zip(ks, ks[1:]))

    def test_slutsky_composition(self):
        # near-constant radii: scaled projections match the pure uniform case
        d, n, r0 = 64, 100_000, 2.5
        s = sample_uniform_sphere(n, d, seed=20)
        pure = ks_to_standard_normal(np.sqrt(d) * s.points[:, 0])
        radii = r0 * (1.0 + 0.01 * np.random.default_rng(21).standard_normal(n) / np.sqrt(d))
        z = s.points * radii[:, None]
        scaled = ks_to_standard_normal(np.sqrt(d) * z[:, 0] / r0)
        assert abs(pure - scaled) < 0.01

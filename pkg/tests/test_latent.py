"""Distribution oracles: high-precision Bessel series, closed forms,
quadrature, and Monte Carlo checks for the two latent families."""

import math

import mpmath
import numpy as np
import pytest

from mvg import autodiff as ad
from mvg.autodiff import Tensor
from mvg.latent import (GaussPosterior, LatentConfig, VmfPosterior,
                        bessel_ratio, gauss_kl_std, gauss_sample,
                        gauss_kl_std_tensor, gauss_sample_tensor,
                        log_uniform_sphere_density, vmf_kl_uniform,
                        vmf_log_norm, vmf_noise, vmf_sample,
                        vmf_sample_tensor)


def mp_log_norm(kappa, d):
    """Oracle: log C_d(kappa) with the modified-Bessel series accumulated in
    60-digit arithmetic."""
    mpmath.mp.dps = 60
    nu = mpmath.mpf(d) / 2 - 1
    k = mpmath.mpf(kappa)
    total = mpmath.mpf(0)
    m = 0
    while True:
        term = (k / 2) ** (2 * m + nu) / (mpmath.factorial(m)
                                          * mpmath.gamma(m + nu + 1))
        total += term
        if m > 10 and term < total * mpmath.mpf(10) ** -50:
            break
        m += 1
    val = nu * mpmath.log(k) - (mpmath.mpf(d) / 2) * mpmath.log(2 * mpmath.pi) \
        - mpmath.log(total)
    return float(val)


def mp_kl_uniform(kappa, d):
    """Oracle: KL(vMF || uniform) from 1-D quadrature over the polar angle,
    entirely independent of the Bessel-based implementation."""
    mpmath.mp.dps = 40
    k = mpmath.mpf(kappa)
    dm = mpmath.mpf(d)
    area_d2 = 2 * mpmath.pi ** ((dm - 1) / 2) / mpmath.gamma((dm - 1) / 2)
    area_d1 = 2 * mpmath.pi ** (dm / 2) / mpmath.gamma(dm / 2)

    def w(t):
        return mpmath.e ** (k * t) * (1 - t * t) ** ((dm - 3) / 2)

    norm = area_d2 * mpmath.quad(w, [-1, 1])
    e_t = area_d2 * mpmath.quad(lambda t: t * w(t), [-1, 1]) / norm
    return float(k * e_t - mpmath.log(norm) + mpmath.log(area_d1))


class TestVmfLogNorm:
    @pytest.mark.parametrize("d", [2, 3, 10, 50])
    def test_uniform_limit(self, d):
        expected = math.lgamma(d / 2) - math.log(2) - (d / 2) * math.log(math.pi)
        assert vmf_log_norm(0, d) == pytest.approx(expected, abs=1e-12)

    def test_high_dim_series_oracle(self):
        assert abs(vmf_log_norm(80, 50) - mp_log_norm(80, 50)) < 1e-8

    @pytest.mark.parametrize("kappa", [0.5, 2.0, 10.0, 80.0, 300.0])
    def test_d3_closed_form(self, kappa):
        closed = math.log(kappa / (4 * math.pi * math.sinh(kappa))) \
            if kappa < 300 else \
            math.log(kappa / (2 * math.pi)) - kappa - math.log1p(
                -math.exp(-2 * kappa))
        assert vmf_log_norm(kappa, 3) == pytest.approx(closed, abs=1e-8)

    def test_extreme_args_finite(self):
        for kappa, d in ((1e-12, 50), (1e6, 2), (5.0, 2000), (1e5, 400)):
            assert math.isfinite(vmf_log_norm(kappa, d))

    def test_invalid(self):
        with pytest.raises(ValueError):
            vmf_log_norm(-1, 10)
        with pytest.raises(ValueError):
            vmf_log_norm(1, 1)


class TestVmfKl:
    @pytest.mark.parametrize("d", [2, 10, 50])
    def test_zero_kappa_exact(self, d):
        assert vmf_kl_uniform(0, d) == 0.0

    def test_monotone_in_kappa(self):
        grid = [vmf_kl_uniform(k, 50) for k in range(0, 101)]
        assert all(b >= a for a, b in zip(grid, grid[1:]))

    def test_quadrature_oracle(self):
        assert abs(vmf_kl_uniform(80, 50) - mp_kl_uniform(80, 50)) < 1e-5

    def test_quadrature_oracle_small(self):
        assert abs(vmf_kl_uniform(3, 8) - mp_kl_uniform(3, 8)) < 1e-6


class TestVmfSampler:
    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        for d, kappa in ((2, 1.0), (10, 5.0), (50, 80.0), (16, 0.0)):
            mu = rng.standard_normal(d)
            mu /= np.linalg.norm(mu)
            post = VmfPosterior(mu, kappa)
            for _ in range(50):
                x = vmf_sample(post, rng)
                assert abs(np.linalg.norm(x) - 1.0) < 1e-6

    def test_concentration_limit(self):
        rng = np.random.default_rng(1)
        mu = rng.standard_normal(10)
        mu /= np.linalg.norm(mu)
        x = vmf_sample(VmfPosterior(mu, 1e6), rng)
        assert x @ mu > 0.999

    def test_mean_dot_matches_bessel_ratio(self):
        d, kappa, n = 10, 5.0, 100_000
        rng = np.random.default_rng(2)
        mu = rng.standard_normal(d)
        mu /= np.linalg.norm(mu)
        omega, _ = vmf_noise(n, d, kappa, rng)
        # <x, mu> equals the polar weight by construction of the sampler
        assert abs(omega.mean() - bessel_ratio(kappa, d)) < 0.005

    def test_mean_dot_full_pipeline(self):
        d, kappa, n = 10, 5.0, 20_000
        rng = np.random.default_rng(3)
        mu = rng.standard_normal(d)
        mu /= np.linalg.norm(mu)
        post = VmfPosterior(mu, kappa)
        dots = [vmf_sample(post, rng) @ mu for _ in range(n)]
        se = np.std(dots) / math.sqrt(n)
        assert abs(np.mean(dots) - bessel_ratio(kappa, d)) < 4 * se + 1e-3

    def test_fixed_seed_deterministic(self):
        mu = np.zeros(8)
        mu[3] = 1.0
        post = VmfPosterior(mu, 12.0)
        assert np.array_equal(vmf_sample(post, 99), vmf_sample(post, 99))

    def test_gradient_matches_finite_differences(self):
        d, kappa = 6, 9.0
        rng = np.random.default_rng(4)
        mu0 = rng.standard_normal((2, d))
        mu0 /= np.linalg.norm(mu0, axis=1, keepdims=True)
        noise = vmf_noise(2, d, kappa, np.random.default_rng(5))
        w = rng.standard_normal((2, d))

        def fval(mu_arr):
            mu = Tensor(mu_arr)
            s = vmf_sample_tensor(mu, kappa, noise=noise)
            return float((s.data * w).sum())

        mu = Tensor(mu0.copy(), requires_grad=True)
        out = vmf_sample_tensor(mu, kappa, noise=noise)
        ad.tsum(ad.mul(out, Tensor(w))).backward()
        eps = 1e-6
        for i in range(mu0.size):
            up = mu0.copy()
            up.flat[i] += eps
            dn = mu0.copy()
            dn.flat[i] -= eps
            num = (fval(up) - fval(dn)) / (2 * eps)
            an = mu.grad.flat[i]
            assert abs(an - num) / max(abs(an) + abs(num), 1e-4) < 1e-4

    def test_kappa_zero_uniform_no_grad(self):
        mu = Tensor(np.eye(3)[:2], requires_grad=True)
        s = vmf_sample_tensor(mu, 0.0, rng=np.random.default_rng(0))
        assert np.allclose(np.linalg.norm(s.data, axis=1), 1.0)
        assert not s.requires_grad


class TestGauss:
    def test_sigma_zero_limit_returns_mu(self):
        mu = np.array([1.0, -2.0, 0.5])
        post = GaussPosterior.__new__(GaussPosterior)
        post.mu = mu
        post.sigma = np.zeros(3)
        assert np.array_equal(gauss_sample(post, 0), mu)

    def test_positive_sigma_enforced(self):
        with pytest.raises(ValueError):
            GaussPosterior(np.zeros(3), np.array([1.0, 0.0, 1.0]))

    def test_sample_mean_clt(self):
        rng = np.random.default_rng(6)
        mu = np.array([0.3, -1.2])
        sigma = np.array([0.5, 2.0])
        post = GaussPosterior(mu, sigma)
        n = 100_000
        draws = np.stack([gauss_sample(post, rng) for _ in range(n)])
        bound = 4 * sigma / math.sqrt(n)
        assert np.all(np.abs(draws.mean(axis=0) - mu) < bound)

    def test_fixed_seed_deterministic(self):
        post = GaussPosterior(np.arange(4.0), np.ones(4))
        assert np.array_equal(gauss_sample(post, 5), gauss_sample(post, 5))

    def test_kl_standard_is_zero(self):
        post = GaussPosterior(np.zeros(7), np.ones(7))
        assert gauss_kl_std(post) == 0.0

    def test_kl_closed_form_simple(self):
        post = GaussPosterior(np.array([1.0, 0.0]), np.array([1.0, 1.0]))
        assert gauss_kl_std(post) == pytest.approx(0.5, abs=1e-12)

    def test_kl_monte_carlo_oracle(self):
        rng = np.random.default_rng(7)
        mu = rng.standard_normal(5)
        sigma = np.exp(rng.standard_normal(5) * 0.4)
        post = GaussPosterior(mu, sigma)
        n = 1_000_000
        eps = rng.standard_normal((n, 5))
        x = mu + sigma * eps
        log_q = (-0.5 * ((x - mu) / sigma) ** 2 - np.log(sigma)).sum(axis=1)
        log_p = (-0.5 * x ** 2).sum(axis=1)
        diffs = log_q - log_p
        se = diffs.std() / math.sqrt(n)
        assert abs(gauss_kl_std(post) - diffs.mean()) < 3 * se

    def test_sample_tensor_gradient(self):
        rng = np.random.default_rng(8)
        mu0 = rng.standard_normal((2, 3))
        ls0 = rng.standard_normal((2, 3)) * 0.3
        eps = rng.standard_normal((2, 3))
        w = rng.standard_normal((2, 3))
        mu = Tensor(mu0.copy(), requires_grad=True)
        ls = Tensor(ls0.copy(), requires_grad=True)
        out = gauss_sample_tensor(mu, ls, eps=eps)
        ad.tsum(ad.mul(out, Tensor(w))).backward()
        assert np.allclose(mu.grad, w)
        assert np.allclose(ls.grad, w * eps * np.exp(ls0), rtol=1e-12)

    def test_kl_tensor_matches_scalar(self):
        rng = np.random.default_rng(9)
        mu = rng.standard_normal((3, 4))
        ls = rng.standard_normal((3, 4)) * 0.2
        kl = gauss_kl_std_tensor(Tensor(mu), Tensor(ls))
        for b in range(3):
            ref = gauss_kl_std(GaussPosterior(mu[b], np.exp(ls[b])))
            assert kl.data[b] == pytest.approx(ref, rel=1e-12)


class TestLatentConfig:
    def test_defaults(self):
        cfg = LatentConfig()
        assert cfg.lambda_z == 1e-3 and cfg.lambda_y == 1e-4

    def test_validation(self):
        with pytest.raises(ValueError):
            LatentConfig(d_sem=1)
        with pytest.raises(ValueError):
            LatentConfig(kappa=-1.0)

    def test_vmf_posterior_checks_norm(self):
        with pytest.raises(ValueError):
            VmfPosterior(np.array([1.0, 1.0]), 5.0)

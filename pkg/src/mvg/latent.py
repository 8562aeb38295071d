"""The two latent distributions: a von Mises-Fisher over unit directions
(semantics) and a diagonal Gaussian (syntax).

KL terms use the closed forms; Bessel functions are evaluated in log space
through scipy's exponentially scaled ``ive`` with series/asymptotic
fallbacks so extreme (kappa, d) never produce NaN. Samplers are
reparameterized: the Gaussian via mu + sigma * eps, the vMF via rejection
sampling of the polar weight (parameter-free for fixed kappa) followed by a
Householder reflection that carries the gradient onto the mean direction.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class LatentConfig:
    d_sem: int = 50
    d_syn: int = 50
    kappa: float = 80.0
    lambda_y: float = 1e-4
    lambda_z: float = 1e-3

    def __post_init__(self):
        if self.d_sem < 2 or self.d_syn < 2:
            raise ValueError("latent dimensions must be >= 2")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.lambda_y < 0 or self.lambda_z < 0:
            raise ValueError("KL weights must be >= 0")


@dataclass
class VmfPosterior:
    mu: np.ndarray  # unit mean direction
    kappa: float

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        if abs(np.linalg.norm(self.mu) - 1.0) > 1e-6:
            raise ValueError("vMF mean direction must be unit-norm")


@dataclass
class GaussPosterior:
    mu: np.ndarray
    sigma: np.ndarray  # per-dimension standard deviation

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be strictly positive")


def _log_iv(nu, x):
    """log I_nu(x) for nu >= 0, x > 0, without overflow/underflow."""
    val = special.ive(nu, x)
    if np.isfinite(val) and val > 0:
        return math.log(val) + x
    # small-argument series, leading term (x/2)^nu / Gamma(nu+1)
    t = (x / 2.0) ** 2 / (nu + 1.0)
    if t < 0.5:
        return nu * math.log(x / 2.0) - special.gammaln(nu + 1.0) \
            + math.log1p(t)
    # uniform asymptotic expansion for large order
    z = x / nu
    s = math.sqrt(1.0 + z * z)
    eta = s + math.log(z / (1.0 + s))
    return nu * eta - 0.5 * math.log(2.0 * math.pi * nu) - 0.5 * math.log(s)


def log_uniform_sphere_density(d):
    """log of the inverse surface area of S^{d-1}: log(Gamma(d/2)/(2 pi^{d/2}))."""
    return float(special.gammaln(d / 2.0) - math.log(2.0)
                 - (d / 2.0) * math.log(math.pi))


def vmf_log_norm(kappa, d):
    """log C_d(kappa), the vMF density normalizer on S^{d-1}."""
    if d < 2:
        raise ValueError("d must be >= 2")
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    if kappa == 0:
        return log_uniform_sphere_density(d)
    nu = d / 2.0 - 1.0
    return float((d / 2.0 - 1.0) * math.log(kappa)
                 - (d / 2.0) * math.log(2.0 * math.pi)
                 - _log_iv(nu, kappa))


def bessel_ratio(kappa, d):
    """A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa), the mean resultant
    length of vMF(mu, kappa)."""
    if kappa == 0:
        return 0.0
    return float(math.exp(_log_iv(d / 2.0, kappa)
                          - _log_iv(d / 2.0 - 1.0, kappa)))


def vmf_kl_uniform(kappa, d):
    """KL(vMF(mu, kappa) || uniform on S^{d-1}); independent of mu."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    if kappa == 0:
        return 0.0
    return float(kappa * bessel_ratio(kappa, d)
                 + vmf_log_norm(kappa, d)
                 - log_uniform_sphere_density(d))


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _sample_vmf_weight(d, kappa, rng):
    """Polar weight omega = <sample, mu> via Wood's rejection sampler."""
    b = (-2.0 * kappa + math.sqrt(4.0 * kappa * kappa + (d - 1.0) ** 2)) \
        / (d - 1.0)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + (d - 1.0) * math.log(1.0 - x0 * x0)
    while True:
        z = rng.beta((d - 1.0) / 2.0, (d - 1.0) / 2.0)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform()
        if kappa * w + (d - 1.0) * math.log(1.0 - x0 * w) - c >= math.log(u):
            return w


def vmf_noise(n, d, kappa, rng):
    """(omega, tangent) noise for n draws; independent of the mean."""
    omega = np.array([_sample_vmf_weight(d, kappa, rng) for _ in range(n)])
    v = rng.standard_normal((n, d - 1))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return omega, v


def _householder_apply(mu, zprime):
    """Reflect each row of zprime by the Householder map sending e1 to mu."""
    e1 = np.zeros_like(mu)
    e1[:, 0] = 1.0
    diff = e1 - mu
    norm = np.linalg.norm(diff, axis=1, keepdims=True)
    live = norm > 1e-9
    u = np.where(live, diff / np.maximum(norm, 1e-9), 0.0)
    return zprime - 2.0 * u * (u * zprime).sum(axis=1, keepdims=True)


def vmf_sample(post, seed):
    """Draw one vector from vMF(post.mu, post.kappa); kappa=0 is uniform."""
    rng = _as_rng(seed)
    mu = post.mu
    d = mu.shape[0]
    if post.kappa == 0:
        x = rng.standard_normal(d)
        return x / np.linalg.norm(x)
    omega, v = vmf_noise(1, d, post.kappa, rng)
    zprime = np.concatenate([omega[:, None],
                             np.sqrt(1.0 - omega[:, None] ** 2) * v], axis=1)
    return _householder_apply(mu[None, :], zprime)[0]


def vmf_sample_tensor(mu, kappa, rng=None, noise=None):
    """Batched differentiable vMF draw.

    mu is a Tensor (B, d) of unit rows; the polar weight and tangent
    direction are sampled outside the graph (pass precomputed `noise` from
    vmf_noise, or an rng), so the gradient reaches mu only through the
    Householder reflection. kappa=0 returns a constant uniform draw (zero
    gradient).
    """
    bsz, d = mu.shape
    if kappa == 0:
        x = rng.standard_normal((bsz, d))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        return Tensor(x)
    omega, v = noise if noise is not None else vmf_noise(bsz, d, kappa, rng)
    zprime = np.concatenate([omega[:, None],
                             np.sqrt(1.0 - omega[:, None] ** 2) * v], axis=1)
    e1 = np.zeros((bsz, d))
    e1[:, 0] = 1.0
    diff = ad.sub(Tensor(e1), mu)
    norm = np.linalg.norm(diff.data, axis=1, keepdims=True)
    mask = (norm > 1e-9).astype(np.float64)
    u = ad.mul(ad.l2_normalize(diff, eps=1e-9), Tensor(mask))
    zp = Tensor(zprime)
    proj = ad.tsum(ad.mul(u, zp), axis=1, keepdims=True)
    return ad.sub(zp, ad.mul(ad.mul(u, proj), 2.0))


def gauss_sample(post, seed):
    """mu + sigma * eps with eps ~ N(0, I)."""
    rng = _as_rng(seed)
    eps = rng.standard_normal(post.mu.shape)
    return post.mu + post.sigma * eps


def gauss_sample_tensor(mu, log_sigma, rng=None, eps=None):
    """Batched differentiable Gaussian draw from (mu, log sigma) tensors."""
    if eps is None:
        eps = rng.standard_normal(mu.shape)
    return ad.add(mu, ad.mul(ad.exp(log_sigma), Tensor(eps)))


def gauss_kl_std(post):
    """KL(N(mu, diag sigma^2) || N(0, I)) in closed form."""
    s2 = post.sigma ** 2
    return float(0.5 * np.sum(s2 + post.mu ** 2 - 1.0 - np.log(s2)))


def gauss_kl_std_tensor(mu, log_sigma):
    """Per-row KL to N(0, I): returns a (B,) tensor."""
    s2 = ad.exp(ad.mul(log_sigma, 2.0))
    inner = ad.sub(ad.add(s2, ad.mul(mu, mu)),
                   ad.add(ad.mul(log_sigma, 2.0), 1.0))
    return ad.mul(ad.tsum(inner, axis=1), 0.5)

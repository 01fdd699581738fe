"""
Mesin distribusi Gaussian dan Gaussian terpotong (truncated).

Semua fungsi murni dan bekerja pada nilai immutable, sehingga aman dipanggil
dari worker paralel. Phi dan Phi^-1 diambil dari scipy.special (ndtr/ndtri).
"""
import math
from typing import Tuple, Union

import numpy as np
from scipy import special
from scipy.stats import truncnorm

from src.domain.exceptions import DistributionError
from src.domain.models import GaussianSpec, TruncatedGaussianSpec

# Massa minimum pada [lower, upper] sebelum truncation dianggap degenerate
MIN_TRUNCATED_MASS = 1e-12


def std_normal_cdf(x: float) -> float:
    if not math.isfinite(x):
        raise DistributionError(f"std_normal_cdf memerlukan x finite, didapat {x}")
    return float(special.ndtr(x))


def std_normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DistributionError(f"Quantile tidak terdefinisi untuk p={p}; p harus di (0,1).")
    return float(special.ndtri(p))


def _check_gamma(gamma: float):
    if not 0.0 < gamma < 1.0:
        raise DistributionError(f"gamma harus di (0,1), didapat {gamma}")


def _standardized_bounds(spec: TruncatedGaussianSpec) -> Tuple[float, float]:
    mu, sigma = spec.base.mean, spec.base.stddev
    alpha = (spec.lower - mu) / sigma
    beta = (spec.upper - mu) / sigma
    return alpha, beta


def _mass(alpha: float, beta: float) -> float:
    # Pakai sisi survival bila kedua batas di ekor kanan agar tidak kehilangan presisi
    if alpha > 0:
        return float(special.ndtr(-alpha) - special.ndtr(-beta))
    return float(special.ndtr(beta) - special.ndtr(alpha))


def truncated_mass(spec: TruncatedGaussianSpec) -> float:
    """Massa distribusi dasar pada [lower, upper]."""
    if spec.base.stddev == 0.0:
        return 1.0 if spec.lower <= spec.base.mean <= spec.upper else 0.0
    return _mass(*_standardized_bounds(spec))


def validate_truncation(spec: TruncatedGaussianSpec) -> None:
    mass = truncated_mass(spec)
    if mass < MIN_TRUNCATED_MASS:
        raise DistributionError(
            f"Truncation degenerate: massa {mass:.3e} pada [{spec.lower}, {spec.upper}] "
            f"untuk N({spec.base.mean}, {spec.base.stddev}^2)"
        )


def truncated_cdf(spec: TruncatedGaussianSpec, x: float) -> float:
    validate_truncation(spec)
    if x <= spec.lower:
        return 0.0
    if x >= spec.upper:
        return 1.0
    mu, sigma = spec.base.mean, spec.base.stddev
    if sigma == 0.0:
        return 1.0 if x >= mu else 0.0
    if spec.is_untruncated:
        return std_normal_cdf((x - mu) / sigma)

    alpha, beta = _standardized_bounds(spec)
    xi = (x - mu) / sigma
    if alpha > 0:
        # Bentuk survival: 1 - F(x) = (Q(xi) - Q(beta)) / (Q(alpha) - Q(beta))
        upper_tail = (special.ndtr(-xi) - special.ndtr(-beta)) / _mass(alpha, beta)
        return float(min(1.0, max(0.0, 1.0 - upper_tail)))
    value = (special.ndtr(xi) - special.ndtr(alpha)) / _mass(alpha, beta)
    return float(min(1.0, max(0.0, value)))


def truncated_quantile(spec: TruncatedGaussianSpec, p: float) -> float:
    """
    Invers CDF terpotong: nilai d dengan Phi((d-mu)/sigma) = p*Phi(beta) + (1-p)*Phi(alpha),
    lalu di-clamp ke [lower, upper].
    """
    if not 0.0 < p < 1.0:
        raise DistributionError(f"p harus di (0,1), didapat {p}")
    validate_truncation(spec)
    mu, sigma = spec.base.mean, spec.base.stddev
    if sigma == 0.0:
        return float(min(max(mu, spec.lower), spec.upper))
    if spec.is_untruncated:
        return mu + sigma * std_normal_quantile(p)

    alpha, beta = _standardized_bounds(spec)
    if alpha > 0:
        target_sf = p * special.ndtr(-beta) + (1.0 - p) * special.ndtr(-alpha)
        xi = -special.ndtri(target_sf)
    else:
        target = p * special.ndtr(beta) + (1.0 - p) * special.ndtr(alpha)
        xi = special.ndtri(target)
    d = mu + sigma * float(xi)
    return float(min(max(d, spec.lower), spec.upper))


def truncated_moments(spec: TruncatedGaussianSpec) -> Tuple[float, float]:
    """Mean dan varians eksak Gaussian terpotong."""
    validate_truncation(spec)
    mu, sigma = spec.base.mean, spec.base.stddev
    if sigma == 0.0:
        return float(min(max(mu, spec.lower), spec.upper)), 0.0
    if spec.is_untruncated:
        return mu, sigma * sigma

    alpha, beta = _standardized_bounds(spec)
    mean, var = truncnorm.stats(alpha, beta, loc=mu, scale=sigma, moments="mv")
    mean = float(min(max(float(mean), spec.lower), spec.upper))
    return mean, float(min(max(float(var), 0.0), sigma * sigma))


def tightening_offset(spec: Union[GaussianSpec, TruncatedGaussianSpec], gamma: float) -> float:
    """
    Nilai d terkecil dengan Pr(f_stoch <= d) >= gamma.

    Gaussian: d = mu + sigma * Phi^-1(gamma). Truncated: solusi persamaan CDF
    terpotong = gamma (lihat truncated_quantile), di-clamp ke [a, b].
    """
    _check_gamma(gamma)
    if isinstance(spec, GaussianSpec):
        if spec.stddev == 0.0:
            return spec.mean
        return spec.mean + spec.stddev * std_normal_quantile(gamma)
    return truncated_quantile(spec, gamma)


def truncated_sample(spec: TruncatedGaussianSpec, uniforms: np.ndarray) -> np.ndarray:
    """Sampling invers-CDF dari bilangan uniform di (0,1)."""
    validate_truncation(spec)
    u = np.clip(np.asarray(uniforms, dtype=float), 1e-16, 1.0 - 1e-16)
    mu, sigma = spec.base.mean, spec.base.stddev
    if sigma == 0.0:
        return np.full_like(u, min(max(mu, spec.lower), spec.upper))
    alpha, beta = _standardized_bounds(spec)
    lo, hi = special.ndtr(alpha), special.ndtr(beta)
    samples = mu + sigma * special.ndtri(lo + u * (hi - lo))
    return np.clip(samples, spec.lower, spec.upper)

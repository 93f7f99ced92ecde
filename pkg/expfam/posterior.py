import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import special, stats

from .exceptions import PosteriorStateError
from .families import FamilyKind, FamilyModel

logger = logging.getLogger(__name__)

# Beta(1, 1) for Bernoulli arms, Gamma(1, 1) (shape, rate) for Poisson arms.
# Gaussian arms use the flat improper prior and ignore these hyperparameters.
DEFAULT_PRIOR: Tuple[float, float] = (1.0, 1.0)

MAX_TAIL_TERMS = 500
TAIL_TOLERANCE = 1e-15
_LENTZ_TINY = 1e-300


@dataclass(frozen=True)
class ArmPosterior:
    """Conjugate posterior on the mean of one arm after ``count`` draws summing to ``total``."""
    family: FamilyModel
    count: int
    total: float
    prior: Tuple[float, float] = DEFAULT_PRIOR

    @property
    def is_proper(self) -> bool:
        return self.family.kind is not FamilyKind.GAUSSIAN or self.count >= 1

    def parameters(self) -> Tuple[float, float]:
        """(loc, scale) for Gaussian, (a, b) for Beta, (shape, rate) for Gamma."""
        params = posterior_parameters(self.family, np.array([self.count]), np.array([self.total]), self.prior)
        return float(params[0][0]), float(params[1][0])


def posterior_parameters(family: FamilyModel, counts: np.ndarray, sums: np.ndarray,
                         prior: Tuple[float, float] = DEFAULT_PRIOR) -> Tuple[np.ndarray, np.ndarray]:
    counts = np.asarray(counts, dtype=float)
    sums = np.asarray(sums, dtype=float)
    if family.kind is FamilyKind.GAUSSIAN:
        if np.any(counts < 1):
            raise PosteriorStateError("Gaussian posterior under the flat prior needs at least one observation per arm.")
        return sums / counts, 1.0 / np.sqrt(counts)
    a0, b0 = prior
    if family.kind is FamilyKind.BERNOULLI:
        return a0 + sums, b0 + counts - sums
    return a0 + sums, b0 + counts


def _frozen(family: FamilyModel, counts: np.ndarray, sums: np.ndarray, prior: Tuple[float, float]):
    p1, p2 = posterior_parameters(family, counts, sums, prior)
    if family.kind is FamilyKind.GAUSSIAN:
        return stats.norm(loc=p1, scale=p2)
    if family.kind is FamilyKind.BERNOULLI:
        return stats.beta(p1, p2)
    return stats.gamma(p1, scale=1.0 / p2)


def sample_posteriors(family: FamilyModel, counts: np.ndarray, sums: np.ndarray, rng: np.random.Generator,
                      size: Optional[int] = None, prior: Tuple[float, float] = DEFAULT_PRIOR) -> np.ndarray:
    """One joint draw (shape (K,)) or ``size`` joint draws (shape (size, K)) from the product posterior."""
    p1, p2 = posterior_parameters(family, counts, sums, prior)
    shape = p1.shape if size is None else (size,) + p1.shape
    if family.kind is FamilyKind.GAUSSIAN:
        return rng.normal(p1, p2, shape)
    if family.kind is FamilyKind.BERNOULLI:
        return rng.beta(p1, p2, shape)
    return rng.gamma(p1, 1.0 / p2, shape)


def prob_below(family: FamilyModel, counts: np.ndarray, sums: np.ndarray, gamma: float,
               prior: Tuple[float, float] = DEFAULT_PRIOR) -> np.ndarray:
    """Per-arm posterior probability that the mean is below ``gamma``."""
    return _frozen(family, counts, sums, prior).cdf(gamma)


def _tiny_guard(values: np.ndarray) -> np.ndarray:
    return np.where(np.abs(values) < _LENTZ_TINY, _LENTZ_TINY, values)


def log_beta_cdf_tail(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """ln I_x(a, b) by Lentz's continued fraction, with the prefactor kept in log space.

    Accurate for x < (a + 1) / (a + b + 2), the left tail where ``beta.logcdf`` underflows.
    """
    a, b, x = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, x)))
    c = np.ones_like(x)
    d = 1.0 / _tiny_guard(1.0 - (a + b) * x / (a + 1.0))
    h = d.copy()
    for m in range(1, MAX_TAIL_TERMS + 1):
        m2 = 2.0 * m
        even = m * (b - m) * x / ((a - 1.0 + m2) * (a + m2))
        d = 1.0 / _tiny_guard(1.0 + even * d)
        c = _tiny_guard(1.0 + even / c)
        h *= d * c
        odd = -(a + m) * (a + b + m) * x / ((a + m2) * (a + 1.0 + m2))
        d = 1.0 / _tiny_guard(1.0 + odd * d)
        c = _tiny_guard(1.0 + odd / c)
        step = d * c
        h *= step
        if np.all(np.abs(step - 1.0) < TAIL_TOLERANCE):
            break
    return a * np.log(x) + b * np.log1p(-x) - np.log(a) - special.betaln(a, b) + np.log(h)


def log_gamma_cdf_tail(shape: np.ndarray, x: np.ndarray) -> np.ndarray:
    """ln P(shape, x), the regularized lower incomplete gamma, from its power series in log space."""
    shape, x = np.broadcast_arrays(np.asarray(shape, dtype=float), np.asarray(x, dtype=float))
    term = 1.0 / shape
    total = term.copy()
    for n in range(1, MAX_TAIL_TERMS + 1):
        term = term * x / (shape + n)
        total = total + term
        if np.all(term < total * TAIL_TOLERANCE):
            break
    return -x + shape * np.log(x) - special.gammaln(shape) + np.log(total)


def log_prob_below(family: FamilyModel, counts: np.ndarray, sums: np.ndarray, gamma: float,
                   prior: Tuple[float, float] = DEFAULT_PRIOR) -> np.ndarray:
    """ln of the per-arm posterior mass below ``gamma``; finite even when the mass underflows a double."""
    log_p = np.array(_frozen(family, counts, sums, prior).logcdf(gamma), dtype=float, ndmin=1)
    if family.kind is FamilyKind.GAUSSIAN:
        return log_p
    deep = ~np.isfinite(log_p)
    if np.any(deep):
        p1, p2 = posterior_parameters(family, counts, sums, prior)
        if family.kind is FamilyKind.BERNOULLI:
            log_p[deep] = log_beta_cdf_tail(p1[deep], p2[deep], gamma)
        else:
            log_p[deep] = log_gamma_cdf_tail(p1[deep], gamma * p2[deep])
        logger.debug(f"Posterior mass below {gamma} underflowed for arms {np.flatnonzero(deep).tolist()}; used the log-space tail.")
    return log_p


def posterior_sample(post: ArmPosterior, rng: np.random.Generator) -> float:
    return float(sample_posteriors(post.family, np.array([post.count]), np.array([post.total]), rng, prior=post.prior)[0])


def posterior_prob_below(post: ArmPosterior, gamma: float) -> float:
    """Posterior CDF at ``gamma``: Normal CDF, regularized incomplete beta or regularized lower incomplete gamma."""
    return float(prob_below(post.family, np.array([post.count]), np.array([post.total]), gamma, post.prior)[0])


def posterior_log_prob_below(post: ArmPosterior, gamma: float) -> float:
    return float(log_prob_below(post.family, np.array([post.count]), np.array([post.total]), gamma, post.prior)[0])


def posterior_mean(post: ArmPosterior) -> float:
    p1, p2 = post.parameters()
    if post.family.kind is FamilyKind.GAUSSIAN:
        return p1
    if post.family.kind is FamilyKind.BERNOULLI:
        return p1 / (p1 + p2)
    return p1 / p2

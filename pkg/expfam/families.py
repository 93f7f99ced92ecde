import enum
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.special import rel_entr

from .exceptions import ArgumentError, DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

INVERT_XTOL = 1e-9
INVERT_MAXITER = 200
# Poisson upper bounds have no finite domain edge; the bracket is doubled at most this often.
MAX_BRACKET_DOUBLINGS = 1000


class FamilyKind(str, enum.Enum):
    GAUSSIAN = 'gaussian'
    BERNOULLI = 'bernoulli'
    POISSON = 'poisson'


class Direction(str, enum.Enum):
    """Side of the one-sided divergences d+ (u <= v) and d- (u >= v)."""
    PLUS = 'plus'
    MINUS = 'minus'


class Bound(str, enum.Enum):
    UPPER = 'upper'
    LOWER = 'lower'


@dataclass(frozen=True)
class FamilyModel:
    """One-parameter exponential family, parameterized by its mean.

    Gaussian arms have unit variance. The natural parameterization never
    leaves this module: every divergence is evaluated in closed form.
    """
    kind: FamilyKind

    @classmethod
    def of(cls, kind: Union[str, FamilyKind]) -> 'FamilyModel':
        try:
            return cls(FamilyKind(kind))
        except ValueError as e:
            supported = ", ".join(k.value for k in FamilyKind)
            raise ArgumentError(f"Unknown family '{kind}'. Supported families are: {supported}") from e

    @property
    def mean_domain(self) -> Tuple[float, float]:
        if self.kind is FamilyKind.GAUSSIAN:
            return -math.inf, math.inf
        if self.kind is FamilyKind.BERNOULLI:
            return 0.0, 1.0
        return 0.0, math.inf

    def contains(self, theta: ArrayLike) -> bool:
        """True when every value lies in the open mean domain."""
        lo, hi = self.mean_domain
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(np.isfinite(theta) & (theta > lo) & (theta < hi)))

    def contains_closure(self, mu: ArrayLike) -> bool:
        """Empirical means may sit on a finite edge (all-zero Bernoulli draws, say)."""
        lo, hi = self.mean_domain
        mu = np.asarray(mu, dtype=float)
        return bool(np.all(np.isfinite(mu) & (mu >= lo) & (mu <= hi)))

    def __str__(self):
        return self.kind.value


GAUSSIAN = FamilyModel(FamilyKind.GAUSSIAN)
BERNOULLI = FamilyModel(FamilyKind.BERNOULLI)
POISSON = FamilyModel(FamilyKind.POISSON)


def _as_mean(family: FamilyModel, mu: ArrayLike) -> np.ndarray:
    if not family.contains_closure(mu):
        raise DomainError(f"Mean {mu!r} is outside the closed mean domain {family.mean_domain} of the {family} family.")
    return np.asarray(mu, dtype=float)


def _as_theta(family: FamilyModel, theta: ArrayLike) -> np.ndarray:
    if not family.contains(theta):
        raise DomainError(f"Comparison mean {theta!r} is outside the open mean domain {family.mean_domain} of the {family} family.")
    return np.asarray(theta, dtype=float)


def _unwrap(value: np.ndarray) -> ArrayLike:
    return float(value) if np.ndim(value) == 0 else value


def divergence(family: FamilyModel, mu: ArrayLike, theta: ArrayLike) -> ArrayLike:
    """KL divergence d(mu, theta) between the distributions of means mu and theta (nats).

    Broadcasts over numpy arrays. ``mu`` may sit on a finite domain edge
    (Bernoulli 0/1, Poisson 0) where the divergence is taken by continuity.
    """
    mu = _as_mean(family, mu)
    theta = _as_theta(family, theta)
    if family.kind is FamilyKind.GAUSSIAN:
        d = 0.5 * (mu - theta) ** 2
    elif family.kind is FamilyKind.BERNOULLI:
        d = rel_entr(mu, theta) + rel_entr(1.0 - mu, 1.0 - theta)
    else:
        d = rel_entr(mu, theta) + theta - mu
    return _unwrap(np.maximum(d, 0.0))


def divergence_directed(family: FamilyModel, mu: ArrayLike, theta: ArrayLike, direction: Direction) -> ArrayLike:
    """d+(mu, theta) = d(mu, theta) 1(mu <= theta); d-(mu, theta) = d(mu, theta) 1(mu >= theta)."""
    d = np.asarray(divergence(family, mu, theta))
    mu = np.asarray(mu, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if Direction(direction) is Direction.PLUS:
        mask = mu <= theta
    else:
        mask = mu >= theta
    return _unwrap(np.where(mask, d, 0.0))


def _divergence_scalar(kind: FamilyKind, mu: float, theta: float) -> float:
    # Unchecked scalar kernel for the bisection loops below.
    if kind is FamilyKind.GAUSSIAN:
        return 0.5 * (mu - theta) ** 2
    if kind is FamilyKind.BERNOULLI:
        d = 0.0
        if mu > 0.0:
            d += mu * math.log(mu / theta)
        if mu < 1.0:
            d += (1.0 - mu) * math.log((1.0 - mu) / (1.0 - theta))
        return max(d, 0.0)
    d = theta - mu
    if mu > 0.0:
        d += mu * math.log(mu / theta)
    return max(d, 0.0)


def _bisect(gap: Callable[[float], float], inside: float, outside: float,
            xtol: float = INVERT_XTOL, maxiter: int = INVERT_MAXITER) -> float:
    """Boundary between ``inside`` (gap < 0) and ``outside`` (gap >= 0)."""
    for _ in range(maxiter):
        if abs(outside - inside) <= xtol:
            break
        mid = 0.5 * (inside + outside)
        if gap(mid) < 0.0:
            inside = mid
        else:
            outside = mid
    return 0.5 * (inside + outside)


def invert_divergence(family: FamilyModel, mu_hat: float, n: int, budget: float, direction: Bound) -> float:
    """Confidence-bound endpoint q with n * d(mu_hat, q) = budget.

    ``Bound.UPPER`` searches q >= mu_hat, ``Bound.LOWER`` searches q <= mu_hat.
    When the budget cannot be spent inside the domain (a Bernoulli mean close
    to 1, say) the domain edge is returned.
    """
    if n < 1:
        raise ArgumentError(f"Sample count must be at least 1, got {n}.")
    if budget < 0:
        raise ArgumentError(f"Divergence budget must be nonnegative, got {budget}.")
    mu_hat = float(_as_mean(family, mu_hat))
    direction = Bound(direction)
    if budget == 0:
        return mu_hat

    target = budget / n
    kind = family.kind
    lo_edge, hi_edge = family.mean_domain

    if kind is FamilyKind.GAUSSIAN:
        width = math.sqrt(2.0 * target)
        return mu_hat + width if direction is Bound.UPPER else mu_hat - width

    def gap(q: float) -> float:
        return _divergence_scalar(kind, mu_hat, q) - target

    if direction is Bound.UPPER:
        if mu_hat >= hi_edge:
            return hi_edge
        if kind is FamilyKind.BERNOULLI:
            outside = math.nextafter(1.0, 0.0)
            if gap(outside) < 0.0:
                return hi_edge
        else:
            outside = max(2.0 * mu_hat, mu_hat + 1.0)
            for _ in range(MAX_BRACKET_DOUBLINGS):
                if gap(outside) >= 0.0:
                    break
                outside *= 2.0
            else:
                logger.error(f"Upper-bound bracket for {family} mean {mu_hat} still below budget {budget} at {outside}.")
                raise DomainError(f"Could not bracket the upper bound for mean {mu_hat} and budget {budget}.")
        return _bisect(gap, mu_hat, outside)

    if mu_hat <= lo_edge:
        return lo_edge
    outside = math.nextafter(0.0, 1.0)
    if gap(outside) < 0.0:
        return lo_edge
    return _bisect(gap, mu_hat, outside)


def draw_observation(family: FamilyModel, mean: float, rng: np.random.Generator, size: Optional[int] = None) -> ArrayLike:
    """One observation (or ``size`` of them) from the arm of the given mean."""
    if family.kind is FamilyKind.GAUSSIAN:
        x = rng.normal(mean, 1.0, size)
    elif family.kind is FamilyKind.BERNOULLI:
        x = rng.binomial(1, mean, size)
    else:
        x = rng.poisson(mean, size)
    return float(x) if size is None else np.asarray(x, dtype=float)

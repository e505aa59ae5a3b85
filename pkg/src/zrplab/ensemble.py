"""
Invariant-measure algebra for one-dimensional zero-range processes.

The product invariant measures of a zero-range process with jump rate
``g`` form a one-parameter family indexed by the fugacity ``lam``: the
single-site marginal has weights ``lam**k / (g(1) * ... * g(k))``.  For the
totally asymmetric process ``g(k) = 1{k >= 1}`` the marginal is geometric
and every quantity has a closed form:

    flux            phi(rho)  = rho / (1 + rho)
    speed           phi'(rho) = 1 / (1 + rho)**2
    variance        chi(rho)  = rho * (1 + rho)

Canonical (fixed particle number) expectations on blocks are computed
exactly, as rationals for the indicator rate and by dynamic programming
otherwise.  Nothing in this module samples except
:func:`sample_configuration`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .lattice import Configuration

__all__ = [
    "DomainError",
    "UnattainableDensityError",
    "RateFunction",
    "TAZRP",
    "GrandCanonicalEnsemble",
    "flux",
    "flux_derivative",
    "occupancy_variance",
    "solve_fugacity",
    "marginal_pmf",
    "sample_occupancies",
    "sample_configuration",
    "canonical_mean_g",
    "canonical_mean_g_array",
    "ensemble_equivalence_gap",
    "block_mean_fourth_moment",
]

MOMENT_TAIL = 1e-14
NORMALIZATION_TAIL = 1e-6
# hard cap on the truncated partition sum; beyond it a density is treated as unattainable
MAX_TERMS = 1_000_000


class DomainError(ValueError):
    """Raised for a negative density or an otherwise invalid argument."""


class UnattainableDensityError(ValueError):
    """Raised when no fugacity in the family reaches the requested density."""


@dataclass(frozen=True)
class RateFunction:
    """Jump rate ``k -> g(k)`` out of a site holding ``k`` particles.

    The rate is stored as a table ``g(0), ..., g(kmax)`` and continued
    linearly past ``kmax`` with the last increment, so ``g(k) = k`` and the
    indicator are both represented exactly by short tables.
    """

    values: tuple[float, ...]
    name: str = "tabulated"
    is_indicator: bool = False

    def __post_init__(self):
        v = self.values
        if len(v) < 2:
            raise DomainError("rate table needs at least g(0) and g(1)")
        if v[0] != 0:
            raise DomainError("g(0) must be 0")
        if any(x <= 0 for x in v[1:]):
            raise DomainError("g(k) must be positive for k >= 1")
        if self.tail_increment < 0:
            raise DomainError("the last table increment must be nonnegative")

    @classmethod
    def indicator(cls) -> "RateFunction":
        return cls((0.0, 1.0, 1.0), name="indicator", is_indicator=True)

    @classmethod
    def independent(cls) -> "RateFunction":
        """``g(k) = k``: independent random walkers."""
        return cls((0.0, 1.0, 2.0), name="independent")

    @classmethod
    def from_callable(cls, g, kmax: int, name: str = "tabulated") -> "RateFunction":
        return cls(tuple(float(g(k)) for k in range(kmax + 1)), name=name)

    @property
    def kmax(self) -> int:
        return len(self.values) - 1

    @property
    def tail_increment(self) -> float:
        return self.values[-1] - self.values[-2]

    @property
    def max_increment(self) -> float:
        return float(np.max(np.abs(np.diff(self.values))))

    @property
    def radius(self) -> float:
        """Radius of convergence of the fugacity series."""
        if self.tail_increment > 0:
            return math.inf
        return self.values[-1]

    def __call__(self, k):
        k = np.asarray(k)
        table = np.asarray(self.values)
        kk = np.minimum(k, self.kmax)
        out = table[kk] + self.tail_increment * np.maximum(k - self.kmax, 0)
        return out if out.ndim else float(out)

    def table(self, kmax: int) -> np.ndarray:
        """``g(0..kmax)`` as a float array."""
        return np.asarray(self(np.arange(kmax + 1)), dtype=np.float64)

    def to_dict(self) -> dict:
        return {"name": self.name, "values": list(self.values)}


TAZRP = RateFunction.indicator()


def _check_density(rho: float) -> float:
    rho = float(rho)
    if not rho >= 0 or math.isinf(rho):
        raise DomainError(f"density must be a finite nonnegative number, got {rho}")
    return rho


def _fugacity_weights(lam: float, g: RateFunction, tail_eps: float) -> np.ndarray:
    """Unnormalized marginal weights truncated once the tail mass is below ``tail_eps``.

    Tail control uses the ratio bound ``w(k+1)/w(k) = lam/g(k+1)``, which is
    nonincreasing past the table.
    """
    if lam == 0:
        return np.array([1.0])
    weights = [1.0]
    total = 1.0
    k = 0
    while True:
        ratio = lam / g(k + 1)
        w = weights[-1] * ratio
        weights.append(w)
        total += w
        k += 1
        if k >= g.kmax:
            r = lam / g(k + 1)
            if r < 1:
                # tail of w and of k*w beyond k, relative to the current total
                tail = w * r / (1 - r) * (k + 1 / (1 - r))
                if tail < tail_eps * total:
                    break
        if k > MAX_TERMS:
            raise UnattainableDensityError("partition sum does not converge at this fugacity")
    return np.asarray(weights)


def marginal_pmf(lam: float, g: RateFunction = TAZRP, tail_eps: float = MOMENT_TAIL) -> np.ndarray:
    """Normalized single-site marginal at fugacity ``lam`` (truncated)."""
    w = _fugacity_weights(lam, g, tail_eps)
    return w / w.sum()


def _density_at(lam: float, g: RateFunction, tail_eps: float) -> float:
    p = marginal_pmf(lam, g, tail_eps)
    return float(np.dot(np.arange(p.size), p))


def solve_fugacity(rho: float, g: RateFunction = TAZRP, tail_eps: float = NORMALIZATION_TAIL) -> float:
    """Fugacity whose marginal has mean ``rho``, by monotone bisection."""
    rho = _check_density(rho)
    if not 0 < tail_eps <= 1e-6:
        raise DomainError("tail_eps must lie in (0, 1e-6]")
    if rho == 0:
        return 0.0
    if g.is_indicator:
        return rho / (1 + rho)
    lo, hi = 0.0, g.radius if math.isfinite(g.radius) else 1.0
    if math.isinf(g.radius):
        while _density_at(hi, g, tail_eps) < rho:
            hi *= 2
            if hi > 1e12:
                raise UnattainableDensityError(f"density {rho} is out of reach")
    else:
        # approach the radius geometrically; divergence shows up as MAX_TERMS
        gap = hi
        while True:
            gap /= 2
            trial = g.radius - gap
            try:
                d = _density_at(trial, g, tail_eps)
            except UnattainableDensityError:
                raise UnattainableDensityError(f"density {rho} exceeds the family's reach") from None
            if d >= rho:
                hi = trial
                break
            lo = trial
            if gap < 1e-15 * g.radius:
                raise UnattainableDensityError(f"density {rho} exceeds the family's reach")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        d = _density_at(mid, g, tail_eps)
        if abs(d - rho) <= 1e-12 or hi - lo <= 1e-16 * max(hi, 1.0):
            return mid
        if d < rho:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def flux(rho: float, g: RateFunction = TAZRP) -> float:
    """Expected jump rate per site, ``E[g(eta(0))]``, at density ``rho``."""
    rho = _check_density(rho)
    if g.is_indicator:
        return rho / (1 + rho)
    return solve_fugacity(rho, g, MOMENT_TAIL)


def occupancy_variance(rho: float, g: RateFunction = TAZRP) -> float:
    """``chi(rho) = Var(eta(0))`` under the invariant marginal."""
    rho = _check_density(rho)
    if g.is_indicator:
        return rho * (1 + rho)
    if rho == 0:
        return 0.0
    p = marginal_pmf(solve_fugacity(rho, g, MOMENT_TAIL), g, MOMENT_TAIL)
    k = np.arange(p.size)
    m = np.dot(k, p)
    return float(np.dot((k - m) ** 2, p))


def flux_derivative(rho: float, g: RateFunction = TAZRP) -> float:
    """Characteristic speed ``phi'(rho)``; equals ``lam / chi`` for the fugacity family."""
    rho = _check_density(rho)
    if g.is_indicator:
        return 1.0 / (1 + rho) ** 2
    if rho == 0:
        return 1.0 / g(1)
    return flux(rho, g) / occupancy_variance(rho, g)


@dataclass(frozen=True)
class GrandCanonicalEnsemble:
    """Invariant product measure at density ``rho`` with its derived constants."""

    rho: float
    rate: RateFunction = field(default=TAZRP)

    def __post_init__(self):
        _check_density(self.rho)

    @cached_property
    def lam(self) -> float:
        return solve_fugacity(self.rho, self.rate, MOMENT_TAIL)

    @property
    def phi(self) -> float:
        return flux(self.rho, self.rate)

    @property
    def dphi(self) -> float:
        return flux_derivative(self.rho, self.rate)

    @property
    def chi(self) -> float:
        return occupancy_variance(self.rho, self.rate)

    @property
    def p(self) -> float | None:
        """Geometric parameter ``rho/(1+rho)`` for the indicator rate."""
        return self.rho / (1 + self.rho) if self.rate.is_indicator else None

    @cached_property
    def pmf(self) -> np.ndarray:
        return marginal_pmf(self.lam, self.rate, MOMENT_TAIL)

    def v_g_table(self, kmax: int) -> np.ndarray:
        """``V_g(k) = g(k) - phi - phi'(k - rho)`` for ``k = 0..kmax``."""
        k = np.arange(kmax + 1)
        return self.rate.table(kmax) - self.phi - self.dphi * (k - self.rho)


def sample_occupancies(rho: float, size: int, rng: np.random.Generator, g: RateFunction = TAZRP) -> np.ndarray:
    """i.i.d. draws from the invariant marginal by inverse CDF."""
    rho = _check_density(rho)
    if rho == 0:
        return np.zeros(size, dtype=np.int64)
    u = 1.0 - rng.random(size)  # uniform on (0, 1]
    if g.is_indicator:
        p = rho / (1 + rho)
        return np.floor(np.log(u) / math.log(p)).astype(np.int64)
    pmf = marginal_pmf(solve_fugacity(rho, g, MOMENT_TAIL), g, MOMENT_TAIL)
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, 1.0 - u, side="right").astype(np.int64)


def sample_configuration(rho: float, L: int, rng: np.random.Generator, g: RateFunction = TAZRP) -> Configuration:
    """Equilibrium configuration on a ring of ``L`` sites."""
    if L < 2:
        raise DomainError("ring needs at least two sites")
    return Configuration(sample_occupancies(rho, L, rng, g))


def _composition_weights(g: RateFunction, n: int) -> np.ndarray:
    # w(k) = 1/(g(1)...g(k)); only ratios matter so scale to avoid underflow
    w = np.empty(n + 1)
    w[0] = 1.0
    for k in range(1, n + 1):
        w[k] = w[k - 1] / g(k)
    return w


def _block_partition(w: np.ndarray, K: int) -> tuple[np.ndarray, float]:
    """Coefficients of ``(sum_k w_k x^k)^K`` up to degree ``len(w)-1``.

    Returned normalized to unit maximum along with the log of the scale;
    only ratios of coefficients are used downstream.
    """
    n = w.size - 1
    result = np.zeros(n + 1)
    result[0] = 1.0
    log_scale = 0.0
    base = w.copy()
    while K:
        if K & 1:
            result = np.convolve(result, base)[: n + 1]
            m = result.max()
            result /= m
            log_scale += math.log(m)
        K >>= 1
        if K:
            base = np.convolve(base, base)[: n + 1]
            base /= base.max()
    return result, log_scale


def canonical_mean_g(K: int, n: int, g: RateFunction = TAZRP):
    """``E[g(eta(x)) | sum over the block = n]`` on a block of ``K`` sites.

    Returns a :class:`fractions.Fraction` for the indicator rate and a float
    otherwise.  The general case sums over compositions of ``n``: with
    ``w(k) = 1/g!(k)`` and ``Z_m(n)`` the ``m``-fold convolution of ``w``,
    the conditional mean is ``sum_k g(k) w(k) Z_{K-1}(n-k) / Z_K(n)``.
    """
    if K < 1 or n < 0:
        raise DomainError("need K >= 1 and n >= 0")
    if g.is_indicator:
        if n == 0:
            return Fraction(0)
        if K == 1:
            return Fraction(1)
        return Fraction(n, n + K - 1)
    if n == 0:
        return 0.0
    if K == 1:
        return float(g(n))
    w = _composition_weights(g, n)
    rest, _ = _block_partition(w, K - 1)
    gk = g.table(n)
    num = float(np.dot(gk * w, rest[::-1]))
    den = float(np.dot(w, rest[::-1]))
    return num / den


def canonical_mean_g_array(K: int, n, g: RateFunction = TAZRP) -> np.ndarray:
    """Float :func:`canonical_mean_g` over an array of block sums."""
    n = np.asarray(n, dtype=np.int64)
    if g.is_indicator:
        if K == 1:
            return (n > 0).astype(np.float64)
        return np.where(n > 0, n / np.maximum(n + K - 1, 1), 0.0)
    values, inverse = np.unique(n, return_inverse=True)
    table = np.array([float(canonical_mean_g(K, int(v), g)) for v in values])
    return table[inverse].reshape(n.shape)


def ensemble_equivalence_gap(K: int, n: int, g: RateFunction = TAZRP):
    """``|canonical_mean_g(K, n) - flux(n/K)|``; exact rational for the indicator rate."""
    if K < 2:
        raise DomainError("need K >= 2")
    cm = canonical_mean_g(K, n, g)
    if g.is_indicator:
        rho = Fraction(n, K)
        return abs(cm - rho / (1 + rho))
    return abs(cm - flux(n / K, g))


def _central_moments(rho: float, g: RateFunction) -> tuple[float, float]:
    pmf = marginal_pmf(solve_fugacity(rho, g, MOMENT_TAIL), g, MOMENT_TAIL)
    k = np.arange(pmf.size, dtype=np.float64)
    mean = np.dot(k, pmf)
    d = k - mean
    return float(np.dot(d**2, pmf)), float(np.dot(d**4, pmf))


def block_mean_fourth_moment(K: int, rho: float, g: RateFunction = TAZRP) -> float:
    """Central fourth moment of the block average of ``K`` i.i.d. sites."""
    if K < 1:
        raise DomainError("need K >= 1")
    rho = _check_density(rho)
    if rho == 0:
        return 0.0
    var, mu4 = _central_moments(rho, g)
    return (mu4 + 3 * (K - 1) * var**2) / K**3

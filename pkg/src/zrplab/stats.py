"""
Estimators and decision rules over independent replicas.

Every estimator here reduces to a small set of power sums, so results from
separate workers can be merged by addition (:class:`Moments`,
:class:`CoMoments`) and give exactly what pooling the raw samples would.
Standard errors are asymptotic-normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as sps

__all__ = [
    "InsufficientData",
    "Moments",
    "CoMoments",
    "MeanVar",
    "SampleSet",
    "SlopeFit",
    "GaussianityResult",
    "mean_var",
    "covariance",
    "loglog_slope",
    "gaussianity",
    "mean_of_squares",
    "ratio_se",
    "CalibrationResult",
    "calibrate",
]

GAUSSIANITY_MIN_N = 1000
KS_CRITICAL = 1.95


class InsufficientData(ValueError):
    """Too few samples for the requested estimate."""


def _as_array(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    return x


@dataclass(frozen=True)
class SampleSet:
    values: np.ndarray
    label: str = ""
    replicas: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "values", _as_array(self.values))

    def __len__(self) -> int:
        return self.values.size


# --------------------------------------------------------------- power sums


@dataclass
class Moments:
    """Shifted power sums ``sum (x - c)^k`` for ``k = 0..4``.

    The shift ``c`` only improves conditioning; it must agree between
    merged instances.  Sums over integers or dyadic rationals are exact, so
    merging in any order gives identical totals in that case.
    """

    shift: float = 0.0
    sums: np.ndarray = field(default_factory=lambda: np.zeros(5))

    @classmethod
    def of(cls, samples, shift: float = 0.0) -> "Moments":
        d = _as_array(samples) - shift
        return cls(shift, np.array([d.size, d.sum(), (d**2).sum(), (d**3).sum(), (d**4).sum()]))

    def merge(self, other: "Moments") -> "Moments":
        if other.shift != self.shift:
            raise ValueError("cannot merge moments taken about different shifts")
        return Moments(self.shift, self.sums + other.sums)

    __add__ = merge

    @property
    def n(self) -> int:
        return int(self.sums[0])

    def central(self) -> tuple[float, float, float, float]:
        """Mean and biased central moments ``m2, m3, m4``."""
        n = self.sums[0]
        if n < 1:
            raise InsufficientData("no samples")
        a1, a2, a3, a4 = self.sums[1:] / n
        m2 = a2 - a1**2
        m3 = a3 - 3 * a1 * a2 + 2 * a1**3
        m4 = a4 - 4 * a1 * a3 + 6 * a1**2 * a2 - 3 * a1**4
        return self.shift + a1, max(m2, 0.0), m3, max(m4, 0.0)

    def summary(self) -> "MeanVar":
        n = self.n
        if n < 2:
            raise InsufficientData(f"need at least 2 samples, got {n}")
        mean, m2, _, m4 = self.central()
        var = m2 * n / (n - 1)
        # Var(s^2) = (mu4 - (n-3)/(n-1) sigma^4) / n
        var_of_var = max((m4 - (n - 3) / (n - 1) * m2**2) / n, 0.0)
        return MeanVar(n, float(mean), float(var), math.sqrt(var / n), math.sqrt(var_of_var))


@dataclass(frozen=True)
class MeanVar:
    n: int
    mean: float
    var: float
    se_mean: float
    se_var: float


def mean_var(samples) -> MeanVar:
    """Mean, unbiased variance and the standard error of each.

    The SE of the variance uses the fourth-moment formula
    ``Var(s^2) ~ (mu4 - (n-3)/(n-1) sigma^4) / n``.

    Examples
    --------
    >>> r = mean_var([0.0, 2.0])
    >>> (r.mean, r.var)
    (1.0, 2.0)
    """
    x = _as_array(samples)
    if x.size < 2:
        raise InsufficientData(f"need at least 2 samples, got {x.size}")
    return Moments.of(x, shift=float(x[0])).summary()


def mean_of_squares(samples) -> tuple[float, float]:
    """``E[X^2]`` estimated by the sample mean of ``x**2`` and its SE."""
    r = mean_var(np.square(_as_array(samples)))
    return r.mean, r.se_mean


@dataclass
class CoMoments:
    """Mergeable sums for a covariance with a delta-method SE."""

    sums: np.ndarray = field(default_factory=lambda: np.zeros(9))

    @classmethod
    def of(cls, xs, ys) -> "CoMoments":
        x, y = _as_array(xs), _as_array(ys)
        if x.size != y.size:
            raise ValueError(f"length mismatch: {x.size} vs {y.size}")
        xy = x * y
        return cls(np.array([x.size, x.sum(), y.sum(), xy.sum(), (x * x).sum(), (y * y).sum(),
                             (xy * x).sum(), (xy * y).sum(), (xy * xy).sum()]))

    def merge(self, other: "CoMoments") -> "CoMoments":
        return CoMoments(self.sums + other.sums)

    __add__ = merge

    def summary(self) -> tuple[float, float]:
        n = self.sums[0]
        if n < 2:
            raise InsufficientData("need at least 2 pairs")
        sx, sy, sxy, sxx, syy, sxxy, sxyy, sxxyy = self.sums[1:] / n
        cov = (sxy - sx * sy) * n / (n - 1)
        # influence function of cov: (x - mx)(y - my) - cov; its variance
        mx, my = sx, sy
        e_d2 = (sxxyy - 2 * my * sxxy - 2 * mx * sxyy + my**2 * sxx + mx**2 * syy
                + 4 * mx * my * sxy - 3 * mx**2 * my**2)
        c = sxy - mx * my
        v = max(e_d2 - c**2, 0.0)
        return float(cov), math.sqrt(v / n)


def covariance(xs, ys) -> tuple[float, float]:
    """Unbiased sample covariance and its delta-method standard error."""
    x, y = _as_array(xs), _as_array(ys)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise InsufficientData("need at least 2 pairs")
    # center first for conditioning; covariance is shift invariant
    return CoMoments.of(x - x.mean(), y - y.mean()).summary()


def ratio_se(a: float, se_a: float, b: float, se_b: float, cov_ab: float = 0.0) -> float:
    """Delta-method SE of ``a / b``."""
    r = a / b
    return abs(r) * math.sqrt(max((se_a / a) ** 2 + (se_b / b) ** 2 - 2 * cov_ab / (a * b), 0.0))


# -------------------------------------------------------------- regressions


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    slope_se: float
    residuals: tuple
    r_squared: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "slope_se": self.slope_se,
                "residuals": list(self.residuals), "r_squared": self.r_squared}


def loglog_slope(points: Sequence[tuple[float, float]], y_se: Sequence[float] | None = None) -> SlopeFit:
    """Ordinary least squares of ``log y`` on ``log x``.

    The slope SE comes from the residual variance.  With only a handful of
    points that estimate is itself noisy, so when per-point standard
    errors of ``y`` are given the reported SE is the larger of the residual
    SE and the one propagated from ``y_se`` (``se(log y) = se_y / y``).

    Examples
    --------
    >>> round(loglog_slope([(1, 7.0), (2, 7 * 2**-0.8), (4, 7 * 4**-0.8)]).slope, 12)
    -0.8
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise InsufficientData("a slope fit needs at least 3 points")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("log-log fit needs positive coordinates")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    res = sps.linregress(lx, ly)
    resid = ly - (res.intercept + res.slope * lx)
    se = float(res.stderr)
    if y_se is not None:
        w = np.asarray(y_se, dtype=float) / np.array([p[1] for p in pts])
        sxx = float(np.sum((lx - lx.mean()) ** 2))
        se_prop = math.sqrt(float(np.sum(((lx - lx.mean()) / sxx) ** 2 * w**2)))
        se = max(se, se_prop)
    return SlopeFit(float(res.slope), float(res.intercept), se, tuple(float(r) for r in resid),
                    float(res.rvalue**2))


# --------------------------------------------------------------- normality


@dataclass(frozen=True)
class GaussianityResult:
    n: int
    skewness: float
    excess_kurtosis: float
    ks_distance: float
    passed: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return {"n": self.n, "skewness": self.skewness, "excess_kurtosis": self.excess_kurtosis,
                "ks_distance": self.ks_distance, "passed": self.passed, "reason": self.reason}


def _lattice_cdf_distance(x: np.ndarray, mean: float, sd: float, h: float) -> float:
    """Sup distance between the empirical CDF of lattice data and the continuity-corrected normal.

    A lattice variable with spacing ``h`` has an empirical CDF that jumps at
    every lattice point, so its distance to any continuous CDF is at least
    half a jump.  Comparing ``F_n(v)`` with ``Phi(v + h/2)`` and the left
    limit ``F_n(v-)`` with ``Phi(v - h/2)`` removes that artefact.
    """
    values, counts = np.unique(x, return_counts=True)
    right = np.cumsum(counts) / x.size
    left = right - counts / x.size
    upper = sps.norm.cdf((values + h / 2 - mean) / sd)
    lower = sps.norm.cdf((values - h / 2 - mean) / sd)
    return float(max(np.max(np.abs(right - upper)), np.max(np.abs(left - lower))))


def gaussianity(samples, lattice: float | None = None) -> GaussianityResult:
    """Skewness, excess kurtosis and the sup-distance to the fitted normal CDF.

    Passes iff ``|skew| <= 4 sqrt(6/n)``, ``|exkurt| <= 4 sqrt(24/n)`` and
    the CDF distance is at most ``1.95 / sqrt(n)``.  Constant samples fail
    with reason ``"zero variance"``.  For samples confined to a lattice of
    spacing ``lattice`` (such as a rescaled integer current) the CDF
    distance uses a continuity correction.
    """
    x = _as_array(samples)
    n = x.size
    if n < GAUSSIANITY_MIN_N:
        raise InsufficientData(f"gaussianity needs at least {GAUSSIANITY_MIN_N} samples, got {n}")
    sd = x.std(ddof=1)
    if sd == 0.0:
        return GaussianityResult(n, 0.0, 0.0, 1.0, False, "zero variance")
    skew = float(sps.skew(x))
    kurt = float(sps.kurtosis(x))
    if lattice:
        ks = _lattice_cdf_distance(x, float(x.mean()), float(sd), float(lattice))
    else:
        ks = float(sps.kstest(x, "norm", args=(x.mean(), sd)).statistic)
    reasons = []
    if abs(skew) > 4 * math.sqrt(6 / n):
        reasons.append("skewness")
    if abs(kurt) > 4 * math.sqrt(24 / n):
        reasons.append("kurtosis")
    if ks > KS_CRITICAL / math.sqrt(n):
        reasons.append("cdf distance")
    return GaussianityResult(n, skew, kurt, ks, not reasons, ", ".join(reasons))


def pooled(parts: Iterable[Moments]) -> Moments:
    parts = list(parts)
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out


# ------------------------------------------------------------- calibration


@dataclass(frozen=True)
class CalibrationResult:
    trials: int
    n: int
    mean_pass_rate: float
    var_pass_rate: float
    gaussianity_pass_rate: float
    lattice_gaussianity_pass_rate: float

    @property
    def passed(self) -> bool:
        # 4 SE gates should almost never reject a true null; allow a few misses
        return min(self.mean_pass_rate, self.var_pass_rate, self.gaussianity_pass_rate,
                   self.lattice_gaussianity_pass_rate) >= 0.95

    def to_dict(self) -> dict:
        return {"trials": self.trials, "n": self.n, "mean_pass_rate": self.mean_pass_rate,
                "var_pass_rate": self.var_pass_rate, "gaussianity_pass_rate": self.gaussianity_pass_rate,
                "lattice_gaussianity_pass_rate": self.lattice_gaussianity_pass_rate, "passed": self.passed}


def calibrate(rng: np.random.Generator, trials: int = 200, n: int = GAUSSIANITY_MIN_N) -> CalibrationResult:
    """Pass rates of the decision rules on synthetic data where every null hypothesis holds.

    Normal samples check the mean and variance gates and the Gaussianity
    test; centred binomial sums rescaled to unit variance check the
    lattice-corrected Gaussianity test.
    """
    ok_mean = ok_var = ok_gauss = ok_lattice = 0
    m = 400
    for _ in range(trials):
        x = rng.normal(1.0, 2.0, n)
        r = mean_var(x)
        ok_mean += abs(r.mean - 1.0) <= 4 * r.se_mean
        ok_var += abs(r.var - 4.0) <= 4 * r.se_var
        ok_gauss += gaussianity(x).passed
        k = rng.binomial(m, 0.5, n)
        z = (k - m / 2) / math.sqrt(m / 4)
        ok_lattice += gaussianity(z, lattice=1.0 / math.sqrt(m / 4)).passed
    return CalibrationResult(trials, n, ok_mean / trials, ok_var / trials, ok_gauss / trials, ok_lattice / trials)

"""Tail fitting, model comparison, and slope estimation.

Continuous maximum likelihood conditional on x >= xmin for four candidate
tail families (power law, lognormal, exponential, truncated power law),
lower cut-off selection by Kolmogorov-Smirnov distance, the uncorrected
normal-approximation Vuong closeness test, Gaussian polynomial least
squares with AIC, and log-log slope fits with t-test p-values.

Continuous MLE is used even for integer share volumes: transaction values
(price times volume) are effectively continuous and the closed forms stay
exact under common rescaling of sample and cut-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, special, stats

from .errors import (
    MismatchedSupport,
    NonConvergence,
    NonPositiveValue,
    SingularDesign,
    TooFewPoints,
)

FAMILIES = ("powerlaw", "lognormal", "exponential", "truncated_powerlaw")

_MIN_SAMPLE = 50     # observations needed before scanning for a cut-off
_MIN_TAIL = 10       # observations needed above the cut-off
_LL_TOL = 1e-8       # likelihood tolerance for numerical maximization


@dataclass(frozen=True)
class TailFit:
    """One family fitted above a common cut-off."""

    family: str
    params: tuple
    xmin: float
    n_tail: int
    pointwise_loglik: np.ndarray
    aic: float

    @property
    def loglik(self) -> float:
        return float(self.pointwise_loglik.sum())


@dataclass(frozen=True)
class VuongResult:
    """Normal-approximation closeness test; positive statistic favors A."""

    statistic: float
    p_value_one_sided: float
    nested: bool = False


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit with Gaussian pointwise log-likelihoods."""

    params: tuple
    pointwise_loglik: np.ndarray
    aic: float
    p_value: Optional[float] = None


@dataclass(frozen=True)
class LogLogFit:
    """Power-law scaling fit: values ~ amplitude * taus**slope, H = slope/2."""

    amplitude: float
    hurst: float
    slope: float
    p_value: float
    stderr: float
    n_used: int


def gamma_upper(a: float, x: float) -> float:
    """Upper incomplete gamma for real a (including a <= 0) and x > 0.

    Walks the downward recurrence from a positive first argument, where the
    regularized scipy form applies; a zero step uses the exponential
    integral.
    """
    if x <= 0:
        raise ValueError("x must be positive")
    n = 0
    while a + n <= 0:
        n += 1
    val = special.gammaincc(a + n, x) * special.gamma(a + n)
    for k in range(n, 0, -1):
        s = a + k - 1
        if s == 0.0:
            val = special.exp1(x)
        else:
            val = (val - x ** s * math.exp(-x)) / s
    return float(val)


def _clean_tail(sample, xmin) -> np.ndarray:
    x = np.asarray(sample, dtype=float)
    x = x[np.isfinite(x)]
    if (x <= 0).any():
        raise NonPositiveValue("tail samples must be positive")
    tail = x[x >= xmin]
    if tail.shape[0] < _MIN_TAIL:
        raise TooFewPoints(
            f"{tail.shape[0]} points above xmin={xmin}; need >= {_MIN_TAIL}")
    return np.sort(tail)


def select_xmin(sample) -> float:
    """Cut-off minimizing the KS distance between tail and power-law MLE.

    Scans every unique sample value that leaves at least ten tail points.
    """
    x = np.asarray(sample, dtype=float)
    x = x[np.isfinite(x)]
    if x.shape[0] < _MIN_SAMPLE:
        raise TooFewPoints(f"need >= {_MIN_SAMPLE} observations, got {x.shape[0]}")
    if (x <= 0).any():
        raise NonPositiveValue("samples must be positive")
    x = np.sort(x)
    n = x.shape[0]
    uniq, first_idx = np.unique(x, return_index=True)
    if uniq.shape[0] < 2:
        raise TooFewPoints("degenerate sample: all values equal")
    logx = np.log(x)
    suffix = np.concatenate([np.cumsum(logx[::-1])[::-1], [0.0]])
    best_d = np.inf
    best_xmin = float(uniq[0])
    for u, i0 in zip(uniq, first_idx):
        m = n - i0
        if m < _MIN_TAIL:
            break
        denom = suffix[i0] - m * math.log(u)
        if denom <= 0:
            continue
        alpha = 1.0 + m / denom
        tail = x[i0:]
        cdf = 1.0 - (tail / u) ** (1.0 - alpha)
        hi = np.arange(1, m + 1) / m
        lo = np.arange(0, m) / m
        d = max(np.max(hi - cdf), np.max(cdf - lo))
        if d < best_d:
            best_d = d
            best_xmin = float(u)
    if not np.isfinite(best_d):
        raise TooFewPoints("no candidate cut-off admits a power-law fit")
    return best_xmin


def _powerlaw_alpha(tail: np.ndarray, xmin: float) -> float:
    denom = float(np.log(tail / xmin).sum())
    if denom <= 0:
        raise TooFewPoints("degenerate tail: all values at xmin")
    return 1.0 + tail.shape[0] / denom


def _ll_powerlaw(tail, xmin, alpha):
    return (math.log(alpha - 1.0) - math.log(xmin)
            - alpha * np.log(tail / xmin))


def _ll_exponential(tail, xmin, lam):
    return math.log(lam) - lam * (tail - xmin)


def _ll_lognormal(tail, xmin, mu, sigma):
    if sigma <= 0:
        return None
    norm = float(stats.norm.sf((math.log(xmin) - mu) / sigma))
    if norm <= 0 or not np.isfinite(norm):
        return None
    z = (np.log(tail) - mu) / sigma
    return (-np.log(tail) - 0.5 * z * z
            - math.log(sigma * math.sqrt(2.0 * math.pi)) - math.log(norm))


def _ll_truncated(tail, xmin, alpha, lam):
    g = gamma_upper(1.0 - alpha, lam * xmin)
    if not np.isfinite(g) or g <= 0:
        return None
    return ((1.0 - alpha) * math.log(lam) - alpha * np.log(tail)
            - lam * tail - math.log(g))


def pointwise_loglik(sample, family: str, xmin: float, params: tuple) -> np.ndarray:
    """Per-observation log-likelihood of a family at given parameters."""
    tail = _clean_tail(sample, xmin)
    if family == "powerlaw":
        return np.asarray(_ll_powerlaw(tail, xmin, params[0]), dtype=float)
    if family == "exponential":
        return np.asarray(_ll_exponential(tail, xmin, params[0]), dtype=float)
    if family == "lognormal":
        v = _ll_lognormal(tail, xmin, *params)
        if v is None:
            raise ValueError("parameters outside the support")
        return np.asarray(v, dtype=float)
    if family == "truncated_powerlaw":
        v = _ll_truncated(tail, xmin, *params)
        if v is None:
            raise ValueError("parameters outside the support")
        return np.asarray(v, dtype=float)
    raise ValueError(f"unknown family {family!r}")


def fit_tail(sample, family: str, xmin: float) -> TailFit:
    """Continuous MLE of one family conditional on x >= xmin."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    tail = _clean_tail(sample, xmin)
    m = tail.shape[0]
    if family == "powerlaw":
        alpha = _powerlaw_alpha(tail, xmin)
        ll = _ll_powerlaw(tail, xmin, alpha)
        params = (alpha,)
        k = 1
    elif family == "exponential":
        mean = float(tail.mean())
        if mean <= xmin:
            raise TooFewPoints("degenerate tail: zero spread above xmin")
        lam = 1.0 / (mean - xmin)
        ll = _ll_exponential(tail, xmin, lam)
        params = (lam,)
        k = 1
    elif family == "lognormal":
        if float(tail.max()) == float(tail.min()):
            raise TooFewPoints("degenerate tail: zero spread above xmin")
        logt = np.log(tail)
        start = np.array([float(logt.mean()), math.log(max(float(logt.std()), 1e-3))])

        def neg(theta):
            mu, logsig = theta
            sig = math.exp(logsig)
            v = _ll_lognormal(tail, xmin, mu, sig)
            if v is None:
                return 1e300
            return -float(np.sum(v))

        res = optimize.minimize(neg, start, method="Nelder-Mead",
                                options={"fatol": _LL_TOL, "xatol": 1e-8,
                                         "maxiter": 2000, "maxfev": 4000})
        mu, sigma = float(res.x[0]), math.exp(float(res.x[1]))
        ll = _ll_lognormal(tail, xmin, mu, sigma)
        if not res.success or ll is None:
            raise NonConvergence(f"lognormal MLE failed: {res.message}")
        params = (mu, sigma)
        k = 2
    else:  # truncated power law
        alpha0 = _powerlaw_alpha(tail, xmin)
        lam0 = 1.0 / max(float(tail.mean()), xmin)
        start = np.array([alpha0, math.log(lam0)])

        def neg(theta):
            alpha, loglam = theta
            lam = math.exp(loglam)
            if alpha <= 1.0 or not np.isfinite(lam) or lam <= 0:
                return 1e300
            v = _ll_truncated(tail, xmin, alpha, lam)
            if v is None:
                return 1e300
            return -float(np.sum(v))

        res = optimize.minimize(neg, start, method="Nelder-Mead",
                                options={"fatol": _LL_TOL, "xatol": 1e-8,
                                         "maxiter": 4000, "maxfev": 8000})
        if not res.success or res.fun >= 1e300:
            raise NonConvergence(f"truncated power-law MLE failed: {res.message}")
        alpha, lam = float(res.x[0]), math.exp(float(res.x[1]))
        ll = _ll_truncated(tail, xmin, alpha, lam)
        params = (alpha, lam)
        k = 2
    ll = np.asarray(ll, dtype=float)
    aic = 2.0 * k - 2.0 * float(ll.sum())
    return TailFit(family=family, params=params, xmin=float(xmin),
                   n_tail=m, pointwise_loglik=ll, aic=aic)


def vuong_test(fit_a: TailFit, fit_b: TailFit) -> VuongResult:
    """Uncorrected Vuong closeness test on shared tails.

    Statistic: mean pointwise log-likelihood difference over its standard
    error (i.e. scaled by sqrt(n)); a positive value favors A.  The
    one-sided p-value is the upper normal tail, so a small p means A is
    favored.  Power law vs truncated power law is a nested pair and is
    flagged as such.
    """
    if fit_a.xmin != fit_b.xmin or fit_a.n_tail != fit_b.n_tail:
        raise MismatchedSupport(
            f"fits disagree on support: ({fit_a.xmin}, {fit_a.n_tail}) vs "
            f"({fit_b.xmin}, {fit_b.n_tail})")
    d = fit_a.pointwise_loglik - fit_b.pointwise_loglik
    n = d.shape[0]
    sd = float(d.std(ddof=1)) if n > 1 else 0.0
    mean = float(d.mean())
    if sd == 0.0:
        statistic = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
    else:
        statistic = math.sqrt(n) * mean / sd
    p = float(stats.norm.sf(statistic))
    nested = {fit_a.family, fit_b.family} == {"powerlaw", "truncated_powerlaw"}
    return VuongResult(statistic=statistic, p_value_one_sided=p, nested=nested)


def fit_polynomial(xs, ys, degree: int) -> FitResult:
    """Gaussian least squares of degree 1 or 2 with pointwise log-likelihoods."""
    if degree not in (1, 2):
        raise ValueError("degree must be 1 or 2")
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise ValueError("xs and ys must share a length")
    n = x.shape[0]
    if n < degree + 2:
        raise TooFewPoints(f"need >= {degree + 2} points for degree {degree}")
    design = np.vander(x, degree + 1, increasing=True)
    if np.linalg.matrix_rank(design) < degree + 1:
        raise SingularDesign("collinear abscissae")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    sigma2 = max(float(np.mean(resid ** 2)), np.finfo(float).tiny)
    ll = -0.5 * math.log(2.0 * math.pi * sigma2) - resid ** 2 / (2.0 * sigma2)
    k = degree + 2  # coefficients plus the variance
    aic = 2.0 * k - 2.0 * float(ll.sum())
    return FitResult(params=tuple(float(c) for c in coef),
                     pointwise_loglik=ll, aic=aic)


def fit_loglog_slope(taus, values) -> LogLogFit:
    """OLS of log(values) on log(taus); exponent H is half the slope.

    The point at the largest tau is removed first for robustness; the
    p-value is the two-sided t-test of the slope.
    """
    t = np.asarray(taus, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape[0] != v.shape[0]:
        raise ValueError("taus and values must share a length")
    if t.shape[0] < 5:
        raise TooFewPoints("need >= 5 points")
    if (t <= 0).any() or not np.isfinite(t).all():
        raise NonPositiveValue("taus must be positive")
    keep = np.ones(t.shape[0], dtype=bool)
    keep[int(np.argmax(t))] = False
    t, v = t[keep], v[keep]
    if (v <= 0).any() or not np.isfinite(v).all():
        raise NonPositiveValue("values must be positive")
    lx, ly = np.log(t), np.log(v)
    if np.allclose(ly, ly[0]):
        return LogLogFit(amplitude=float(np.exp(ly[0])), hurst=0.0, slope=0.0,
                         p_value=1.0, stderr=0.0, n_used=t.shape[0])
    res = stats.linregress(lx, ly)
    return LogLogFit(amplitude=float(np.exp(res.intercept)),
                     hurst=float(res.slope) / 2.0, slope=float(res.slope),
                     p_value=float(res.pvalue), stderr=float(res.stderr),
                     n_used=t.shape[0])

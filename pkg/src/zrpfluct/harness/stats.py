"""Replica statistics: standard errors, bootstrap intervals and log-log fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from ..errors import ParameterError

MIN_BOOTSTRAP = 200


def mean_se(x, axis: int = 0):
    """Mean and standard error across independent replicas."""
    x = np.asarray(x, dtype=float)
    n = x.shape[axis]
    if n < 2:
        raise ParameterError("at least two replicas are needed for an error bar")
    return x.mean(axis=axis), x.std(axis=axis, ddof=1) / math.sqrt(n)


def batch_means(x, batches: int = 10):
    """Mean and standard error of a correlated series from contiguous batch means."""
    x = np.asarray(x, dtype=float)
    if batches < 2 or x.size < 2 * batches:
        raise ParameterError("series too short for the requested number of batches")
    m = x.size // batches
    b = x[: m * batches].reshape(batches, m).mean(axis=1)
    return float(x.mean()), float(b.std(ddof=1) / math.sqrt(batches))


def zscore(a, se_a, b, se_b=0.0):
    return (np.asarray(a) - np.asarray(b)) / np.sqrt(np.asarray(se_a) ** 2 + np.asarray(se_b) ** 2)


def bootstrap(samples, stat, resamples: int = 1000, rng=None) -> np.ndarray:
    """Replica-level bootstrap distribution of ``stat(samples[idx])``."""
    if resamples < MIN_BOOTSTRAP:
        raise ParameterError(f"use at least {MIN_BOOTSTRAP} bootstrap resamples")
    samples = np.asarray(samples)
    rng = rng if rng is not None else np.random.default_rng(0)
    R = samples.shape[0]
    if R < 2:
        raise ParameterError("at least two replicas are needed for a bootstrap")
    idx = rng.integers(0, R, size=(resamples, R))
    return np.asarray([stat(samples[i]) for i in idx])


def bootstrap_ci(samples, stat=lambda s: np.mean(s, axis=0), resamples: int = 1000, level: float = 0.95, rng=None):
    dist = bootstrap(samples, stat, resamples, rng)
    a = (1.0 - level) / 2.0
    return np.quantile(dist, a, axis=0), np.quantile(dist, 1.0 - a, axis=0)


@dataclass(frozen=True)
class FitReport:
    slope: float
    intercept: float
    ci: tuple
    r2: float
    stderr: float

    def contains(self, value: float, tol: float) -> bool:
        """``|slope - value| <= tol``."""
        return abs(self.slope - value) <= tol


def _ols(lx, ly):
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef = np.linalg.lstsq(A, ly, rcond=None)[0]
    return float(coef[0]), float(coef[1])


def loglog_fit(x, samples, resamples: int = 1000, level: float = 0.95, rng=None) -> FitReport:
    """Fit ``log mean(samples) = a log x + b``; ``samples`` has shape ``(replicas, len(x))``.

    The interval comes from resampling replicas.
    """
    x = np.asarray(x, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != x.size:
        raise ParameterError("samples must have shape (replicas, len(x))")
    lx = np.log(x)
    y = samples.mean(axis=0)
    if np.any(y <= 0):
        raise ParameterError("log-log fit needs positive means")
    slope, icpt = _ols(lx, np.log(y))
    resid = np.log(y) - (slope * lx + icpt)
    ss = np.sum((np.log(y) - np.log(y).mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid**2) / ss) if ss > 0 else 1.0

    def stat(s):
        m = s.mean(axis=0)
        return _ols(lx, np.log(np.maximum(m, 1e-300)))[0]

    dist = bootstrap(samples, stat, resamples, rng)
    a = (1.0 - level) / 2.0
    ci = (float(np.quantile(dist, a)), float(np.quantile(dist, 1.0 - a)))
    return FitReport(slope, icpt, ci, r2, float(dist.std(ddof=1)))


def deterministic_loglog_fit(x, y) -> FitReport:
    """Log-log fit of exact values (no interval)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    slope, icpt = _ols(lx, ly)
    resid = ly - (slope * lx + icpt)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid**2) / ss) if ss > 0 else 1.0
    return FitReport(slope, icpt, (slope, slope), r2, 0.0)


def chi_square_gof(counts, probs, min_expected: float = 5.0):
    """Pearson goodness of fit after pooling the upper tail until every cell expects ``min_expected``.

    Returns ``(statistic, dof, p_value)``.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = counts.sum()
    size = max(counts.size, probs.size)
    c = np.zeros(size)
    c[: counts.size] = counts
    p = np.zeros(size)
    p[: probs.size] = probs
    p = p / p.sum()
    exp = n * p
    # pool from the top so the last cell carries the tail
    cells_c, cells_e = [], []
    acc_c = acc_e = 0.0
    for i in range(size):
        acc_c += c[i]
        acc_e += exp[i]
        if acc_e >= min_expected:
            cells_c.append(acc_c)
            cells_e.append(acc_e)
            acc_c = acc_e = 0.0
    if acc_e > 0 or acc_c > 0:
        if cells_c:
            cells_c[-1] += acc_c
            cells_e[-1] += acc_e
        else:
            cells_c.append(acc_c)
            cells_e.append(acc_e)
    cells_c, cells_e = np.asarray(cells_c), np.asarray(cells_e)
    if cells_c.size < 2:
        raise ParameterError("too few cells for a chi-square test")
    stat = float(np.sum((cells_c - cells_e) ** 2 / cells_e))
    dof = cells_c.size - 1
    return stat, dof, float(sps.chi2.sf(stat, dof))


def ci_overlap(a: tuple, b: tuple) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]

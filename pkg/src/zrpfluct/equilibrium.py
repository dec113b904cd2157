"""Thermodynamics of the product invariant measures and exact marginal sampling.

The one-site marginal at fugacity ``theta`` is ``theta**k / g(k)! / Z(theta)``
with ``g(k)! = g(1) ... g(k)``.  Everything here is evaluated by truncated
series with an explicit tail bound.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import AccuracyError, DivergenceError, ParameterError
from .model_core import RateFunction

_KMAX_HARD = 1_000_000
_TAIL_REL = 1e-16


def _log_weights(theta: float, g: RateFunction) -> np.ndarray:
    """``log(theta**k / g(k)!)`` for ``k = 0..K`` with ``K`` chosen adaptively.

    The series is cut once the geometric tail bound ``term * r / (1 - r)``,
    with ``r = theta / g(k+1)``, drops below ``1e-16`` of the partial sum.
    Rates are assumed non-decreasing, which holds for every built-in class.
    """
    if theta < 0 or not math.isfinite(theta):
        raise ParameterError(f"fugacity must be finite and >= 0, got {theta}")
    if theta >= g.theta_star * (1.0 - 1e-12):
        raise DivergenceError(f"theta={theta} is not below theta*={g.theta_star} for rate {g.name}")
    if theta == 0.0:
        return np.zeros(1)
    logt = math.log(theta)
    lw = [0.0]
    lmax = 0.0
    k = 0
    chunk = 256
    while True:
        ks = np.arange(k + 1, k + chunk + 1)
        gk = g(ks)
        steps = logt - np.log(gk)
        block = lw[-1] + np.cumsum(steps)
        lw.extend(block.tolist())
        lmax = max(lmax, float(block.max()))
        k += chunk
        r = theta / float(g(k + 1))
        if r < 1.0:
            tail = lw[-1] + math.log(r / (1.0 - r))
            # partial sum >= exp(lmax)
            if tail < lmax + math.log(_TAIL_REL):
                break
        if k > _KMAX_HARD:
            raise DivergenceError(f"series at theta={theta} did not converge by k={_KMAX_HARD}")
        chunk = min(chunk * 2, 1 << 16)
    lw = np.asarray(lw)
    # trim negligible terms past the peak
    keep = np.nonzero(lw >= lmax + math.log(_TAIL_REL) - 40.0)[0]
    return lw[: keep[-1] + 1]


def partition_function(theta: float, g: RateFunction) -> float:
    """``Z(theta) = sum_k theta**k / g(k)!``."""
    return float(math.exp(logsumexp(_log_weights(theta, g))))


@dataclass(frozen=True)
class Marginal:
    """One-site law at fugacity ``theta`` on ``0..K``."""

    theta: float
    pmf: np.ndarray = field(repr=False)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.pmf.size)

    def expect(self, f) -> float:
        vals = np.asarray(f(self.support), dtype=float)
        return float(np.dot(self.pmf, vals))

    @property
    def mean(self) -> float:
        return float(np.dot(self.pmf, self.support))

    def central_moment(self, m: int) -> float:
        k = self.support.astype(float)
        return float(np.dot(self.pmf, (k - self.mean) ** m))


def marginal(theta: float, g: RateFunction) -> Marginal:
    lw = _log_weights(theta, g)
    pmf = np.exp(lw - logsumexp(lw))
    return Marginal(theta, pmf / pmf.sum())


def density_of_fugacity(theta: float, g: RateFunction) -> float:
    return marginal(theta, g).mean


def fugacity_of_density(rho: float, g: RateFunction) -> float:
    """Invert the strictly increasing map ``theta -> rho(theta)``."""
    if not (rho > 0 and math.isfinite(rho)):
        if rho == 0:
            return 0.0
        raise ParameterError(f"density must be positive and finite, got {rho}")
    if math.isfinite(g.theta_star):
        j = 1
        while True:
            hi = g.theta_star * (1.0 - 2.0**-j)
            if density_of_fugacity(hi, g) > rho:
                break
            j += 1
            if j > 30:
                raise ParameterError(f"rho={rho} is beyond the reach of rate {g.name}")
    else:
        hi = max(1.0, rho)
        while density_of_fugacity(hi, g) <= rho:
            hi *= 2.0
    theta = brentq(lambda t: density_of_fugacity(t, g) - rho, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    err = abs(density_of_fugacity(theta, g) - rho)
    if err >= 1e-10:
        raise AccuracyError(f"fugacity inversion missed rho={rho} by {err:.3g}")
    return float(theta)


@dataclass(frozen=True)
class Thermo:
    rho: float
    theta: float
    sigma2: float
    gtilde: float
    gtilde1: float
    gtilde2: float
    kappa3: float  # third cumulant of eta(0)
    gtilde2_series: float
    theta_star: float
    rho_star: float
    rate: RateFunction = field(repr=False)

    def marginal(self) -> Marginal:
        return marginal(self.theta, self.rate)


def thermo(rho: float, g: RateFunction, check: bool = True) -> Thermo:
    """Equilibrium quantities at density ``rho``.

    ``g~ = theta`` and ``g~' = g~ / sigma^2`` are the exponential-family
    identities; with ``check=True`` both are verified against direct series
    evaluation and numerical differentiation.
    """
    theta = fugacity_of_density(rho, g)
    m = marginal(theta, g)
    sigma2 = m.central_moment(2)
    kappa3 = m.central_moment(3)
    gt = theta
    gt1 = gt / sigma2
    gt2_series = (theta / sigma2**2) * (1.0 - kappa3 / sigma2)
    h = 1e-4 * rho

    def gt1_at(r):
        t = fugacity_of_density(r, g)
        return t / marginal(t, g).central_moment(2)

    gt2 = (gt1_at(rho + h) - gt1_at(rho - h)) / (2.0 * h)
    if check:
        direct = m.expect(g)
        if abs(direct - gt) > 1e-10 * max(1.0, gt):
            raise AccuracyError(f"E[g] = {direct!r} differs from theta = {gt!r}")
        th_p, th_m = fugacity_of_density(rho + h, g), fugacity_of_density(rho - h, g)
        fd1 = (th_p - th_m) / (2.0 * h)
        if abs(fd1 - gt1) > 1e-6 * max(1.0, abs(gt1)):
            raise AccuracyError(f"g~' mismatch: series {gt1!r} vs finite difference {fd1!r}")
        if abs(gt2 - gt2_series) > 1e-4 * max(1.0, abs(gt2_series)):
            raise AccuracyError(f"g~'' mismatch: series {gt2_series!r} vs finite difference {gt2!r}")
    return Thermo(rho, theta, sigma2, gt, gt1, gt2, kappa3, gt2_series, g.theta_star, math.inf, g)


def thermo_table_csv(path, rhos, g: RateFunction) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho", "theta", "sigma2", "gtilde", "gtilde1", "gtilde2"])
        for r in rhos:
            t = thermo(float(r), g)
            w.writerow([repr(v) for v in (t.rho, t.theta, t.sigma2, t.gtilde, t.gtilde1, t.gtilde2)])


class MarginalSampler:
    """Inverse-CDF sampler for the one-site marginal (tail mass below 1e-14)."""

    def __init__(self, rho: float, g: RateFunction):
        self.rho = rho
        self.rate = g
        self.theta = fugacity_of_density(rho, g)
        self.pmf = marginal(self.theta, g).pmf
        self.cdf = np.cumsum(self.pmf)
        self.cdf[-1] = 1.0

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(size)
        return np.searchsorted(self.cdf, u, side="right").astype(np.int64)


def sample_occupancy(rho: float, L: int, g: RateFunction, rng: np.random.Generator) -> np.ndarray:
    return MarginalSampler(rho, g).sample(L, rng)


def sample_configuration(rho: float, L: int, g: RateFunction, rng: np.random.Generator):
    """I.i.d. draw from the product measure at density ``rho`` on ``L`` sites."""
    from .kmc import Configuration

    return Configuration(sample_occupancy(rho, L, g, rng), g)

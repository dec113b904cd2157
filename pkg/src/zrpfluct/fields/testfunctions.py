"""Smooth rapidly decaying test functions and the mollifier family."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermeval
from scipy.integrate import quad

from ..errors import ParameterError

BATTERY_VERSION = "1"
_CUT = 1e-14


class TestFunction:
    """Base class: ``H(x)`` with derivatives ``H^(m)`` for ``m <= 4``."""

    __test__ = False  # not a pytest class
    name = "H"
    cutoff = math.inf  # |H^(m)(x)| < 1e-14 for |x - center| > cutoff

    center = 0.0

    def deriv(self, x, m: int = 0):
        raise NotImplementedError

    def __call__(self, x):
        return self.deriv(x, 0)

    def decay_certificate(self, order: int = 4, span: float | None = None, points: int = 4001) -> float:
        """Numerical ``max_m max_x (1 + x^2)^2 |H^(m)(x)|`` on a wide grid."""
        r = span if span is not None else (self.cutoff if math.isfinite(self.cutoff) else 50.0)
        x = np.linspace(self.center - 2 * r, self.center + 2 * r, points)
        return float(max(np.max((1 + x**2) ** 2 * np.abs(self.deriv(x, m))) for m in range(order + 1)))


@dataclass(frozen=True, eq=False)
class ModulatedGaussian(TestFunction):
    """``exp(-(x-c)^2 / (2 w^2)) * cos(k (x-c) + phase)``; ``k = 0`` gives a plain bump."""

    width: float = 1.0
    freq: float = 0.0
    center: float = 0.0
    phase: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise ParameterError("width must be positive")

    @property
    def name(self):
        return f"mg(w={self.width:g},k={self.freq:g},c={self.center:g},ph={self.phase:g})"

    @property
    def cutoff(self):
        return self.width * math.sqrt(2.0 * math.log(1e4 / _CUT))

    def _gauss(self, u, j):
        # d^j/dx^j exp(-u^2/2), u = (x - c)/w
        coef = np.zeros(j + 1)
        coef[j] = 1.0
        return (-1.0) ** j * hermeval(u, coef) * np.exp(-0.5 * u * u) / self.width**j

    def deriv(self, x, m: int = 0):
        x = np.asarray(x, dtype=float)
        u = (x - self.center) / self.width
        if self.freq == 0.0:
            out = self._gauss(u, m) * math.cos(self.phase)
            return self.amplitude * out
        arg = self.freq * (x - self.center) + self.phase
        out = np.zeros_like(u)
        for j in range(m + 1):
            r = m - j
            out = out + math.comb(m, j) * self._gauss(u, j) * self.freq**r * np.cos(arg + r * math.pi / 2)
        return self.amplitude * out


def Gaussian(width: float = 1.0, center: float = 0.0, amplitude: float = 1.0) -> ModulatedGaussian:
    return ModulatedGaussian(width, 0.0, center, 0.0, amplitude)


@dataclass(frozen=True, eq=False)
class CosineMode(TestFunction):
    """``cos(k x + phase)``: not decaying, used for Fourier-mode checks only."""

    freq: float = 1.0
    phase: float = 0.0

    @property
    def name(self):
        return f"cos(k={self.freq:g},ph={self.phase:g})"

    def deriv(self, x, m: int = 0):
        x = np.asarray(x, dtype=float)
        return self.freq**m * np.cos(self.freq * x + self.phase + m * math.pi / 2)


@dataclass(frozen=True, eq=False)
class Polynomial(TestFunction):
    """Polynomial with coefficients in increasing degree (algebra checks only)."""

    coeffs: tuple = (0.0, 0.0, 1.0)

    @property
    def name(self):
        return f"poly{self.coeffs}"

    def deriv(self, x, m: int = 0):
        p = np.polynomial.Polynomial(self.coeffs).deriv(m) if m else np.polynomial.Polynomial(self.coeffs)
        return p(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class Scaled(TestFunction):
    """``a * H`` (used by linearity properties and zero test functions)."""

    base: TestFunction
    factor: float

    @property
    def name(self):
        return f"{self.factor:g}*{self.base.name}"

    @property
    def cutoff(self):
        return self.base.cutoff

    @property
    def center(self):
        return self.base.center

    def deriv(self, x, m: int = 0):
        return self.factor * self.base.deriv(x, m)


def battery(widths=(0.5, 1.0, 2.0), freqs=(0.0, 1.0, 2.0)) -> list[ModulatedGaussian]:
    """Fixed test-function battery (version ``BATTERY_VERSION``)."""
    return [ModulatedGaussian(w, k) for w in widths for k in freqs]


def battery_pair_indices(count: int = 10, size: int = 9) -> list[tuple[int, int]]:
    """Index pairs ``(i, j)``, ``i <= j``, behind :func:`battery_pairs`."""
    pairs = [(i, j) for i in range(size) for j in range(i, size)]
    step = max(1, len(pairs) // count)
    return pairs[::step][:count]


def battery_pairs(count: int = 10, widths=(0.5, 1.0, 2.0), freqs=(0.0, 1.0, 2.0)):
    """Deterministic list of ``count`` distinct (G, H) pairs drawn from the battery."""
    fam = battery(widths, freqs)
    return [(fam[i], fam[j]) for i, j in battery_pair_indices(count, len(fam))]


# ---------------------------------------------------------------------------
# mollifiers


def _psi(t):
    """Smooth step from 0 at t <= 0 to 1 at t >= 1 (all derivatives flat at the ends)."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def bump_cdf(u):
    """CDF of a C-infinity probability density supported on [-1, 1]."""
    return _psi((np.asarray(u, dtype=float) + 1.0) / 2.0)


@dataclass(frozen=True)
class MollifierFamily:
    """``iota_eps = (1/2eps) 1_[-eps, eps]`` and its smoothing ``G_eps``.

    ``G_eps = iota_eps * phi_w`` with ``phi_w`` a smooth bump of half-width
    ``w = width_factor * eps**4``.  The squared error ``||G_eps - iota_eps||^2``
    scales like ``w / eps^2`` (two edges of height ``1/(2 eps)``), so
    ``eps^{-1/2} ||G_eps - iota_eps|| -> 0`` needs ``w = o(eps^3)``.
    """

    eps_grid: tuple = (1.0, 0.5, 0.25, 0.125)
    width_factor: float = 0.125

    def half_width(self, eps: float) -> float:
        return self.width_factor * eps**4

    def iota(self, eps: float):
        def f(z):
            z = np.asarray(z, dtype=float)
            return np.where(np.abs(z) <= eps, 0.5 / eps, 0.0)

        return f

    def G(self, eps: float):
        w = self.half_width(eps)

        def f(z):
            z = np.asarray(z, dtype=float)
            return (bump_cdf((z + eps) / w) - bump_cdf((z - eps) / w)) / (2.0 * eps)

        return f

    def support(self, eps: float) -> float:
        return eps + self.half_width(eps)

    def l2_norm_sq(self, eps: float) -> float:
        G = self.G(eps)
        R = self.support(eps)
        w = self.half_width(eps)
        pts = [-eps - w, -eps + w, eps - w, eps + w]
        return _piecewise_quad(lambda z: G(z) ** 2, -R, R, pts)

    def diff_norm_sq(self, eps: float) -> float:
        """``||G_eps - iota_eps||^2_{L^2}``."""
        G, iota = self.G(eps), self.iota(eps)
        w = self.half_width(eps)
        f = lambda z: (G(z) - iota(z)) ** 2  # noqa: E731
        return _piecewise_quad(f, -eps - w, -eps + w, [-eps]) + _piecewise_quad(f, eps - w, eps + w, [eps])

    def check(self, eps: float) -> dict:
        n2 = self.l2_norm_sq(eps)
        d2 = self.diff_norm_sq(eps)
        return {
            "eps": eps,
            "norm_sq": n2,
            "norm_bound_ok": n2 <= 1.0 / eps,
            "scaled_diff": math.sqrt(d2 / eps),
        }


def _piecewise_quad(f, a, b, points):
    pts = sorted(p for p in points if a < p < b)
    edges = [a, *pts, b]
    return sum(quad(f, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)[0] for lo, hi in zip(edges[:-1], edges[1:]))

"""Model parameters, jump rates and the long-range jump kernel on a torus.

The symmetric part of the jump law is the power law ``s(x) = c_alpha |x|^{-(1+alpha)}``
on the integers, periodized (not truncated) onto a torus of ``L`` sites.  The
asymmetric part is nearest neighbour with weight ``beta / n**gamma``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import zeta

from .errors import InfeasibleAsymmetryError, ParameterError

RATE_IDS = ("constant", "linear", "power", "bounded-increments")


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    beta: float = 0.0
    gamma: float = 0.0
    n: int = 1
    L: int = 256
    rho: float = 0.5
    rate_id: str = "linear"
    rate_exponent: float = 0.5  # only read when rate_id == "power"

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ParameterError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.beta < 0 or self.gamma < 0:
            raise ParameterError("beta and gamma must be non-negative")
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"n must be a positive integer, got {self.n}")
        if int(self.L) != self.L or self.L < 2 or self.L % 2:
            raise ParameterError(f"L must be an even integer >= 2, got {self.L}")
        if not self.rho > 0:
            raise ParameterError(f"rho must be positive, got {self.rho}")
        if self.rate_id not in RATE_IDS:
            raise ParameterError(f"unknown rate_id {self.rate_id!r}; expected one of {RATE_IDS}")
        if self.rate_id == "power" and not 0.0 < self.rate_exponent < 1.0:
            raise ParameterError("power rate exponent must lie in (0, 1)")

    @property
    def scale(self) -> float:
        """Lattice sites per macroscopic unit length, ``n**(1/alpha)``."""
        return self.n ** (1.0 / self.alpha)

    @property
    def asym_weight(self) -> float:
        return self.beta / self.n**self.gamma

    @staticmethod
    def burgers_gamma(alpha: float) -> float:
        """Asymmetry scale ``1 - 3/(2 alpha)`` at which the quadratic term survives."""
        return 1.0 - 3.0 / (2.0 * alpha)

    def rate(self) -> "RateFunction":
        return make_rate(self.rate_id, self.rate_exponent)


@dataclass(frozen=True)
class RateFunction:
    """Jump rate ``g`` with ``g(0) = 0`` and Lipschitz constant ``lip_const``."""

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    lip_const: float
    theta_star: float  # liminf g(k); math.inf when g is unbounded
    linear_coeff: float | None = None  # set when g(k) = c * k

    def __call__(self, k):
        k = np.asarray(k)
        out = np.asarray(self.func(np.maximum(k, 0).astype(float)), dtype=float)
        return np.where(k > 0, out, 0.0)

    def table(self, kmax: int) -> np.ndarray:
        """``g(0..kmax)`` as a float array (used by the simulators)."""
        return self(np.arange(kmax + 1))

    @property
    def is_linear(self) -> bool:
        return self.linear_coeff is not None


def _bounded_increments(k):
    # increments 1 + 1/(k(k+1)) lie in [1, 3/2]: Caputo-type class with k0 = 1, m0 = 1
    with np.errstate(divide="ignore"):
        return np.where(k > 0, k + 1.0 - 1.0 / np.maximum(k, 1.0), 0.0)


def make_rate(rate_id: str, exponent: float = 0.5) -> RateFunction:
    if rate_id == "constant":
        return RateFunction("constant", lambda k: (k > 0).astype(float), 1.0, 1.0)
    if rate_id == "linear":
        return RateFunction("linear", lambda k: k, 1.0, math.inf, linear_coeff=1.0)
    if rate_id == "power":
        if not 0.0 < exponent < 1.0:
            raise ParameterError("power rate exponent must lie in (0, 1)")
        return RateFunction(f"power({exponent:g})", lambda k: k**exponent, 1.0, math.inf)
    if rate_id == "bounded-increments":
        return RateFunction("bounded-increments", _bounded_increments, 1.5, math.inf)
    raise ParameterError(f"unknown rate_id {rate_id!r}")


# --------------------------------------------------------------------------
# normalization


def _zeta_partial_sum(s: float, cutoff: int = 2000) -> tuple[float, float]:
    """Riemann zeta at ``s > 1`` by a partial sum plus Euler-Maclaurin tail.

    Returns ``(value, error_bound)``.  The tail is the integral from the cutoff
    plus the first three Bernoulli corrections; the bound is the size of the
    next correction.
    """
    X = float(cutoff)
    head = math.fsum(k**-s for k in range(1, cutoff))
    tail = (
        X ** (1.0 - s) / (s - 1.0)
        + 0.5 * X**-s
        + s * X ** (-s - 1.0) / 12.0
        - s * (s + 1) * (s + 2) * X ** (-s - 3.0) / 720.0
        + s * (s + 1) * (s + 2) * (s + 3) * (s + 4) * X ** (-s - 5.0) / 30240.0
    )
    bound = s * (s + 1) * (s + 2) * (s + 3) * (s + 4) * (s + 5) * (s + 6) * X ** (-s - 7.0) / 1209600.0
    return head + tail, bound


def normalize_kernel(alpha: float) -> float:
    """Constant ``c_alpha`` with ``sum_{x != 0} c_alpha |x|^{-(1+alpha)} = 1``."""
    if not 0.0 < alpha < 2.0:
        raise ParameterError(f"alpha must lie in (0, 2), got {alpha}")
    z, _ = _zeta_partial_sum(1.0 + alpha)
    return 1.0 / (2.0 * z)


def s_full(y, alpha: float, c_alpha: float | None = None):
    """Unperiodized symmetric law; also valid at real arguments."""
    c = normalize_kernel(alpha) if c_alpha is None else c_alpha
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(y != 0, c * np.abs(y) ** (-1.0 - alpha), 0.0)


def periodize(alpha: float, L: int, c_alpha: float) -> np.ndarray:
    """``s_per[r] = sum_m s(r + m L)`` indexed by residue ``r = 0..L-1``."""
    r = np.arange(1, L, dtype=float)
    q = r / L
    out = np.zeros(L)
    out[1:] = c_alpha * L ** (-1.0 - alpha) * (zeta(1.0 + alpha, q) + zeta(1.0 + alpha, 1.0 - q))
    return out


# --------------------------------------------------------------------------
# alias table


def build_alias(prob: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose's alias table.  Returns ``(accept, alias)`` for O(1) sampling."""
    p = np.asarray(prob, dtype=float)
    m = p.size
    scaled = p * m / p.sum()
    accept = np.ones(m)
    alias = np.arange(m, dtype=np.int64)
    small = [i for i in range(m) if scaled[i] < 1.0]
    large = [i for i in range(m) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        l = large.pop()
        accept[s] = scaled[s]
        alias[s] = l
        scaled[l] = (scaled[l] + scaled[s]) - 1.0
        if scaled[l] < 1.0:
            small.append(l)
        else:
            large.append(l)
    for i in small + large:
        accept[i] = 1.0
    return accept, alias


def alias_law(accept: np.ndarray, alias: np.ndarray) -> np.ndarray:
    """Exact law encoded by an alias table."""
    m = accept.size
    law = accept / m
    np.add.at(law, alias, (1.0 - accept) / m)
    return law


# --------------------------------------------------------------------------
# kernel


@dataclass(frozen=True)
class JumpKernel:
    """Jump law on the torus, indexed by residue ``r = 0..L-1`` (``r = 0`` unused)."""

    alpha: float
    L: int
    c_alpha: float
    s_per: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)
    asym_weight: float
    p: np.ndarray = field(repr=False)
    accept: np.ndarray = field(repr=False)
    alias: np.ndarray = field(repr=False)
    n: int = 1

    @property
    def displacements(self) -> np.ndarray:
        """Signed representatives ``-L/2+1 .. L/2`` of the residues ``0..L-1``."""
        r = np.arange(self.L)
        return np.where(r > self.L // 2, r - self.L, r)

    def signed(self, r):
        r = np.asarray(r)
        return np.where(r > self.L // 2, r - self.L, r)

    def s_full(self, y):
        return s_full(y, self.alpha, self.c_alpha)

    def to_csv(self, path) -> None:
        d = self.displacements
        order = np.argsort(d)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["displacement", "probability", "symmetric", "antisymmetric"])
            for i in order:
                if d[i] == 0:
                    continue
                w.writerow([int(d[i]), repr(float(self.p[i])), repr(float(self.s_per[i])), repr(float(self.a[i]))])


def build_kernel(params: ModelParams) -> JumpKernel:
    alpha, L = params.alpha, params.L
    c = normalize_kernel(alpha)
    w = params.asym_weight
    # feasibility is a statement about the law on Z
    if w > 0 and not (0.0 < c - w and c + w < 1.0):
        raise InfeasibleAsymmetryError(
            f"p(+-1) = {c:.6g} +- {w:.6g} leaves (0, 1); increase n or reduce beta"
        )
    s_per = periodize(alpha, L, c)
    s_per /= s_per.sum()  # removes ~1e-16 drift from the Hurwitz evaluation
    a = np.zeros(L)
    a[1] += 1.0
    a[L - 1] -= 1.0
    p = s_per + w * a
    accept, alias = build_alias(p[1:])
    # alias indices refer to residues 1..L-1
    return JumpKernel(alpha, L, c, s_per, a, w, p, accept, alias + 1, int(params.n))


def sample_displacement(kernel: JumpKernel, rng: np.random.Generator) -> int:
    """One signed displacement drawn from the periodized jump law."""
    m = kernel.accept.size
    i = int(rng.random() * m)
    r = i + 1 if rng.random() < kernel.accept[i] else int(kernel.alias[i])
    return int(kernel.signed(r))


def sample_displacements(kernel: JumpKernel, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorized version of :func:`sample_displacement` (residue-free output)."""
    m = kernel.accept.size
    i = np.minimum((rng.random(size) * m).astype(np.int64), m - 1)
    keep = rng.random(size) < kernel.accept[i]
    r = np.where(keep, i + 1, kernel.alias[i])
    return kernel.signed(r)

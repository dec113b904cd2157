"""Spectral Galerkin solver for the fractional Ornstein-Uhlenbeck limit equations.

Fields live on a macroscopic torus of length ``Lam``.  Modes are stored for
``j = 0..J`` (``k_j = 2 pi j / Lam``) with the convention
``Y_hat_j = int_0^Lam Y(x) exp(-i k_j x) dx``, so spatial white noise of
strength ``sigma^2`` has ``E|Y_hat_j|^2 = sigma^2 Lam`` for ``j >= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InstabilityError, ParameterError
from .fields.operators import fourier_symbol


def symbol(alpha: float, k, c_alpha: float | None = None):
    """``lambda_k = -c_alpha C(alpha) |k|^alpha``."""
    return fourier_symbol(alpha, k, c_alpha)


@dataclass(frozen=True, eq=False)
class SpectralState:
    alpha: float
    Lam: float
    Yhat: np.ndarray = field(repr=False)
    gtilde: float
    gtilde1: float
    gtilde2: float
    sigma2: float
    time: float = 0.0

    @property
    def J(self) -> int:
        return self.Yhat.size - 1

    @property
    def k(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(self.J + 1) / self.Lam

    @property
    def lam(self) -> np.ndarray:
        return symbol(self.alpha, self.k)

    def field(self, points: int | None = None):
        """``(x, Y(x))`` on a uniform grid of ``points >= 2J + 1`` nodes."""
        M = points if points is not None else max(4 * self.J, 64)
        if M < 2 * self.J + 1:
            raise ParameterError("grid too coarse for the mode cutoff")
        full = np.zeros(M // 2 + 1, dtype=complex)
        full[: self.J + 1] = self.Yhat
        y = np.fft.irfft(full, M) * M / self.Lam
        return np.arange(M) * self.Lam / M, y

    def pair(self, H, points: int | None = None) -> float:
        """``Y(H) = (1/Lam) sum_j Y_hat_j conj(H_hat_j)`` with ``H`` sampled on the torus."""
        Hhat = test_coefficients(H, self.Lam, self.J, points)
        w = np.full(self.J + 1, 2.0)
        w[0] = 1.0
        return float(np.sum(w * (self.Yhat * np.conj(Hhat)).real) / self.Lam)


def test_coefficients(H, Lam: float, J: int, points: int | None = None) -> np.ndarray:
    """``H_hat_j = int H(x) exp(-i k_j x) dx`` for ``H`` periodized on ``[-Lam/2, Lam/2)``."""
    M = points if points is not None else max(16 * J, 1024)
    x = np.arange(M) * Lam / M
    xs = np.mod(x + Lam / 2, Lam) - Lam / 2
    return np.fft.rfft(np.asarray(H(xs), dtype=float))[: J + 1] * (Lam / M)


@dataclass(frozen=True)
class NoiseSpec:
    """Per-mode noise intensities ``D_j`` (``E|dB_j|^2 = D_j dt``).

    ``microscopic``: ``D_j = 2 g~ Lam |lambda_j|``, whose stationary level is
    white noise of strength ``sigma^2``.  ``literal``: an extra ``sigma^2``.
    """

    D: np.ndarray
    convention: str = "microscopic"

    @classmethod
    def for_state(cls, state: SpectralState, convention: str = "microscopic") -> "NoiseSpec":
        base = 2.0 * state.gtilde * state.Lam * np.abs(state.lam)
        if convention == "literal":
            base = base * state.sigma2
        elif convention != "microscopic":
            raise ParameterError(f"unknown noise convention {convention!r}")
        base[0] = 0.0
        return cls(base, convention)

    def stationary_variance(self, state: SpectralState) -> np.ndarray:
        """``D_j / (-2 g~' lambda_j)`` (``0`` for the conserved zero mode)."""
        lam = state.lam
        out = np.zeros_like(self.D)
        nz = lam < 0
        out[nz] = self.D[nz] / (-2.0 * state.gtilde1 * lam[nz])
        return out


def initial_state(alpha, Lam, J, thermo, rng=None, stationary: bool = True, convention="microscopic") -> SpectralState:
    """Zero field, or a draw from the stationary Gaussian law (zero mode fixed at 0)."""
    st = SpectralState(alpha, float(Lam), np.zeros(J + 1, dtype=complex), thermo.gtilde, thermo.gtilde1,
                       thermo.gtilde2, thermo.sigma2)
    if not stationary:
        return st
    rng = rng if rng is not None else np.random.default_rng()
    var = NoiseSpec.for_state(st, convention).stationary_variance(st)
    Y = np.sqrt(var / 2.0) * (rng.standard_normal(J + 1) + 1j * rng.standard_normal(J + 1))
    Y[0] = 0.0
    return replace(st, Yhat=Y)


def _ou_factors(state: SpectralState, noise: NoiseSpec, dt: float):
    a = state.gtilde1 * state.lam * dt
    decay = np.exp(a)
    # D (1 - e^{2 a}) / (-2 g~' lambda) = D dt (1 - e^{2a}) / (-2a), with the a -> 0 limit D dt
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(a < 0, -np.expm1(2.0 * a) / (-2.0 * a), 1.0)
    return decay, np.sqrt(noise.D * dt * frac)


def _complex_normal(rng, size):
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2.0)


def evolve(state: SpectralState, noise: NoiseSpec, dt: float, rng) -> SpectralState:
    """Exact-in-law OU update of every mode over ``dt``."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    decay, amp = _ou_factors(state, noise, dt)
    Y = decay * state.Yhat + amp * _complex_normal(rng, state.J + 1)
    Y[0] = state.Yhat[0]
    return replace(state, Yhat=Y, time=state.time + dt)


def drift_speed(state: SpectralState, beta: float) -> float:
    return beta * state.gtilde1


def evolve_drift(state: SpectralState, noise: NoiseSpec, beta: float, dt: float, rng) -> SpectralState:
    """OU update plus the transport term ``beta g~' grad Y``.

    Transport is the phase ``exp(i k c t)``.  The noise is drawn in the
    co-moving frame (white noise is translation invariant in law), so the
    drifting path is exactly the driftless path with every mode rotated by
    ``exp(i k c t)``.
    """
    c = drift_speed(state, beta)
    k = state.k
    back = replace(state, Yhat=state.Yhat * np.exp(-1j * k * c * state.time))
    nxt = evolve(back, noise, dt, rng)
    return replace(nxt, Yhat=nxt.Yhat * np.exp(1j * k * c * nxt.time))


def _nonlinear(Yhat: np.ndarray, Lam: float, coef: float) -> np.ndarray:
    """``coef * grad(Y^2)`` in Fourier space, dealiased by the 3/2 rule."""
    J = Yhat.size - 1
    M = 3 * (J + 1)
    pad = np.zeros(M // 2 + 1, dtype=complex)
    pad[: J + 1] = Yhat
    y = np.fft.irfft(pad, M) * M / Lam
    sq = np.fft.rfft(y * y)[: J + 1] * (Lam / M)
    k = 2.0 * math.pi * np.arange(J + 1) / Lam
    return coef * 1j * k * sq


def evolve_burgers(state: SpectralState, noise: NoiseSpec, beta: float, dt: float, rng, blowup: float = 1e6) -> SpectralState:
    """Lie splitting: exact OU step, then a Heun step for ``beta g~'' grad(Y^2)``.

    A Galerkin-truncated surrogate with ``J`` modes; no solution theory is implied.
    """
    lin = evolve(state, noise, dt, rng)
    coef = beta * state.gtilde2
    if coef == 0.0:
        return lin
    Y = lin.Yhat
    f0 = _nonlinear(Y, state.Lam, coef)
    f1 = _nonlinear(Y + dt * f0, state.Lam, coef)
    Y = Y + 0.5 * dt * (f0 + f1)
    scale = blowup * math.sqrt(max(state.sigma2, 1e-300) * state.Lam)
    if not np.all(np.isfinite(Y)) or np.max(np.abs(Y)) > scale:
        raise InstabilityError(f"mode amplitude exceeded {scale:.3g} at t={lin.time:.6g}")
    return replace(lin, Yhat=Y)


def simulate(state: SpectralState, noise: NoiseSpec, dt: float, steps: int, rng, record_every: int = 1,
             beta: float = 0.0, variant: str = "linear"):
    """Run ``steps`` updates; return ``(times, modes, final_state)`` recorded every ``record_every`` steps.

    Same arithmetic as repeated :func:`evolve` / :func:`evolve_drift` /
    :func:`evolve_burgers` calls, with the per-mode factors computed once.
    """
    if variant not in ("linear", "drift", "burgers"):
        raise ParameterError(f"unknown variant {variant!r}")
    if not dt > 0:
        raise ParameterError("dt must be positive")
    decay, amp = _ou_factors(state, noise, dt)
    k = state.k
    c = drift_speed(state, beta) if variant == "drift" else 0.0
    coef = beta * state.gtilde2 if variant == "burgers" else 0.0
    scale = 1e6 * math.sqrt(max(state.sigma2, 1e-300) * state.Lam)
    Y = state.Yhat.copy()
    t = state.time
    times, modes = [t], [Y.copy()]
    J1 = state.J + 1
    for i in range(1, steps + 1):
        if c:
            Y = Y * np.exp(-1j * k * c * t)
        y0 = Y[0]
        Y = decay * Y + amp * _complex_normal(rng, J1)
        Y[0] = y0
        t = t + dt
        if c:
            Y = Y * np.exp(1j * k * c * t)
        if coef:
            f0 = _nonlinear(Y, state.Lam, coef)
            f1 = _nonlinear(Y + dt * f0, state.Lam, coef)
            Y = Y + 0.5 * dt * (f0 + f1)
            if not np.all(np.isfinite(Y)) or np.max(np.abs(Y)) > scale:
                raise InstabilityError(f"mode amplitude exceeded {scale:.3g} at t={t:.6g}")
        if i % record_every == 0:
            times.append(t)
            modes.append(Y.copy())
    return np.asarray(times), np.asarray(modes), replace(state, Yhat=Y, time=t)


def ou_autocorrelation_rate(state: SpectralState, j: int) -> float:
    """Decay rate ``-g~' lambda_j`` of the mode-``j`` autocorrelation."""
    return float(-state.gtilde1 * state.lam[j])


def macroscopic_length(L: int, n: int, alpha: float) -> float:
    """Torus length seen by the scaled field of an ``L``-site lattice."""
    return L / float(n) ** (1.0 / alpha)


"""Fluctuation fields, martingale decompositions and the epsilon-energy functional.

All lattice sums live on the torus ``{0, ..., L-1}``; a test function is
sampled at the wrapped positions ``wrap(x - shift) / N`` with
``wrap(d)`` in ``[-L/2, L/2)`` and ``N = n**(1/alpha)``.

Normalizations (macroscopic time, ``c_Y = n^{-1/(2 alpha)}``):

* field            ``Y(H) = c_Y sum_x H(x) (eta(x) - rho)``
* symmetric drift  ``n c_Y sum_x g(eta(x)) (s * f - f)(x)``
* asymmetric drift ``c_B sum_x g(eta(x)) nabla f(x)``, ``c_B = 2 n beta / n^{gamma + 3/(2 alpha)}``
* bracket rate     ``n^{1 - 1/alpha} sum_x g(eta(x)) sum_y p(y) (f(x+y) - f(x))^2``
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import AliasingWarning, ParameterError, QuadratureWarning, ResolutionError
from ..equilibrium import Thermo
from ..model_core import JumpKernel, ModelParams
from .testfunctions import MollifierFamily

# ---------------------------------------------------------------------------
# frames


@dataclass(frozen=True)
class FieldFrame:
    """Observation frame.  ``velocity`` is in lattice sites per unit macroscopic time.

    ``variant='continuum'`` shifts test functions by ``v t``; ``'lattice'`` by
    ``floor(v t)`` lattice sites.
    """

    mode: str = "fixed"
    velocity: float = 0.0
    variant: str = "continuum"

    def __post_init__(self):
        if self.mode not in ("fixed", "moving"):
            raise ParameterError(f"unknown frame mode {self.mode!r}")
        if self.variant not in ("continuum", "lattice"):
            raise ParameterError(f"unknown frame variant {self.variant!r}")
        if self.mode == "fixed" and self.velocity != 0.0:
            raise ParameterError("a fixed frame has zero velocity")

    @classmethod
    def fixed(cls) -> "FieldFrame":
        return cls("fixed", 0.0)

    @classmethod
    def moving(cls, velocity: float, variant: str = "continuum") -> "FieldFrame":
        return cls("moving", float(velocity), variant)

    def shift(self, t: float) -> float:
        s = self.velocity * t
        return float(math.floor(s)) if self.variant == "lattice" else s

    def lattice_shift(self, t: float) -> float:
        return float(math.floor(self.velocity * t))


def characteristic_velocity(params: ModelParams, thermo: Thermo) -> float:
    """``v = 2 beta g~'(rho) n^{1-gamma}`` lattice sites per unit macroscopic time."""
    return 2.0 * params.beta * thermo.gtilde1 * params.n ** (1.0 - params.gamma)


def moving_frame(params: ModelParams, thermo: Thermo, velocity: float | None = None) -> FieldFrame:
    v = characteristic_velocity(params, thermo) if velocity is None else velocity
    return FieldFrame.moving(v)


# ---------------------------------------------------------------------------
# lattice geometry


class Lattice:
    """Scale factors and Fourier tables shared by the estimators."""

    def __init__(self, params: ModelParams, kernel: JumpKernel | None = None):
        from ..model_core import build_kernel

        self.params = params
        self.kernel = build_kernel(params) if kernel is None else kernel
        if self.kernel.L != params.L:
            raise ParameterError("kernel and parameters disagree on L")
        self.L = params.L
        self.n = params.n
        self.alpha = params.alpha
        self.N = params.scale
        self.c_Y = params.n ** (-0.5 / params.alpha)
        self.pref_sym = params.n * self.c_Y
        self.c_B = 2.0 * params.n * params.beta / params.n ** (params.gamma + 1.5 / params.alpha)
        self.pref_qv = params.n ** (1.0 - 1.0 / params.alpha)
        self.x = np.arange(self.L)
        self._s_hat = np.fft.rfft(self.kernel.s_per)
        self._p_hat_conj = np.conj(np.fft.rfft(self.kernel.p))

    def wrap(self, d):
        L = self.L
        return np.mod(np.asarray(d, dtype=float) + L / 2, L) - L / 2

    def sample(self, H, shift: float = 0.0, m: int = 0) -> np.ndarray:
        """``H^(m)(wrap(x - shift) / N)`` for every site."""
        return np.asarray(H.deriv(self.wrap(self.x - shift) / self.N, m), dtype=float)

    def check_aliasing(self, H):
        R = getattr(H, "cutoff", math.inf)
        if not math.isfinite(R) or (abs(getattr(H, "center", 0.0)) + R) * self.N > self.L / 2:
            warnings.warn(
                f"test function {getattr(H, 'name', H)} is not resolved inside the torus (L={self.L}, N={self.N:.4g})",
                AliasingWarning,
                stacklevel=3,
            )

    def sym_generator(self, f: np.ndarray) -> np.ndarray:
        """``(s * f - f)(x) = sum_y s(y) (f(x+y) - f(x))`` on the torus."""
        return np.fft.irfft(np.fft.rfft(f) * self._s_hat, self.L) - f

    def correlate_p(self, f: np.ndarray) -> np.ndarray:
        """``sum_y p(y) f(x+y)``."""
        return np.fft.irfft(np.fft.rfft(f) * self._p_hat_conj, self.L)

    def grad(self, f: np.ndarray) -> np.ndarray:
        """``N/2 (f(x+1) - f(x-1))``."""
        return 0.5 * self.N * (np.roll(f, -1) - np.roll(f, 1))

    def carre(self, f: np.ndarray) -> np.ndarray:
        """``sum_y p(y) (f(x+y) - f(x))^2``."""
        return self.correlate_p(f * f) - 2.0 * f * self.correlate_p(f) + f * f


def eval_field(occ, H, frame: FieldFrame, t: float, params: ModelParams, lattice: Lattice | None = None) -> float:
    """``n^{-1/(2 alpha)} sum_x H((x - shift(t)) / N) (eta(x) - rho)``."""
    lat = Lattice(params) if lattice is None else lattice
    lat.check_aliasing(H)
    f = lat.sample(H, frame.shift(t))
    return float(lat.c_Y * np.dot(f, np.asarray(occ, dtype=float) - params.rho))


def static_covariance_target(G, H, params: ModelParams, sigma2: float, lattice: Lattice | None = None) -> float:
    """``sigma^2 n^{-1/alpha} sum_x G H`` (the exact equal-time covariance under the product measure)."""
    lat = Lattice(params) if lattice is None else lattice
    return float(sigma2 * lat.c_Y**2 * np.dot(lat.sample(G), lat.sample(H)))


# ---------------------------------------------------------------------------
# decomposition


def decomposition_schedule(horizon: float, dt: float, frame: FieldFrame) -> np.ndarray:
    """Uniform grid of step at most ``dt`` joined with the jump times of ``floor(v t)``.

    Between consecutive times the lattice-frame shift is constant, so every
    weight is either constant or smooth in time on each interval.
    """
    if dt <= 0 or horizon < 0:
        raise ParameterError("dt must be positive and horizon non-negative")
    m = max(1, int(math.ceil(horizon / dt - 1e-12)))
    times = np.linspace(0.0, horizon, m + 1)
    v = abs(frame.velocity)
    if v > 0 and horizon > 0:
        jumps = np.arange(1, int(math.floor(v * horizon)) + 1) / v
        times = np.union1d(times, jumps[jumps < horizon])
        keep = np.concatenate([[True], np.diff(times) > 1e-12 * max(1.0, horizon)])
        times = times[keep]
        times[-1] = horizon
    return times


@dataclass
class DecompositionReport:
    """Cumulative decomposition terms of one test function at the snapshot times."""

    test_id: str
    frame: FieldFrame
    times: np.ndarray
    Y: np.ndarray
    I: np.ndarray
    B: np.ndarray
    K: np.ndarray
    QV: np.ndarray
    direct: np.ndarray = field(repr=False)
    K_parts: np.ndarray = field(repr=False, default=None)

    @property
    def M(self) -> np.ndarray:
        return self.Y - self.Y[0] - self.I - self.B - self.K

    @property
    def identity_residual(self) -> float:
        """Relative gap between the summed terms and the uncentered compensator."""
        scale = np.abs(self.I) + np.abs(self.B) + np.abs(self.K) + np.abs(self.direct)
        gap = np.abs(self.direct - (self.I + self.B + self.K))
        return float(np.max(gap / np.maximum(scale, 1e-300))) if gap.size else 0.0

    def to_csv(self, path, params: ModelParams | None = None, eps=None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            keys = ["alpha", "beta", "gamma", "n", "L"] if params is not None else []
            w.writerow([*keys, "H_id", "eps", "t", "Y", "Y0", "I", "B", "K", "M", "QV"])
            pre = [params.alpha, params.beta, params.gamma, params.n, params.L] if params is not None else []
            M = self.M
            for i, t in enumerate(self.times):
                w.writerow([*pre, self.test_id, "" if eps is None else eps, t, self.Y[i], self.Y[0],
                            self.I[i], self.B[i], self.K[i], M[i], self.QV[i]])


class _Weights:
    """Per-time weights for one test function (cached on the shift value)."""

    def __init__(self, lat: Lattice, H, thermo: Thermo, frame: FieldFrame):
        self.lat, self.H, self.th, self.frame = lat, H, thermo, frame
        self._cont = {}
        self._latw = {}

    def continuum(self, t: float):
        s = self.frame.velocity * t
        w = self._cont.get(s)
        if w is None:
            lat = self.lat
            f = lat.sample(self.H, s)
            dH = lat.sample(self.H, s, 1)
            w = {
                "f": f,
                "Lf": lat.pref_sym * lat.sym_generator(f),
                "Gf": lat.c_B * lat.grad(f),
                "dH": (self.frame.velocity * lat.c_Y / lat.N) * dH,
                "Phi": lat.pref_qv * lat.carre(f),
            }
            if len(self._cont) > 4:
                self._cont.clear()
            self._cont[s] = w
        return w

    def lattice(self, shift: float):
        w = self._latw.get(shift)
        if w is None:
            lat = self.lat
            f = lat.sample(self.H, shift)
            w = {"Lf": lat.pref_sym * lat.sym_generator(f), "Gf": lat.c_B * lat.grad(f)}
            if len(self._latw) > 4:
                self._latw.clear()
            self._latw[shift] = w
        return w


class DecompositionAccumulator:
    """Observer for :func:`kmc.run` (with ``integrals=True``).

    Integrates every term of the martingale decomposition exactly in the
    occupation variables; time dependence of the weights is linear on each
    snapshot interval (exact in the fixed frame, second order otherwise).
    """

    def __init__(self, params: ModelParams, thermo: Thermo, tests, frame: FieldFrame,
                 lattice: Lattice | None = None, max_dt: float | None = 1e-3):
        self.params, self.th, self.frame = params, thermo, frame
        self.lat = Lattice(params) if lattice is None else lattice
        self.tests = list(tests)
        for H in self.tests:
            self.lat.check_aliasing(H)
        self.max_dt = max_dt
        self._w = [_Weights(self.lat, H, thermo, frame) for H in self.tests]
        m = len(self.tests)
        self._times: list[float] = []
        self._rows: list[np.ndarray] = []  # per snapshot: (m, 8) cumulative
        self._cum = np.zeros((m, 8))  # Y, I, B, K1, K2, K3, QV, direct
        self._warned = False

    def __call__(self, k, t, occ, interval):
        th, lat = self.th, self.lat
        moving = self.frame.mode == "moving"
        e = occ - self.params.rho
        if k > 0:
            if interval is None:
                raise ParameterError("decomposition needs kmc.run(..., integrals=True)")
            t0, t1 = interval.t0, interval.t1
            dt = t1 - t0
            if (moving and self.max_dt is not None and dt > self.max_dt * (1 + 1e-9) and not self._warned):
                warnings.warn(f"snapshot spacing {dt:.3g} exceeds {self.max_dt:.3g}", QuadratureWarning, stacklevel=2)
                self._warned = True
            A0g, A1g, A0e, A1e = interval.A0_g, interval.A1_g, interval.A0_eta, interval.A1_eta
            # weights at t0 act on A0 - A1, weights at t1 on A1
            P0g, P1g = A0g - A1g, A1g
            P0gc, P1gc = P0g - th.gtilde * dt / 2, P1g - th.gtilde * dt / 2
            P0ec = (A0e - A1e) - self.params.rho * dt / 2
            P1ec = A1e - self.params.rho * dt / 2
            P0V, P1V = P0gc - th.gtilde1 * P0ec, P1gc - th.gtilde1 * P1ec
            shift_lat = self.frame.lattice_shift(0.5 * (t0 + t1))
        for i, W in enumerate(self._w):
            c1 = W.continuum(t)
            self._cum[i, 0] = lat.c_Y * np.dot(c1["f"], e)
            if k == 0:
                continue
            c0 = W.continuum(t0)
            if moving:
                lw = W.lattice(shift_lat)
                Lf, Gf = lw["Lf"], lw["Gf"]
                I = np.dot(Lf, P0gc + P1gc)
                B = np.dot(Gf, P0V + P1V)
                K1 = np.dot(c0["Lf"] - Lf, P0gc) + np.dot(c1["Lf"] - Lf, P1gc)
                K2 = np.dot(c0["Gf"] - Gf, P0V) + np.dot(c1["Gf"] - Gf, P1V)
                K3 = (np.dot(th.gtilde1 * c0["Gf"] - c0["dH"], P0ec)
                      + np.dot(th.gtilde1 * c1["Gf"] - c1["dH"], P1ec))
            else:
                I = np.dot(c0["Lf"], P0gc) + np.dot(c1["Lf"], P1gc)
                B = np.dot(c0["Gf"], P0gc) + np.dot(c1["Gf"], P1gc)
                K1 = K2 = K3 = 0.0
            direct = (np.dot(c0["Lf"] + c0["Gf"], P0g) + np.dot(c1["Lf"] + c1["Gf"], P1g)
                      - np.dot(c0["dH"], P0ec) - np.dot(c1["dH"], P1ec))
            qv = np.dot(c0["Phi"], P0g) + np.dot(c1["Phi"], P1g)
            self._cum[i, 1:] += (I, B, K1, K2, K3, qv, direct)
        self._times.append(t)
        self._rows.append(self._cum.copy())

    def reports(self) -> list[DecompositionReport]:
        rows = np.asarray(self._rows)  # (snapshots, m, 8)
        times = np.asarray(self._times)
        out = []
        for i, H in enumerate(self.tests):
            r = rows[:, i, :]
            out.append(DecompositionReport(
                getattr(H, "name", f"H{i}"), self.frame, times,
                Y=r[:, 0], I=r[:, 1], B=r[:, 2], K=r[:, 3] + r[:, 4] + r[:, 5], QV=r[:, 6],
                direct=r[:, 7], K_parts=r[:, 3:6],
            ))
        return out


def decomposition(config, kernel: JumpKernel, params: ModelParams, thermo: Thermo, tests, frame: FieldFrame,
                  horizon: float, dt: float = 1e-3, rng=None, seed=None, extra_observers=(), max_events=None):
    """Simulate from ``config`` and return one :class:`DecompositionReport` per test function."""
    times = decomposition_schedule(horizon, dt, frame)
    acc = DecompositionAccumulator(params, thermo, tests, frame, Lattice(params, kernel), max_dt=None)
    from ..kmc import run

    traj = run(config, kernel, horizon, times, rng=rng, seed=seed, observers=(acc, *extra_observers),
               store_snapshots=False, integrals=True, max_events=max_events)
    return acc.reports(), traj


# ---------------------------------------------------------------------------
# energy functional


class EnergyAccumulator:
    """Observer computing ``A^{n,eps}_{0,t}(H)`` for several ``eps`` by snapshot trapezoid.

    ``A = int n^{-1/alpha} sum_x (nabla_x H) [tau_x Y_u(G_eps)]^2 du`` with
    ``tau_x Y_u(G) = c_Y sum_z G((z - x - shift(u)) / N) (eta_u(z) - rho)``.
    """

    def __init__(self, params: ModelParams, H, eps_list, frame: FieldFrame,
                 mollifier: MollifierFamily | None = None, lattice: Lattice | None = None):
        self.params, self.H, self.frame = params, H, frame
        self.lat = Lattice(params) if lattice is None else lattice
        self.moll = MollifierFamily() if mollifier is None else mollifier
        self.eps = [float(e) for e in eps_list]
        for e in self.eps:
            if e * self.lat.N < 2.0:
                raise ResolutionError(f"eps={e} is below lattice resolution (eps*N = {e * self.lat.N:.3g} < 2)")
            if (e + self.moll.half_width(e)) * self.lat.N > self.lat.L / 2:
                raise ParameterError(f"eps={e} mollifier does not fit in the torus")
        f = self.lat.sample(H)
        self._gradH = self.lat.grad(f) / self.lat.N  # includes the 1/N of the sum
        self._G = [self.moll.G(e) for e in self.eps]
        self._times: list[float] = []
        self._vals: list[np.ndarray] = []
        self._cum = np.zeros(len(self.eps))
        self._last = None

    def density(self, occ, t: float) -> np.ndarray:
        """``n^{-1/alpha} sum_x (nabla_x H) [tau_x Y(G_eps)]^2`` for each ``eps``."""
        lat = self.lat
        e_hat = np.fft.rfft(np.asarray(occ, dtype=float) - self.params.rho)
        d = lat.wrap(lat.x - self.frame.shift(t)) / lat.N
        out = np.empty(len(self.eps))
        for j, G in enumerate(self._G):
            k_hat = np.fft.rfft(G(d))
            conv = lat.c_Y * np.fft.irfft(e_hat * np.conj(k_hat), lat.L)
            out[j] = np.dot(self._gradH, conv * conv)
        return out

    def __call__(self, k, t, occ, interval=None):
        val = self.density(occ, t)
        if self._last is not None:
            t0, v0 = self._last
            self._cum += 0.5 * (t - t0) * (v0 + val)
        self._last = (t, val)
        self._times.append(t)
        self._vals.append(self._cum.copy())

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self._times)

    @property
    def values(self) -> np.ndarray:
        """Cumulative ``A_{0,t}`` at each snapshot, shape ``(snapshots, len(eps))``."""
        return np.asarray(self._vals)

    def between(self, s: float, t: float) -> np.ndarray:
        times = self.times
        i, j = np.searchsorted(times, [s, t])
        if i >= times.size or j >= times.size or abs(times[i] - s) > 1e-12 or abs(times[j] - t) > 1e-12:
            raise ParameterError("s and t must be snapshot times")
        return self.values[j] - self.values[i]


def energy_functional(times, snapshots, params: ModelParams, H, eps, s: float, t: float,
                      frame: FieldFrame, mollifier: MollifierFamily | None = None) -> float:
    """``A^{n,eps}_{s,t}(H)`` from stored snapshots (trapezoid in time)."""
    acc = EnergyAccumulator(params, H, [eps], frame, mollifier)
    times = np.asarray(times, dtype=float)
    sel = (times >= s - 1e-12) & (times <= t + 1e-12)
    idx = np.nonzero(sel)[0]
    if t <= s or idx.size < 2:
        return 0.0
    for i in idx:
        acc(0, float(times[i]), snapshots[i])
    return float(acc.values[-1, 0])


# ---------------------------------------------------------------------------
# velocity calibration


def calibrate_velocity(times, snapshots, H, params: ModelParams, v_grid, lag: float) -> tuple[float, np.ndarray]:
    """Pick the frame velocity that maximizes the lag-``lag`` field autocovariance.

    In equilibrium ``E[d/dt Y_t]`` vanishes for every frame, so the drift
    criterion cannot separate velocities; the frame that follows the
    fluctuations is the one in which they decorrelate slowest.
    """
    lat = Lattice(params)
    times = np.asarray(times, dtype=float)
    scores = []
    pairs = []
    for i, t in enumerate(times):
        j = np.searchsorted(times, t + lag - 1e-12)
        if j < times.size and abs(times[j] - t - lag) < 1e-9:
            pairs.append((i, j))
    if not pairs:
        raise ParameterError("no snapshot pairs at the requested lag")
    for v in v_grid:
        fr = FieldFrame.moving(v) if v != 0 else FieldFrame.fixed()
        acc = 0.0
        for i, j in pairs:
            a = eval_field(snapshots[i], H, fr, times[i], params, lat)
            b = eval_field(snapshots[j], H, fr, times[j], params, lat)
            acc += a * b
        scores.append(acc / len(pairs))
    scores = np.asarray(scores)
    return float(np.asarray(v_grid)[int(np.argmax(scores))]), scores

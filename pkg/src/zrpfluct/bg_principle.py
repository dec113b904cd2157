"""Boltzmann-Gibbs residuals: local functions against block-average projections.

Time integrals are exact: each trajectory's event log is replayed and the
piecewise-constant integrand ``sum_x h(x) (tau_x f - projection)`` is
integrated between events, with block sums updated in ``O(ell)`` per jump.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .equilibrium import Thermo
from .errors import ParameterError, PreconditionError
from .model_core import ModelParams

_CENTER_TOL = 1e-8
_MC_DRAWS = 10_000_000


@dataclass(frozen=True, eq=False)
class LocalFunction:
    """``f(eta) = func(eta(o_1), ..., eta(o_m))`` for offsets ``o_j``.

    ``func`` must accept integer arrays (one per offset) and broadcast.
    Moments under the product measure at density ``thermo.rho`` are computed
    by exact series for ``m <= 2`` and by Monte Carlo otherwise.
    """

    func: object
    offsets: tuple = (0,)
    name: str = "f"

    @property
    def radius(self) -> int:
        return max(abs(o) for o in self.offsets)

    def __call__(self, occ: np.ndarray, x=None):
        occ = np.asarray(occ)
        L = occ.shape[-1]
        x = np.arange(L) if x is None else np.asarray(x)
        return self.func(*[occ[..., (x + o) % L] for o in self.offsets])

    def table(self, kcap: int) -> np.ndarray:
        """Values on ``{0..kcap}^m`` flattened in C order."""
        grids = np.meshgrid(*[np.arange(kcap + 1)] * len(self.offsets), indexing="ij")
        vals = np.asarray(self.func(*grids), dtype=float)
        return np.broadcast_to(vals, grids[0].shape).ravel().copy()

    def _moment_data(self, thermo: Thermo, rng=None):
        m = len(self.offsets)
        pmf = thermo.marginal().pmf
        if m <= 2:
            ks = np.arange(pmf.size)
            grids = np.meshgrid(*[ks] * m, indexing="ij")
            w = pmf if m == 1 else np.outer(pmf, pmf)
            vals = np.broadcast_to(np.asarray(self.func(*grids), dtype=float), w.shape)
            S = sum(grids).astype(float)
            return w.ravel(), vals.ravel(), S.ravel()
        rng = rng if rng is not None else np.random.default_rng(0)
        cdf = np.cumsum(pmf)
        draws = [np.searchsorted(cdf, rng.random(_MC_DRAWS), side="right") for _ in range(m)]
        w = np.full(_MC_DRAWS, 1.0 / _MC_DRAWS)
        return w, np.asarray(self.func(*draws), dtype=float), sum(draws).astype(float)

    def moments(self, thermo: Thermo) -> "LocalMoments":
        """``f~``, ``f~'``, ``f~''`` and ``||f||_{L^5}`` at ``thermo.rho``.

        Derivatives use the exponential-family identities
        ``f~' = Cov(f, S) / sigma^2`` and
        ``f~'' = E[f ((S - m rho)^2 - m sigma^2)] / sigma^4 - f~' kappa_3 / sigma^4``
        with ``S`` the particle number on the support of ``f``.
        """
        w, v, S = self._moment_data(thermo)
        m = len(self.offsets)
        rho, s2, k3 = thermo.rho, thermo.sigma2, thermo.kappa3
        d = S - m * rho
        f0 = float(np.dot(w, v))
        c1 = float(np.dot(w, v * d))
        c2 = float(np.dot(w, v * (d * d - m * s2)))
        f1 = c1 / s2
        f2 = c2 / s2**2 - c1 * k3 / s2**3
        l5 = float(np.dot(w, np.abs(v) ** 5)) ** 0.2
        return LocalMoments(f0, f1, f2, l5)


@dataclass(frozen=True)
class LocalMoments:
    ftilde: float
    ftilde1: float
    ftilde2: float
    l5_norm: float


def density_fluctuation(thermo: Thermo) -> LocalFunction:
    rho = thermo.rho
    return LocalFunction(lambda k: k - rho, (0,), "eta-rho")


def rate_fluctuation(thermo: Thermo) -> LocalFunction:
    """``g(eta(0)) - g~(rho)``: centered, but with a linear part."""
    g, gt = thermo.rate, thermo.gtilde
    return LocalFunction(lambda k: g(k) - gt, (0,), f"{g.name}-gtilde")


def rate_nonlinear_part(thermo: Thermo) -> LocalFunction:
    """``g(eta(0)) - g~ - g~'(eta(0) - rho)``: doubly centered."""
    g, gt, g1, rho = thermo.rate, thermo.gtilde, thermo.gtilde1, thermo.rho
    return LocalFunction(lambda k: g(k) - gt - g1 * (k - rho), (0,), f"{g.name}-nonlinear")


def centered_square(thermo: Thermo) -> LocalFunction:
    """``(eta(0) - rho)^2 - sigma^2 - (kappa_3/sigma^2)(eta(0) - rho)``.

    The last term removes the linear part so both centering conditions hold.
    """
    rho, s2, k3 = thermo.rho, thermo.sigma2, thermo.kappa3
    b = k3 / s2
    return LocalFunction(lambda k: (k - rho) ** 2 - s2 - b * (k - rho), (0,), "square-dc")


@dataclass(frozen=True)
class BlockAverage:
    ell: int

    @property
    def size(self) -> int:
        return 2 * self.ell + 1

    def __call__(self, occ: np.ndarray) -> np.ndarray:
        occ = np.asarray(occ, dtype=float)
        c = np.concatenate([[0.0], np.cumsum(np.concatenate([occ[-self.ell:] if self.ell else occ[:0], occ, occ[: self.ell]]))])
        m = self.size
        return (c[m:] - c[:-m]) / m

    def sigma2(self, thermo: Thermo) -> float:
        return thermo.sigma2 / self.size

    def sigma2_series(self, thermo: Thermo) -> float:
        """Variance of the block average by exact convolution of the marginal."""
        pmf = thermo.marginal().pmf
        law = np.ones(1)
        for _ in range(self.size):
            law = np.convolve(law, pmf)
        law = law / law.sum()
        k = np.arange(law.size) / self.size
        mean = float(np.dot(law, k))
        return float(np.dot(law, (k - mean) ** 2))


# ---------------------------------------------------------------------------
# replay kernel


@njit(cache=True)
def _max_occupancy(occ0, src, disp, nev):
    occ = occ0.copy()
    L = occ.size
    best = occ.max()
    for e in range(nev):
        x = src[e]
        z = (x + disp[e]) % L
        occ[x] -= 1
        occ[z] += 1
        if occ[z] > best:
            best = occ[z]
    return best


@njit(cache=True)
def _f_at(occ, x, offs, strides, ftab, L):
    idx = 0
    for j in range(offs.size):
        idx += occ[(x + offs[j]) % L] * strides[j]
    return ftab[idx]


@njit(cache=True)
def _proj(S, m, rho, a, c, quad):
    b = S / m - rho
    if quad:
        return a * (b * b - c)
    return a * b


@njit(cache=True)
def _change(occ, y, delta, h, offs, strides, ftab, ells, blocks, coef, cent, rho, quad, qf, qp, L):
    # f part: windows x with x + o_j == y
    nof = offs.size
    for j in range(nof):
        x = (y - offs[j]) % L
        dup = False
        for i in range(j):
            if (y - offs[i]) % L == x:
                dup = True
        if not dup and h[x] != 0.0:
            qf -= h[x] * _f_at(occ, x, offs, strides, ftab, L)
    occ[y] += delta
    for j in range(nof):
        x = (y - offs[j]) % L
        dup = False
        for i in range(j):
            if (y - offs[i]) % L == x:
                dup = True
        if not dup and h[x] != 0.0:
            qf += h[x] * _f_at(occ, x, offs, strides, ftab, L)
    # block part
    for k in range(ells.size):
        ell = ells[k]
        m = 2 * ell + 1
        for d in range(-ell, ell + 1):
            x = (y + d) % L
            S = blocks[k, x]
            if h[x] != 0.0:
                qp[k] += h[x] * (_proj(S + delta, m, rho, coef, cent[k], quad) - _proj(S, m, rho, coef, cent[k], quad))
            blocks[k, x] = S + delta
    return qf


@njit(cache=True)
def _replay(occ0, ev_t, src, disp, nev, h, offs, strides, ftab, ells, coef, cent, rho, quad, grid):
    L = occ0.size
    occ = occ0.copy()
    nl = ells.size
    blocks = np.zeros((nl, L))
    qp = np.zeros(nl)
    for k in range(nl):
        ell = ells[k]
        m = 2 * ell + 1
        for x in range(L):
            S = 0.0
            for d in range(-ell, ell + 1):
                S += occ[(x + d) % L]
            blocks[k, x] = S
            qp[k] += h[x] * _proj(S, m, rho, coef, cent[k], quad)
    qf = 0.0
    for x in range(L):
        if h[x] != 0.0:
            qf += h[x] * _f_at(occ, x, offs, strides, ftab, L)
    out = np.zeros((nl, grid.size))
    X = np.zeros(nl)
    t_prev = 0.0
    gi = 0
    for e in range(nev + 1):
        t_e = ev_t[e] if e < nev else np.inf
        while gi < grid.size and grid[gi] <= t_e:
            for k in range(nl):
                out[k, gi] = X[k] + (qf - qp[k]) * (grid[gi] - t_prev)
            gi += 1
        if e == nev or gi == grid.size:
            break
        for k in range(nl):
            X[k] += (qf - qp[k]) * (t_e - t_prev)
        t_prev = t_e
        x = src[e]
        z = (x + disp[e]) % L
        qf = _change(occ, x, -1, h, offs, strides, ftab, ells, blocks, coef, cent, rho, quad, qf, qp, L)
        qf = _change(occ, z, 1, h, offs, strides, ftab, ells, blocks, coef, cent, rho, quad, qf, qp, L)
    return out


def simulate(params: ModelParams, kernel, thermo: Thermo, K: float, rng, slack: float = 1.5):
    """Stationary trajectory on ``[0, K]`` with a complete event log."""
    from .equilibrium import sample_configuration
    from .kmc import run

    cfg = sample_configuration(thermo.rho, params.L, thermo.rate, rng)
    mean = params.n * params.L * thermo.gtilde * K
    cap = int(slack * mean + 10.0 * math.sqrt(mean) + 1000)
    return run(cfg, kernel, K, rng=rng, log_events=cap, store_snapshots=False)


def integrated_residual(traj, f: LocalFunction, h, ells, thermo: Thermo, order: str, grid) -> np.ndarray:
    """Paths ``t -> int_0^t sum_x h(x)(tau_x f - projection_ell)(eta_s) ds`` on ``grid``.

    ``traj`` must carry its initial state and the full event log
    (``kmc.run(..., log_events=...)``).  Returns an array ``(len(ells), len(grid))``.
    """
    if traj.initial is None or traj.event_times is None:
        raise ParameterError("trajectory needs its initial state and a complete event log")
    if traj.truncated or len(traj.event_times) < traj.n_events:
        raise ParameterError("event log is truncated")
    mom = f.moments(thermo)
    ells = np.asarray(ells, dtype=np.int64)
    if order == "quadratic":
        coef, quad = 0.5 * mom.ftilde2, True
        cent = np.array([thermo.sigma2 / (2 * e + 1) for e in ells])
    elif order == "linear":
        coef, quad = mom.ftilde1, False
        cent = np.zeros(ells.size)
    else:
        raise ParameterError(f"unknown projection order {order!r}")
    h = np.ascontiguousarray(h, dtype=float)
    nev = int(traj.n_events)
    src = np.asarray(traj.event_sources[:nev], dtype=np.int64)
    disp = np.asarray(traj.event_displacements[:nev], dtype=np.int64)
    kcap = int(_max_occupancy(traj.initial.astype(np.int64), src, disp, nev))
    m = len(f.offsets)
    strides = np.array([(kcap + 1) ** (m - 1 - j) for j in range(m)], dtype=np.int64)
    return _replay(
        traj.initial.astype(np.int64), np.asarray(traj.event_times[:nev], dtype=float), src, disp, nev, h,
        np.asarray(f.offsets, dtype=np.int64), strides, f.table(kcap), ells, float(coef), cent,
        float(thermo.rho), quad, np.asarray(grid, dtype=float),
    )


def _check(f: LocalFunction, thermo: Thermo, ell, order: str):
    ells = np.atleast_1d(np.asarray(ell, dtype=np.int64))
    r0 = f.radius
    if np.any(ells < r0**3):
        raise PreconditionError(f"block radius {ells.min()} is below l0^3 = {r0**3}")
    mom = f.moments(thermo)
    if abs(mom.ftilde) > _CENTER_TOL:
        raise PreconditionError(f"f is not centered: f~(rho) = {mom.ftilde:.3g}")
    if order == "quadratic" and abs(mom.ftilde1) > _CENTER_TOL:
        raise PreconditionError(f"f is not doubly centered: f~'(rho) = {mom.ftilde1:.3g}")
    return ells


def snapshot_grid(K: float, steps: int = 200) -> np.ndarray:
    if steps < 200:
        raise ParameterError("sup grid needs at least 200 steps")
    return np.linspace(0.0, K, steps + 1)


def residual_samples(trajectories, f, h, ell, K, thermo, order, steps: int = 200) -> np.ndarray:
    """Per-replica ``sup_{t <= K}`` of the squared integrated residual, shape ``(replicas, len(ell))``."""
    ells = _check(f, thermo, ell, order)
    if K == 0:
        return np.zeros((len(trajectories), ells.size))
    grid = snapshot_grid(K, steps)
    out = []
    for tr in trajectories:
        if tr.horizon < K:
            raise ParameterError(f"trajectory horizon {tr.horizon} is shorter than K={K}")
        paths = integrated_residual(tr, f, h, ells, thermo, order, grid)
        out.append(np.max(paths**2, axis=1))
    return np.asarray(out)


def bg_residual_quadratic(trajectories, f, h, ell, K, thermo, steps: int = 200):
    """MC estimate of ``E sup_t (int_0^t sum_x h(x)(tau_x f - (f~''/2)((eta^l - rho)^2 - sigma_l^2)) ds)^2``."""
    r = residual_samples(trajectories, f, h, ell, K, thermo, "quadratic", steps).mean(axis=0)
    return float(r[0]) if np.ndim(ell) == 0 else r


def bg_residual_linear(trajectories, f, h, ell, K, thermo, steps: int = 200):
    """MC estimate of ``E sup_t (int_0^t sum_x h(x)(tau_x f - f~'(eta^l - rho)) ds)^2``."""
    r = residual_samples(trajectories, f, h, ell, K, thermo, "linear", steps).mean(axis=0)
    return float(r[0]) if np.ndim(ell) == 0 else r


def bound_shape(params: ModelParams, h, ell, K, which: str) -> float:
    """Right-hand side of the residual bound with ``C ||f||^2 = 1``."""
    a, n = params.alpha, float(params.n)
    h = np.asarray(h, dtype=float)
    s2 = n ** (-1.0 / a) * float(np.sum(h * h))
    s1 = (n ** (-1.0 / a) * float(np.sum(np.abs(h)))) ** 2
    if which == "quadratic":
        p1, p2 = a - 1.0, 3.0
    elif which == "linear":
        p1, p2 = a, 2.0
    else:
        raise ParameterError(f"unknown projection order {which!r}")
    return K * ell**p1 / n ** (1.0 - 1.0 / a) * s2 + K**2 * n ** (2.0 / a) / ell**p2 * s1


def bound_rhs(params: ModelParams, f_norm5: float, h, ell, K, which: str, C: float = 1.0) -> float:
    return C * f_norm5**2 * bound_shape(params, h, ell, K, which)


@dataclass
class BGRow:
    ell: int
    n: int
    K: float
    residual: float
    stderr: float
    bound: float = math.nan
    fitted_C: float = math.nan


@dataclass
class BGStudy:
    """Residuals on an ``(ell, n)`` grid with a one-point calibrated bound."""

    order: str
    rows: list = field(default_factory=list)
    C: float = math.nan
    calibration: tuple = ()

    def calibrate(self, shapes: dict, at: tuple):
        r = next(r for r in self.rows if (r.ell, r.n) == at)
        self.C = r.residual / shapes[at]
        self.calibration = at
        for r in self.rows:
            r.fitted_C = r.residual / shapes[(r.ell, r.n)]
            r.bound = self.C * shapes[(r.ell, r.n)]
        return self.C

    def monotone(self, n: int, sigmas: float = 0.0) -> bool:
        rs = sorted((r for r in self.rows if r.n == n), key=lambda r: r.ell)
        return all(b.residual < a.residual + sigmas * math.hypot(a.stderr, b.stderr) for a, b in itertools.pairwise(rs))

    def within_bound(self) -> bool:
        return all(r.residual <= r.bound * (1 + 1e-12) for r in self.rows)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["order", "ell", "n", "K", "residual", "stderr", "bound", "fitted_C"])
            for r in self.rows:
                w.writerow([self.order, r.ell, r.n, r.K, r.residual, r.stderr, r.bound, r.fitted_C])

"""Experiments built from the simulator, the field estimators and the spectral solver."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import fou_solver as fs
from ..equilibrium import Thermo, sample_configuration, thermo
from ..errors import HorizonWarning, ParameterError
from ..fields.estimators import (
    EnergyAccumulator,
    Lattice,
    characteristic_velocity,
    decomposition,
    eval_field,
    moving_frame,
)
from ..fields.testfunctions import Gaussian
from ..kmc import run
from ..model_core import ModelParams, build_kernel
from .stats import bootstrap_ci, ci_overlap, mean_se, zscore


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


# ---------------------------------------------------------------------------
# occupation time


class OccupationObserver:
    """Running ``mean_x (int_0^t (eta_s(x) - rho_hat) ds)^2`` at the snapshot times.

    ``rho_hat`` is the empirical density, which is conserved on the torus;
    centering by it removes the frozen zero mode.
    """

    def __init__(self, L: int, rho_hat: float, sites=None):
        self.cum = np.zeros(L)
        self.rho_hat = rho_hat
        self.sites = None if sites is None else np.asarray(sites)
        self.values: list[float] = []

    def __call__(self, k, t, occ, interval):
        if k > 0:
            self.cum += interval.A0_eta - self.rho_hat * (interval.t1 - interval.t0)
        c = self.cum if self.sites is None else self.cum[self.sites]
        self.values.append(float(np.mean(c * c)))


def crossing_time(params: ModelParams) -> float:
    """Macroscopic time at which the typical displacement ``(n t)^{1/alpha}`` reaches ``L/2``."""
    return (params.L / 2.0) ** params.alpha / params.n


def occupation_time_variance(params: ModelParams, grid, replicas: int, seed: int = 0, kernel=None, sites=None):
    """``Var int_0^t (eta_s(x) - rho) ds`` on ``grid`` from stationary starts.

    Every site is an exchangeable copy, so each replica contributes the
    spatial mean; error bars come from the spread across replicas.
    Returns ``(grid, mean, stderr, samples)``.
    """
    if replicas < 2:
        raise ParameterError("at least two replicas are needed for error bars")
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0.0:
        grid = np.concatenate([[0.0], grid])
    if grid[-1] > crossing_time(params):
        warnings.warn(
            f"horizon {grid[-1]:.3g} exceeds the torus crossing time {crossing_time(params):.3g}",
            HorizonWarning,
            stacklevel=2,
        )
    kernel = build_kernel(params) if kernel is None else kernel
    g = params.rate()
    samples = []
    for rng in spawn_rngs(seed, replicas):
        cfg = sample_configuration(params.rho, params.L, g, rng)
        obs = OccupationObserver(params.L, cfg.total_particles / params.L, sites)
        run(cfg, kernel, float(grid[-1]), grid, rng=rng, observers=(obs,), store_snapshots=False, integrals=True)
        samples.append(obs.values)
    samples = np.asarray(samples)
    m, se = mean_se(samples)
    return grid, m, se, samples


def occupation_time_oracle(params: ModelParams, grid, sigma2: float, kernel=None) -> np.ndarray:
    """Exact variance for independent walkers (linear rates) on the torus.

    ``2 sigma^2 int_0^t (t - s) (p_s(0) - 1/L) ds`` with ``p_s(0)`` the
    return probability of one walker, from the kernel's Fourier transform.
    """
    from scipy.integrate import quad

    g = params.rate()
    if not g.is_linear:
        raise ParameterError("the closed form holds for linear rates only")
    kernel = build_kernel(params) if kernel is None else kernel
    lam = 1.0 - np.fft.rfft(kernel.s_per).real
    w = np.full(lam.size, 2.0)
    w[0] = 1.0
    if params.L % 2 == 0:
        w[-1] = 1.0
    rate = params.n * g.linear_coeff
    L = params.L

    def ret(s):
        return float(np.sum(w[1:] * np.exp(-rate * s * lam[1:]))) / L

    out = []
    for t in np.asarray(grid, dtype=float):
        if t == 0:
            out.append(0.0)
            continue
        pts = [p for p in (1e-3, 1e-2, 1e-1, 1.0) if p < t]
        out.append(2.0 * sigma2 * quad(lambda s: (t - s) * ret(s), 0.0, t, limit=400, points=pts or None)[0])
    return np.asarray(out)


# ---------------------------------------------------------------------------
# transition scan


@dataclass
class ScanRow:
    alpha: float
    gamma: float
    n: int
    EB2: float
    ci: tuple
    samples: np.ndarray = field(repr=False)


@dataclass
class ScanReport:
    rows: list

    def by_alpha(self, alpha):
        return sorted((r for r in self.rows if r.alpha == alpha), key=lambda r: r.n)

    def decreasing(self, alpha) -> bool:
        """First and last ``n`` separated with non-overlapping intervals, last below first."""
        rs = self.by_alpha(alpha)
        return rs[-1].EB2 < rs[0].EB2 and not ci_overlap(rs[0].ci, rs[-1].ci)

    def stable(self, alpha) -> bool:
        """Every pair of ``n`` values has overlapping intervals."""
        rs = self.by_alpha(alpha)
        return all(ci_overlap(a.ci, b.ci) for i, a in enumerate(rs) for b in rs[i + 1:])

    def to_rows(self):
        return [(r.alpha, r.gamma, r.n, r.EB2, r.ci[0], r.ci[1]) for r in self.rows]


def drift_term_samples(params: ModelParams, horizon: float, replicas: int, seed: int, H=None, eps=(),
                       dt: float = 0.01, th: Thermo | None = None):
    """Per-replica ``B_t(H)`` in the characteristic frame, plus ``A^{eps}_{0,t}(H)`` when ``eps`` is given."""
    H = Gaussian(1.0) if H is None else H
    th = thermo(params.rho, params.rate()) if th is None else th
    kernel = build_kernel(params)
    lat = Lattice(params, kernel)
    frame = moving_frame(params, th)
    B, A = [], []
    for rng in spawn_rngs(seed, replicas):
        cfg = sample_configuration(params.rho, params.L, th.rate, rng)
        extra = ()
        if eps:
            ea = EnergyAccumulator(params, H, eps, frame, lattice=lat)
            extra = (ea,)
        reps, _ = decomposition(cfg, kernel, params, th, [H], frame, horizon, dt=dt, rng=rng, extra_observers=extra)
        B.append(reps[0].B[-1])
        if eps:
            A.append(ea.values[-1])
    return np.asarray(B), (np.asarray(A) if eps else None), th


def transition_scan(points, horizon: float, replicas: int, seed: int = 0, resamples: int = 1000) -> ScanReport:
    """``E[B_t(H)^2]`` across ``n`` for each ``alpha`` with bootstrap intervals."""
    rows = []
    for i, p in enumerate(points):
        B, _, _ = drift_term_samples(p, horizon, replicas, seed + 7919 * i)
        sq = B**2
        lo, hi = bootstrap_ci(sq, resamples=resamples, rng=np.random.default_rng(seed + i))
        rows.append(ScanRow(p.alpha, p.gamma, p.n, float(sq.mean()), (float(lo), float(hi)), sq))
    return ScanReport(rows)


# ---------------------------------------------------------------------------
# particle vs solver covariances


def particle_field_series(params: ModelParams, tests, horizon: float, dt: float, replicas: int, seed: int = 0,
                          shifts: int = 1):
    """Stationary ``Y_t(H(. - x_m))`` at ``t = 0, dt, ..., horizon`` for ``shifts`` equally spaced
    translates ``x_m``; shape ``(replicas, times, tests, shifts)``."""
    kernel = build_kernel(params)
    lat = Lattice(params, kernel)
    L = params.L
    if L % shifts:
        raise ParameterError("shifts must divide L")
    for H in tests:
        lat.check_aliasing(H)
    spec = np.conj(np.fft.rfft(np.asarray([lat.sample(H) for H in tests]), axis=1)) * lat.c_Y
    stride = L // shifts
    times = np.arange(int(round(horizon / dt)) + 1) * dt
    g = params.rate()
    out = []
    for rng in spawn_rngs(seed, replicas):
        cfg = sample_configuration(params.rho, L, g, rng)
        rows = []

        def obs(k, t, occ, interval):
            # circular correlation: value at x0 is sum_x H(x - x0) (eta_x - rho)
            corr = np.fft.irfft(np.fft.rfft(occ - params.rho)[None, :] * spec, L, axis=1)
            rows.append(corr[:, ::stride])

        run(cfg, kernel, float(times[-1]), times, rng=rng, observers=(obs,), store_snapshots=False)
        out.append(rows)
    return times, np.asarray(out)


def solver_field_series(params: ModelParams, tests, horizon: float, dt: float, replicas: int, seed: int = 0,
                        modes: int | None = None, shifts: int = 1, th: Thermo | None = None):
    """Same layout as :func:`particle_field_series` from the spectral solver on the matched torus."""
    th = thermo(params.rho, params.rate()) if th is None else th
    Lam = fs.macroscopic_length(params.L, params.n, params.alpha)
    if modes is None:
        kmax = max(_resolved_wavenumber(H) for H in tests)
        modes = int(math.ceil(kmax * Lam / (2 * math.pi))) + 1
    coeffs = np.asarray([fs.test_coefficients(H, Lam, modes) for H in tests])
    w = np.full(modes + 1, 2.0)
    w[0] = 1.0
    k = 2 * math.pi * np.arange(modes + 1) / Lam
    x0 = np.arange(shifts) * Lam / shifts
    # Y(H(. - x0)) = (1/Lam) sum_j w_j Re(Y_j conj(H_j) e^{i k_j x0})
    phase = np.exp(1j * np.outer(k, x0)) * (w / Lam)[:, None]
    steps = int(round(horizon / dt))
    out = []
    for rng in spawn_rngs(seed, replicas):
        st = fs.initial_state(params.alpha, Lam, modes, th, rng)
        noise = fs.NoiseSpec.for_state(st)
        _, Y, _ = fs.simulate(st, noise, dt, steps, rng)
        prod = Y[:, None, :] * np.conj(coeffs)[None, :, :]
        out.append(np.einsum("tqj,jm->tqm", prod, phase).real)
    times = np.arange(steps + 1) * dt
    return times, np.asarray(out)


def _resolved_wavenumber(H) -> float:
    width = getattr(H, "width", 1.0)
    freq = abs(getattr(H, "freq", 0.0))
    return freq + 9.0 / width


def lagged_covariance(series, i: int, j: int, lag_steps: int) -> np.ndarray:
    """Per-replica average over start times (and translates) of ``Y_s(H_i) Y_{s+lag}(H_j)``."""
    a = series[:, : series.shape[1] - lag_steps, i]
    b = series[:, lag_steps:, j]
    return np.mean((a * b).reshape(series.shape[0], -1), axis=1)


@dataclass
class CovarianceCell:
    pair: tuple
    lag: float
    particle: float
    particle_se: float
    solver: float
    solver_se: float

    @property
    def z(self) -> float:
        return float(zscore(self.particle, self.particle_se, self.solver, self.solver_se))


def covariance_suite(particle, solver, dt: float, pairs, lags) -> list[CovarianceCell]:
    """Matched equal-time and lagged covariances with z-scores.

    ``particle`` and ``solver`` are series arrays ``(replicas, times, tests)``
    sampled with the same step ``dt``; ``pairs`` index into the tests.
    """
    cells = []
    for i, j in pairs:
        for lag in lags:
            s = int(round(lag / dt))
            cp = lagged_covariance(particle, i, j, s)
            cs = lagged_covariance(solver, i, j, s)
            mp, sp_ = mean_se(cp)
            ms, ss = mean_se(cs)
            cells.append(CovarianceCell((i, j), float(lag), float(mp), float(sp_), float(ms), float(ss)))
    return cells


def ou_covariance(params: ModelParams, G, H, lag: float, th: Thermo | None = None, modes: int = 4096) -> float:
    """Analytic ``E[Y_0(G) Y_lag(H)]`` for the limit equation on the matched torus."""
    th = thermo(params.rho, params.rate()) if th is None else th
    Lam = fs.macroscopic_length(params.L, params.n, params.alpha)
    k = 2 * math.pi * np.arange(modes + 1) / Lam
    lam = fs.symbol(params.alpha, k)
    Gh = fs.test_coefficients(G, Lam, modes, points=8 * modes)
    Hh = fs.test_coefficients(H, Lam, modes, points=8 * modes)
    w = np.full(modes + 1, 2.0)
    w[0] = 0.0  # conserved zero mode carries no fluctuation
    return float(th.sigma2 * np.sum(w * (Gh * np.conj(Hh)).real * np.exp(th.gtilde1 * lam * lag)) / Lam)


# ---------------------------------------------------------------------------
# stationarity


@dataclass
class StationarityReport:
    rate_id: str
    events: int
    chi2: float
    dof: int
    p_value: float
    cov: float
    cov_se: float

    @property
    def cov_z(self) -> float:
        return self.cov / self.cov_se if self.cov_se > 0 else 0.0


def stationarity_check(params: ModelParams, events: float, replicas: int, seed: int = 0) -> StationarityReport:
    """Start from the product measure, run ``events`` in total, test the final snapshots.

    Sites of independent final snapshots are iid under the product measure,
    so the pooled marginal histogram has an exact chi-square null.  The
    neighbour covariance is averaged per replica; error bars are across replicas.
    """
    from .stats import chi_square_gof

    g = params.rate()
    th = thermo(params.rho, g)
    pmf = th.marginal().pmf
    kernel = build_kernel(params)
    horizon = events / replicas / (params.n * params.L * th.gtilde)
    counts = np.zeros(pmf.size)
    cov = []
    total = 0
    for rng in spawn_rngs(seed, replicas):
        cfg = sample_configuration(params.rho, params.L, g, rng)
        traj = run(cfg, kernel, horizon, rng=rng, store_snapshots=False)
        total += traj.n_events
        occ = traj.final
        counts += np.bincount(np.minimum(occ, pmf.size - 1), minlength=pmf.size)[: pmf.size]
        d = occ - params.rho
        cov.append(float(np.mean(d * np.roll(d, -1))))
    probs = pmf.copy()
    probs[-1] += max(0.0, 1.0 - probs.sum())
    stat, dof, pv = chi_square_gof(counts, probs)
    m, se = mean_se(np.asarray(cov))
    return StationarityReport(params.rate_id, total, float(stat), int(dof), float(pv), float(m), float(se))


def two_site_generator(k: int, g, p1: float, n: float = 1.0) -> np.ndarray:
    """Dense generator of ``k`` particles on a 2-site torus, state = occupancy of site 0.

    On two sites every odd displacement moves a particle to the other site;
    ``p1`` is the total probability of an odd displacement.
    """
    Q = np.zeros((k + 1, k + 1))
    for a in range(k + 1):
        if a > 0:
            Q[a, a - 1] += n * p1 * float(g(np.array([a]))[0])
        if a < k:
            Q[a, a + 1] += n * p1 * float(g(np.array([k - a]))[0])
        Q[a, a] = -Q[a].sum()
    return Q


def small_chain_check(params: ModelParams, k: int, horizon: float, seed: int = 0):
    """Time-weighted histogram of site 0 against the generator's null vector.

    Returns ``(empirical, null_vector, canonical, tv)``.
    """
    from scipy.linalg import null_space

    if params.L != 2:
        raise ParameterError("the two-site oracle needs L = 2")
    g = params.rate()
    kernel = build_kernel(params)
    p1 = float(kernel.p[1])
    Q = two_site_generator(k, g, p1, params.n)
    v = null_space(Q.T)[:, 0]
    v = v / v.sum()
    lf = np.concatenate([[0.0], np.cumsum(np.log(g(np.arange(1, k + 1)))) if k else []])
    a = np.arange(k + 1)
    w = np.exp(-(lf[a] + lf[k - a]))
    canon = w / w.sum()
    rng = np.random.default_rng(seed)
    from ..kmc import Configuration

    cfg = Configuration(np.array([k, 0]), g)
    traj = run(cfg, kernel, horizon, rng=rng, store_snapshots=False, histogram_bins=k + 1)
    emp = traj.histogram[0] / horizon
    tv = 0.5 * float(np.abs(emp - v).sum())
    return emp, v, canon, tv


__all__ = [
    "CovarianceCell", "OccupationObserver", "ScanReport", "characteristic_velocity", "covariance_suite",
    "crossing_time", "drift_term_samples", "eval_field", "lagged_covariance", "occupation_time_oracle",
    "occupation_time_variance", "ou_covariance", "particle_field_series", "solver_field_series",
    "spawn_rngs", "stationarity_check", "small_chain_check", "two_site_generator", "transition_scan",
]

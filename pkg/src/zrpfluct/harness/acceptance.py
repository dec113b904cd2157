"""Acceptance checks, one function per criterion, each sized for a single core."""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import zeta

from .. import bg_principle as bg
from .. import fou_solver as fs
from .. import spectral_gap as sg
from ..equilibrium import fugacity_of_density, marginal, sample_configuration, thermo
from ..errors import HorizonWarning
from ..fields.estimators import Lattice, decomposition, moving_frame, static_covariance_target
from ..fields.operators import quadratic_energy
from ..fields.testfunctions import Gaussian, battery, battery_pair_indices
from ..model_core import RATE_IDS, ModelParams, build_kernel, make_rate, normalize_kernel, s_full
from . import experiments as ex
from .stats import ci_overlap, loglog_fit, mean_se


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    summary: str
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number:>2} {self.title}: {self.summary}"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# 1. kernel


def kernel_normalization(seed: int = 0) -> CriterionResult:
    c1 = normalize_kernel(1.0)
    err_c1 = abs(c1 - 3.0 / math.pi**2)
    sums = []
    for a in (0.5, 1.0, 1.5, 1.9):
        for L in (64, 1000):
            k = build_kernel(ModelParams(alpha=a, beta=0.0, gamma=1.0, n=16, L=L, rho=0.5, rate_id="linear"))
            sums.append(abs(k.s_per.sum() - 1.0))
            sums.append(abs(k.p.sum() - 1.0))
        # full-lattice mass: 2 c sum_{y>=1} y^{-1-alpha} = 1
        sums.append(abs(2.0 * normalize_kernel(a) * zeta(1.0 + a) - 1.0))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        a = rng.uniform(0.2, 1.95)
        n = int(rng.integers(1, 10_000))
        y = rng.uniform(0.5, 1e4) * rng.choice([-1, 1])
        lhs = s_full(y, a)
        rhs = n ** (-(1.0 + 1.0 / a)) * s_full(y / n ** (1.0 / a), a)
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    ok = err_c1 < 1e-10 and max(sums) < 1e-10 and worst < 1e-12
    return CriterionResult(1, "kernel", ok,
                           f"|c1 - 3/pi^2| = {err_c1:.2e}, max mass error {max(sums):.2e}, scaling {worst:.2e}",
                           {"c1_error": err_c1, "mass_error": max(sums), "scaling_error": worst})


# ---------------------------------------------------------------------------
# 2. thermodynamics


def _gtilde1_covariance(rho, g) -> float:
    """``Cov(g(eta), eta) / sigma^2`` straight from the one-site law."""
    m = marginal(fugacity_of_density(rho, g), g)
    k = m.support.astype(float)
    gk = np.asarray(g(m.support), dtype=float)
    mean = m.mean
    return float(np.dot(m.pmf, (gk - np.dot(m.pmf, gk)) * (k - mean)) / m.central_moment(2))


def _gtilde1_difference(rho, g, h=None) -> float:
    """Richardson-extrapolated central difference of ``rho -> E_rho[g]``."""
    h = 1e-2 * rho if h is None else h

    def gt(r):
        return marginal(fugacity_of_density(r, g), g).expect(g)

    d1 = (gt(rho + h) - gt(rho - h)) / (2 * h)
    d2 = (gt(rho + h / 2) - gt(rho - h / 2)) / h
    return (4 * d2 - d1) / 3


def thermodynamics(seed: int = 0) -> CriterionResult:
    rows = []
    tc = thermo(0.5, make_rate("constant"))
    tl = thermo(0.7, make_rate("linear"))
    point = max(abs(tc.theta - 1 / 3), abs(tc.sigma2 - 0.75), abs(tl.theta - 0.7), abs(tl.sigma2 - 0.7))
    worst = 0.0
    for rid in RATE_IDS:
        g = make_rate(rid)
        for rho in (0.25, 0.5, 1.0, 2.0, 4.0):
            th = thermo(rho, g)
            for route, d in (("covariance", _gtilde1_covariance(rho, g)), ("difference", _gtilde1_difference(rho, g))):
                err = abs(d * th.sigma2 - th.gtilde) / th.gtilde
                worst = max(worst, err)
                rows.append((rid, rho, route, d, th.sigma2, th.gtilde, err))
    ok = point < 1e-10 and worst < 1e-8
    return CriterionResult(2, "thermodynamics", ok,
                           f"closed-form values off by {point:.1e}, max relative FDR error {worst:.1e}",
                           {"closed_form_error": point, "fdr_error": worst, "rows": rows})


# ---------------------------------------------------------------------------
# 3. stationarity


def stationarity(seed: int = 0, events: float = 1e8, replicas: int = 400) -> CriterionResult:
    reps = []
    for i, rid in enumerate(RATE_IDS):
        p = ModelParams(alpha=1.5, beta=0.5, gamma=1.0, n=16, L=256, rho=0.5, rate_id=rid)
        reps.append(ex.stationarity_check(p, events, replicas, seed + 101 * i))
    ok = all(r.p_value > 0.01 and abs(r.cov_z) < 4 for r in reps)
    s = ", ".join(f"{r.rate_id}: p={r.p_value:.3f} cov z={r.cov_z:+.2f}" for r in reps)
    return CriterionResult(3, "stationarity", ok, s, {"reports": [asdict(r) for r in reps]})


# ---------------------------------------------------------------------------
# 4. two-site chain


def small_chain(seed: int = 0, horizon: float = 2e6) -> CriterionResult:
    tvs = {}
    for rid in RATE_IDS:
        p = ModelParams(alpha=1.5, beta=0.0, gamma=1.0, n=1, L=2, rho=1.0, rate_id=rid)
        emp, v, canon, tv = ex.small_chain_check(p, 2, horizon, seed)
        tvs[rid] = (tv, float(np.abs(v - canon).max()))
    ok = all(t < 0.01 and d < 1e-10 for t, d in tvs.values())
    s = ", ".join(f"{k}: TV={t:.1e}" for k, (t, _) in tvs.items())
    return CriterionResult(4, "two-site oracle", ok, s, {"tv_and_canonical_gap": tvs})


# ---------------------------------------------------------------------------
# 5. static covariance


def static_covariance(seed: int = 0, replicas: int = 200, horizon: float = 0.5, shifts: int = 64) -> CriterionResult:
    p = ModelParams(alpha=1.2, beta=0.0, gamma=1.0, n=64, L=2**14, rho=0.5, rate_id="constant")
    th = thermo(p.rho, p.rate())
    tests = battery()
    pairs = battery_pair_indices(10, len(tests))
    _, series = ex.particle_field_series(p, tests, horizon, horizon, replicas, seed, shifts=shifts)
    final = series[:, -1]  # (replicas, tests, shifts)
    lat = Lattice(p)
    rows = []
    for i, j in pairs:
        m, se = mean_se(np.mean(final[:, i] * final[:, j], axis=1))
        target = static_covariance_target(tests[i], tests[j], p, th.sigma2, lat)
        rows.append((i, j, float(m), float(se), target, float((m - target) / se)))
    worst = max(abs(r[-1]) for r in rows)
    return CriterionResult(5, "static covariance", worst < 4, f"max |z| = {worst:.2f} over {len(rows)} pairs",
                           {"rows": rows})


# ---------------------------------------------------------------------------
# 6. quadratic variation


QV_POINTS = (
    # alpha, n, L, width, horizon
    (1.0, 256, 2**14, 1.0, 0.05),
    (1.6, 65536, 2**16, 2.0, 0.002),
)


def quadratic_variation(seed: int = 0, replicas: int = 8) -> CriterionResult:
    rows = []
    for i, (a, n, L, w, T) in enumerate(QV_POINTS):
        gamma = 1.0 - 1.5 / a if a > 1.5 else 1.0
        p = ModelParams(alpha=a, beta=0.25, gamma=gamma, n=n, L=L, rho=0.5, rate_id="constant")
        th = thermo(p.rho, p.rate())
        kernel = build_kernel(p)
        H = Gaussian(w)
        target = 2.0 * th.gtilde * quadratic_energy(H, a)
        lat = Lattice(p, kernel)
        lattice_mean = th.gtilde * lat.pref_qv * float(lat.carre(lat.sample(H)).sum())
        frame = moving_frame(p, th)
        qv = []
        for rng in ex.spawn_rngs(seed + i, replicas):
            cfg = sample_configuration(p.rho, L, p.rate(), rng)
            reps, _ = decomposition(cfg, kernel, p, th, [H], frame, T, dt=T / 10, rng=rng)
            qv.append(reps[0].QV[-1] / T)
        m, se = mean_se(np.asarray(qv))
        rows.append({"alpha": a, "n": n, "estimate": float(m), "stderr": float(se), "target": target,
                     "lattice_mean": lattice_mean, "rel_error": float(abs(m - target) / target)})
    ok = all(r["rel_error"] < 0.05 for r in rows)
    s = ", ".join(f"alpha={r['alpha']}: {r['estimate']:.4f} vs {r['target']:.4f} ({100 * r['rel_error']:.1f}%)"
                  for r in rows)
    return CriterionResult(6, "quadratic variation", ok, s, {"rows": rows})


# ---------------------------------------------------------------------------
# 7. decomposition identity and fourth moments


def decomposition_identity(seed: int = 0, replicas: int = 24, levels: int = 6) -> CriterionResult:
    p = ModelParams(alpha=1.2, beta=0.3, gamma=0.5, n=64, L=4096, rho=0.5, rate_id="constant")
    th = thermo(p.rho, p.rate())
    kernel = build_kernel(p)
    tests = [Gaussian(1.0), battery()[4], battery()[8]]
    frame = moving_frame(p, th)
    T = 1.0
    dt = T / 2**levels
    worst = 0.0
    paths = []
    for rng in ex.spawn_rngs(seed, replicas):
        cfg = sample_configuration(p.rho, p.L, p.rate(), rng)
        reps, _ = decomposition(cfg, kernel, p, th, tests, frame, T, dt=dt, rng=rng)
        worst = max(worst, *(r.identity_residual for r in reps))
        grid = np.linspace(0.0, T, 2**levels + 1)
        paths.append(np.interp(grid, reps[0].times, reps[0].M))
    paths = np.asarray(paths)
    ratios = []
    for k in range(levels + 1):
        step = 2**k
        inc = paths[:, step::step] - paths[:, :-step:step]
        delta = step * dt
        ratios.append(float(np.mean(inc**4) / delta**2))
    spread = max(ratios) / min(ratios)
    ok = worst < 1e-10 and spread < 10.0
    return CriterionResult(7, "decomposition identity", ok,
                           f"max relative residual {worst:.1e}, fourth-moment ratio spread {spread:.2f}",
                           {"identity_residual": worst, "fourth_moment_ratios": ratios})


# ---------------------------------------------------------------------------
# 8. Boltzmann-Gibbs


BG_ELLS = (4, 8, 16, 32)
BG_N = (64, 256)


def boltzmann_gibbs(seed: int = 0, replicas: int = 40, K: float = 16.0, width: float = 80.0) -> CriterionResult:
    studies = {"quadratic": bg.BGStudy("quadratic"), "linear": bg.BGStudy("linear")}
    shapes = {"quadratic": {}, "linear": {}}
    for i, n in enumerate(BG_N):
        p = ModelParams(alpha=1.5, beta=0.0, gamma=1.0, n=n, L=512, rho=0.5, rate_id="constant")
        th = thermo(p.rho, p.rate())
        kernel = build_kernel(p)
        lat = Lattice(p, kernel)
        h = np.exp(-0.5 * (lat.wrap(np.arange(p.L)) / width) ** 2)
        funcs = {"quadratic": bg.centered_square(th), "linear": bg.rate_fluctuation(th)}
        samples = {o: [] for o in funcs}
        rng = np.random.default_rng(seed + i)
        for _ in range(replicas):
            tr = bg.simulate(p, kernel, th, K, rng)
            for o, f in funcs.items():
                samples[o].append(bg.residual_samples([tr], f, h, BG_ELLS, K, th, o)[0])
        for o in funcs:
            m, se = mean_se(np.asarray(samples[o]))
            for j, ell in enumerate(BG_ELLS):
                studies[o].rows.append(bg.BGRow(ell, n, K, float(m[j]), float(se[j])))
                shapes[o][(ell, n)] = bg.bound_shape(p, h, ell, K, o)
    parts, ok = [], True
    for o, st in studies.items():
        st.calibrate(shapes[o], (max(BG_ELLS), min(BG_N)))
        mono = all(st.monotone(n) for n in BG_N)
        within = st.within_bound()
        ok &= mono and within
        parts.append(f"{o}: monotone={mono} within bound={within}")
    metrics = {o: [asdict(r) for r in st.rows] for o, st in studies.items()}
    return CriterionResult(8, "Boltzmann-Gibbs", ok, "; ".join(parts), metrics)


# ---------------------------------------------------------------------------
# 9. spectral gap


GAP_ALPHAS = (0.5, 1.0, 1.5)


def spectral_gap_check(seed: int = 0) -> CriterionResult:
    lin = make_rate("linear")
    ells = list(range(4, 65))
    slopes = {}
    for a in GAP_ALPHAS:
        gaps = [sg.gap(ell, 1, lin, a).gap for ell in ells]
        slopes[a] = sg.log_log_slope(ells, gaps)[0]
    worst_ratio = 0.0
    cases = 0
    for rid in RATE_IDS:
        g = make_rate(rid)
        for a in GAP_ALPHAS:
            for ell in (1, 2, 3):
                for k in range(1, 7):
                    if sg.state_count(ell, k) > 20_000:
                        continue
                    worst_ratio = max(worst_ratio, sg.gap(ell, k, g, a, shortcut=False).ratio)
                    cases += 1
    w2 = {}
    for a in GAP_ALPHAS:
        vals = [sg.sg_expectation(0.5, ell, lin, a) for ell in (2, 4, 8)]
        w2[a] = sg.log_log_slope([2, 4, 8], vals)[0]
    gap_ok = all(abs(slopes[a] + a) <= 0.15 for a in GAP_ALPHAS)
    cmp_ok = worst_ratio <= 1.0 + 1e-12
    w2_ok = all(abs(w2[a] - 2 * a) <= 0.3 for a in GAP_ALPHAS)
    s = (f"gap slopes {', '.join(f'{a}:{slopes[a]:+.3f}' for a in GAP_ALPHAS)}; comparison max ratio "
         f"{worst_ratio:.3f} over {cases} cases; E[W^2] slopes {', '.join(f'{a}:{w2[a]:.2f}' for a in GAP_ALPHAS)}")
    return CriterionResult(9, "spectral gap", gap_ok and cmp_ok and w2_ok, s,
                           {"gap_slopes": slopes, "comparison_ok": cmp_ok, "max_ratio": worst_ratio,
                            "w2_slopes": w2, "gap_ok": gap_ok, "w2_ok": w2_ok})


# ---------------------------------------------------------------------------
# 10. spectral solver


def solver_checks(seed: int = 0, replicas: int = 2000) -> CriterionResult:
    th = thermo(0.5, make_rate("constant"))
    a, Lam, J = 1.2, 16.0, 32
    rng = np.random.default_rng(seed)
    st0 = fs.initial_state(a, Lam, J, th, rng, stationary=False)
    noise = fs.NoiseSpec.for_state(st0)
    target = noise.stationary_variance(st0)
    modes = (1, 2, 4, 8, 16)
    # stationary starts: a wrong decay/noise pairing would move the variance away from target
    horizon = 5.0
    finals = {}
    lag_corr = {}
    for label, dt in (("dt", 0.1), ("dt/2", 0.05)):
        Y = np.empty((replicas, J + 1), dtype=complex)
        corr = np.empty((replicas, J + 1))
        steps = int(round(horizon / dt))
        lag = int(round(1.0 / dt))
        for r in range(replicas):
            start = fs.initial_state(a, Lam, J, th, rng)
            _, modes_t, _ = fs.simulate(start, noise, dt, steps, rng)
            Y[r] = modes_t[-1]
            corr[r] = (modes_t[-1] * np.conj(modes_t[-1 - lag])).real
        finals[label] = Y
        lag_corr[label] = corr
    zs = []
    for j in modes:
        x = np.abs(finals["dt"][:, j]) ** 2
        m, se = mean_se(x)
        zs.append(float((m - target[j]) / se))
    agree = []
    for j in modes:
        a1, s1 = mean_se(np.abs(finals["dt"][:, j]) ** 2)
        a2, s2 = mean_se(np.abs(finals["dt/2"][:, j]) ** 2)
        agree.append(float((a1 - a2) / math.hypot(s1, s2)))
        c1, e1 = mean_se(lag_corr["dt"][:, j])
        c2, e2 = mean_se(lag_corr["dt/2"][:, j])
        agree.append(float((c1 - c2) / math.hypot(e1, e2)))
    st = fs.initial_state(a, Lam, J, th, np.random.default_rng(seed + 1))
    r1, r2 = np.random.default_rng(seed + 2), np.random.default_rng(seed + 2)
    x, y = st, st
    for _ in range(200):
        x = fs.evolve(x, noise, 0.01, r1)
        y = fs.evolve_drift(y, noise, 0.7, 0.01, r2)
    drift_err = float(np.max(np.abs(y.Yhat - x.Yhat * np.exp(1j * x.k * fs.drift_speed(x, 0.7) * x.time))))
    ok = max(map(abs, zs)) < 3 and max(map(abs, agree)) < 3 and drift_err < 1e-12
    return CriterionResult(10, "spectral solver", ok,
                           f"variance max |z| {max(map(abs, zs)):.2f}, dt vs dt/2 max |z| {max(map(abs, agree)):.2f}, "
                           f"drift identity {drift_err:.1e}",
                           {"variance_z": zs, "step_z": agree, "drift_error": drift_err})


# ---------------------------------------------------------------------------
# 11. particle vs solver


COV_POINTS = ((0.8, 64), (1.2, 128), (1.6, 512))
COV_LAGS = (0.0, 0.25, 0.5, 1.0)


def covariance_suite_check(seed: int = 0, replicas: int = 16, solver_replicas: int = 64, horizon: float = 4.0,
                           dt: float = 0.05, shifts: int = 64) -> CriterionResult:
    tests = battery()
    pairs = battery_pair_indices(10, len(tests))
    per_alpha = {}
    allz = []
    for i, (a, n) in enumerate(COV_POINTS):
        p = ModelParams(alpha=a, beta=0.0, gamma=1.0, n=n, L=2**14, rho=0.5, rate_id="constant")
        _, P = ex.particle_field_series(p, tests, horizon, dt, replicas, seed + 2 * i, shifts=shifts)
        _, S = ex.solver_field_series(p, tests, horizon, dt, solver_replicas, seed + 2 * i + 1, shifts=shifts)
        cells = ex.covariance_suite(P, S, dt, pairs, COV_LAGS)
        z = np.array([c.z for c in cells])
        per_alpha[a] = float(np.mean(np.abs(z) < 3))
        allz.extend(z.tolist())
    frac = float(np.mean(np.abs(np.asarray(allz)) < 3))
    s = f"{100 * frac:.1f}% of {len(allz)} cells with |z| < 3 (" + ", ".join(
        f"alpha={a}: {100 * f:.0f}%" for a, f in per_alpha.items()) + ")"
    return CriterionResult(11, "particle vs solver", frac >= 0.9, s, {"per_alpha": per_alpha, "z": allz})


# ---------------------------------------------------------------------------
# 12. transition scan


def transition(seed: int = 0, replicas: int = 64, eps_replicas: int = 128, L: int = 4096) -> CriterionResult:
    pts12 = [ModelParams(alpha=1.2, beta=0.05, gamma=0.0, n=n, L=L, rho=0.5, rate_id="constant") for n in (16, 64, 256)]
    g16 = 1.0 - 1.5 / 1.6
    pts16 = [ModelParams(alpha=1.6, beta=0.2, gamma=g16, n=n, L=L, rho=0.5, rate_id="constant") for n in (16, 64, 256)]
    scan = ex.transition_scan(pts12 + pts16, 1.0, replicas, seed)
    dec = scan.decreasing(1.2)
    stable = scan.stable(1.6)
    p = ModelParams(alpha=1.6, beta=0.4, gamma=g16, n=256, L=L, rho=0.5, rate_id="constant")
    eps = (1.0, 0.5, 0.25)
    B, A, th = ex.drift_term_samples(p, 1.0, eps_replicas, seed + 17, eps=eps)
    BA = p.beta * th.gtilde2 * A
    gaps = [float(abs(np.mean(B**2) - np.mean(BA[:, j] ** 2))) for j in range(len(eps))]
    eps_ok = all(b < a for a, b in zip(gaps, gaps[1:]))
    plin = ModelParams(alpha=1.6, beta=0.4, gamma=g16, n=64, L=1024, rho=0.5, rate_id="linear")
    Blin, _, _ = ex.drift_term_samples(plin, 1.0, 4, seed + 23)
    zero = bool(np.all(Blin == 0.0))
    rows12 = scan.by_alpha(1.2)
    s = (f"alpha=1.2 E[B^2] {rows12[0].EB2:.2e} -> {rows12[-1].EB2:.2e} (significant={dec}); "
         f"alpha=1.6 stable={stable}; eps gaps {', '.join(f'{g:.4f}' for g in gaps)}; linear B == 0: {zero}")
    return CriterionResult(12, "transition scan", dec and stable and eps_ok and zero, s,
                           {"scan": scan.to_rows(), "eps_gaps": gaps, "linear_zero": zero,
                            "decreasing": dec, "stable": stable})


# ---------------------------------------------------------------------------
# 13. occupation time


OCC_TIMES = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0)


def occupation_time(seed: int = 0, replicas: int = 16) -> CriterionResult:
    res = {}
    for i, a in enumerate((1.5, 0.5)):
        p = ModelParams(alpha=a, beta=0.0, gamma=1.0, n=64, L=2**14, rho=0.5, rate_id="linear")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HorizonWarning)
            grid, m, se, samples = ex.occupation_time_variance(p, OCC_TIMES, replicas, seed + i)
        fit = loglog_fit(grid[1:], samples[:, 1:], rng=np.random.default_rng(seed))
        target = 2.0 - 1.0 / a if a > 1 else 1.0
        res[a] = {"slope": fit.slope, "ci": fit.ci, "target": target, "mean": m[1:], "stderr": se[1:]}
    ok = all(abs(r["slope"] - r["target"]) <= 0.15 for r in res.values())
    s = ", ".join(f"alpha={a}: slope {r['slope']:.3f} (target {r['target']:.3f})" for a, r in res.items())
    return CriterionResult(13, "occupation time", ok, s, res)


# ---------------------------------------------------------------------------


CRITERIA = {
    1: kernel_normalization,
    2: thermodynamics,
    3: stationarity,
    4: small_chain,
    5: static_covariance,
    6: quadratic_variation,
    7: decomposition_identity,
    8: boltzmann_gibbs,
    9: spectral_gap_check,
    10: solver_checks,
    11: covariance_suite_check,
    12: transition,
    13: occupation_time,
}

# Criteria that fail at desk scale for documented reasons (see the decision ledger).
KNOWN_RED = {
    8: "linear-order residual is flat in l (the l-independent nonlinear part of f dominates for smooth h); "
       "quadratic order at n=64 plateaus between l=16 and 32",
    9: "E[W^2] exponent over l in {2,4,8} is below 2 alpha by more than 0.3 for alpha >= 1 (pre-asymptotic window)",
}


def run_criterion(number: int, seed: int = 0, **kwargs) -> CriterionResult:
    t0 = time.perf_counter()
    res = CRITERIA[number](seed=seed, **kwargs)
    res.seconds = time.perf_counter() - t0
    return res


def run_all(numbers=None, seed: int = 0, out=None, echo=print) -> list[CriterionResult]:
    out_dir = Path(out) if out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for k in numbers or sorted(CRITERIA):
        r = run_criterion(k, seed)
        results.append(r)
        if echo:
            echo(r.line())
        if out_dir:
            (out_dir / f"criterion_{k:02d}.json").write_text(json.dumps(_jsonable(asdict(r)), indent=1))
    if out_dir:
        with open(out_dir / "acceptance.csv", "w") as fh:
            fh.write("criterion,title,passed,seconds,summary\n")
            for r in results:
                fh.write(f"{r.number},{r.title},{r.passed},{r.seconds:.1f},\"{r.summary}\"\n")
    return results

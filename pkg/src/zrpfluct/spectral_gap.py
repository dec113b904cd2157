"""Spectral gaps of the zero-range dynamics restricted to a window.

States of the canonical ensemble (``k`` particles on ``2l + 1`` sites) are
ranked by the colex rank of their stars-and-bars encoding, so the generator
can be assembled as a sparse matrix without hashing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit
from scipy.special import comb

from .equilibrium import fugacity_of_density, marginal
from .errors import AccuracyError, EnumerationError, ParameterError
from .model_core import RateFunction, normalize_kernel

MAX_STATES = 2_000_000
_DENSE_MAX = 1500


def state_count(ell: int, k: int) -> int:
    m = 2 * ell + 1
    return int(comb(k + m - 1, m - 1, exact=True))


def _binom_table(top: int, depth: int) -> np.ndarray:
    # ranking only reads C(a, b) with a - b < top - depth
    k = top - depth
    t = np.zeros((top + 1, depth + 1), dtype=np.int64)
    for a in range(top + 1):
        for b in range(max(0, a - k), min(a, depth) + 1):
            t[a, b] = comb(a, b, exact=True)
    return t


@njit(cache=True)
def _rank(state, binom):
    # bar positions b_j = (eta_1 + ... + eta_j) + j - 1, colex rank sum C(b_j, j)
    r = 0
    s = 0
    for j in range(state.size - 1):
        s += state[j]
        r += binom[s + j, j + 1]
    return r


@njit(cache=True)
def _enumerate(k, m, binom, count):
    out = np.zeros((count, m), dtype=np.int64)
    cur = np.zeros(m, dtype=np.int64)
    cur[m - 1] = k
    for _ in range(count):
        out[_rank(cur, binom)] = cur
        # next composition: move one unit from the last nonzero slot leftwards
        j = m - 1
        while j >= 0 and cur[j] == 0:
            j -= 1
        if j <= 0:
            break
        v = cur[j]
        cur[j] = 0
        cur[j - 1] += 1
        cur[m - 1] = v - 1
    return out


@njit(cache=True)
def _assemble(states, binom, gtab, weight):
    S, m = states.shape
    nnz = 0
    for i in range(S):
        for x in range(m):
            if states[i, x] > 0:
                nnz += m - 1
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    diag = np.zeros(S)
    cur = np.empty(m, dtype=np.int64)
    e = 0
    for i in range(S):
        for x in range(m):
            occ = states[i, x]
            if occ == 0:
                continue
            for y in range(m):
                if y == x:
                    continue
                rate = gtab[occ] * weight[abs(y - x)]
                for q in range(m):
                    cur[q] = states[i, q]
                cur[x] -= 1
                cur[y] += 1
                rows[e] = i
                cols[e] = _rank(cur, binom)
                vals[e] = rate
                diag[i] -= rate
                e += 1
    return rows, cols, vals, diag


@dataclass(frozen=True, eq=False)
class CanonicalEnsemble:
    """``nu_{k,l}``: product weights ``prod 1/g(eta(x))!`` conditioned on ``k`` particles."""

    ell: int
    k: int
    rate: RateFunction
    states: np.ndarray
    prob: np.ndarray

    @property
    def size(self) -> int:
        return 2 * self.ell + 1

    def rank(self, state) -> int:
        binom = _binom_table(self.k + self.size - 1, self.size - 1)
        return int(_rank(np.asarray(state, dtype=np.int64), binom))


def canonical_ensemble(ell: int, k: int, g: RateFunction) -> CanonicalEnsemble:
    if ell < 0 or k < 0:
        raise ParameterError("window radius and particle number must be non-negative")
    S = state_count(ell, k)
    if S > MAX_STATES:
        raise EnumerationError(f"{S} states for l={ell}, k={k} exceed the budget of {MAX_STATES}")
    m = 2 * ell + 1
    binom = _binom_table(k + m - 1, m - 1)
    states = _enumerate(k, m, binom, S)
    # log prod 1/g(j)!
    lg = np.concatenate([[0.0], np.cumsum(np.log(g(np.arange(1, k + 1))))]) if k else np.zeros(1)
    logw = -lg[states].sum(axis=1)
    w = np.exp(logw - logw.max())
    return CanonicalEnsemble(ell, k, g, states, w / w.sum())


def _jump_weights(ell: int, alpha: float, kind: str) -> np.ndarray:
    m = 2 * ell + 1
    d = np.arange(m, dtype=float)
    if kind == "long-range":
        w = np.zeros(m)
        w[1:] = normalize_kernel(alpha) * d[1:] ** (-1.0 - alpha)
        return w
    if kind == "mean-field":
        w = np.full(m, 1.0 / (2 * ell))
        w[0] = 0.0
        return w
    raise ParameterError(f"unknown chain {kind!r}")


def build_generator(ell: int, k: int, g: RateFunction, alpha: float, kind: str = "long-range", ensemble=None):
    """Sparse generator on the canonical ensemble.

    ``long-range``: a particle leaves ``x`` at rate ``g(eta(x)) s(y - x)`` for
    each ``y`` in the window.  ``mean-field``: the same with ``s`` replaced
    by the uniform weight ``1/(2l)``.  Returns ``(Q, ensemble)`` with ``Q``
    in CSR form; reversibility is checked on every nonzero.
    """
    ens = ensemble if ensemble is not None else canonical_ensemble(ell, k, g)
    if ell == 0 or k == 0:
        return sp.csr_matrix((ens.prob.size, ens.prob.size)), ens
    m = ens.size
    binom = _binom_table(k + m - 1, m - 1)
    gtab = np.asarray(g(np.arange(k + 1)), dtype=float)
    rows, cols, vals, diag = _assemble(ens.states, binom, gtab, _jump_weights(ell, alpha, kind))
    S = ens.prob.size
    idx = np.arange(S)
    Q = sp.csr_matrix((np.concatenate([vals, diag]), (np.concatenate([rows, idx]), np.concatenate([cols, idx]))), shape=(S, S))
    check_reversible(Q, ens.prob)
    return Q, ens


def check_reversible(Q, prob, tol: float = 1e-12) -> float:
    """``max |pi_i Q_ij - pi_j Q_ji|`` relative to the largest flux."""
    F = sp.diags(prob) @ Q
    F = F - sp.diags(F.diagonal())
    D = abs(F - F.T)
    scale = abs(F).max() if F.nnz else 1.0
    err = (D.max() if D.nnz else 0.0) / scale if scale else 0.0
    if err > tol:
        raise AccuracyError(f"generator is not reversible: relative flux mismatch {err:.3g}")
    return float(err)


def _symmetrized(Q, prob):
    r = np.sqrt(prob)
    return sp.diags(r) @ Q @ sp.diags(1.0 / r)


def spectral_gap(Q, prob, rtol: float = 1e-8) -> float:
    """Second-smallest eigenvalue of ``-Q`` (reversible w.r.t. ``prob``)."""
    S = prob.size
    if S == 1:
        return 0.0
    A = -_symmetrized(Q, prob)
    A = 0.5 * (A + A.T)
    if S <= _DENSE_MAX:
        ev = scipy.linalg.eigvalsh(A.toarray(), subset_by_index=[0, 1])
        lam0, lam1 = ev
    else:
        scale = float(abs(A.diagonal()).max())
        sigma = -1e-3 * scale
        ev = spla.eigsh(A.tocsc(), k=2, sigma=sigma, which="LM", tol=rtol * 1e-2, return_eigenvectors=False)
        lam0, lam1 = np.sort(ev)
    scale = max(1.0, abs(lam1))
    if abs(lam0) > 1e-10 * scale:
        raise AccuracyError(f"smallest eigenvalue {lam0:.3g} is not zero")
    return float(lam1)


def dirichlet_form(Q, prob, f) -> float:
    f = np.asarray(f, dtype=float)
    return float(-np.dot(prob * f, Q @ f))


def variance(prob, f) -> float:
    f = np.asarray(f, dtype=float)
    mu = np.dot(prob, f)
    return float(np.dot(prob, (f - mu) ** 2))


@dataclass(frozen=True)
class GapReport:
    ell: int
    k: int
    gap: float
    W: float
    mean_field_gap: float
    alpha: float

    @property
    def comparison_bound(self) -> float:
        """``r(k, l) (2l)^alpha / c_alpha`` with ``r = 1/lambda_m``."""
        if self.mean_field_gap == 0:
            return 0.0
        return (2 * self.ell) ** self.alpha / (normalize_kernel(self.alpha) * self.mean_field_gap)

    @property
    def ratio(self) -> float:
        """``W`` over its mean-field comparison bound (at most 1)."""
        b = self.comparison_bound
        return self.W / b if b else 0.0


def gap(ell: int, k: int, g: RateFunction, alpha: float, shortcut: bool = True) -> GapReport:
    """Gap of the localized long-range chain and of the mean-field chain.

    Degenerate windows (``k = 0`` or ``l = 0``) report ``W = 0``.  For linear
    rates the particles are independent, so the gap does not depend on
    ``k >= 1``; with ``shortcut`` the one-particle chain is used.
    """
    if k == 0 or ell == 0:
        return GapReport(ell, k, 0.0, 0.0, 0.0, alpha)
    kk = 1 if (shortcut and g.is_linear) else k
    ens = canonical_ensemble(ell, kk, g)
    Q, _ = build_generator(ell, kk, g, alpha, "long-range", ens)
    Qm, _ = build_generator(ell, kk, g, alpha, "mean-field", ens)
    lam = spectral_gap(Q, ens.prob)
    lam_m = spectral_gap(Qm, ens.prob)
    return GapReport(ell, k, lam, 1.0 / lam, lam_m, alpha)


def window_count_law(rho: float, ell: int, g: RateFunction, tail: float = 1e-10) -> np.ndarray:
    """Law of ``sum_{Lambda_l} eta`` under the product measure, cut where the tail is below ``tail``."""
    pmf = marginal(fugacity_of_density(rho, g), g).pmf
    law = np.ones(1)
    for _ in range(2 * ell + 1):
        law = np.convolve(law, pmf)
    law = law / law.sum()
    surv = np.cumsum(law[::-1])[::-1]
    kmax = int(np.nonzero(surv >= tail)[0][-1])
    return law[: kmax + 1]


def sg_expectation(rho: float, ell: int, g: RateFunction, alpha: float) -> float:
    """``E_{nu_rho}[W(sum_{Lambda_l} eta, l)^2]`` by exact summation over the particle number."""
    law = window_count_law(rho, ell, g)
    kmax = law.size - 1
    if not g.is_linear and state_count(ell, kmax) > MAX_STATES:
        raise EnumerationError(f"cutoff k={kmax} at l={ell} exceeds the enumeration budget")
    if g.is_linear:
        W1 = gap(ell, 1, g, alpha).W
        return float(law[1:].sum() * W1**2)
    total = 0.0
    for k in range(1, kmax + 1):
        total += law[k] * gap(ell, k, g, alpha).W ** 2
    return float(total)


def log_log_slope(x, y):
    """Least-squares slope of ``log y`` on ``log x`` with its standard error."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    n = lx.size
    if n > 2:
        s2 = float(np.sum((ly - A @ coef) ** 2)) / (n - 2)
        se = math.sqrt(s2 / np.sum((lx - lx.mean()) ** 2))
    else:
        se = math.nan
    return float(coef[0]), se


def reports_to_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ell", "k", "gap", "W", "mean_field_gap", "ratio"])
        for r in reports:
            w.writerow([r.ell, r.k, r.gap, r.W, r.mean_field_gap, r.ratio])


def log_canonical_weight(state, g: RateFunction) -> float:
    """``-sum_x log g(eta(x))!`` (unnormalized)."""
    state = np.asarray(state)
    return float(-sum(np.sum(np.log(g(np.arange(1, int(v) + 1)))) for v in state if v > 0))


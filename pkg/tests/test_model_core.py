import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from zrpfluct.errors import InfeasibleAsymmetryError, ParameterError
from zrpfluct.model_core import (
    ModelParams,
    alias_law,
    build_alias,
    build_kernel,
    make_rate,
    normalize_kernel,
    periodize,
    sample_displacement,
    sample_displacements,
    s_full,
)


class TestNormalization:
    def test_alpha_one_closed_form(self):
        # 1 / (2 zeta(2)) = 3 / pi^2
        assert normalize_kernel(1.0) == pytest.approx(3.0 / math.pi**2, abs=1e-13)

    @given(st.floats(0.05, 1.95))
    def test_matches_mpmath_zeta(self, alpha):
        ref = 1.0 / (2.0 * float(mpmath.zeta(1.0 + alpha)))
        assert normalize_kernel(alpha) == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("alpha", [0.0, 2.0, -0.5, 2.5])
    def test_rejects_out_of_range(self, alpha):
        with pytest.raises(ParameterError):
            normalize_kernel(alpha)


def brute_periodized(alpha, L, c, images=200_000):
    m = np.arange(-images, images + 1, dtype=float)
    out = np.zeros(L)
    for r in range(1, L):
        out[r] = np.sum(c * np.abs(r + m * L) ** (-1.0 - alpha))
    return out


class TestKernel:
    @pytest.mark.parametrize("alpha", [1.2, 1.8])
    def test_periodization_matches_image_sum(self, alpha):
        L = 16
        c = normalize_kernel(alpha)
        ref = brute_periodized(alpha, L, c)
        # image tail beyond M terms is of order M^{-alpha}
        tol = 2 * c * (200_000 * L) ** -alpha / alpha
        np.testing.assert_allclose(periodize(alpha, L, c), ref, atol=tol)

    @given(st.floats(0.1, 1.9), st.sampled_from([4, 16, 64, 1000]))
    def test_periodized_law_is_symmetric_probability(self, alpha, L):
        k = build_kernel(ModelParams(alpha=alpha, L=L))
        assert k.s_per[0] == 0.0
        assert k.s_per.sum() == pytest.approx(1.0, abs=1e-14)
        np.testing.assert_allclose(k.s_per[1:], k.s_per[1:][::-1], rtol=1e-13)
        assert np.all(k.p[1:] > 0)

    @given(st.floats(0.3, 1.9), st.floats(0.0, 0.5), st.floats(0.0, 1.5), st.sampled_from([16, 64, 256]))
    def test_asymmetric_part_is_nearest_neighbour(self, alpha, beta, gamma, n):
        p = ModelParams(alpha=alpha, beta=beta, gamma=gamma, n=n, L=64)
        try:
            k = build_kernel(p)
        except InfeasibleAsymmetryError:
            return
        assert k.p[1] - k.p[-1] == pytest.approx(2 * beta / n**gamma, abs=1e-14)
        anti = k.p - k.s_per
        anti[1] = anti[-1] = 0.0
        assert np.max(np.abs(anti)) < 1e-15
        assert k.p.sum() == pytest.approx(1.0, abs=1e-14)

    def test_infeasible_asymmetry_raises(self):
        with pytest.raises(InfeasibleAsymmetryError):
            build_kernel(ModelParams(alpha=1.5, beta=0.5, n=1, L=64))

    def test_two_site_torus_always_jumps_by_one(self, rng):
        k = build_kernel(ModelParams(alpha=1.0, L=2))
        d = sample_displacements(k, rng, 1000)
        assert np.all(np.abs(d) == 1)

    def test_continuum_law_scaling(self):
        c = normalize_kernel(1.3)
        y = np.array([0.5, 1.0, 3.0])
        np.testing.assert_allclose(s_full(2 * y, 1.3), 2.0**-2.3 * s_full(y, 1.3), rtol=1e-14)
        assert s_full(0.0, 1.3) == 0.0
        assert s_full(1.0, 1.3) == pytest.approx(c)


class TestAlias:
    @given(st.lists(st.floats(1e-6, 10.0), min_size=1, max_size=60))
    def test_alias_law_reproduces_distribution(self, weights):
        p = np.asarray(weights) / np.sum(weights)
        acc, ali = build_alias(p)
        np.testing.assert_allclose(alias_law(acc, ali), p, atol=1e-14)

    @pytest.mark.slow
    def test_sampled_frequencies_chi_square(self):
        k = build_kernel(ModelParams(alpha=1.2, beta=0.2, gamma=0.0, n=1, L=32))
        rng = np.random.default_rng(7)
        d = sample_displacements(k, rng, 4_000_000)
        counts = np.bincount(np.mod(d, k.L), minlength=k.L)[1:]
        expected = k.p[1:] * d.size
        _, pv = stats.chisquare(counts, expected)
        assert pv > 1e-3

    def test_scalar_and_vector_samplers_agree_in_law(self):
        k = build_kernel(ModelParams(alpha=0.8, L=8))
        rng = np.random.default_rng(3)
        one = np.array([sample_displacement(k, rng) for _ in range(20000)])
        assert set(np.unique(one)) <= set(k.signed(np.arange(1, 8)).tolist())
        # the antipode L/2 is represented as +L/2, so the mean is 4 s_per[4]
        exact = float(np.dot(k.signed(np.arange(8)), k.p))
        assert exact == pytest.approx(4 * k.s_per[4])
        assert one.mean() == pytest.approx(exact, abs=5 * one.std() / np.sqrt(one.size))


class TestRates:
    @pytest.mark.parametrize("rid", ["constant", "linear", "power", "bounded-increments"])
    def test_zero_at_zero_and_lipschitz(self, rid):
        g = make_rate(rid)
        t = g.table(200)
        assert t[0] == 0.0
        assert np.all(t[1:] > 0)
        assert np.max(np.abs(np.diff(t))) <= g.lip_const + 1e-12
        assert np.all(np.diff(t) >= 0)

    def test_bounded_increments_class(self):
        inc = np.diff(make_rate("bounded-increments").table(500))[1:]
        assert inc.min() >= 1.0 and inc.max() <= 1.5

    def test_theta_star(self):
        assert make_rate("constant").theta_star == 1.0
        assert math.isinf(make_rate("linear").theta_star)

    @pytest.mark.parametrize("kw", [dict(alpha=2.0), dict(alpha=1.0, L=7), dict(alpha=1.0, n=0),
                                    dict(alpha=1.0, rho=0.0), dict(alpha=1.0, rate_id="cubic"),
                                    dict(alpha=1.0, beta=-1.0)])
    def test_params_validation(self, kw):
        with pytest.raises(ParameterError):
            ModelParams(**kw)

    def test_burgers_gamma(self):
        assert ModelParams.burgers_gamma(1.5) == pytest.approx(0.0)
        assert ModelParams(alpha=1.5, n=16).scale == pytest.approx(16 ** (1 / 1.5))

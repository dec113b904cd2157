import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from zrpfluct import fou_solver as fs
from zrpfluct.equilibrium import thermo
from zrpfluct.errors import InstabilityError, ParameterError
from zrpfluct.fields.operators import C_alpha
from zrpfluct.fields.testfunctions import Gaussian, ModulatedGaussian
from zrpfluct.model_core import make_rate, normalize_kernel

TH_CONST = thermo(0.5, make_rate("constant"))
TH_LIN = thermo(0.5, make_rate("linear"))


def state(alpha=1.2, Lam=16.0, J=16, th=TH_CONST, rng=None, stationary=False, convention="microscopic"):
    return fs.initial_state(alpha, Lam, J, th, rng, stationary=stationary, convention=convention)


class TestSymbol:
    def test_zero_mode(self):
        assert fs.symbol(1.3, 0.0) == 0.0

    @given(st.floats(0.1, 1.9), st.floats(0.01, 50.0))
    def test_homogeneity(self, alpha, k):
        assert fs.symbol(alpha, k) / fs.symbol(alpha, 2 * k) == pytest.approx(2.0**-alpha, rel=1e-12)

    def test_alpha_one(self):
        k = np.array([0.5, 1.0, 4.0])
        np.testing.assert_allclose(fs.symbol(1.0, k), -normalize_kernel(1.0) * math.pi * k, rtol=1e-10)

    def test_non_positive(self):
        st_ = state()
        assert st_.lam[0] == 0.0 and np.all(st_.lam[1:] < 0)


class TestLinearEvolution:
    def test_no_noise_stays_at_zero(self, rng):
        st_ = state()
        noise = fs.NoiseSpec(np.zeros(st_.J + 1))
        for _ in range(10):
            st_ = fs.evolve(st_, noise, 0.1, rng)
        assert np.all(st_.Yhat == 0) and st_.time == pytest.approx(1.0)

    def test_noise_spec_invariants(self):
        st_ = state()
        for conv in ("microscopic", "literal"):
            D = fs.NoiseSpec.for_state(st_, conv).D
            assert D[0] == 0.0 and np.all(D >= 0)
        with pytest.raises(ParameterError):
            fs.NoiseSpec.for_state(st_, "other")

    def test_stationary_level_is_white_noise(self):
        st_ = state()
        v = fs.NoiseSpec.for_state(st_).stationary_variance(st_)
        np.testing.assert_allclose(v[1:], TH_CONST.sigma2 * st_.Lam, rtol=1e-12)
        v_lit = fs.NoiseSpec.for_state(st_, "literal").stationary_variance(st_)
        np.testing.assert_allclose(v_lit[1:], TH_CONST.sigma2**2 * st_.Lam, rtol=1e-12)

    def test_evolve_matches_simulate(self):
        st_ = state(rng=np.random.default_rng(0), stationary=True)
        noise = fs.NoiseSpec.for_state(st_)
        a = st_
        r1 = np.random.default_rng(5)
        for _ in range(7):
            a = fs.evolve(a, noise, 0.03, r1)
        _, _, b = fs.simulate(st_, noise, 0.03, 7, np.random.default_rng(5))
        np.testing.assert_array_equal(a.Yhat, b.Yhat)

    def test_relaxation_to_stationary_variance(self):
        # long run from zero; modes are exact OU so any dt is admissible
        st0 = state(J=8)
        noise = fs.NoiseSpec.for_state(st0)
        target = noise.stationary_variance(st0)
        burn = 10.0 / fs.ou_autocorrelation_rate(st0, 1)
        rng = np.random.default_rng(2)
        _, _, st1 = fs.simulate(st0, noise, burn, 1, rng)
        dt = 0.5
        _, modes, _ = fs.simulate(st1, noise, dt, 40_000, rng)
        emp = np.mean(np.abs(modes[1:]) ** 2, axis=0)
        # autocorrelated samples: effective count per mode from the OU correlation time
        for j in range(1, 9):
            rho1 = math.exp(-fs.ou_autocorrelation_rate(st0, j) * dt)
            n_eff = 40_000 * (1 - rho1**2) / (1 + rho1**2)
            assert abs(emp[j] / target[j] - 1) < 4 / math.sqrt(n_eff)

    def test_autocorrelation_rate(self):
        st0 = state(J=2, rng=np.random.default_rng(3), stationary=True)
        noise = fs.NoiseSpec.for_state(st0)
        rate = fs.ou_autocorrelation_rate(st0, 1)
        dt = 0.1 / rate
        _, modes, _ = fs.simulate(st0, noise, dt, 400_000, np.random.default_rng(4))
        lags = np.arange(1, 11)
        x = np.stack([modes[:, 1].real, modes[:, 1].imag])
        c0 = np.mean(x * x)
        acf = np.array([np.mean(x[:, :-l] * x[:, l:]) for l in lags]) / c0
        fit = -np.polyfit(lags * dt, np.log(acf), 1)[0]
        assert fit == pytest.approx(rate, rel=0.02)

    def test_modes_uncorrelated(self):
        st0 = state(J=6)
        noise = fs.NoiseSpec.for_state(st0)
        rng = np.random.default_rng(6)
        finals = np.array([fs.simulate(st0, noise, 2.0, 1, rng)[2].Yhat for _ in range(4000)])
        for i, j in [(1, 2), (2, 5), (3, 4)]:
            prod = (finals[:, i] * np.conj(finals[:, j])).real
            assert abs(prod.mean()) < 4 * prod.std() / math.sqrt(prod.size)

    def test_dt_exactness(self):
        st0 = state(J=4)
        noise = fs.NoiseSpec.for_state(st0)
        v = []
        for dt, steps in ((0.4, 5), (0.2, 10)):
            rng = np.random.default_rng(int(dt * 10))
            f = np.array([fs.simulate(st0, noise, dt, steps, rng)[2].Yhat for _ in range(4000)])
            v.append(np.abs(f) ** 2)
        diff = v[0].mean(axis=0) - v[1].mean(axis=0)
        se = np.sqrt(v[0].var(axis=0) / 4000 + v[1].var(axis=0) / 4000)
        assert np.all(np.abs(diff[1:]) < 4 * se[1:])

    def test_bad_arguments(self, rng):
        st_ = state()
        noise = fs.NoiseSpec.for_state(st_)
        with pytest.raises(ParameterError):
            fs.evolve(st_, noise, 0.0, rng)
        with pytest.raises(ParameterError):
            fs.simulate(st_, noise, 0.1, 2, rng, variant="kpz")


class TestDrift:
    def test_beta_zero_is_plain_evolution(self):
        st0 = state(rng=np.random.default_rng(0), stationary=True)
        noise = fs.NoiseSpec.for_state(st0)
        _, a, _ = fs.simulate(st0, noise, 0.05, 20, np.random.default_rng(1), beta=0.0, variant="drift")
        _, b, _ = fs.simulate(st0, noise, 0.05, 20, np.random.default_rng(1))
        np.testing.assert_array_equal(a, b)

    def test_drift_is_a_frame_rotation(self):
        st0 = state(rng=np.random.default_rng(0), stationary=True)
        noise = fs.NoiseSpec.for_state(st0)
        beta = 0.7
        t, a, _ = fs.simulate(st0, noise, 0.05, 20, np.random.default_rng(1), beta=beta, variant="drift")
        _, b, _ = fs.simulate(st0, noise, 0.05, 20, np.random.default_rng(1))
        c = fs.drift_speed(st0, beta)
        rot = b * np.exp(1j * np.outer(t, st0.k) * c)
        np.testing.assert_allclose(a, rot, atol=1e-12 * np.max(np.abs(b)))

    def test_single_step_api_agrees(self):
        st0 = state(rng=np.random.default_rng(0), stationary=True)
        noise = fs.NoiseSpec.for_state(st0)
        a = st0
        r = np.random.default_rng(2)
        for _ in range(5):
            a = fs.evolve_drift(a, noise, 0.4, 0.1, r)
        _, _, b = fs.simulate(st0, noise, 0.1, 5, np.random.default_rng(2), beta=0.4, variant="drift")
        np.testing.assert_allclose(a.Yhat, b.Yhat, atol=1e-12)

    def test_drift_preserves_stationary_variance(self):
        st0 = state(J=4)
        noise = fs.NoiseSpec.for_state(st0)
        target = noise.stationary_variance(st0)
        rng = np.random.default_rng(8)
        f = []
        for _ in range(3000):
            s = fs.initial_state(1.2, 16.0, 4, TH_CONST, rng)
            f.append(fs.simulate(s, noise, 0.2, 5, rng, beta=1.0, variant="drift")[2].Yhat)
        emp = np.mean(np.abs(np.asarray(f)) ** 2, axis=0)
        # |Y|^2 of a complex Gaussian is exponential: s.e. = target / sqrt(N)
        assert np.all(np.abs(emp[1:] / target[1:] - 1) < 4 / math.sqrt(3000))


class TestBurgers:
    def test_linear_rate_reduces_to_evolve(self):
        st0 = state(th=TH_LIN, rng=np.random.default_rng(0), stationary=True)
        assert st0.gtilde2 == pytest.approx(0.0, abs=1e-6)
        st0 = fs.SpectralState(st0.alpha, st0.Lam, st0.Yhat, st0.gtilde, st0.gtilde1, 0.0, st0.sigma2)
        noise = fs.NoiseSpec.for_state(st0)
        a = fs.evolve_burgers(st0, noise, 1.0, 0.05, np.random.default_rng(1))
        b = fs.evolve(st0, noise, 0.05, np.random.default_rng(1))
        np.testing.assert_array_equal(a.Yhat, b.Yhat)

    def test_quadratic_term_conserves_zero_mode(self):
        rng = np.random.default_rng(2)
        Y = rng.standard_normal(17) + 1j * rng.standard_normal(17)
        Y[0] = 0.3
        assert fs._nonlinear(Y, 16.0, 2.5)[0] == 0.0
        st0 = fs.initial_state(1.6, 16.0, 16, TH_CONST, rng)
        st0 = fs.SpectralState(st0.alpha, st0.Lam, Y, st0.gtilde, st0.gtilde1, st0.gtilde2, st0.sigma2)
        out = fs.evolve_burgers(st0, fs.NoiseSpec.for_state(st0), 0.5, 0.01, rng)
        assert out.Yhat[0] == Y[0]

    def test_nonlinear_term_matches_direct_product(self):
        # grad(Y^2) for a two-mode field, computed by hand
        Lam = 2 * math.pi
        Y = np.zeros(9, dtype=complex)
        Y[1] = Lam / 2  # Y(x) = cos x
        out = fs._nonlinear(Y, Lam, 1.0)
        # cos^2 x = 1/2 + cos(2x)/2, derivative -sin(2x): coefficient of e^{2ix} is i, times Lam/2
        expected = np.zeros(9, dtype=complex)
        expected[2] = 1j * Lam / 2
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_blow_up_detected(self):
        rng = np.random.default_rng(3)
        st0 = fs.initial_state(1.6, 16.0, 16, TH_CONST, rng)
        big = fs.SpectralState(st0.alpha, st0.Lam, st0.Yhat * 1e4, st0.gtilde, st0.gtilde1, st0.gtilde2, st0.sigma2)
        with pytest.raises(InstabilityError):
            fs.simulate(big, fs.NoiseSpec.for_state(big), 1.0, 50, rng, beta=50.0, variant="burgers")


class TestFieldAccess:
    def test_reality(self):
        st_ = state(rng=np.random.default_rng(0), stationary=True)
        M = 64
        full = np.zeros(M, dtype=complex)
        full[: st_.J + 1] = st_.Yhat
        full[M - st_.J:] = np.conj(st_.Yhat[1:][::-1])
        y = np.fft.ifft(full) * M / st_.Lam
        assert np.max(np.abs(y.imag)) < 1e-10 * np.max(np.abs(y.real))
        _, real = st_.field(M)
        np.testing.assert_allclose(real, y.real, atol=1e-12)

    def test_pairing_against_quadrature(self):
        st_ = state(rng=np.random.default_rng(1), stationary=True)
        H = ModulatedGaussian(1.0, 1.0, center=0.0)
        x, y = st_.field(4096)
        xs = np.mod(x + st_.Lam / 2, st_.Lam) - st_.Lam / 2
        direct = float(np.sum(y * H(xs)) * st_.Lam / 4096)
        # the pairing projects H onto the resolved modes; the Gaussian tail beyond J is below 1e-12
        assert st_.pair(H) == pytest.approx(direct, rel=1e-9, abs=1e-12)

    def test_coarse_grid_rejected(self):
        with pytest.raises(ParameterError):
            state(J=16).field(20)

    def test_test_coefficients_gaussian(self):
        Lam, J = 40.0, 8
        c = fs.test_coefficients(Gaussian(1.0), Lam, J)
        k = 2 * math.pi * np.arange(J + 1) / Lam
        np.testing.assert_allclose(c.real, math.sqrt(2 * math.pi) * np.exp(-k**2 / 2), atol=1e-12)

    def test_macroscopic_length(self):
        assert fs.macroscopic_length(1024, 16, 1.0) == 64.0
        assert C_alpha(1.0) == pytest.approx(math.pi)

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import gamma as Gamma

from zrpfluct.equilibrium import sample_configuration, thermo
from zrpfluct.errors import AliasingWarning, ParameterError, ResolutionError
from zrpfluct.fields.estimators import (
    EnergyAccumulator,
    FieldFrame,
    Lattice,
    decomposition,
    decomposition_schedule,
    energy_functional,
    eval_field,
    moving_frame,
    static_covariance_target,
)
from zrpfluct.fields.operators import C_alpha, discrete_ops, fourier_symbol, frac_laplacian, quadratic_energy
from zrpfluct.fields.testfunctions import (
    CosineMode,
    Gaussian,
    ModulatedGaussian,
    MollifierFamily,
    Polynomial,
    battery,
    battery_pair_indices,
    battery_pairs,
)
from zrpfluct.kmc import run
from zrpfluct.model_core import ModelParams, build_kernel, make_rate, normalize_kernel


def C_closed(alpha):
    return math.pi if alpha == 1.0 else float(-2.0 * Gamma(-alpha) * math.cos(math.pi * alpha / 2))


class TestDiscreteOps:
    def test_affine_has_zero_second_difference(self):
        H = Polynomial((0.3, -1.7))
        lap, *_ = discrete_ops(H, 16, np.arange(-5, 6), np.arange(1, 12), 1.3)
        np.testing.assert_allclose(lap, 0.0, atol=1e-12)

    def test_square_algebra(self):
        lap, grad, fwd, dxy = discrete_ops(Polynomial((0.0, 0.0, 1.0)), 1, 0, 3, 1.0)
        assert lap == 18.0 and grad == 0.0
        assert fwd == 1.0 and dxy == 9.0

    def test_gradient_converges_to_derivative(self):
        H = ModulatedGaussian(1e6, 1.0, phase=-math.pi / 2)  # sin on the window of interest
        x = np.arange(-40, 41)
        errs = []
        for n in (16, 64, 256):
            _, grad, _, _ = discrete_ops(H, n, x, 1, 1.0)
            errs.append(np.max(np.abs(grad - np.cos(x / n))))
        assert errs[0] < 16.0**-2 and errs[1] < 64.0**-2 and errs[2] < 256.0**-2
        assert errs[0] > errs[1] > errs[2]


class TestTestFunctions:
    @given(st.sampled_from(battery()), st.integers(1, 4))
    def test_derivatives_match_finite_differences(self, H, m):
        x = np.random.default_rng(m).uniform(-3, 3, 100)
        h = 1e-5
        fd = (H.deriv(x + h, m - 1) - H.deriv(x - h, m - 1)) / (2 * h)
        np.testing.assert_allclose(H.deriv(x, m), fd, atol=1e-6 * max(1.0, np.max(np.abs(fd))))

    def test_decay_certificate_finite(self):
        for H in battery():
            c = H.decay_certificate()
            assert math.isfinite(c) and c > 0

    def test_cutoff_is_a_decay_bound(self):
        H = ModulatedGaussian(0.7, 2.0)
        x = np.array([H.cutoff, -H.cutoff, 1.5 * H.cutoff])
        assert np.all(np.abs(H(x)) < 1e-14)

    def test_battery_pairs(self):
        pairs = battery_pairs(10)
        idx = battery_pair_indices(10, 9)
        assert len(pairs) == len(set(idx)) == 10
        assert all(i <= j for i, j in idx)

    def test_bad_width(self):
        with pytest.raises(ParameterError):
            Gaussian(0.0)


class TestFractionalLaplacian:
    @pytest.mark.parametrize("alpha", [0.3, 0.8, 1.0, 1.5, 1.9])
    def test_C_alpha_closed_form(self, alpha):
        assert C_alpha(alpha) == pytest.approx(C_closed(alpha), rel=1e-9)

    def test_C_one_is_pi(self):
        assert C_alpha(1.0) == pytest.approx(math.pi, abs=1e-10)

    @pytest.mark.parametrize("alpha", [0.5, 1.2, 1.7])
    @pytest.mark.parametrize("k", [0.5, 1.0, 3.0])
    def test_cosine_eigenfunction(self, alpha, k):
        H = CosineMode(k, 0.3)
        for x in (0.0, 0.7, -2.1):
            expected = float(fourier_symbol(alpha, k)) * float(H(x))
            assert frac_laplacian(H, x, alpha) == pytest.approx(expected, abs=1e-8)

    def test_constant_maps_to_zero(self):
        assert frac_laplacian(CosineMode(0.0), 0.4, 1.3) == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize("alpha", [0.6, 1.4])
    def test_evenness_preserved(self, alpha):
        H = ModulatedGaussian(1.0, 2.0)
        for x in (0.3, 1.1, 2.5):
            assert frac_laplacian(H, x, alpha) == pytest.approx(frac_laplacian(H, -x, alpha), abs=1e-10)

    @pytest.mark.parametrize("alpha", [0.6, 1.4])
    def test_gaussian_against_fourier_inversion(self, alpha):
        # Delta^{a/2} H(0) = (1/2pi) int lambda(xi) H_hat(xi) d xi for H = exp(-x^2/2)
        c = normalize_kernel(alpha)
        ref = -c * C_alpha(alpha) * 2 ** (alpha / 2) * Gamma((1 + alpha) / 2) / math.sqrt(math.pi)
        assert frac_laplacian(Gaussian(1.0), 0.0, alpha) == pytest.approx(ref, rel=1e-7)

    @given(st.floats(0.2, 1.9), st.floats(0.1, 10.0), st.floats(1.1, 3.0))
    def test_symbol_homogeneity(self, alpha, k, lam):
        assert fourier_symbol(alpha, lam * k) == pytest.approx(lam**alpha * fourier_symbol(alpha, k), rel=1e-12)


class TestQuadraticEnergy:
    @pytest.mark.parametrize("alpha", [0.5, 1.2, 1.8])
    @pytest.mark.parametrize("w", [1.0, 2.0])
    def test_gaussian_closed_form(self, alpha, w):
        ref = normalize_kernel(alpha) * C_closed(alpha) * Gamma((1 + alpha) / 2) * w ** (1 - alpha)
        assert quadratic_energy(Gaussian(w), alpha) == pytest.approx(ref, rel=1e-7)

    def test_quadratic_scaling_in_amplitude(self):
        a = quadratic_energy(Gaussian(1.0), 1.1)
        assert quadratic_energy(Gaussian(1.0, amplitude=3.0), 1.1) == pytest.approx(9 * a, rel=1e-9)


class TestFields:
    P = ModelParams(alpha=1.2, beta=0.3, gamma=0.5, n=16, L=1024, rho=0.5, rate_id="linear")

    def test_zero_velocity_moving_frame_is_fixed(self, rng):
        occ = sample_configuration(0.5, self.P.L, self.P.rate(), rng).occ
        H = ModulatedGaussian(1.0, 1.0)
        a = eval_field(occ, H, FieldFrame.fixed(), 0.7, self.P)
        b = eval_field(occ, H, FieldFrame.moving(0.0), 0.7, self.P)
        assert a == b

    def test_beta_zero_frame(self):
        p = ModelParams(alpha=1.2, n=16, L=256, rate_id="linear")
        assert moving_frame(p, thermo(0.5, p.rate())).velocity == 0.0

    def test_fixed_frame_rejects_velocity(self):
        with pytest.raises(ParameterError):
            FieldFrame("fixed", 1.0)

    def test_constant_configuration_centering(self):
        p = ModelParams(alpha=1.0, n=4, L=512, rho=2.0)
        occ = np.full(p.L, 2)
        assert eval_field(occ, ModulatedGaussian(1.0, 1.0), FieldFrame.fixed(), 0.0, p) == 0.0

    def test_field_mean_zero_under_product_measure(self):
        H = Gaussian(1.0)
        vals = [eval_field(sample_configuration(0.5, self.P.L, self.P.rate(), np.random.default_rng(s)).occ,
                           H, FieldFrame.fixed(), 0.0, self.P) for s in range(400)]
        vals = np.asarray(vals)
        assert abs(vals.mean()) < 4 * vals.std(ddof=1) / math.sqrt(vals.size)

    def test_static_covariance_matches_riemann_sum(self):
        p = ModelParams(alpha=1.2, n=64, L=2048, rho=0.5, rate_id="constant")
        th = thermo(0.5, p.rate())
        G, H = Gaussian(1.0), ModulatedGaussian(2.0, 1.0)
        lat = Lattice(p)
        prods = []
        for s in range(600):
            occ = sample_configuration(0.5, p.L, p.rate(), np.random.default_rng(s)).occ
            prods.append(eval_field(occ, G, FieldFrame.fixed(), 0, p, lat) * eval_field(occ, H, FieldFrame.fixed(), 0, p, lat))
        prods = np.asarray(prods)
        target = static_covariance_target(G, H, p, th.sigma2, lat)
        assert abs(prods.mean() - target) < 4 * prods.std(ddof=1) / math.sqrt(prods.size)
        # Riemann sum approaches the integral sigma^2 int G H
        integral = th.sigma2 * math.sqrt(2 * math.pi) * math.exp(-0.5 * 0.8) * math.sqrt(0.8)
        assert target == pytest.approx(integral, rel=1e-6)

    def test_aliasing_warning(self):
        p = ModelParams(alpha=1.0, n=64, L=64)
        with pytest.warns(AliasingWarning):
            eval_field(np.zeros(64), Gaussian(1.0), FieldFrame.fixed(), 0.0, p)


class TestDecomposition:
    def run_one(self, rate_id, seed, params=None, horizon=0.5, tests=None):
        p = params or ModelParams(alpha=1.2, beta=0.3, gamma=0.5, n=16, L=1024, rho=0.5, rate_id=rate_id)
        th = thermo(p.rho, p.rate())
        rng = np.random.default_rng(seed)
        cfg = sample_configuration(p.rho, p.L, p.rate(), rng)
        tests = tests or battery()[:4]
        reps, _ = decomposition(cfg, build_kernel(p), p, th, tests, moving_frame(p, th), horizon, dt=0.01, rng=rng)
        return reps

    @pytest.mark.parametrize("rate_id", ["linear", "constant", "power"])
    def test_identity_closes(self, rate_id):
        for rep in self.run_one(rate_id, 1):
            assert rep.identity_residual < 1e-10
            np.testing.assert_allclose(rep.M, rep.Y - rep.Y[0] - rep.I - rep.B - rep.K, atol=0)

    def test_linear_rate_has_no_drift_term(self):
        for rep in self.run_one("linear", 2):
            assert np.all(rep.B == 0.0)

    def test_constant_rate_has_drift_term(self):
        assert any(np.any(rep.B != 0.0) for rep in self.run_one("constant", 2))

    def test_martingale_mean_zero(self):
        M = np.asarray([[rep.M[-1] for rep in self.run_one("constant", s)] for s in range(40)])
        se = M.std(axis=0, ddof=1) / math.sqrt(M.shape[0])
        assert np.all(np.abs(M.mean(axis=0)) < 4 * se)

    @pytest.mark.slow
    def test_kappa_term_shrinks_with_n(self):
        sizes = []
        for n in (16, 64, 256):
            p = ModelParams(alpha=1.2, beta=0.3, gamma=0.5, n=n, L=4096, rho=0.5, rate_id="constant")
            K = [rep.K[-1] for s in range(8) for rep in self.run_one("constant", s, p, horizon=0.2, tests=[Gaussian(1.0)])]
            sizes.append(np.sqrt(np.mean(np.square(K))))
        assert sizes[0] > sizes[1] > sizes[2]

    def test_schedule_includes_lattice_jumps(self):
        t = decomposition_schedule(1.0, 0.25, FieldFrame.moving(3.0))
        for j in (1 / 3, 2 / 3):
            assert np.min(np.abs(t - j)) < 1e-12
        assert t[0] == 0.0 and t[-1] == 1.0

    def test_csv_export(self, tmp_path):
        rep = self.run_one("linear", 3, horizon=0.05)[0]
        rep.to_csv(tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0].startswith("H_id") and len(lines) == rep.times.size + 1


class TestMollifiers:
    def test_norm_bound_and_convergence(self):
        fam = MollifierFamily()
        checks = [fam.check(e) for e in fam.eps_grid]
        assert all(c["norm_bound_ok"] for c in checks)
        diffs = [c["scaled_diff"] for c in checks]
        assert all(a > b for a, b in zip(diffs, diffs[1:]))
        # squared error ~ half-width / eps^2 = eps^2 / 8, so the scaled gap decays like eps^{1/2}
        for a, b in zip(diffs, diffs[1:]):
            assert b / a == pytest.approx(math.sqrt(0.5), rel=1e-3)

    def test_iota_is_normalized_box(self):
        f = MollifierFamily().iota(0.5)
        assert f(0.0) == 1.0 and f(0.6) == 0.0


class TestEnergyFunctional:
    P = ModelParams(alpha=1.6, beta=0.2, gamma=ModelParams.burgers_gamma(1.6), n=256, L=4096, rate_id="constant")

    def snapshots(self, T=0.1, k=11):
        rng = np.random.default_rng(0)
        cfg = sample_configuration(0.5, self.P.L, self.P.rate(), rng)
        tr = run(cfg, build_kernel(self.P), T, np.linspace(0, T, k), rng=rng)
        return tr.times, tr.snapshots

    def test_constant_H_gives_zero(self):
        t, snaps = self.snapshots()
        fr = moving_frame(self.P, thermo(0.5, self.P.rate()))
        assert energy_functional(t, snaps, self.P, Polynomial((1.0,)), 0.5, 0.0, 0.1, fr) == 0.0

    def test_empty_interval(self):
        t, snaps = self.snapshots()
        fr = moving_frame(self.P, thermo(0.5, self.P.rate()))
        assert energy_functional(t, snaps, self.P, Gaussian(1.0), 0.5, 0.05, 0.05, fr) == 0.0

    def test_resolution_error(self):
        with pytest.raises(ResolutionError):
            EnergyAccumulator(self.P, Gaussian(1.0), [0.01], FieldFrame.fixed())

    def test_additive_in_time(self):
        t, snaps = self.snapshots()
        fr = moving_frame(self.P, thermo(0.5, self.P.rate()))
        H = ModulatedGaussian(1.0, 1.0)
        whole = energy_functional(t, snaps, self.P, H, 0.5, 0.0, 0.1, fr)
        parts = (energy_functional(t, snaps, self.P, H, 0.5, 0.0, 0.05, fr)
                 + energy_functional(t, snaps, self.P, H, 0.5, 0.05, 0.1, fr))
        assert whole == pytest.approx(parts, rel=1e-12)

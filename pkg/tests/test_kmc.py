import math

import numpy as np
import pytest
from scipy import stats

from zrpfluct.equilibrium import sample_configuration, thermo
from zrpfluct.errors import AbsorbingStateError, ParameterError, PartialTrajectoryWarning
from zrpfluct.kmc import Configuration, SnapshotWriter, read_snapshots, run, step
from zrpfluct.model_core import ModelParams, build_kernel, make_rate

LINEAR = make_rate("linear")
CONSTANT = make_rate("constant")


def kernel(alpha=1.2, L=32, beta=0.0, gamma=0.0, n=1):
    return build_kernel(ModelParams(alpha=alpha, beta=beta, gamma=gamma, n=n, L=L))


class TestConfiguration:
    def test_weights_and_audit(self):
        c = Configuration([0, 3, 1, 0], CONSTANT)
        assert c.total_particles == 4
        assert c.total_weight == 2.0
        assert c.total_rate(5) == 10.0
        assert c.audit()

    @pytest.mark.parametrize("occ", [[], [1, -1], [[1, 2]]])
    def test_rejects_bad_occupancy(self, occ):
        with pytest.raises(ParameterError):
            Configuration(occ, LINEAR)

    def test_kernel_size_mismatch(self):
        with pytest.raises(ParameterError):
            run(Configuration(np.ones(8), LINEAR), kernel(L=16), 1.0)


class TestStep:
    def test_empty_lattice_is_absorbing(self, rng):
        with pytest.raises(AbsorbingStateError):
            step(Configuration(np.zeros(4), LINEAR), kernel(L=4), rng)

    def test_source_frequencies(self, rng):
        k = kernel(L=4)
        hits = np.zeros(4)
        trials = 30_000
        for _ in range(trials):
            _, src, _ = step(Configuration([2, 1, 0, 0], LINEAR), k, rng)
            hits[src] += 1
        assert hits[2] == hits[3] == 0
        f = hits[0] / trials
        assert abs(f - 2 / 3) < 4 * math.sqrt(2 / 9 / trials)

    def test_step_moves_one_particle(self, rng):
        c = Configuration([3, 0, 0, 0, 0, 0], LINEAR)
        _, src, d = step(c, kernel(L=6), rng)
        assert src == 0 and c.occ.sum() == 3
        assert c.occ[(src + d) % 6] == 1
        assert c.audit()


class TestRun:
    def test_zero_horizon(self, rng):
        c = Configuration([1, 2, 0, 4], LINEAR)
        tr = run(c, kernel(L=4), 0.0, rng=rng)
        assert tr.n_events == 0
        np.testing.assert_array_equal(tr.snapshots[0], [1, 2, 0, 4])
        np.testing.assert_array_equal(tr.final, [1, 2, 0, 4])

    def test_single_particle_waiting_time(self):
        c = Configuration([1] + [0] * 15, CONSTANT)
        tr = run(c, kernel(L=16), 2e6, seed=5, log_events=3_000_000)
        w = np.diff(np.concatenate([[0.0], tr.event_times]))
        assert w.size > 10**6
        assert abs(w.mean() - 1.0) < 4 * w.std() / math.sqrt(w.size)
        assert np.all(w > 0)
        assert stats.kstest(w[:100_000], "expon").pvalue > 1e-3

    def test_particle_conservation_and_audit(self, rng):
        g = make_rate("power")
        c = sample_configuration(1.5, 64, g, rng)
        n0 = c.total_particles
        tr = run(c, kernel(alpha=0.7, L=64, beta=0.3, gamma=1.0, n=16), 5.0, np.linspace(0, 5, 11), rng=rng)
        assert all(s.sum() == n0 for s in tr.snapshots)
        assert tr.n_events > 0
        assert c.audit()

    def test_deterministic_replay(self):
        k = kernel(L=64, beta=0.2, n=4)
        logs = []
        for _ in range(2):
            c = sample_configuration(0.8, 64, LINEAR, np.random.default_rng(0))
            tr = run(c, k, 3.0, seed=99, log_events=100_000)
            logs.append(tr.event_log)
        for a, b in zip(*logs):
            np.testing.assert_array_equal(a, b)
        assert np.all(np.diff(logs[0][0]) > 0)

    def test_partial_trajectory(self, rng):
        c = sample_configuration(1.0, 32, LINEAR, rng)
        with pytest.warns(PartialTrajectoryWarning):
            tr = run(c, kernel(L=32), 100.0, rng=rng, max_events=10)
        assert tr.truncated and tr.n_events == 10

    def test_bad_snapshot_schedule(self, rng):
        c = Configuration(np.ones(4), LINEAR)
        with pytest.raises(ParameterError):
            run(c, kernel(L=4), 1.0, [0.5, 0.2], rng=rng)
        with pytest.raises(ParameterError):
            run(c, kernel(L=4), 1.0, [0.0, 2.0], rng=rng)

    @pytest.mark.parametrize("g", [CONSTANT, make_rate("bounded-increments")], ids=["constant", "bounded"])
    def test_event_rate(self, g):
        n, L, rho, T = 4, 64, 0.5, 2.0
        th = thermo(rho, g)
        counts = []
        for seed in range(200):
            r = np.random.default_rng(seed)
            counts.append(run(sample_configuration(rho, L, g, r), kernel(L=L, n=n), T, rng=r).n_events / T)
        counts = np.asarray(counts)
        assert abs(counts.mean() - n * L * th.gtilde) < 4 * counts.std(ddof=1) / math.sqrt(counts.size)

    def test_stationary_site_mean(self):
        rho, L = 0.7, 128
        finals = []
        for seed in range(100):
            r = np.random.default_rng(seed)
            c = sample_configuration(rho, L, CONSTANT, r)
            finals.append(run(c, kernel(L=L, beta=0.3, n=16), 1.0, rng=r).final.mean())
        finals = np.asarray(finals)
        assert abs(finals.mean() - rho) < 4 * finals.std(ddof=1) / math.sqrt(finals.size)

    def test_symmetric_dynamics_balance_displacements(self):
        c = sample_configuration(1.0, 32, LINEAR, np.random.default_rng(3))
        tr = run(c, kernel(L=32), 500.0, seed=4, log_events=10**6)
        d = tr.event_displacements
        for step_size in (1, 2, 5):
            up, down = np.sum(d == step_size), np.sum(d == -step_size)
            assert abs(up - down) < 4 * math.sqrt(up + down)

    def test_asymmetric_dynamics_bias(self):
        c = sample_configuration(1.0, 32, LINEAR, np.random.default_rng(3))
        k = kernel(L=32, beta=0.2)
        tr = run(c, k, 200.0, seed=4, log_events=10**6)
        d = tr.event_displacements
        frac = (np.sum(d == 1) - np.sum(d == -1)) / d.size
        assert frac == pytest.approx(k.p[1] - k.p[-1], abs=4 / math.sqrt(d.size))


def test_snapshot_stream_round_trip(tmp_path, rng):
    c = sample_configuration(2.0, 16, LINEAR, rng)
    times = np.linspace(0, 1, 5)
    path = tmp_path / "s.zrps"
    with SnapshotWriter(path, {"alpha": 1.2, "seed": 1}, 16) as w:
        tr = run(c, kernel(L=16), 1.0, times, rng=rng, observers=(w,))
    header, t, occ = read_snapshots(path)
    assert header["alpha"] == 1.2 and header["L"] == 16
    np.testing.assert_array_equal(t, times)
    np.testing.assert_array_equal(occ, np.asarray(tr.snapshots))


def test_read_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"notasnapshot")
    with pytest.raises(ValueError):
        read_snapshots(p)

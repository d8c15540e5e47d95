import numpy as np
import pytest

from martapprox.chain import as_observable, build_chain, cycle_chain, iid_chain, norm_pi
from martapprox.errors import DegenerateVariance, EmptyBatch, InvalidState, NotReversible
from martapprox.martingale import averaged_corrector
from martapprox.montecarlo import (
    approximation_trend,
    dm_rhs,
    estimate_seminorm,
    fclt_statistics,
    ks_threshold,
    lw_rhs,
    pu_rhs,
    residual_decay_curve,
    rio_rhs,
    simulate,
    verify_all,
    verify_dm,
    verify_lw,
    verify_pu,
    verify_rio,
)
from martapprox.spectral import reversible_seminorm_bound, spectral_measure

from conftest import random_chains


class TestSimulate:
    def test_deterministic(self, two_state):
        chain, _ = two_state
        a = simulate(chain, 200, 30, 7).paths
        b = simulate(chain, 200, 30, 7).paths
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, simulate(chain, 200, 30, 8).paths)

    def test_replica_independent_of_batch_size(self, two_state):
        chain, _ = two_state
        small = simulate(chain, 100, 3, 11).paths
        large = simulate(chain, 100, 9, 11).paths
        np.testing.assert_array_equal(small, large[:3])

    def test_compact_storage(self, two_state):
        batch = simulate(two_state[0], 10, 4, 0)
        assert batch.paths.dtype == np.uint8 and batch.paths.shape == (4, 11)
        assert batch.replicas == 4
        assert not batch.paths.flags.writeable

    def test_empty(self, two_state):
        with pytest.raises(EmptyBatch):
            simulate(two_state[0], 10, 0, 1)

    def test_fixed_start(self, two_state):
        chain, _ = two_state
        batch = simulate(chain, 20, 50, 3, start=1)
        assert np.all(batch.paths[:, 0] == 1)
        with pytest.raises(InvalidState):
            simulate(chain, 20, 5, 3, start=2)

    def test_deterministic_cycle(self):
        paths = simulate(cycle_chain(4), 12, 5, 2).paths.astype(int)
        assert np.all((np.diff(paths, axis=1) % 4) == 1)

    def test_iid_frequencies(self):
        chain = iid_chain([0.2, 0.3, 0.5])
        paths = simulate(chain, 1000, 1000, 5).paths
        a, b = paths[:, :-1].ravel(), paths[:, 1:].ravel()
        counts = np.zeros((3, 3))
        np.add.at(counts, (a, b), 1)
        rows = counts.sum(axis=1, keepdims=True)
        freq = counts / rows
        se = np.sqrt(chain.kernel * (1 - chain.kernel) / rows)
        assert np.all(np.abs(freq - chain.kernel) <= 3 * se)

    def test_stationary_occupation(self, two_state):
        paths = simulate(two_state[0], 500, 400, 6).paths
        assert np.mean(paths == 0) == pytest.approx(0.25, abs=0.02)


class TestSeminorm:
    def test_zero_function(self, two_state):
        est = estimate_seminorm(two_state[0], np.zeros(2), [10, 50], 100, 1)
        np.testing.assert_array_equal(est.values, 0.0)
        np.testing.assert_array_equal(est.std_errors, 0.0)

    def test_iid_corrector_vanishes(self, iid):
        chain, f = iid
        y = averaged_corrector(chain, f, 4).y
        assert estimate_seminorm(chain, y, [100], 50, 2).final == (0.0, 0.0)

    def test_iid_no_max(self, iid):
        chain, f = iid
        est = estimate_seminorm(chain, f, [400], 4000, 3, with_max=False)
        value, se = est.final
        assert abs(value - 1.0) <= 4 * se

    def test_bad_grid(self, two_state):
        with pytest.raises(ValueError):
            estimate_seminorm(two_state[0], two_state[1], [10, 5], 10, 1)

    def test_two_state_below_bound_and_decreasing(self, two_state):
        chain, f = two_state
        measure = spectral_measure(chain, f)
        batch = simulate(chain, 1024, 2000, 4)
        previous = np.inf
        for m in (1, 4, 16, 64):
            y = averaged_corrector(chain, f, m).y
            value, se = estimate_seminorm(chain, y, [1024], 2000, 4, batch=batch).final
            assert value <= np.sqrt(reversible_seminorm_bound(measure, m)) + 3 * se
            assert value < previous
            previous = value


class TestInequalities:
    def test_iid_rhs(self, iid):
        chain, f = iid
        n = 100
        assert rio_rhs(chain, f, n) == pytest.approx(8 * n)
        r = (n - 1).bit_length()
        assert pu_rhs(chain, f, n) == pytest.approx(n * (2 + 3 * sum(2 ** (-j / 2) for j in range(r))) ** 2)
        assert dm_rhs(chain, f, n) == pytest.approx(4 * n)
        assert lw_rhs(chain, f, n) == pytest.approx(24 * n + 3)

    def test_two_state_rhs(self, two_state):
        chain, f = two_state
        assert lw_rhs(chain, f, 10) == pytest.approx(243 * 7.5)
        # sum_i sqrt(3) 0.8 0.6^i = 2 sqrt(3)
        assert dm_rhs(chain, f, 10) == pytest.approx(40 * 12, rel=1e-10)

    def test_pu_power_of_two_boundary(self, iid):
        chain, f = iid
        # n = 2^r uses j < r, n = 2^r + 1 one more term
        assert pu_rhs(chain, f, 1) == pytest.approx(4.0)
        assert pu_rhs(chain, f, 2) / 2 == pytest.approx(25.0)
        assert pu_rhs(chain, f, 3) / 3 == pytest.approx((5 + 3 / np.sqrt(2)) ** 2)

    def test_zero_observable(self, two_state):
        chain, _ = two_state
        for report in verify_all(chain, np.zeros(2), 32, 50, 1):
            assert report.lhs == 0.0 and report.rhs == 0.0 and report.passed

    def test_lw_requires_reversible(self):
        chain = build_chain([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.3, 0.3, 0.4]])
        f = as_observable(chain, [1.0, 0.0, -1.0], center=True)
        with pytest.raises(NotReversible):
            verify_lw(chain, f, 16, 10, 1)
        assert {r.name for r in verify_all(chain, f, 16, 100, 1)} == {
            "rio",
            "peligrad_utev",
            "dedecker_merlevede",
        }

    def test_batch_length_checked(self, two_state):
        chain, f = two_state
        batch = simulate(chain, 20, 10, 1)
        with pytest.raises(ValueError):
            verify_rio(chain, f, 30, 10, 1, batch=batch)

    def test_suite_on_random_chains(self):
        for idx, (chain, f) in enumerate(random_chains(41, 8)):
            for report in verify_all(chain, f, 128, 1000, idx):
                assert report.passed, report

    def test_shared_batch(self, two_state):
        chain, f = two_state
        batch = simulate(chain, 64, 500, 2)
        a = verify_pu(chain, f, 64, 500, 2, batch=batch)
        b = verify_dm(chain, f, 64, 500, 2, batch=batch)
        assert a.lhs == b.lhs and a.lhs_stderr == b.lhs_stderr


class TestFclt:
    def test_threshold(self):
        assert ks_threshold(2000) == pytest.approx(0.05)
        assert ks_threshold(500) == pytest.approx(0.1)

    def test_degenerate(self, coboundary):
        with pytest.raises(DegenerateVariance):
            fclt_statistics(*coboundary, 100, 50, 1)

    def test_groups_per_state(self, two_state):
        report = fclt_statistics(*two_state, 500, 400, 3)
        assert report.sigma2 == pytest.approx(12.0)
        assert [g.label for g in report.groups] == ["xi_0=0", "xi_0=1"]
        assert all(g.count == 400 for g in report.groups)
        assert report.passed

    def test_scale_invariant(self, two_state):
        chain, f = two_state
        report = fclt_statistics(chain, f * 2.0, 500, 400, 3)
        assert report.sigma2 == pytest.approx(48.0)
        assert report.passed


class TestDecayAndTrend:
    def test_two_state_decay(self, two_state):
        curve = residual_decay_curve(*two_state, [100, 1000, 10000], 500, 1)
        assert curve.values[-1] < curve.values[0]
        # |R_j| <= 10, so the statistic is at most 100 / n
        assert np.all(curve.values <= 100 / curve.n_grid)

    def test_iid_limit_residual_is_bounded(self, iid):
        curve = residual_decay_curve(*iid, [10, 100], 200, 2)
        # R_j = X_0 - X_j for iid, so R_j^2 <= 4
        assert np.all(curve.values <= 4 / curve.n_grid + 1e-15)

    def test_trend(self, two_state):
        trend = approximation_trend(*two_state, [1, 2, 4, 8, 16, 32], 1024, 1000, 5)
        assert np.all(np.diff(trend.distance) < 0)
        assert trend.spearman["seminorm~distance"] > 0.9
        assert trend.spearman["seminorm~residual"] > 0.9

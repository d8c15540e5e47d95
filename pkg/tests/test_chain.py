import itertools

import numpy as np
import pytest
from hypothesis import given, settings

from martapprox.chain import (
    apply_operator,
    as_observable,
    build_chain,
    conditional_sum,
    covariance_series,
    cycle_chain,
    decay_envelope,
    inner_product_pi,
    iid_chain,
    long_run_variance,
    norm_pi,
    poisson_solve,
    two_state_chain,
)
from martapprox.errors import (
    DimensionMismatch,
    NonStochasticRow,
    NotCentered,
    ReducibleChain,
    SeriesNotConverged,
)

from conftest import chain_and_observable


def exact_path_variance(chain, f, n):
    """var(S_n) by enumerating every path of length n from the stationary law."""
    total = total_sq = 0.0
    for path in itertools.product(range(chain.n_states), repeat=n):
        p = chain.pi[path[0]] * np.prod([chain.kernel[a, b] for a, b in zip(path, path[1:])])
        s = sum(f[x] for x in path)
        total += p * s
        total_sq += p * s * s
    return total_sq - total**2


class TestBuildChain:
    def test_doubly_stochastic(self):
        chain = build_chain([[0.5, 0.5], [0.5, 0.5]])
        np.testing.assert_allclose(chain.pi, [0.5, 0.5], atol=1e-15)

    def test_two_state_by_hand(self):
        # pi_0 * 0.3 = pi_1 * 0.1 and pi_0 + pi_1 = 1
        chain = build_chain([[0.7, 0.3], [0.1, 0.9]])
        np.testing.assert_allclose(chain.pi, [0.25, 0.75], atol=1e-14)

    def test_identity_is_reducible(self):
        with pytest.raises(ReducibleChain):
            build_chain([[1, 0], [0, 1]])

    def test_transient_state_is_reducible(self):
        with pytest.raises(ReducibleChain):
            build_chain([[0.5, 0.5], [0.0, 1.0]])

    @pytest.mark.parametrize(
        "kernel", [[[0.6, 0.3], [0.1, 0.9]], [[1.2, -0.2], [0.5, 0.5]]]
    )
    def test_non_stochastic(self, kernel):
        with pytest.raises(NonStochasticRow):
            build_chain(kernel)

    def test_periodic_is_allowed(self):
        chain = cycle_chain(3)
        np.testing.assert_allclose(chain.pi, np.full(3, 1 / 3))

    def test_chain_is_immutable(self, two_state):
        chain, _ = two_state
        with pytest.raises(ValueError):
            chain.kernel[0, 0] = 0.0

    @settings(max_examples=50, deadline=None)
    @given(chain_and_observable(max_states=12))
    def test_invariants(self, case):
        chain, _ = case
        assert np.all(chain.kernel >= 0)
        assert np.max(np.abs(chain.kernel.sum(axis=1) - 1)) <= 1e-12
        assert np.max(np.abs(chain.pi @ chain.kernel - chain.pi)) <= 1e-10
        assert np.all(chain.pi > 0)


class TestObservable:
    def test_not_centered(self, two_state):
        chain, _ = two_state
        with pytest.raises(NotCentered):
            as_observable(chain, [4.0, 0.0])

    def test_centering(self, two_state):
        chain, _ = two_state
        np.testing.assert_allclose(as_observable(chain, [4.0, 0.0], center=True), [3.0, -1.0])


class TestOperator:
    def test_iid_kills_centered(self, iid):
        chain, f = iid
        np.testing.assert_allclose(apply_operator(chain, f, 1), 0.0, atol=1e-15)

    def test_two_state_eigenfunction(self, two_state):
        chain, f = two_state
        direct = chain.kernel @ np.array([3.0, -1.0])
        np.testing.assert_allclose(direct, [1.8, -0.6], atol=1e-14)
        np.testing.assert_allclose(apply_operator(chain, f, 1), [1.8, -0.6], atol=1e-14)

    def test_power_zero(self, two_state):
        chain, _ = two_state
        h = np.array([2.0, 5.0])
        np.testing.assert_array_equal(apply_operator(chain, h, 0), h)

    def test_dimension_mismatch(self, two_state):
        chain, _ = two_state
        with pytest.raises(DimensionMismatch):
            apply_operator(chain, [1.0, 2.0, 3.0])

    @settings(max_examples=50, deadline=None)
    @given(chain_and_observable())
    def test_contraction(self, case):
        chain, f = case
        h = np.asarray(f) + np.linspace(-1, 2, chain.n_states)
        assert norm_pi(chain, apply_operator(chain, h)) <= norm_pi(chain, h) * (1 + 1e-12)

    @settings(max_examples=30, deadline=None)
    @given(chain_and_observable())
    def test_semigroup(self, case):
        chain, f = case
        for a, b in [(1, 2), (3, 4), (0, 5)]:
            composed = apply_operator(chain, apply_operator(chain, f, a), b)
            np.testing.assert_allclose(composed, apply_operator(chain, f, a + b), atol=1e-12)


class TestConditionalSum:
    def test_iid(self, iid):
        chain, f = iid
        np.testing.assert_allclose(conditional_sum(chain, f, 5), f, atol=1e-15)

    def test_two_state_geometric(self, two_state):
        chain, f = two_state
        np.testing.assert_allclose(conditional_sum(chain, f, 2), [4.8, -1.6], atol=1e-14)

    def test_k_one(self, two_state):
        chain, f = two_state
        np.testing.assert_array_equal(conditional_sum(chain, f, 1), f)


class TestInnerProduct:
    def test_weighted_norm(self, two_state):
        chain, f = two_state
        assert norm_pi(chain, f) ** 2 == pytest.approx(0.25 * 9 + 0.75 * 1, abs=1e-14)

    def test_zero_and_constant(self, two_state):
        chain, _ = two_state
        assert norm_pi(chain, np.zeros(2)) == 0.0
        assert inner_product_pi(chain, np.ones(2), np.ones(2)) == pytest.approx(1.0, abs=1e-15)

    def test_symmetric(self, two_state):
        chain, _ = two_state
        g, h = np.array([1.0, 2.0]), np.array([-3.0, 0.5])
        assert inner_product_pi(chain, g, h) == inner_product_pi(chain, h, g)


class TestPoisson:
    def test_iid(self, iid):
        chain, f = iid
        np.testing.assert_allclose(poisson_solve(chain, f), f, atol=1e-14)

    def test_two_state(self, two_state):
        chain, f = two_state
        np.testing.assert_allclose(poisson_solve(chain, f), [7.5, -2.5], atol=1e-13)

    def test_zero(self, two_state):
        chain, _ = two_state
        np.testing.assert_array_equal(poisson_solve(chain, np.zeros(2)), 0.0)

    def test_periodic_chain_still_solvable(self):
        chain = cycle_chain(3)
        f = as_observable(chain, [1.0, -0.5, -0.5])
        g = poisson_solve(chain, f)
        np.testing.assert_allclose(g - chain.kernel @ g, f, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(chain_and_observable())
    def test_residual(self, case):
        chain, f = case
        g = poisson_solve(chain, f)
        assert norm_pi(chain, g - chain.kernel @ g - f) <= 1e-10
        assert abs(chain.pi @ g) <= 1e-10


class TestLongRunVariance:
    def test_iid(self, iid):
        assert long_run_variance(*iid) == pytest.approx(1.0, abs=1e-12)

    def test_two_state_closed_form(self, two_state):
        chain, f = two_state
        lam, nf2 = 0.6, 3.0
        # closed form of var(S_n) for a one-dimensional centered space, checked
        # against brute-force path enumeration before trusting sigma^2 = 12
        for n in (1, 2, 5, 9):
            closed = nf2 * (n * (1 + lam) / (1 - lam) - 2 * lam * (1 - lam**n) / (1 - lam) ** 2)
            assert exact_path_variance(chain, f, n) == pytest.approx(closed, rel=1e-12)
        assert nf2 * (1 + lam) / (1 - lam) == pytest.approx(12.0)
        assert long_run_variance(chain, f) == pytest.approx(12.0, abs=1e-10)

    def test_zero(self, two_state):
        chain, _ = two_state
        assert long_run_variance(chain, np.zeros(2)) == 0.0

    def test_periodic_series_diverges(self):
        chain = cycle_chain(3)
        f = as_observable(chain, [1.0, -0.5, -0.5])
        assert decay_envelope(chain) == (None, 1.0)
        with pytest.raises(SeriesNotConverged):
            long_run_variance(chain, f)

    def test_matches_path_enumeration_growth(self):
        chain = build_chain([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.3, 0.3, 0.4]])
        f = as_observable(chain, [1.0, 0.0, -2.0], center=True)
        sigma2 = long_run_variance(chain, f)
        # var(S_n) - n sigma^2 converges, so consecutive differences tend to sigma^2
        v7, v8 = exact_path_variance(chain, f, 7), exact_path_variance(chain, f, 8)
        assert v8 - v7 == pytest.approx(sigma2, rel=1e-3)

    @settings(max_examples=40, deadline=None)
    @given(chain_and_observable())
    def test_potential_matches_series(self, case):
        chain, f = case
        g = poisson_solve(chain, f)
        potential = norm_pi(chain, g) ** 2 - norm_pi(chain, chain.kernel @ g) ** 2
        series, _ = covariance_series(chain, f)
        assert potential == pytest.approx(2 * series - norm_pi(chain, f) ** 2, abs=1e-8)

import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from scipy.special import lambertw

from expfam.exceptions import ArgumentError, DomainError
from expfam.families import BERNOULLI, GAUSSIAN, POISSON, Bound
from rules.state import RunState

from .bounds import Extremum, box_bounds, confidence_bounds, ucb_min
from .subsets import (PriorKind, SubsetPrior, SubsetSearch, ThresholdTable, aggregate_stat, candidate_subsets,
                      find_witness, powerset_weights)
from .thresholds import (MIN_THRESHOLD_ARG, ZETA2, h, h_inverse, h_inverse_upper_bound, iterated_log_penalty,
                         stopping_threshold, threshold_T)


class HInverseTestCase(SimpleTestCase):

    def test_fixed_point_at_one(self):
        self.assertEqual(h_inverse(1.0), 1.0)
        self.assertEqual(h(1.0), 1.0)

    def test_known_value(self):
        self.assertAlmostEqual(h_inverse(3.9957), 5.744, delta=1e-3)

    def test_upper_bound_grid(self):
        for x in (1.5, 2.0, 5.0, 10.0, 50.0):
            self.assertLessEqual(h_inverse(x), x + math.log(x + math.sqrt(2.0 * (x - 1.0))))

    def test_round_trip_on_log_grid(self):
        for x in np.geomspace(1.0, 1e6, 400):
            u = h_inverse(float(x))
            self.assertGreaterEqual(u, 1.0)
            self.assertLessEqual(u, h_inverse_upper_bound(float(x)) + 1e-12)
            # near 1e6 the spacing of doubles is itself about 1e-10
            self.assertLessEqual(abs(h(u) - x), max(1e-10, 4 * np.spacing(x)), f"x={x}")

    def test_agrees_with_lambert_w(self):
        for x in np.geomspace(1.5, 700.0, 60):
            expected = -lambertw(-math.exp(-x), k=-1).real
            self.assertAlmostEqual(h_inverse(float(x)) / expected, 1.0, delta=1e-9)

    def test_domain(self):
        with self.assertRaises(DomainError):
            h(0.5)
        with self.assertRaises(DomainError):
            h_inverse(0.999)


class ThresholdTestCase(SimpleTestCase):

    def test_zeta2(self):
        self.assertAlmostEqual(ZETA2, 1.6449340668482264, places=15)

    def test_known_values(self):
        self.assertAlmostEqual(threshold_T(math.log(20)), 11.79, delta=0.01)
        self.assertAlmostEqual(threshold_T(math.log(200)), 14.95, delta=0.01)

    def test_above_x_plus_three_log_x(self):
        gaps = []
        for x in (3.0, 10.0, 30.0):
            gap = threshold_T(x) - x - 3 * math.log(x)
            self.assertGreater(gap, 0.0)
            gaps.append(gap)
        self.assertGreater(gaps[0], gaps[1])
        self.assertGreater(gaps[1], gaps[2])

    def test_nondecreasing_and_at_least_six(self):
        grid = np.linspace(MIN_THRESHOLD_ARG, 40.0, 500)
        values = [threshold_T(float(x)) for x in grid]
        self.assertTrue(all(v >= 6.0 for v in values))
        self.assertTrue(all(a <= b for a, b in zip(values, values[1:])))

    def test_domain(self):
        with self.assertRaises(DomainError):
            threshold_T(0.03)
        with self.assertRaises(DomainError):
            threshold_T(float('nan'))

    def test_stopping_threshold(self):
        self.assertAlmostEqual(stopping_threshold(1, math.log(20)), threshold_T(math.log(20)))
        self.assertAlmostEqual(stopping_threshold(100, math.log(200)), 20.12, delta=0.01)
        values = stopping_threshold(np.arange(1, 2000), math.log(200))
        self.assertTrue(np.all(np.diff(values) >= 0))
        with self.assertRaises(DomainError):
            stopping_threshold(10, 0.01)

    def test_penalty(self):
        self.assertAlmostEqual(iterated_log_penalty(20), 3 * math.log(1 + math.log(20)))
        with self.assertRaises(ArgumentError):
            iterated_log_penalty(0)


class SubsetPriorTestCase(SimpleTestCase):

    def test_singletons(self):
        prior = SubsetPrior.singletons(4)
        self.assertEqual(prior.weight({2}), 0.25)
        self.assertEqual(prior.weight({1, 2}), 0.0)

    def test_size_uniform_is_normalised(self):
        for arms in (1, 3, 7):
            prior = SubsetPrior.size_uniform(arms)
            self.assertAlmostEqual(sum(powerset_weights(prior).values()), 1.0)
        self.assertAlmostEqual(SubsetPrior.size_uniform(10).weight({0}), 1 / 100)

    def test_custom_validation(self):
        prior = SubsetPrior.custom(3, {(0,): 0.5, (1, 2): 0.5})
        self.assertEqual(prior.kind, PriorKind.CUSTOM)
        self.assertEqual(prior.weight((2, 1)), 0.5)
        self.assertEqual(prior.weight((0, 1)), 0.0)
        with self.assertRaises(ArgumentError):
            SubsetPrior.custom(3, {(0,): 0.5, (1,): 0.4})
        with self.assertRaises(ArgumentError):
            SubsetPrior.custom(3, {(0, 5): 1.0})
        with self.assertRaises(ArgumentError):
            SubsetPrior.custom(3, {(): 1.0})
        with self.assertRaises(ArgumentError):
            SubsetPrior.singletons(0)


class AggregateStatTestCase(SimpleTestCase):

    def setUp(self):
        self.state = RunState.from_statistics(BERNOULLI, 0.5, [3, 5, 0], [0.6, 2.0, 0.0])

    def test_pooled_values(self):
        stat = aggregate_stat(self.state, {0, 1})
        self.assertEqual(stat.pooled_count, 8)
        self.assertAlmostEqual(stat.pooled_mean, 0.325)

    def test_singleton_and_order(self):
        self.assertAlmostEqual(aggregate_stat(self.state, [1]).pooled_mean, 0.4)
        self.assertEqual(aggregate_stat(self.state, [1, 0]), aggregate_stat(self.state, [0, 1]))

    def test_errors(self):
        with self.assertRaises(ArgumentError):
            aggregate_stat(self.state, [])
        with self.assertRaises(ArgumentError):
            aggregate_stat(self.state, [0, 2])


class CandidateSubsetsTestCase(SimpleTestCase):

    def test_nested_prefixes_and_singletons(self):
        means = np.array([0.3, -1.0, 0.1, 2.0])
        candidates = candidate_subsets(SubsetPrior.size_uniform(4), means, means <= 0.5)
        members = {candidates.members(row) for row in range(len(candidates))}
        self.assertEqual(members, {(1,), (1, 2), (0, 1, 2), (0,), (2,)})
        self.assertAlmostEqual(candidates.weights[1], 1 / (4 * 6))

    def test_descending_order_for_maxima(self):
        means = np.array([0.3, -1.0, 0.1, 2.0])
        candidates = candidate_subsets(SubsetPrior.size_uniform(4), means, means >= 0.0, descending=True)
        members = [candidates.members(row) for row in range(3)]
        self.assertEqual(members, [(3,), (0, 3), (0, 2, 3)])

    def test_singletons_prior_only_singletons(self):
        means = np.array([0.3, -1.0, 0.1])
        candidates = candidate_subsets(SubsetPrior.singletons(3), means, means <= 0.2, SubsetSearch.POWERSET)
        self.assertEqual(len(candidates), 3)
        np.testing.assert_allclose(candidates.weights, 1 / 3)

    def test_no_eligible_arm(self):
        means = np.array([1.0, 2.0])
        self.assertEqual(len(candidate_subsets(SubsetPrior.size_uniform(2), means, means <= 0.0)), 0)

    def test_powerset_limit(self):
        means = np.zeros(13)
        with self.assertRaises(ArgumentError):
            candidate_subsets(SubsetPrior.size_uniform(13), means, means <= 0.0, SubsetSearch.POWERSET)


class FindWitnessTestCase(SimpleTestCase):

    def _state(self):
        # arm 0: N = 100 with 100 d+(mean, 0) = 25, nine arms well above the threshold
        low_mean = -math.sqrt(0.5)
        counts = [100] * 10
        sums = [100 * low_mean] + [100.0] * 9
        return RunState.from_statistics(GAUSSIAN, 0.0, counts, sums)

    def test_box_fires_on_single_arm(self):
        self.assertLess(stopping_threshold(100, math.log(10 / 0.05)), 25.0)
        self.assertEqual(find_witness(self._state(), 0.0, SubsetPrior.singletons(10), 0.05), (0,))

    def test_aggregate_singleton_budget(self):
        # singleton weight 1/100: 5.171 + T(ln 2000) = 5.171 + 17.877
        self.assertAlmostEqual(threshold_T(math.log(2000)), 17.877, delta=0.01)
        self.assertAlmostEqual(stopping_threshold(100, math.log(100 / 0.05)), 23.05, delta=0.01)
        self.assertEqual(find_witness(self._state(), 0.0, SubsetPrior.size_uniform(10), 0.05), (0,))

    def test_nothing_below_threshold(self):
        state = RunState.from_statistics(GAUSSIAN, 0.0, [50, 50], [10.0, 20.0])
        for prior in (SubsetPrior.singletons(2), SubsetPrior.size_uniform(2)):
            self.assertIsNone(find_witness(state, 0.0, prior, 0.05))

    def test_threshold_table_memo(self):
        table = ThresholdTable(SubsetPrior.size_uniform(5), 0.1)
        self.assertAlmostEqual(table.threshold(0.04), threshold_T(math.log(1 / (0.1 * 0.04))), places=10)
        table.threshold(0.04)
        self.assertEqual(len(table._by_weight), 1)

    @settings(max_examples=200, deadline=None)
    @given(data=st.data())
    def test_powerset_fires_whenever_nested_fires(self, data):
        arms = data.draw(st.integers(1, 7))
        counts = data.draw(st.lists(st.integers(1, 400), min_size=arms, max_size=arms))
        means = data.draw(st.lists(st.floats(-0.6, 0.3), min_size=arms, max_size=arms))
        state = RunState.from_statistics(GAUSSIAN, 0.0, counts, np.multiply(counts, means))
        prior = SubsetPrior.size_uniform(arms)
        nested = find_witness(state, 0.0, prior, 0.05, SubsetSearch.NESTED)
        brute = find_witness(state, 0.0, prior, 0.05, SubsetSearch.POWERSET)
        if nested is not None:
            self.assertIsNotNone(brute)


class ConfidenceBoundTestCase(SimpleTestCase):

    def test_box_bounds_surround_means(self):
        state = RunState.from_statistics(BERNOULLI, 0.5, [10, 40], [2.0, 30.0])
        upper = box_bounds(state, 0.1, Bound.UPPER)
        lower = box_bounds(state, 0.1, Bound.LOWER)
        self.assertTrue(np.all(upper >= state.means))
        self.assertTrue(np.all(lower <= state.means))

    def test_confidence_bounds_budget(self):
        state = RunState.from_statistics(GAUSSIAN, 0.0, [4], [0.0])
        budget = iterated_log_penalty(4) + threshold_T(math.log(20))
        self.assertAlmostEqual(confidence_bounds(state, math.log(20), Bound.UPPER)[0], math.sqrt(2 * budget / 4))

    def test_singletons_reduce_to_box(self):
        rng = np.random.default_rng(17)
        for family, draw in ((GAUSSIAN, lambda n: rng.normal(0.3, 1.0, n)),
                             (BERNOULLI, lambda n: rng.binomial(1, 0.3, n)),
                             (POISSON, lambda n: rng.poisson(1.5, n))):
            counts = rng.integers(1, 300, size=5)
            sums = [float(draw(n).sum()) for n in counts]
            state = RunState.from_statistics(family, 0.5, counts, sums)
            prior = SubsetPrior.singletons(5)
            upper = ucb_min(state, prior, 0.1, Extremum.MIN_UPPER)
            self.assertAlmostEqual(upper, box_bounds(state, 0.1, Bound.UPPER).min(), delta=2e-6)
            lower = ucb_min(state, prior, 0.1, Extremum.MAX_LOWER)
            self.assertAlmostEqual(lower, box_bounds(state, 0.1, Bound.LOWER).max(), delta=2e-6)

    def test_aggregate_tighter_with_many_equal_arms(self):
        means = [0.1] * 10 + [0.2, 0.3, 0.4, 0.5]
        counts = [35] * len(means)
        state = RunState.from_statistics(BERNOULLI, 0.5, counts, np.multiply(counts, means))
        aggregate = ucb_min(state, SubsetPrior.size_uniform(len(means)), 0.1)
        box = ucb_min(state, SubsetPrior.singletons(len(means)), 0.1)
        self.assertLess(aggregate, box)
        self.assertGreater(aggregate, 0.1)

    def test_bernoulli_caps_at_one(self):
        state = RunState.from_statistics(BERNOULLI, 0.5, [1], [1.0])
        self.assertEqual(ucb_min(state, SubsetPrior.singletons(1), 0.1), 1.0)
        state = RunState.from_statistics(BERNOULLI, 0.5, [1], [0.0])
        self.assertEqual(ucb_min(state, SubsetPrior.singletons(1), 0.1, Extremum.MAX_LOWER), 0.0)

    def test_needs_observed_arms(self):
        state = RunState.from_statistics(GAUSSIAN, 0.0, [3, 0], [1.0, 0.0])
        with self.assertRaises(ArgumentError):
            ucb_min(state, SubsetPrior.size_uniform(2), 0.1)

import math

import numpy as np
from django.test import SimpleTestCase

from expfam.exceptions import DomainError
from expfam.families import BERNOULLI, GAUSSIAN, POISSON, divergence

from .exceptions import DegenerateInstanceError, SideError, UnsupportedInstanceError
from .instances import BanditInstance, Side
from .service import (boosted_lower_bound, characteristic_time_bruteforce, generic_lower_bound, kl_binary,
                      lcb_predicted_weights, min_draws_bound, oracle_solution)

BELOW_MEANS = np.linspace(-1.0, 1.0, 10)
ABOVE_MEANS = (0.5, 0.625, 0.75, 0.875, 1.0)


class BanditInstanceTestCase(SimpleTestCase):

    def test_helpers(self):
        instance = BanditInstance.build('gaussian', (0.3, -1.0, -1.0, 2.0), 0.0)
        self.assertEqual(instance.arm_count, 4)
        self.assertEqual(instance.minimum, -1.0)
        self.assertEqual(instance.minimizers, (1, 2))
        self.assertEqual(instance.side, Side.BELOW)
        np.testing.assert_array_equal(instance.sorted_means, [-1.0, -1.0, 0.3, 2.0])

    def test_rejects_out_of_domain(self):
        with self.assertRaises(DomainError):
            BanditInstance.build('bernoulli', (0.2, 1.0), 0.5)
        with self.assertRaises(DomainError):
            BanditInstance.build('poisson', (1.0,), 0.0)

    def test_degenerate_side(self):
        instance = BanditInstance.build('gaussian', (0.0, 1.0), 0.0)
        self.assertFalse(instance.is_classifiable)
        with self.assertRaises(DegenerateInstanceError):
            instance.side
        with self.assertRaises(DegenerateInstanceError):
            oracle_solution(instance)

    def test_instances_are_hashable_and_comparable(self):
        first = BanditInstance.build(GAUSSIAN, [0.5, 1.0], 0.0)
        second = BanditInstance.build(GAUSSIAN, (0.5, 1.0), 0.0)
        self.assertEqual(first, second)
        self.assertEqual(hash(first), hash(second))


class OracleSolutionTestCase(SimpleTestCase):

    def test_below_instance(self):
        solution = oracle_solution(BanditInstance.build(GAUSSIAN, BELOW_MEANS, 0.0))
        self.assertEqual(solution.side, Side.BELOW)
        self.assertAlmostEqual(solution.characteristic_time, 2.0)
        np.testing.assert_array_equal(solution.weights, np.eye(10)[0])

    def test_above_instance(self):
        solution = oracle_solution(BanditInstance.build(GAUSSIAN, ABOVE_MEANS, 0.0))
        self.assertEqual(solution.side, Side.ABOVE)
        self.assertAlmostEqual(solution.characteristic_time, 21.2878, places=4)
        np.testing.assert_allclose(solution.weights, [0.3758, 0.2405, 0.1670, 0.1227, 0.0940], atol=1e-4)

    def test_single_arm(self):
        instance = BanditInstance.build(BERNOULLI, (0.3,), 0.5)
        solution = oracle_solution(instance)
        self.assertAlmostEqual(solution.characteristic_time, 1.0 / divergence(BERNOULLI, 0.3, 0.5))
        np.testing.assert_array_equal(solution.weights, [1.0])

    def test_ties_share_mass(self):
        solution = oracle_solution(BanditInstance.build(POISSON, (1.0, 1.0, 3.0), 2.0))
        np.testing.assert_allclose(solution.weights, [0.5, 0.5, 0.0])
        self.assertEqual(solution.minimizers, (0, 1))

    def test_weights_form_a_distribution(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            means = rng.uniform(0.05, 0.95, size=rng.integers(1, 8))
            gamma = float(rng.uniform(0.05, 0.95))
            solution = oracle_solution(BanditInstance.build(BERNOULLI, means, gamma))
            self.assertAlmostEqual(solution.weights.sum(), 1.0, delta=1e-12)
            self.assertTrue(np.all(solution.weights >= 0))

    def test_matches_bruteforce_grid(self):
        for family, means, gamma in ((GAUSSIAN, (-1.0, -0.5, 0.5), 0.0),
                                     (GAUSSIAN, (0.5, 0.75, 1.0), 0.0),
                                     (BERNOULLI, (0.6, 0.7, 0.8), 0.5),
                                     (POISSON, (0.5, 3.0), 2.0),
                                     (BERNOULLI, (0.2,), 0.5)):
            instance = BanditInstance.build(family, means, gamma)
            exact = oracle_solution(instance).characteristic_time
            grid_time, _ = characteristic_time_bruteforce(instance, resolution=1e-2)
            self.assertLessEqual(abs(1.0 / grid_time - 1.0 / exact), 1e-2, f"{family} {means}")

    def test_bruteforce_arm_limit(self):
        with self.assertRaises(UnsupportedInstanceError):
            characteristic_time_bruteforce(BanditInstance.build(GAUSSIAN, BELOW_MEANS, 0.0))


class LowerBoundTestCase(SimpleTestCase):

    def setUp(self):
        self.below = BanditInstance.build(GAUSSIAN, BELOW_MEANS, 0.0)
        self.above = BanditInstance.build(GAUSSIAN, ABOVE_MEANS, 0.0)
        self.pair = BanditInstance.build(GAUSSIAN, (-1.0, 1.0), 0.0)

    def test_kl_binary(self):
        self.assertAlmostEqual(kl_binary(0.05, 0.95), 0.9 * math.log(19))
        self.assertAlmostEqual(kl_binary(0.05, 0.95), 2.650, places=3)
        self.assertAlmostEqual(kl_binary(0.01, 0.99), 4.50322, places=5)
        self.assertEqual(kl_binary(0.3, 0.3), 0.0)
        with self.assertRaises(DomainError):
            kl_binary(0.0, 0.5)
        with self.assertRaises(DomainError):
            kl_binary(0.5, 1.0)

    def test_generic_bound(self):
        self.assertAlmostEqual(generic_lower_bound(self.below, 0.05), 5.300, places=3)
        self.assertAlmostEqual(generic_lower_bound(self.above, 0.05), 56.41, places=2)
        self.assertEqual(generic_lower_bound(self.above, 0.5), 0.0)

    def test_min_draws(self):
        self.assertAlmostEqual(min_draws_bound(self.pair, 0.01), 0.031111, places=6)
        self.assertEqual(min_draws_bound(self.pair, 1 / 16), 0.0)
        self.assertEqual(min_draws_bound(self.pair, 0.3), 0.0)
        single = BanditInstance.build(GAUSSIAN, (-1.0,), 0.0)
        self.assertAlmostEqual(min_draws_bound(single, 1e-12), 2.0 / (27.0 * 0.5), places=9)

    def test_boosted_bound(self):
        self.assertAlmostEqual(boosted_lower_bound(self.pair, 0.01), 9.0376, places=4)
        self.assertEqual(boosted_lower_bound(self.pair, 0.2), kl_binary(0.2, 0.8) / 0.5)
        single = BanditInstance.build(GAUSSIAN, (-1.0,), 0.0)
        self.assertAlmostEqual(boosted_lower_bound(single, 1e-3), kl_binary(1e-3, 1 - 1e-3) / 0.5)

    def test_boosted_needs_below_side(self):
        with self.assertRaises(SideError):
            boosted_lower_bound(self.above, 0.01)

    def test_boosted_dominates_generic(self):
        instances = [self.below, self.pair, BanditInstance.build(BERNOULLI, (0.1, 0.3, 0.6), 0.4),
                     BanditInstance.build(POISSON, (0.5, 2.0, 4.0, 6.0), 1.0)]
        for instance in instances:
            for delta in (0.3, 0.1, 1e-2, 1e-3, 1e-5, 1e-8):
                self.assertGreaterEqual(boosted_lower_bound(instance, delta), generic_lower_bound(instance, delta) - 1e-12)

    def test_bounds_decrease_in_delta(self):
        deltas = (1e-8, 1e-5, 1e-3, 1e-2, 0.1, 0.3)
        for bound, instance in ((generic_lower_bound, self.above), (generic_lower_bound, self.below),
                                (min_draws_bound, self.pair), (boosted_lower_bound, self.pair)):
            values = [bound(instance, delta) for delta in deltas]
            self.assertTrue(all(a >= b for a, b in zip(values, values[1:])), f"{bound.__name__}: {values}")


class LcbPredictedWeightsTestCase(SimpleTestCase):

    def test_formula(self):
        weights = lcb_predicted_weights(BanditInstance.build(GAUSSIAN, (-1.0, 1.0, 0.0), 0.0), 1e-12)
        self.assertAlmostEqual(weights[1], 2.0 / 9.0)
        self.assertAlmostEqual(weights[2], 0.5)
        self.assertAlmostEqual(weights[0], 2.0, places=6)

    def test_unsupported_instances(self):
        with self.assertRaises(UnsupportedInstanceError):
            lcb_predicted_weights(BanditInstance.build(BERNOULLI, (0.1, 0.7), 0.5), 0.01)
        with self.assertRaises(UnsupportedInstanceError):
            lcb_predicted_weights(BanditInstance.build(GAUSSIAN, (-1.0, -0.5, 1.0), 0.0), 0.01)

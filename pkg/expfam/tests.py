import math
from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from hypothesis import assume, given, settings, strategies as st
from scipy import special, stats

from .exceptions import ArgumentError, DomainError, PosteriorStateError
from .families import (BERNOULLI, GAUSSIAN, POISSON, Bound, Direction, FamilyKind, FamilyModel, divergence,
                       divergence_directed, draw_observation, invert_divergence)
from .posterior import (ArmPosterior, log_beta_cdf_tail, log_gamma_cdf_tail, log_prob_below, posterior_log_prob_below,
                        posterior_mean, posterior_prob_below, posterior_sample, sample_posteriors)


class FamilyModelTestCase(SimpleTestCase):

    def test_of_accepts_enum_values(self):
        self.assertEqual(FamilyModel.of('bernoulli'), BERNOULLI)
        self.assertEqual(FamilyModel.of(FamilyKind.POISSON), POISSON)

    def test_of_rejects_unknown_family(self):
        with self.assertRaises(ArgumentError):
            FamilyModel.of('exponential')

    def test_mean_domains(self):
        self.assertEqual(GAUSSIAN.mean_domain, (-math.inf, math.inf))
        self.assertEqual(BERNOULLI.mean_domain, (0.0, 1.0))
        self.assertEqual(POISSON.mean_domain, (0.0, math.inf))
        self.assertFalse(BERNOULLI.contains(0.0))
        self.assertTrue(BERNOULLI.contains_closure(0.0))
        self.assertFalse(POISSON.contains_closure(-0.1))


class DivergenceTestCase(SimpleTestCase):

    def test_gaussian_closed_form(self):
        self.assertAlmostEqual(divergence(GAUSSIAN, -1.0, 0.0), 0.5)

    def test_bernoulli_value(self):
        self.assertAlmostEqual(divergence(BERNOULLI, 0.1, 0.5), 0.368064, places=6)

    def test_identity_is_zero(self):
        for family, mu in ((GAUSSIAN, 0.3), (BERNOULLI, 0.3), (POISSON, 3.0)):
            self.assertEqual(divergence(family, mu, mu), 0.0)

    def test_gaussian_is_symmetric(self):
        self.assertAlmostEqual(divergence(GAUSSIAN, 1.0, -2.0), divergence(GAUSSIAN, -2.0, 1.0))
        self.assertNotAlmostEqual(divergence(BERNOULLI, 0.1, 0.5), divergence(BERNOULLI, 0.5, 0.1))

    def test_bernoulli_edges_by_continuity(self):
        self.assertAlmostEqual(divergence(BERNOULLI, 0.0, 0.3), math.log(1 / 0.7))
        self.assertAlmostEqual(divergence(BERNOULLI, 1.0, 0.3), math.log(1 / 0.3))

    def test_poisson_zero_mean(self):
        self.assertAlmostEqual(divergence(POISSON, 0.0, 2.5), 2.5)

    def test_theta_outside_open_domain(self):
        with self.assertRaises(DomainError):
            divergence(BERNOULLI, 0.5, 1.0)
        with self.assertRaises(DomainError):
            divergence(POISSON, 1.0, 0.0)
        with self.assertRaises(DomainError):
            divergence(GAUSSIAN, 0.0, math.inf)

    def test_mu_outside_closed_domain(self):
        with self.assertRaises(DomainError):
            divergence(BERNOULLI, 1.2, 0.5)

    def test_broadcasts_over_arrays(self):
        values = divergence(GAUSSIAN, np.array([-1.0, 0.0, 2.0]), 0.0)
        np.testing.assert_allclose(values, [0.5, 0.0, 2.0])

    def test_monotone_on_each_side(self):
        for family, mu, grid in (
                (GAUSSIAN, 0.0, np.arange(-3.0, 3.0, 1e-3)),
                (BERNOULLI, 0.4, np.arange(1e-3, 1.0 - 1e-3, 1e-3)),
                (POISSON, 2.0, np.arange(1e-3, 8.0, 1e-3))):
            values = divergence(family, mu, grid)
            left = values[grid < mu]
            right = values[grid > mu]
            self.assertTrue(np.all(np.diff(left) < 0), f"{family} not decreasing below the mean")
            self.assertTrue(np.all(np.diff(right) > 0), f"{family} not increasing above the mean")
            self.assertTrue(np.all(values >= 0))


class DirectedDivergenceTestCase(SimpleTestCase):

    def test_plus_below(self):
        self.assertAlmostEqual(divergence_directed(BERNOULLI, 0.3, 0.5, Direction.PLUS), 0.0822829, places=6)

    def test_plus_vanishes_above(self):
        self.assertEqual(divergence_directed(BERNOULLI, 0.7, 0.5, Direction.PLUS), 0.0)

    def test_minus_above(self):
        self.assertAlmostEqual(divergence_directed(GAUSSIAN, 1.0, 0.0, Direction.MINUS), 0.5)
        self.assertEqual(divergence_directed(GAUSSIAN, -1.0, 0.0, Direction.MINUS), 0.0)

    def test_vectorised(self):
        values = divergence_directed(GAUSSIAN, np.array([-1.0, 1.0]), 0.0, Direction.PLUS)
        np.testing.assert_allclose(values, [0.5, 0.0])


class InvertDivergenceTestCase(SimpleTestCase):

    @mock.patch("expfam.families.MAX_BRACKET_DOUBLINGS", 1)
    def test_poisson_bracket_failure_is_logged(self):
        with self.assertLogs("expfam.families", level="ERROR"):
            with self.assertRaises(DomainError):
                invert_divergence(POISSON, 1.0, 1, 1e6, Bound.UPPER)

    def test_gaussian_closed_form(self):
        self.assertAlmostEqual(invert_divergence(GAUSSIAN, 0.0, 2, 1.0, Bound.UPPER), 1.0)
        self.assertAlmostEqual(invert_divergence(GAUSSIAN, 0.0, 2, 1.0, Bound.LOWER), -1.0)

    def test_zero_budget(self):
        for family, mu in ((GAUSSIAN, 0.2), (BERNOULLI, 0.2), (POISSON, 0.2)):
            self.assertEqual(invert_divergence(family, mu, 7, 0.0, Bound.UPPER), mu)

    def test_bernoulli_round_trip_example(self):
        budget = divergence(BERNOULLI, 0.5, 0.9)
        self.assertAlmostEqual(invert_divergence(BERNOULLI, 0.5, 1, budget, Bound.UPPER), 0.9, places=7)

    def test_bernoulli_caps_at_one(self):
        self.assertEqual(invert_divergence(BERNOULLI, 0.99, 1, 100.0, Bound.UPPER), 1.0)
        self.assertEqual(invert_divergence(BERNOULLI, 1.0, 5, 1.0, Bound.UPPER), 1.0)

    def test_lower_edges(self):
        self.assertEqual(invert_divergence(BERNOULLI, 0.0, 5, 1.0, Bound.LOWER), 0.0)
        self.assertEqual(invert_divergence(POISSON, 0.0, 5, 1.0, Bound.LOWER), 0.0)

    def test_poisson_zero_mean_upper(self):
        # d(0, q) = q
        self.assertAlmostEqual(invert_divergence(POISSON, 0.0, 4, 2.0, Bound.UPPER), 0.5, places=7)

    def test_argument_errors(self):
        with self.assertRaises(ArgumentError):
            invert_divergence(GAUSSIAN, 0.0, 1, -1.0, Bound.UPPER)
        with self.assertRaises(ArgumentError):
            invert_divergence(GAUSSIAN, 0.0, 0, 1.0, Bound.UPPER)

    @settings(max_examples=300, deadline=None)
    @given(mu=st.floats(0.01, 0.95), frac=st.floats(0.02, 0.98), n=st.integers(1, 10_000),
           upper=st.booleans())
    def test_bernoulli_round_trip(self, mu, frac, n, upper):
        q = mu + frac * (1.0 - mu) if upper else mu * (1.0 - frac)
        assume(0.0 < q < 1.0 and abs(q - mu) > 1e-6)
        budget = n * divergence(BERNOULLI, mu, q)
        found = invert_divergence(BERNOULLI, mu, n, budget, Bound.UPPER if upper else Bound.LOWER)
        self.assertLessEqual(abs(found - q), 1e-6 * max(1.0, abs(q)))

    @settings(max_examples=300, deadline=None)
    @given(mu=st.floats(0.0, 50.0), gap=st.floats(1e-3, 50.0), n=st.integers(1, 10_000))
    def test_poisson_round_trip(self, mu, gap, n):
        q = mu + gap
        budget = n * divergence(POISSON, mu, q)
        self.assertLessEqual(abs(invert_divergence(POISSON, mu, n, budget, Bound.UPPER) - q), 1e-6 * max(1.0, q))
        if mu > 2e-3:
            q_low = mu / 2.0
            budget = n * divergence(POISSON, mu, q_low)
            self.assertLessEqual(abs(invert_divergence(POISSON, mu, n, budget, Bound.LOWER) - q_low), 1e-6 * max(1.0, q_low))

    @settings(max_examples=200, deadline=None)
    @given(mu=st.floats(-10.0, 10.0), gap=st.floats(1e-3, 10.0), n=st.integers(1, 10_000))
    def test_gaussian_round_trip(self, mu, gap, n):
        budget = n * divergence(GAUSSIAN, mu, mu + gap)
        self.assertLessEqual(abs(invert_divergence(GAUSSIAN, mu, n, budget, Bound.UPPER) - (mu + gap)), 1e-6 * max(1.0, abs(mu + gap)))


class DrawObservationTestCase(SimpleTestCase):

    def test_bernoulli_draws_are_binary(self):
        draws = draw_observation(BERNOULLI, 0.3, np.random.default_rng(1), size=1000)
        self.assertTrue(set(np.unique(draws)) <= {0.0, 1.0})

    def test_poisson_draws_are_counts(self):
        draws = draw_observation(POISSON, 2.0, np.random.default_rng(1), size=1000)
        self.assertTrue(np.all(draws >= 0))
        np.testing.assert_array_equal(draws, np.round(draws))

    def test_single_draw_is_float(self):
        self.assertIsInstance(draw_observation(GAUSSIAN, 0.0, np.random.default_rng(0)), float)


class PosteriorTestCase(SimpleTestCase):

    def test_gaussian_concentrates(self):
        post = ArmPosterior(GAUSSIAN, count=10**6, total=0.0)
        rng = np.random.default_rng(3)
        draws = [posterior_sample(post, rng) for _ in range(1000)]
        self.assertTrue(np.all(np.abs(draws) <= 0.01))

    def test_bernoulli_prior_is_uniform(self):
        post = ArmPosterior(BERNOULLI, count=0, total=0.0)
        draws = sample_posteriors(BERNOULLI, np.array([0]), np.array([0.0]), np.random.default_rng(5), size=20_000)[:, 0]
        self.assertGreater(stats.kstest(draws, 'uniform').pvalue, 1e-3)
        self.assertAlmostEqual(posterior_prob_below(post, 0.3), 0.3)

    def test_same_seed_same_draw(self):
        post = ArmPosterior(POISSON, count=4, total=9.0)
        first = posterior_sample(post, np.random.default_rng(11))
        second = posterior_sample(post, np.random.default_rng(11))
        self.assertEqual(first, second)

    def test_improper_gaussian(self):
        post = ArmPosterior(GAUSSIAN, count=0, total=0.0)
        self.assertFalse(post.is_proper)
        with self.assertRaises(PosteriorStateError):
            posterior_sample(post, np.random.default_rng(0))
        with self.assertRaises(PosteriorStateError):
            posterior_prob_below(post, 0.0)

    def test_prob_below_examples(self):
        self.assertAlmostEqual(posterior_prob_below(ArmPosterior(GAUSSIAN, 4, 0.0), 0.0), 0.5)
        self.assertAlmostEqual(posterior_prob_below(ArmPosterior(GAUSSIAN, 1, 1.0), 0.0), 0.158655, places=6)

    def test_log_prob_below_survives_underflow(self):
        post = ArmPosterior(GAUSSIAN, count=10_000, total=10_000.0)
        self.assertEqual(posterior_prob_below(post, 0.0), 0.0)
        log_p = posterior_log_prob_below(post, 0.0)
        self.assertTrue(np.isfinite(log_p))
        self.assertLess(log_p, -1000.0)

    def test_log_prob_below_survives_bernoulli_underflow(self):
        post = ArmPosterior(BERNOULLI, count=5000, total=4500.0)
        self.assertEqual(posterior_prob_below(post, 0.1), 0.0)
        log_p = posterior_log_prob_below(post, 0.1)
        a, b, x = 4501.0, 501.0, 0.1
        leading = a * math.log(x) + b * math.log1p(-x) - math.log(a) - special.betaln(a, b)
        ratio = (a + b) * x / (a + 1.0)
        self.assertGreaterEqual(log_p, leading - 1e-9)
        self.assertLessEqual(log_p, leading - math.log1p(-ratio) + 1e-9)

    def test_log_prob_below_survives_poisson_underflow(self):
        post = ArmPosterior(POISSON, count=2000, total=10_000.0)
        self.assertEqual(posterior_prob_below(post, 0.5), 0.0)
        log_p = posterior_log_prob_below(post, 0.5)
        shape, x = 10_001.0, 0.5 * 2001.0
        leading = -x + shape * math.log(x) - special.gammaln(shape + 1.0)
        self.assertGreaterEqual(log_p, leading - 1e-9)
        self.assertLessEqual(log_p, leading - math.log1p(-x / (shape + 1.0)) + 1e-9)

    def test_log_prob_below_orders_underflowing_arms(self):
        with self.assertLogs("expfam.posterior", level="DEBUG"):
            log_p = log_prob_below(BERNOULLI, np.array([5000, 5000]), np.array([4500.0, 3000.0]), 0.1)
        self.assertTrue(np.all(np.isfinite(log_p)))
        self.assertGreater(log_p[1], log_p[0])

    def test_log_tails_match_scipy_where_representable(self):
        np.testing.assert_allclose(log_beta_cdf_tail(30.0, 10.0, 0.4), np.log(special.betainc(30.0, 10.0, 0.4)), rtol=1e-10)
        np.testing.assert_allclose(log_beta_cdf_tail(3.0, 2.0, 0.2), np.log(special.betainc(3.0, 2.0, 0.2)), rtol=1e-10)
        np.testing.assert_allclose(log_gamma_cdf_tail(20.0, 8.0), np.log(special.gammainc(20.0, 8.0)), rtol=1e-10)
        np.testing.assert_allclose(log_gamma_cdf_tail(1.0, 0.5), np.log(special.gammainc(1.0, 0.5)), rtol=1e-10)

    def test_posterior_samples_match_analytic_moments(self):
        rng = np.random.default_rng(2024)
        size = 100_000
        for post, gamma in ((ArmPosterior(GAUSSIAN, 5, 1.5), 0.2),
                            (ArmPosterior(BERNOULLI, 20, 6.0), 0.3),
                            (ArmPosterior(POISSON, 10, 23.0), 2.0)):
            draws = sample_posteriors(post.family, np.array([post.count]), np.array([post.total]), rng, size=size)[:, 0]
            se_mean = draws.std(ddof=1) / math.sqrt(size)
            self.assertLessEqual(abs(draws.mean() - posterior_mean(post)), 4 * se_mean)

            p = posterior_prob_below(post, gamma)
            se_p = math.sqrt(p * (1 - p) / size)
            self.assertLessEqual(abs(np.mean(draws < gamma) - p), 4 * se_p)

    def test_sampled_values_lie_in_domain(self):
        rng = np.random.default_rng(8)
        beta = sample_posteriors(BERNOULLI, np.array([3, 50]), np.array([1.0, 49.0]), rng, size=1000)
        gamma = sample_posteriors(POISSON, np.array([0, 10]), np.array([0.0, 3.0]), rng, size=1000)
        self.assertTrue(BERNOULLI.contains(beta))
        self.assertTrue(POISSON.contains(gamma))
        self.assertEqual(beta.shape, (1000, 2))

import math
from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from pydantic import ValidationError

from deviation.subsets import SubsetSearch
from deviation.thresholds import iterated_log_penalty, stopping_threshold, threshold_T
from expfam.families import BERNOULLI, GAUSSIAN, POISSON
from oracle.instances import BanditInstance

from .episode import FiredClause, Recommendation, run_episode
from .exceptions import RuleConfigError
from .sampling import murphy_fallback_arm, murphy_posterior_draw, select_lcb, select_murphy, select_round_robin, select_thompson
from .schemas import RuleConfig, SamplingRule, StoppingRule
from .state import RunState
from .stopping import StoppingCheck, check_stop_greater, check_stop_less


def gaussian_state(counts, means, gamma=0.0):
    counts = np.asarray(counts)
    return RunState.from_statistics(GAUSSIAN, gamma, counts, counts * np.asarray(means, dtype=float))


class RunStateTestCase(SimpleTestCase):

    def test_observe_updates_statistics(self):
        state = RunState.empty(BERNOULLI, 0.5, 3)
        self.assertFalse(state.initialized)
        for arm, value in ((0, 1.0), (1, 0.0), (2, 1.0), (0, 0.0)):
            state.observe(arm, value)
        self.assertTrue(state.initialized)
        self.assertEqual(state.round, 4)
        self.assertEqual(state.counts.tolist(), [2, 1, 1])
        np.testing.assert_allclose(state.means, [0.5, 0.0, 1.0])


class SamplingTestCase(SimpleTestCase):

    def test_lcb_tie_goes_to_lowest_index(self):
        self.assertEqual(select_lcb(gaussian_state([10, 10], [0.3, 0.3]), 0.05), 0)

    def test_lcb_prefers_smaller_mean(self):
        self.assertEqual(select_lcb(gaussian_state([10, 10], [-5.0, 0.0]), 0.05), 0)

    def test_lcb_prefers_wider_interval(self):
        self.assertEqual(select_lcb(gaussian_state([1, 100], [0.0, 0.0]), 0.05), 0)
        self.assertEqual(select_lcb(gaussian_state([100, 1], [0.0, 0.0]), 0.05), 1)

    def test_thompson_single_arm(self):
        rng = np.random.default_rng(0)
        state = gaussian_state([3], [1.0])
        self.assertTrue(all(select_thompson(state, rng) == 0 for _ in range(20)))

    def test_thompson_separated_posteriors(self):
        rng = np.random.default_rng(1)
        state = gaussian_state([10**6, 10**6], [-1.0, 1.0])
        picks = [select_thompson(state, rng) for _ in range(10_000)]
        self.assertGreaterEqual(picks.count(0) / len(picks), 0.999)

    def test_thompson_is_deterministic_given_seed(self):
        state = RunState.from_statistics(BERNOULLI, 0.5, [5, 5, 5], [2.0, 3.0, 1.0])
        first = [select_thompson(state, np.random.default_rng(42)) for _ in range(5)]
        second = [select_thompson(state, np.random.default_rng(42)) for _ in range(5)]
        self.assertEqual(first, second)

    def test_murphy_accepts_first_draw_deep_below(self):
        rng = np.random.default_rng(2)
        state = gaussian_state([1000, 1000, 1000], [-2.0, -1.5, -1.0])
        attempts = [murphy_posterior_draw(state, rng, 100_000)[1] for _ in range(1000)]
        self.assertGreaterEqual(attempts.count(1) / len(attempts), 0.99)

    def test_murphy_accepted_vectors_are_below(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            counts = rng.integers(1, 30, size=4)
            state = RunState.from_statistics(BERNOULLI, 0.4, counts, rng.binomial(counts, 0.45))
            theta, attempts = murphy_posterior_draw(state, rng, 10_000)
            self.assertGreaterEqual(attempts, 1)
            if theta is not None:
                self.assertLess(theta.min(), 0.4)

    def test_murphy_single_arm(self):
        rng = np.random.default_rng(4)
        state = RunState.from_statistics(POISSON, 2.0, [4], [6.0])
        self.assertEqual(select_murphy(state, rng, 1000), 0)

    def test_murphy_fallback_after_cap(self):
        rng = np.random.default_rng(5)
        state = gaussian_state([10_000, 10_000, 10_000], [1.0, 0.5, 1.0])
        theta, attempts = murphy_posterior_draw(state, rng, 50)
        self.assertIsNone(theta)
        self.assertEqual(attempts, 50)
        picks = {select_murphy(state, rng, 50) for _ in range(20)}
        self.assertEqual(picks, {1})

    def test_murphy_fallback_on_concentrated_bernoulli_arm(self):
        rng = np.random.default_rng(6)
        state = RunState.from_statistics(BERNOULLI, 0.1, [5000], [4500.0])
        self.assertIsNone(murphy_posterior_draw(state, rng, 10)[0])
        self.assertEqual({select_murphy(state, rng, 10) for _ in range(20)}, {0})

    def test_murphy_fallback_on_concentrated_bernoulli_arms(self):
        rng = np.random.default_rng(7)
        state = RunState.from_statistics(BERNOULLI, 0.1, [5000, 5000], [4500.0, 3000.0])
        self.assertEqual({murphy_fallback_arm(state, rng) for _ in range(20)}, {1})

    def test_murphy_fallback_on_concentrated_poisson_arm(self):
        rng = np.random.default_rng(8)
        state = RunState.from_statistics(POISSON, 0.5, [2000], [10_000.0])
        self.assertEqual({select_murphy(state, rng, 10) for _ in range(20)}, {0})

    def test_murphy_fallback_without_finite_mass_is_uniform(self):
        rng = np.random.default_rng(9)
        state = RunState.from_statistics(BERNOULLI, 0.1, [5, 5], [1.0, 1.0])
        with mock.patch('rules.sampling.log_prob_below', return_value=np.array([-np.inf, -np.inf])):
            picks = {murphy_fallback_arm(state, rng) for _ in range(100)}
        self.assertEqual(picks, {0, 1})

    def test_thompson_uses_prior(self):
        state = RunState.from_statistics(BERNOULLI, 0.5, [0, 0], [0.0, 0.0])
        rng = np.random.default_rng(10)
        with mock.patch('rules.sampling.sample_posteriors', return_value=np.array([0.7, 0.2])) as sampler:
            self.assertEqual(select_thompson(state, rng, prior=(2.0, 5.0)), 1)
        self.assertEqual(sampler.call_args.kwargs['prior'], (2.0, 5.0))

    def test_round_robin(self):
        state = gaussian_state([1, 1, 1], [0.0, 0.0, 0.0])
        self.assertEqual(select_round_robin(state), 0)
        state.observe(0, 0.0)
        self.assertEqual(select_round_robin(state), 1)


class StoppingTestCase(SimpleTestCase):

    def test_greater_blocked_by_low_arm(self):
        self.assertFalse(check_stop_greater(gaussian_state([10**4, 10**4], [-0.1, 5.0]), 0.05))

    def test_greater_single_arm(self):
        self.assertTrue(check_stop_greater(gaussian_state([100], [1.0]), 0.05))
        self.assertFalse(check_stop_greater(gaussian_state([20], [1.0]), 0.05))
        self.assertLess(10.0, iterated_log_penalty(20) + threshold_T(math.log(20)))

    def test_less_needs_an_arm_below(self):
        state = gaussian_state([50, 50], [0.5, 1.0])
        for mode in (StoppingRule.BOX, StoppingRule.AGGREGATE, StoppingRule.GLRT):
            self.assertEqual(check_stop_less(state, 0.05, mode), (False, None))

    def test_box_single_arm_evidence(self):
        means = [-math.sqrt(0.5)] + [1.0] * 9
        state = gaussian_state([100] * 10, means)
        self.assertEqual(check_stop_less(state, 0.05, StoppingRule.BOX), (True, (0,)))
        fired, _ = check_stop_less(state, 0.05, StoppingRule.AGGREGATE)
        self.assertEqual(fired, 25.0 >= stopping_threshold(100, math.log(2000)))

    def test_aggregate_pools_many_weak_arms(self):
        state = gaussian_state([200] * 8, [-0.25] * 8)
        self.assertEqual(check_stop_less(state, 0.05, StoppingRule.BOX), (False, None))
        fired, witness = check_stop_less(state, 0.05, StoppingRule.AGGREGATE)
        self.assertTrue(fired)
        self.assertGreater(len(witness), 1)

    def test_glrt(self):
        fired, witness = check_stop_less(gaussian_state([100], [-1.0]), 0.05, StoppingRule.GLRT)
        self.assertTrue(fired)
        self.assertEqual(witness, (0,))
        fired, witness = check_stop_less(gaussian_state([3, 50], [-0.1, 1.0]), 0.05, StoppingRule.GLRT)
        self.assertEqual((fired, witness), (False, None))

    def test_glrt_budget_too_small(self):
        with self.assertRaises(RuleConfigError):
            StoppingCheck(20, 0.5, StoppingRule.GLRT)
        StoppingCheck(10, 0.5, StoppingRule.GLRT)

    def test_margins_sign_matches_decision(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            counts = rng.integers(1, 500, size=5)
            state = gaussian_state(counts, rng.normal(-0.1, 0.3, size=5))
            for mode in StoppingRule:
                check = StoppingCheck(5, 0.1, mode)
                margin, _ = check.less_margin(state)
                self.assertEqual(check.less(state)[0], margin >= 0)
                self.assertEqual(check.greater(state), check.greater_margin(state) >= 0)


class RuleConfigTestCase(SimpleTestCase):

    def test_defaults(self):
        config = RuleConfig(sampling='murphy', stopping='aggregate', delta=0.05)
        self.assertIs(config.sampling, SamplingRule.MURPHY)
        self.assertEqual(config.horizon_cap, 10_000_000)
        self.assertEqual(config.murphy_rejection_cap, 100_000)
        self.assertIs(config.search, SubsetSearch.NESTED)

    def test_invalid_delta(self):
        for delta in (0.0, 1.0, -0.1):
            with self.assertRaises(ValidationError):
                RuleConfig(sampling='lcb', stopping='box', delta=delta)

    def test_prior(self):
        self.assertEqual(RuleConfig(sampling='thompson', stopping='box', delta=0.05).prior, (1.0, 1.0))
        self.assertEqual(RuleConfig(sampling='thompson', stopping='box', delta=0.05, prior=(2.0, 3.0)).prior, (2.0, 3.0))
        for prior in ((0.0, 1.0), (1.0, -2.0)):
            with self.assertRaises(ValidationError):
                RuleConfig(sampling='thompson', stopping='box', delta=0.05, prior=prior)

    def test_episode_passes_prior_to_sampling(self):
        instance = BanditInstance.build(BERNOULLI, (0.2, 0.8), 0.5)
        config = RuleConfig(sampling='murphy', stopping='aggregate', delta=0.1, horizon_cap=50, prior=(2.0, 3.0))
        with mock.patch('rules.episode.select_murphy', return_value=0) as select:
            run_episode(instance, config, np.random.default_rng(11))
        self.assertTrue(select.called)
        for call in select.call_args_list:
            self.assertEqual(call.args[3], (2.0, 3.0))


class EpisodeTestCase(SimpleTestCase):

    def test_single_far_arm_stops_fast(self):
        instance = BanditInstance.build(GAUSSIAN, (-10.0,), 0.0)
        config = RuleConfig(sampling='murphy', stopping='aggregate', delta=0.05)
        rng = np.random.default_rng(10)
        outcomes = [run_episode(instance, config, rng).verdict for _ in range(200)]
        self.assertTrue(all(v.recommendation is Recommendation.BELOW for v in outcomes))
        self.assertGreaterEqual(sum(v.stopped_at <= 25 for v in outcomes) / len(outcomes), 0.99)

    def test_horizon_equal_to_arm_count(self):
        instance = BanditInstance.build(GAUSSIAN, (-10.0, 3.0), 0.0)
        config = RuleConfig(sampling='lcb', stopping='box', delta=0.05, horizon_cap=2)
        verdict = run_episode(instance, config, np.random.default_rng(0)).verdict
        self.assertEqual(verdict.recommendation, Recommendation.INCONCLUSIVE)
        self.assertEqual(verdict.fired_clause, FiredClause.HORIZON)
        self.assertEqual(verdict.stopped_at, 2)
        self.assertFalse(verdict.conclusive)

    def test_horizon_below_arm_count(self):
        instance = BanditInstance.build(GAUSSIAN, (-1.0, 1.0, 2.0), 0.0)
        config = RuleConfig(sampling='lcb', stopping='box', delta=0.05, horizon_cap=2)
        with self.assertRaises(RuleConfigError):
            run_episode(instance, config, np.random.default_rng(0))

    def test_degenerate_instance_runs_into_horizon(self):
        instance = BanditInstance.build(GAUSSIAN, (0.0, 1.0), 0.0)
        config = RuleConfig(sampling='thompson', stopping='box', delta=0.05, horizon_cap=300)
        verdict = run_episode(instance, config, np.random.default_rng(6)).verdict
        self.assertLessEqual(verdict.stopped_at, 300)

    def test_reproducible(self):
        instance = BanditInstance.build(BERNOULLI, (0.2, 0.35, 0.6), 0.5)
        config = RuleConfig(sampling='murphy', stopping='aggregate', delta=0.1)
        first = run_episode(instance, config, np.random.default_rng(77), trace=True)
        second = run_episode(instance, config, np.random.default_rng(77), trace=True)
        self.assertEqual(first.verdict, second.verdict)
        self.assertEqual(first.trace, second.trace)
        np.testing.assert_array_equal(first.counts, second.counts)

    def test_trace_records(self):
        instance = BanditInstance.build(GAUSSIAN, (-1.0, 0.5), 0.0)
        config = RuleConfig(sampling='round_robin', stopping='box', delta=0.1)
        outcome = run_episode(instance, config, np.random.default_rng(12), trace=True)
        self.assertEqual(len(outcome.trace), outcome.verdict.stopped_at)
        self.assertEqual([r.arm for r in outcome.trace[:4]], [0, 1, 0, 1])
        self.assertEqual(outcome.trace[0].counts, (1, 0))
        self.assertTrue(math.isnan(outcome.trace[0].less_margin))
        self.assertEqual(sum(outcome.counts), outcome.verdict.stopped_at)
        self.assertGreaterEqual(outcome.trace[-1].less_margin, 0.0)

    def test_verdicts_match_clauses(self):
        cases = (
            (BanditInstance.build(GAUSSIAN, (0.5, 0.625, 0.75, 0.875, 1.0), 0.0), 'murphy', 'box', Recommendation.ABOVE),
            (BanditInstance.build(GAUSSIAN, tuple(np.linspace(-1, 1, 10)), 0.0), 'murphy', 'aggregate', Recommendation.BELOW),
            (BanditInstance.build(BERNOULLI, (0.2, 0.6), 0.5), 'lcb', 'aggregate', Recommendation.BELOW),
            (BanditInstance.build(POISSON, (0.5, 3.0), 2.0), 'thompson', 'glrt', Recommendation.BELOW),
            (BanditInstance.build(BERNOULLI, (0.7, 0.8), 0.5), 'lcb', 'glrt', Recommendation.ABOVE),
        )
        rng = np.random.default_rng(21)
        for instance, sampling, stopping, expected in cases:
            config = RuleConfig(sampling=sampling, stopping=stopping, delta=0.1)
            for _ in range(5):
                verdict = run_episode(instance, config, rng).verdict
                self.assertEqual(verdict.recommendation, expected, f"{instance.means} {sampling}/{stopping}")
                clause = FiredClause.TAU_LESS if expected is Recommendation.BELOW else FiredClause.TAU_GREATER
                self.assertEqual(verdict.fired_clause, clause)
                self.assertEqual(verdict.witness_subset is not None, expected is Recommendation.BELOW)

    def test_powerset_search_stops_no_later(self):
        rng = np.random.default_rng(31)
        instance = BanditInstance.build(GAUSSIAN, (-0.3, -0.2, -0.1, 0.4), 0.0)
        for seed in rng.integers(0, 2**32, size=10):
            taus = {}
            for search in (SubsetSearch.NESTED, SubsetSearch.POWERSET):
                config = RuleConfig(sampling='round_robin', stopping='aggregate', delta=0.05, search=search)
                taus[search] = run_episode(instance, config, np.random.default_rng(seed)).verdict.stopped_at
            self.assertLessEqual(taus[SubsetSearch.POWERSET], taus[SubsetSearch.NESTED])

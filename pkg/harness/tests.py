import io
import json
import tempfile
import uuid
from pathlib import Path
from unittest import mock

import numpy as np
import pandas as pd
from django.conf import settings
from django.contrib.auth.models import User
from django.core.management import CommandError, call_command
from django.test import Client, SimpleTestCase, TestCase, override_settings
from joblib import parallel_config
from ninja_jwt.tokens import RefreshToken
from pydantic import ValidationError

from oracle.instances import BanditInstance
from rules.episode import run_episode
from rules.schemas import SamplingRule, StoppingRule

from .exceptions import ConfigError, OutputError
from .models import ExperimentRun
from .outputs import csv_columns, emit_outputs, summary_frame, write_summary
from .replication import replicate, replication_rng
from .schemas import ExperimentConfig, ExperimentSummary, InstanceSpec, OutputFormat
from .service import (_rule_config, load_config, run_monte_carlo, summarize_bounds, trace_confidence_bounds,
                      with_overrides)
from .tasks import run_experiment_task


def far_below_config(**overrides):
    data = {
        "name": "far_below",
        "instance": {"family": "gaussian", "gamma": 0.0, "means": [-10.0]},
        "rules": [{"sampling": "murphy", "stopping": "aggregate"}],
        "deltas": [0.1],
        "replications": 1,
        "master_seed": 7,
        "horizon_cap": 10_000,
    }
    data.update(overrides)
    return data


def small_config(**overrides):
    data = {
        "name": "small",
        "instance": {"family": "gaussian", "gamma": 0.0, "means": [-2.0, -1.0, 1.5]},
        "rules": [
            {"sampling": "murphy", "stopping": "aggregate"},
            {"sampling": "lcb", "stopping": "box"},
            {"sampling": "round_robin", "stopping": "glrt"},
        ],
        "deltas": [0.1, 0.01],
        "replications": 4,
        "master_seed": 11,
        "horizon_cap": 50_000,
    }
    data.update(overrides)
    return data


class InstanceSpecTestCase(SimpleTestCase):

    def test_explicit_means(self):
        instance = InstanceSpec(gamma=0.0, means=[-1.0, 2.0]).build()
        self.assertEqual(instance.means, (-1.0, 2.0))

    def test_linspace(self):
        spec = InstanceSpec(gamma=0.0, linspace={"lo": -1.0, "hi": 1.0, "count": 10})
        np.testing.assert_allclose(spec.build().mean_array, np.linspace(-1.0, 1.0, 10))

    def test_blocks(self):
        spec = InstanceSpec(gamma=0.0, blocks=[{"mean": -1.0, "count": 5}, {"mean": 0.0, "count": 15}])
        instance = spec.build()
        self.assertEqual(instance.arm_count, 20)
        self.assertEqual(instance.means.count(-1.0), 5)
        self.assertEqual(instance.means[5:], (0.0,) * 15)

    def test_staircase(self):
        spec = InstanceSpec(gamma=0.0, staircase={"below": 4, "total": 6, "lo": -1.0})
        np.testing.assert_allclose(spec.mean_values(), [-1.0, -0.75, -0.5, -0.25, 0.0, 0.0])
        self.assertLess(spec.build().minimum, 0.0)

    def test_exactly_one_generator(self):
        with self.assertRaises(ValidationError):
            InstanceSpec(gamma=0.0)
        with self.assertRaises(ValidationError):
            InstanceSpec(gamma=0.0, means=[1.0], linspace={"lo": 0.0, "hi": 1.0, "count": 3})

    def test_staircase_total_below_count(self):
        with self.assertRaises(ValidationError):
            InstanceSpec(gamma=0.0, staircase={"below": 4, "total": 3, "lo": -1.0})


class ExperimentConfigTestCase(SimpleTestCase):

    @override_settings(MINTHRESHOLD_REPLICATIONS=7, MINTHRESHOLD_HORIZON_CAP=123, MINTHRESHOLD_OUTPUT_DIR="out")
    def test_defaults_come_from_settings(self):
        config = ExperimentConfig.model_validate({"instance": {"gamma": 0.0, "means": [-1.0]}})
        self.assertEqual(config.replications, 7)
        self.assertEqual(config.horizon_cap, 123)
        self.assertEqual(config.output_dir, "out")
        self.assertEqual(config.deltas, [0.1, 0.01, 1e-3, 1e-4])
        self.assertEqual(config.formats, [OutputFormat.CSV, OutputFormat.JSON])
        self.assertEqual(config.rules, [])

    def test_invalid_fields(self):
        for overrides in ({"deltas": [0.5, 1.0]}, {"deltas": []}, {"replications": 0},
                          {"instance": {"gamma": 0.0, "means": [0.0, 1.0]}},
                          {"instance": {"family": "bernoulli", "gamma": 0.5, "means": [0.0, 0.7]}},
                          {"rules": [{"sampling": "ucb", "stopping": "box"}]}):
            with self.subTest(overrides=overrides):
                with self.assertRaises(ValidationError):
                    ExperimentConfig.model_validate(far_below_config(**overrides))


class LoadConfigTestCase(SimpleTestCase):

    def test_from_dict_and_file(self):
        config = load_config(small_config())
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.json"
            path.write_text(json.dumps(small_config()))
            self.assertEqual(load_config(path), config)
            self.assertEqual(load_config(str(path)), config)

    def test_errors_become_config_errors(self):
        with tempfile.TemporaryDirectory() as tmp:
            broken = Path(tmp) / "broken.json"
            broken.write_text("{not json")
            with self.assertRaises(ConfigError):
                load_config(broken)
            with self.assertRaises(ConfigError):
                load_config(Path(tmp) / "missing.json")
        with self.assertRaises(ConfigError):
            load_config(far_below_config(replications=-1))

    def test_glrt_undefined_for_many_arms(self):
        data = far_below_config(instance={"gamma": 0.0, "blocks": [{"mean": -1.0, "count": 100}]},
                                rules=[{"sampling": "murphy", "stopping": "glrt"}], deltas=[0.1])
        with self.assertRaises(ConfigError):
            load_config(data)
        data["rules"] = [{"sampling": "murphy", "stopping": "aggregate"}]
        self.assertEqual(load_config(data).instance.build().arm_count, 100)

    def test_shipped_configs_load(self):
        paths = sorted((Path(settings.BASE_DIR) / "configs").glob("*.json"))
        self.assertGreaterEqual(len(paths), 5)
        for path in paths:
            with self.subTest(config=path.name):
                load_config(path)

    def test_staircase_config(self):
        config = load_config(Path(settings.BASE_DIR) / "configs" / "staircase_k.json")
        instance = config.instance.build()
        self.assertEqual(instance.arm_count, 100)
        self.assertEqual(int(np.count_nonzero(instance.mean_array < 0.0)), 20)
        self.assertEqual(instance.minimum, -1.0)
        self.assertEqual({(r.sampling.value, r.stopping.value) for r in config.rules},
                         {(s, t) for s in ("murphy", "lcb") for t in ("aggregate", "box", "glrt")})

    def test_prior_reaches_rule_config(self):
        config = load_config(far_below_config(prior=[2.0, 3.0]))
        self.assertEqual(_rule_config(config, config.rules[0], 0.1).prior, (2.0, 3.0))
        self.assertEqual(load_config(far_below_config()).prior, (1.0, 1.0))
        with self.assertRaises(ConfigError):
            load_config(far_below_config(prior=[0.0, 1.0]))

    def test_horizon_below_arm_count(self):
        with self.assertRaises(ConfigError):
            load_config(small_config(horizon_cap=2))

    def test_overrides(self):
        config = with_overrides(load_config(small_config()), replications=9, master_seed=None, output_dir="elsewhere")
        self.assertEqual(config.replications, 9)
        self.assertEqual(config.master_seed, 11)
        self.assertEqual(config.output_dir, "elsewhere")


class MonteCarloTestCase(SimpleTestCase):

    def test_single_replication_far_below(self):
        config = load_config(far_below_config())
        summary = run_monte_carlo(config, n_jobs=1)
        self.assertEqual(summary.arm_count, 1)
        self.assertEqual(len(summary.records), 1)
        record = summary.records[0]
        self.assertEqual(record.error_rate, 0.0)
        self.assertEqual(record.inconclusive_rate, 0.0)
        self.assertIsNone(record.se_tau)
        self.assertEqual(record.proportions, [1.0])
        self.assertEqual(record.reps, 1)
        self.assertEqual(record.seed, 7)

        instance = config.instance.build()
        rule = config.rules[0]
        outcome = run_episode(instance, _rule_config(config, rule, 0.1), replication_rng(7, 0, 0, 0))
        self.assertEqual(record.mean_tau, float(outcome.verdict.stopped_at))
        self.assertEqual(record.mean_witness_size, 1.0)

    def test_deterministic(self):
        config = load_config(small_config())
        self.assertEqual(run_monte_carlo(config, n_jobs=1), run_monte_carlo(config, n_jobs=1))

    def test_schedule_independent(self):
        config = load_config(small_config())
        serial = run_monte_carlo(config, n_jobs=1)
        with parallel_config(backend='threading'):
            threaded = run_monte_carlo(config, n_jobs=3)
        self.assertEqual(serial, threaded)

    def test_seed_changes_results(self):
        first = run_monte_carlo(load_config(small_config(replications=8)), n_jobs=1)
        second = run_monte_carlo(load_config(small_config(replications=8, master_seed=12)), n_jobs=1)
        self.assertNotEqual([r.mean_tau for r in first.records], [r.mean_tau for r in second.records])

    def test_record_invariants(self):
        summary = run_monte_carlo(load_config(small_config()), n_jobs=1)
        self.assertEqual(len(summary.records), 6)
        self.assertEqual([(r.sampling, r.stopping, r.delta) for r in summary.records[:2]],
                         [(SamplingRule.MURPHY, StoppingRule.AGGREGATE, 0.1), (SamplingRule.MURPHY, StoppingRule.AGGREGATE, 0.01)])
        self.assertAlmostEqual(summary.characteristic_time, 0.5)
        for record in summary.records:
            self.assertEqual(record.conclusive, 4)
            self.assertAlmostEqual(sum(record.proportions), 1.0)
            self.assertTrue(0.0 <= record.error_rate <= 1.0)
            self.assertGreaterEqual(record.se_tau, 0.0)
            self.assertGreaterEqual(record.mean_tau, 3.0)

    def test_replication_matches_episode(self):
        config = load_config(small_config())
        instance = config.instance.build()
        rule_config = _rule_config(config, config.rules[1], 0.01)
        row = replicate(instance, rule_config, 11, 1, 1, 3)
        outcome = run_episode(instance, rule_config, replication_rng(11, 1, 1, 3))
        self.assertEqual(row[0], outcome.verdict.stopped_at)
        self.assertEqual(row[4], tuple(outcome.counts.tolist()))

    def test_horizon_runs_are_inconclusive(self):
        config = load_config(small_config(horizon_cap=3, replications=2))
        for record in run_monte_carlo(config, n_jobs=1).records:
            self.assertEqual(record.inconclusive_rate, 1.0)
            self.assertEqual(record.conclusive, 0)
            self.assertIsNone(record.mean_tau)
            self.assertIsNone(record.error_rate)
            self.assertIsNone(record.proportions)

    def test_empty_rule_grid(self):
        summary = run_monte_carlo(load_config(small_config(rules=[])), n_jobs=1)
        self.assertEqual(summary.records, [])


class SummarizeBoundsTestCase(SimpleTestCase):

    def test_above_instance(self):
        report = summarize_bounds(BanditInstance.build('gaussian', np.linspace(0.5, 1.0, 5), 0.0), 0.05)
        self.assertEqual(report.side, 'above')
        self.assertAlmostEqual(report.characteristic_time, 21.2878, places=4)
        self.assertAlmostEqual(report.generic_lower_bound, 56.41, places=2)
        np.testing.assert_allclose(report.weights, [0.376, 0.240, 0.167, 0.123, 0.094], atol=1e-3)
        self.assertIsNone(report.boosted_lower_bound)

    def test_half_delta(self):
        report = summarize_bounds(BanditInstance.build('gaussian', np.linspace(0.5, 1.0, 5), 0.0), 0.5)
        self.assertEqual(report.generic_lower_bound, 0.0)

    def test_below_pair(self):
        report = summarize_bounds(BanditInstance.build('gaussian', (-1.0, 1.0), 0.0), 0.01)
        self.assertEqual(report.side, 'below')
        self.assertEqual(report.minimizers, [0])
        self.assertAlmostEqual(report.boosted_lower_bound, 9.0376, places=4)
        self.assertAlmostEqual(report.min_draws_bound, 0.031111, places=6)

    def test_unclassifiable(self):
        with self.assertRaises(ValueError):
            summarize_bounds(BanditInstance.build('gaussian', (0.0, 1.0), 0.0), 0.1)


class OutputsTestCase(SimpleTestCase):

    def setUp(self):
        self.summary = run_monte_carlo(load_config(small_config(replications=2, deltas=[0.1])), n_jobs=1)

    def test_columns(self):
        self.assertEqual(csv_columns(3), ['sampling', 'stopping', 'delta', 'mean_tau', 'se_tau', 'error_rate',
                                          'inconclusive_rate', 'prop_1', 'prop_2', 'prop_3',
                                          'mean_witness_size', 'reps', 'seed'])

    def test_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = emit_outputs(self.summary, 'csv', Path(tmp) / "nested" / "small.csv")
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), csv_columns(3))
        self.assertEqual(len(frame), 3)
        self.assertEqual(frame['sampling'].tolist(), ['murphy', 'lcb', 'round_robin'])
        np.testing.assert_allclose(frame[['prop_1', 'prop_2', 'prop_3']].sum(axis=1), 1.0)

    def test_empty_grid_header_only(self):
        summary = run_monte_carlo(load_config(small_config(rules=[])), n_jobs=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = emit_outputs(summary, OutputFormat.CSV, Path(tmp) / "empty.csv")
            lines = path.read_text().splitlines()
        self.assertEqual(lines, [",".join(csv_columns(3))])

    def test_json_reparses_to_same_summary(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = emit_outputs(self.summary, OutputFormat.JSON, Path(tmp) / "small.json")
            reparsed = ExperimentSummary.model_validate_json(path.read_text())
        self.assertEqual(reparsed, self.summary)
        self.assertEqual(reparsed.config.name, "small")

    def test_write_summary_uses_requested_formats(self):
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_summary(self.summary, tmp)
            self.assertEqual(sorted(p.name for p in paths), ["small.csv", "small.json"])
            self.assertTrue(all(p.exists() for p in paths))

    def test_unwritable_path(self):
        with tempfile.TemporaryDirectory() as tmp:
            blocker = Path(tmp) / "file"
            blocker.write_text("")
            with self.assertRaises(OutputError) as ctx:
                emit_outputs(self.summary, 'csv', blocker / "out.csv")
        self.assertIn(str(blocker), str(ctx.exception))

    def test_frame_blanks_proportions_without_conclusive_runs(self):
        summary = run_monte_carlo(load_config(small_config(horizon_cap=3, replications=1, deltas=[0.1])), n_jobs=1)
        frame = summary_frame(summary)
        self.assertTrue(frame[['prop_1', 'prop_2', 'prop_3', 'mean_tau']].isna().all().all())


class ConfidenceTraceTestCase(SimpleTestCase):

    def test_trace_shape_and_box_minimum(self):
        config = load_config(far_below_config(
            instance={"family": "bernoulli", "gamma": 0.15,
                      "blocks": [{"mean": 0.1, "count": 3}, {"mean": 0.3, "count": 1}, {"mean": 0.5, "count": 1}]},
            rules=[]))
        frame = trace_confidence_bounds(config, 40)
        self.assertEqual(list(frame.columns), ['round', 'u_min_box', 'u_min_agg', 'box_1', 'box_2', 'box_3', 'box_4', 'box_5'])
        self.assertEqual(frame['round'].tolist(), list(range(5, 41)))
        box_min = frame[[f"box_{a}" for a in range(1, 6)]].min(axis=1)
        np.testing.assert_allclose(frame['u_min_box'], box_min, atol=1e-5)
        self.assertTrue(((frame['u_min_agg'] > 0.0) & (frame['u_min_agg'] <= 1.0)).all())

    def test_trace_is_reproducible(self):
        config = load_config(far_below_config(instance={"gamma": 0.0, "means": [-1.0, 0.5]}))
        pd.testing.assert_frame_equal(trace_confidence_bounds(config, 10), trace_confidence_bounds(config, 10))

    def test_rounds_below_arm_count(self):
        config = load_config(far_below_config(instance={"gamma": 0.0, "means": [-1.0, 0.5, 1.0]}))
        with self.assertRaises(ConfigError):
            trace_confidence_bounds(config, 2)


class CommandTestCase(SimpleTestCase):

    def write_config(self, tmp, data):
        path = Path(tmp) / "config.json"
        path.write_text(json.dumps(data))
        return str(path)

    def test_run_writes_outputs(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = self.write_config(tmp, small_config(deltas=[0.1]))
            out = io.StringIO()
            call_command('run', config=config, reps=2, seed=3, out=str(Path(tmp) / "results"), n_jobs=1, stdout=out)
            frame = pd.read_csv(Path(tmp) / "results" / "small.csv")
            summary = json.loads((Path(tmp) / "results" / "small.json").read_text())
        self.assertIn("small.csv", out.getvalue())
        self.assertEqual(frame['reps'].tolist(), [2, 2, 2])
        self.assertEqual(frame['seed'].tolist(), [3, 3, 3])
        self.assertEqual(summary['config']['replications'], 2)

    def test_run_rejects_bad_config(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = self.write_config(tmp, small_config(deltas=[1.5]))
            with self.assertRaises(CommandError):
                call_command('run', config=config, stdout=io.StringIO())
        with self.assertRaises(CommandError):
            call_command('run', config="/nonexistent/config.json", stdout=io.StringIO())

    def test_bounds(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = self.write_config(tmp, far_below_config(instance={"gamma": 0.0, "means": [-1.0, 1.0]},
                                                             deltas=[0.01, 0.1]))
            out = io.StringIO()
            call_command('bounds', config=config, stdout=out)
        text = out.getvalue()
        self.assertEqual(text.count('"characteristic_time"'), 2)
        self.assertIn('"boosted_lower_bound"', text)

    def test_ci_trace_to_stdout(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = self.write_config(tmp, far_below_config(instance={"gamma": 0.0, "means": [-1.0, 0.5]}))
            out = io.StringIO()
            call_command('ci_trace', config=config, rounds=6, stdout=out)
        lines = out.getvalue().splitlines()
        self.assertEqual(lines[0], "round,u_min_box,u_min_agg,box_1,box_2")
        self.assertEqual(len(lines), 1 + 5)


def get_tokens_for_user(user):
    refresh = RefreshToken.for_user(user)
    return {'access': str(refresh.access_token)}


class MockAsyncResult:
    def __init__(self, task_id):
        self.id = task_id


class ExperimentAPITestCase(TestCase):

    def setUp(self):
        self.client = Client()
        self.test_user = User.objects.create_user(username='experimentuser', password='password123')
        self.tokens = get_tokens_for_user(self.test_user)
        self.auth_headers = {'HTTP_AUTHORIZATION': f'Bearer {self.tokens["access"]}'}
        self.base_url = '/api/experiments/'
        config = load_config(far_below_config())
        self.run_pending = ExperimentRun.objects.create(name="pending", config=config.model_dump(mode='json'))
        self.run_failed = ExperimentRun.objects.create(name="failed", config=config.model_dump(mode='json'),
                                                       processing_status=ExperimentRun.ProcessingStatus.FAILED,
                                                       processing_error="boom")
        summary = run_monte_carlo(config, n_jobs=1)
        self.run_done = ExperimentRun.objects.create(name="done", config=config.model_dump(mode='json'),
                                                     processing_status=ExperimentRun.ProcessingStatus.COMPLETED,
                                                     summary=summary.model_dump(mode='json'))

    @mock.patch('harness.tasks.run_experiment_task.delay')
    def test_submit_experiment(self, mock_delay):
        mock_delay.return_value = MockAsyncResult('experiment-task-id')
        response = self.client.post(self.base_url, data=json.dumps({"config": small_config()}),
                                    content_type='application/json', **self.auth_headers)
        self.assertEqual(response.status_code, 202)
        body = response.json()
        self.assertEqual(body['processing_status'], 'PENDING')
        self.assertEqual(body['async_task_id'], 'experiment-task-id')
        run = ExperimentRun.objects.get(id=body['id'])
        self.assertEqual(run.config['replications'], 4)
        mock_delay.assert_called_once_with(run.id)

    @mock.patch('harness.tasks.run_experiment_task.delay')
    def test_submit_rejects_unrunnable_rule(self, mock_delay):
        config = far_below_config(instance={"gamma": 0.0, "blocks": [{"mean": -1.0, "count": 100}]},
                                  rules=[{"sampling": "murphy", "stopping": "glrt"}])
        response = self.client.post(self.base_url, data=json.dumps({"config": config}),
                                    content_type='application/json', **self.auth_headers)
        self.assertEqual(response.status_code, 400)
        self.assertIn("GLRT", response.json()['detail'])
        mock_delay.assert_not_called()

    def test_submit_unauthenticated(self):
        response = self.client.post(self.base_url, data=json.dumps({"config": small_config()}),
                                    content_type='application/json')
        self.assertEqual(response.status_code, 401)

    def test_status(self):
        response = self.client.get(f"{self.base_url}{self.run_failed.id}/", **self.auth_headers)
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['processing_status'], 'FAILED')
        self.assertEqual(response.json()['processing_error'], 'boom')

    def test_status_not_found(self):
        response = self.client.get(f"{self.base_url}99999/", **self.auth_headers)
        self.assertEqual(response.status_code, 404)

    def test_summary_states(self):
        self.assertEqual(self.client.get(f"{self.base_url}{self.run_pending.id}/summary/", **self.auth_headers).status_code, 503)
        self.assertEqual(self.client.get(f"{self.base_url}{self.run_failed.id}/summary/", **self.auth_headers).status_code, 404)
        self.assertEqual(self.client.get(f"{self.base_url}99999/summary/", **self.auth_headers).status_code, 404)
        response = self.client.get(f"{self.base_url}{self.run_done.id}/summary/", **self.auth_headers)
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['records'][0]['error_rate'], 0.0)
        self.assertEqual(response.json()['arm_count'], 1)


class OracleAPITestCase(TestCase):

    def setUp(self):
        self.client = Client()
        user = User.objects.create_user(username='oracleuser', password='password123')
        self.auth_headers = {'HTTP_AUTHORIZATION': f'Bearer {get_tokens_for_user(user)["access"]}'}

    def test_bounds(self):
        payload = {"instance": {"gamma": 0.0, "linspace": {"lo": 0.5, "hi": 1.0, "count": 5}}, "delta": 0.05}
        response = self.client.post('/api/oracle/bounds/', data=json.dumps(payload),
                                    content_type='application/json', **self.auth_headers)
        self.assertEqual(response.status_code, 200)
        self.assertAlmostEqual(response.json()['characteristic_time'], 21.2878, places=4)
        self.assertIsNone(response.json()['boosted_lower_bound'])

    def test_bounds_unclassifiable(self):
        payload = {"instance": {"gamma": 0.0, "means": [0.0, 1.0]}, "delta": 0.05}
        response = self.client.post('/api/oracle/bounds/', data=json.dumps(payload),
                                    content_type='application/json', **self.auth_headers)
        self.assertEqual(response.status_code, 400)

    def test_health(self):
        self.assertEqual(self.client.get('/api/health').json(), {"status": "ok"})


class ExperimentTaskTestCase(TestCase):

    def setUp(self):
        self.config = load_config(far_below_config(replications=2)).model_dump(mode='json')
        self.run_pending = ExperimentRun.objects.create(name="pending", config=self.config)
        self.run_completed = ExperimentRun.objects.create(name="done", config=self.config,
                                                          processing_status=ExperimentRun.ProcessingStatus.COMPLETED)
        self.run_failed = ExperimentRun.objects.create(name="failed", config=self.config,
                                                       processing_status=ExperimentRun.ProcessingStatus.FAILED)

    def test_task_success(self):
        task_id = str(uuid.uuid4())
        result = run_experiment_task.apply(args=[self.run_pending.id], task_id=task_id).get()
        self.assertEqual(result['status'], 'success')
        self.run_pending.refresh_from_db()
        self.assertEqual(self.run_pending.processing_status, ExperimentRun.ProcessingStatus.COMPLETED)
        self.assertEqual(self.run_pending.async_task_id, task_id)
        self.assertIsNone(self.run_pending.processing_error)
        summary = ExperimentSummary.model_validate(self.run_pending.summary)
        self.assertEqual(summary, run_monte_carlo(load_config(self.config), n_jobs=1))

    def test_task_invalid_config_fails_without_retry(self):
        broken = ExperimentRun.objects.create(name="broken", config={**self.config, "deltas": [2.0]})
        result = run_experiment_task(broken.id)
        self.assertEqual(result['status'], 'error')
        broken.refresh_from_db()
        self.assertEqual(broken.processing_status, ExperimentRun.ProcessingStatus.FAILED)
        self.assertIn("ConfigError", broken.processing_error)

    @mock.patch('harness.tasks.run_monte_carlo')
    def test_task_connection_error_retries(self, mock_run):
        mock_run.side_effect = ConnectionError("broker unavailable")
        with self.assertRaises(ConnectionError):
            run_experiment_task(self.run_pending.id)
        self.run_pending.refresh_from_db()
        self.assertEqual(self.run_pending.processing_status, ExperimentRun.ProcessingStatus.PROCESSING)

    @mock.patch.object(run_experiment_task, 'max_retries', 0)
    @mock.patch('harness.tasks.run_monte_carlo')
    def test_task_gives_up_after_max_retries(self, mock_run):
        mock_run.side_effect = ConnectionError("broker unavailable")
        with self.assertRaises(ConnectionError):
            run_experiment_task(self.run_pending.id)
        self.run_pending.refresh_from_db()
        self.assertEqual(self.run_pending.processing_status, ExperimentRun.ProcessingStatus.FAILED)
        self.assertIn("broker unavailable", self.run_pending.processing_error)

    @mock.patch('harness.tasks.run_monte_carlo')
    def test_task_skip_already_completed(self, mock_run):
        result = run_experiment_task(self.run_completed.id)
        self.assertEqual(result, {"status": "skipped", "reason": "Experiment already completed"})
        mock_run.assert_not_called()

    @mock.patch('harness.tasks.run_monte_carlo')
    def test_task_skip_already_failed(self, mock_run):
        result = run_experiment_task(self.run_failed.id)
        self.assertEqual(result['reason'], 'Previously failed')
        mock_run.assert_not_called()

    def test_task_run_not_found(self):
        result = run_experiment_task(99999)
        self.assertEqual(result, {"status": "error", "reason": "Experiment run not found"})

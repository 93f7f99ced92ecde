import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from django.conf import settings
from joblib import Parallel, delayed
from pydantic import ValidationError

from deviation.bounds import Extremum, box_bounds, ucb_min
from deviation.subsets import SubsetPrior, ThresholdTable
from expfam.families import draw_observation
from oracle.instances import BanditInstance, Side
from oracle.service import boosted_lower_bound, generic_lower_bound, min_draws_bound, oracle_solution
from rules.episode import FiredClause
from rules.exceptions import RuleConfigError
from rules.schemas import RuleConfig
from rules.state import RunState
from rules.stopping import StoppingCheck

from .exceptions import ConfigError
from .replication import EpisodeRow, replicate
from .schemas import BoundsReport, ExperimentConfig, ExperimentSummary, RuleSpec, SummaryRecord

logger = logging.getLogger(__name__)


def load_config(source: Union[str, Path, Dict[str, Any]]) -> ExperimentConfig:
    """Parse and validate an experiment config from a JSON file or an already-decoded mapping."""
    if isinstance(source, dict):
        data = source
    else:
        path = Path(source)
        try:
            data = json.loads(path.read_text())
        except OSError as e:
            raise ConfigError(f"Could not read config file {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        logger.error(f"Invalid experiment config: {e}")
        raise ConfigError(f"Invalid experiment config: {e}") from e
    check_rule_grid(config)
    return config


def with_overrides(config: ExperimentConfig, **updates) -> ExperimentConfig:
    """Copy of ``config`` with the non-None ``updates`` applied and revalidated."""
    data = config.model_dump(mode='json')
    data.update({key: value for key, value in updates.items() if value is not None})
    return load_config(data)


def _rule_config(config: ExperimentConfig, rule: RuleSpec, delta: float) -> RuleConfig:
    return RuleConfig(sampling=rule.sampling, stopping=rule.stopping, delta=delta,
                      horizon_cap=config.horizon_cap, murphy_rejection_cap=config.murphy_rejection_cap,
                      search=config.search, prior=config.prior)


def check_rule_grid(config: ExperimentConfig) -> None:
    """Reject every (rule, delta) cell that could not run, before any episode starts."""
    arm_count = config.instance.build().arm_count
    if config.horizon_cap < arm_count:
        raise ConfigError(f"horizon_cap {config.horizon_cap} is below the {arm_count} initialisation draws.")
    for rule in config.rules:
        for delta in config.deltas:
            try:
                StoppingCheck(arm_count, delta, rule.stopping, config.search)
            except RuleConfigError as e:
                logger.error(f"Rule {rule.sampling.value}+{rule.stopping.value} cannot run at delta={delta}: {e}")
                raise ConfigError(str(e)) from e


def _aggregate(rows: Sequence[EpisodeRow], truth: Side, rule: RuleSpec, delta: float,
               config: ExperimentConfig, lower_bound: float) -> SummaryRecord:
    conclusive = [row for row in rows if row[2] != FiredClause.HORIZON.value]
    reps = len(rows)
    record = dict(sampling=rule.sampling, stopping=rule.stopping, delta=delta, reps=reps,
                  conclusive=len(conclusive), seed=config.master_seed, generic_lower_bound=lower_bound,
                  inconclusive_rate=(reps - len(conclusive)) / reps)
    if conclusive:
        taus = np.array([row[0] for row in conclusive], dtype=float)
        counts = np.array([row[4] for row in conclusive], dtype=float)
        wrong = np.array([row[1] != truth.value for row in conclusive])
        record['mean_tau'] = float(taus.mean())
        record['se_tau'] = float(taus.std(ddof=1) / math.sqrt(taus.size)) if taus.size >= 2 else None
        record['error_rate'] = float(wrong.mean())
        record['proportions'] = (counts / taus[:, None]).mean(axis=0).tolist()
        witnesses = [row[3] for row in conclusive if row[3] is not None]
        record['mean_witness_size'] = float(np.mean(witnesses)) if witnesses else None
    return SummaryRecord(**record)


def run_monte_carlo(config: ExperimentConfig, n_jobs: Optional[int] = None) -> ExperimentSummary:
    """Run every (rule, delta, replication) episode and reduce them to one record per (rule, delta).

    Each replication seeds its own generator from (master_seed, rule index,
    delta index, replication index), so the summary does not depend on
    ``n_jobs`` or on scheduling.
    """
    check_rule_grid(config)
    n_jobs = settings.MINTHRESHOLD_N_JOBS if n_jobs is None else n_jobs
    instance = config.instance.build()
    truth = instance.side
    solution = oracle_solution(instance)
    logger.info(f"Running experiment '{config.name}': K={instance.arm_count}, side={truth.value}, "
                f"T*={solution.characteristic_time:.4g}, {len(config.rules)} rules x {len(config.deltas)} deltas "
                f"x {config.replications} replications, n_jobs={n_jobs}")

    cells = [(r, d, rule, delta) for r, rule in enumerate(config.rules) for d, delta in enumerate(config.deltas)]
    jobs = [
        delayed(replicate)(instance, _rule_config(config, rule, delta), config.master_seed, r, d, i)
        for r, d, rule, delta in cells
        for i in range(config.replications)
    ]
    rows: List[EpisodeRow] = Parallel(n_jobs=n_jobs)(jobs) if jobs else []

    records = []
    for c, (r, d, rule, delta) in enumerate(cells):
        cell_rows = rows[c * config.replications:(c + 1) * config.replications]
        record = _aggregate(cell_rows, truth, rule, delta, config,
                            generic_lower_bound(instance, delta))
        logger.info(f"Cell {rule.sampling.value}+{rule.stopping.value} delta={delta}: mean tau {record.mean_tau}, "
                    f"error rate {record.error_rate}, inconclusive {record.inconclusive_rate:.3f}")
        records.append(record)

    logger.info(f"Experiment '{config.name}' finished with {len(records)} records.")
    return ExperimentSummary(config=config, arm_count=instance.arm_count,
                             characteristic_time=solution.characteristic_time, records=records)


def summarize_bounds(instance: BanditInstance, delta: float) -> BoundsReport:
    """T*, w* and every finite-delta lower bound of a classifiable instance in one report."""
    solution = oracle_solution(instance)
    boosted = boosted_lower_bound(instance, delta) if solution.side is Side.BELOW else None
    return BoundsReport(
        family=instance.family.kind,
        means=list(instance.means),
        gamma=instance.gamma,
        delta=delta,
        side=solution.side.value,
        characteristic_time=solution.characteristic_time,
        weights=solution.weights.tolist(),
        minimizers=list(solution.minimizers),
        generic_lower_bound=generic_lower_bound(instance, delta),
        min_draws_bound=min_draws_bound(instance, delta),
        boosted_lower_bound=boosted,
    )


def trace_confidence_bounds(config: ExperimentConfig, rounds: int) -> pd.DataFrame:
    """Per-round upper confidence bounds on the minimum mean under uniform sampling.

    Arms are drawn round robin with a generator seeded by ``master_seed``; the
    first delta of the config is used. One row per round from K on, with
    U_min under the Box and Aggregate priors and every per-arm Box bound.
    """
    instance = config.instance.build()
    arm_count = instance.arm_count
    if rounds < arm_count:
        raise ConfigError(f"rounds {rounds} is below the {arm_count} initialisation draws.")
    delta = config.deltas[0]
    box_prior = SubsetPrior.singletons(arm_count)
    agg_prior = SubsetPrior.size_uniform(arm_count)
    box_table = ThresholdTable(box_prior, delta)
    agg_table = ThresholdTable(agg_prior, delta)
    rng = np.random.default_rng(np.random.SeedSequence(config.master_seed))
    state = RunState.empty(instance.family, instance.gamma, arm_count)
    means = instance.mean_array

    rows = []
    while state.round < rounds:
        arm = state.round % arm_count
        state.observe(arm, draw_observation(instance.family, means[arm], rng))
        if not state.initialized:
            continue
        row = {
            'round': state.round,
            'u_min_box': ucb_min(state, box_prior, delta, Extremum.MIN_UPPER, config.search, box_table),
            'u_min_agg': ucb_min(state, agg_prior, delta, Extremum.MIN_UPPER, config.search, agg_table),
        }
        row.update({f"box_{a + 1}": float(u) for a, u in enumerate(box_bounds(state, delta))})
        rows.append(row)
    logger.info(f"Traced confidence bounds for {len(rows)} rounds (K={arm_count}, delta={delta}).")
    return pd.DataFrame(rows, columns=['round', 'u_min_box', 'u_min_agg'] + [f"box_{a + 1}" for a in range(arm_count)])

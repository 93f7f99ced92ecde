"""Per-replication work shipped to joblib workers.

Nothing here imports Django models, so loky worker processes can unpickle
``replicate`` without an app registry.
"""
from typing import Optional, Tuple

import numpy as np

from oracle.instances import BanditInstance
from rules.episode import run_episode
from rules.schemas import RuleConfig

# (stopped_at, recommendation, fired clause, witness size, counts)
EpisodeRow = Tuple[int, str, str, Optional[int], Tuple[int, ...]]


def replication_rng(master_seed: int, rule_index: int, delta_index: int, rep_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(rule_index, delta_index, rep_index)))


def replicate(instance: BanditInstance, rule_config: RuleConfig, master_seed: int,
              rule_index: int, delta_index: int, rep_index: int) -> EpisodeRow:
    rng = replication_rng(master_seed, rule_index, delta_index, rep_index)
    outcome = run_episode(instance, rule_config, rng)
    verdict = outcome.verdict
    witness = len(verdict.witness_subset) if verdict.witness_subset is not None else None
    return (verdict.stopped_at, verdict.recommendation.value, verdict.fired_clause.value, witness,
            tuple(int(n) for n in outcome.counts))

import enum
from datetime import datetime
from typing import List, Optional, Tuple

import numpy as np
from django.conf import settings
from ninja import Schema
from pydantic import Field, PositiveFloat, model_validator

from deviation.subsets import SubsetSearch
from expfam.families import FamilyKind
from expfam.posterior import DEFAULT_PRIOR
from oracle.instances import BanditInstance
from rules.schemas import SamplingRule, StoppingRule

from .models import ExperimentRun as ExperimentRunModel

DEFAULT_DELTAS = [0.1, 0.01, 1e-3, 1e-4]


class ProcessingStatusEnum(str, enum.Enum):
    PENDING = ExperimentRunModel.ProcessingStatus.PENDING
    PROCESSING = ExperimentRunModel.ProcessingStatus.PROCESSING
    COMPLETED = ExperimentRunModel.ProcessingStatus.COMPLETED
    FAILED = ExperimentRunModel.ProcessingStatus.FAILED


class OutputFormat(str, enum.Enum):
    CSV = 'csv'
    JSON = 'json'


class LinspaceSpec(Schema):
    lo: float
    hi: float
    count: int = Field(..., ge=1)


class BlockSpec(Schema):
    mean: float
    count: int = Field(..., ge=1)


class StaircaseSpec(Schema):
    below: int = Field(..., ge=1, description="Arms linearly spaced in [lo, gamma).")
    total: int = Field(..., ge=1, description="Total arm count; the remaining arms sit at gamma.")
    lo: float

    @model_validator(mode='after')
    def check_total(self):
        if self.total < self.below:
            raise ValueError(f"staircase total {self.total} is smaller than below {self.below}")
        return self


class InstanceSpec(Schema):
    """Bandit instance given by explicit means or exactly one generator."""
    family: FamilyKind = FamilyKind.GAUSSIAN
    gamma: float = Field(..., description="Threshold the minimum mean is tested against.")
    means: Optional[List[float]] = None
    linspace: Optional[LinspaceSpec] = None
    blocks: Optional[List[BlockSpec]] = None
    staircase: Optional[StaircaseSpec] = None

    @model_validator(mode='after')
    def check_generator(self):
        given = [name for name in ('means', 'linspace', 'blocks', 'staircase') if getattr(self, name) is not None]
        if len(given) != 1:
            raise ValueError(f"exactly one of means, linspace, blocks, staircase is required, got {given or 'none'}")
        return self

    def mean_values(self) -> List[float]:
        if self.means is not None:
            return list(self.means)
        if self.linspace is not None:
            return np.linspace(self.linspace.lo, self.linspace.hi, self.linspace.count).tolist()
        if self.blocks is not None:
            return [block.mean for block in self.blocks for _ in range(block.count)]
        spec = self.staircase
        low = np.linspace(spec.lo, self.gamma, spec.below, endpoint=False).tolist()
        return low + [self.gamma] * (spec.total - spec.below)

    def build(self) -> BanditInstance:
        return BanditInstance.build(self.family, self.mean_values(), self.gamma)


class RuleSpec(Schema):
    sampling: SamplingRule
    stopping: StoppingRule


class ExperimentConfig(Schema):
    name: str = ""
    instance: InstanceSpec
    rules: List[RuleSpec] = Field(default_factory=list, description="Grid of sampling x stopping pairs.")
    deltas: List[float] = Field(default_factory=lambda: list(DEFAULT_DELTAS), min_length=1)
    replications: int = Field(default_factory=lambda: settings.MINTHRESHOLD_REPLICATIONS, ge=1)
    master_seed: int = Field(0, ge=0)
    horizon_cap: int = Field(default_factory=lambda: settings.MINTHRESHOLD_HORIZON_CAP, ge=1)
    murphy_rejection_cap: int = Field(default_factory=lambda: settings.MINTHRESHOLD_MURPHY_REJECTION_CAP, ge=1)
    search: SubsetSearch = SubsetSearch.NESTED
    prior: Tuple[PositiveFloat, PositiveFloat] = Field(DEFAULT_PRIOR, description="Beta or Gamma prior hyperparameters for Bernoulli or Poisson arms.")
    output_dir: str = Field(default_factory=lambda: settings.MINTHRESHOLD_OUTPUT_DIR)
    formats: List[OutputFormat] = Field(default_factory=lambda: [OutputFormat.CSV, OutputFormat.JSON])

    @model_validator(mode='after')
    def check_instance(self):
        for delta in self.deltas:
            if not 0.0 < delta < 1.0:
                raise ValueError(f"every delta must lie in (0, 1), got {delta}")
        instance = self.instance.build()
        if not instance.is_classifiable:
            raise ValueError(f"instance minimum {instance.minimum} equals gamma {instance.gamma}; it is not classifiable")
        return self


class SummaryRecord(Schema):
    sampling: SamplingRule
    stopping: StoppingRule
    delta: float
    mean_tau: Optional[float] = Field(None, description="Mean stopping time over conclusive episodes.")
    se_tau: Optional[float] = None
    error_rate: Optional[float] = Field(None, description="Wrong recommendations among conclusive episodes.")
    inconclusive_rate: float
    proportions: Optional[List[float]] = Field(None, description="Mean N_a(tau)/tau per arm over conclusive episodes.")
    mean_witness_size: Optional[float] = None
    reps: int
    conclusive: int
    seed: int
    generic_lower_bound: float


class ExperimentSummary(Schema):
    config: ExperimentConfig
    arm_count: int
    characteristic_time: float
    records: List[SummaryRecord]


class BoundsRequest(Schema):
    instance: InstanceSpec
    delta: float = Field(..., gt=0.0, lt=1.0)


class BoundsReport(Schema):
    family: FamilyKind
    means: List[float]
    gamma: float
    delta: float
    side: str
    characteristic_time: float
    weights: List[float]
    minimizers: List[int]
    generic_lower_bound: float
    min_draws_bound: float
    boosted_lower_bound: Optional[float] = Field(None, description="Only defined below the threshold.")


class ExperimentRunIn(Schema):
    config: ExperimentConfig


class ExperimentRunStatusOut(Schema):
    id: int
    name: str
    processing_status: ProcessingStatusEnum
    processing_error: Optional[str] = None
    async_task_id: Optional[str] = None
    created_at: datetime
    updated_at: datetime


class ErrorDetail(Schema):
    detail: str

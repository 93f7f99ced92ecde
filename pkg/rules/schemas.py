import enum
from typing import Tuple

from ninja import Schema
from pydantic import ConfigDict, Field, PositiveFloat

from deviation.subsets import SubsetSearch
from expfam.posterior import DEFAULT_PRIOR

DEFAULT_HORIZON_CAP = 10_000_000
DEFAULT_MURPHY_REJECTION_CAP = 100_000


class SamplingRule(str, enum.Enum):
    LCB = 'lcb'
    THOMPSON = 'thompson'
    MURPHY = 'murphy'
    ROUND_ROBIN = 'round_robin'


class StoppingRule(str, enum.Enum):
    BOX = 'box'
    AGGREGATE = 'aggregate'
    GLRT = 'glrt'


class RuleConfig(Schema):
    model_config = ConfigDict(frozen=True)

    sampling: SamplingRule = Field(..., description="Arm selection rule.")
    stopping: StoppingRule = Field(..., description="Rule deciding when H_< can be accepted; H_> always uses the per-arm clause.")
    delta: float = Field(..., gt=0.0, lt=1.0, description="Risk: maximum probability of a wrong recommendation.")
    horizon_cap: int = Field(DEFAULT_HORIZON_CAP, ge=1, description="Observations after which the episode gives up as inconclusive.")
    murphy_rejection_cap: int = Field(DEFAULT_MURPHY_REJECTION_CAP, ge=1, description="Posterior redraws per Murphy round before falling back.")
    search: SubsetSearch = Field(SubsetSearch.NESTED, description="Subset family scanned by the aggregate rule.")
    prior: Tuple[PositiveFloat, PositiveFloat] = Field(
        DEFAULT_PRIOR, description="Conjugate prior hyperparameters: Beta(a, b) for Bernoulli arms, Gamma(shape, rate) for Poisson arms. "
                                   "Gaussian arms always use the flat prior.")

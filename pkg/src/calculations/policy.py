# src/calculations/policy.py
"""
Rank functions for FCFS, SPJF, SPRPT and SPRPT with limited preemption.

Lower rank is served first; ties go to the earlier arrival, then the smaller
id. A started job whose age has reached its threshold a0 = C * r ranks -inf and
can no longer be preempted. Unstarted jobs always rank by their prediction.
"""

import math
from dataclasses import dataclass
from typing import Optional

from ..config import DEFAULT_BELIEF_ESTIMATE, DEFAULT_PREDICTION_SOURCE
from ..core.domain import NEG_INF, Bins, DomainError, Job, RankValue
from .refine import scheduling_value

POLICY_KINDS = ('FCFS', 'SPJF', 'SPRPT', 'SPRPT_LP')
PREDICTION_SOURCES = ('static', 'trajectory', 'belief')
BELIEF_ESTIMATES = ('argmax_midpoint', 'expected')

# Absorbs float error in C * r before flooring (0.29 * 100 -> 28.999...)
_FLOOR_EPS = 1e-9


@dataclass(frozen=True)
class RankPolicy:
    kind: str = 'SPRPT_LP'
    C: float = 1.0
    prediction_source: str = DEFAULT_PREDICTION_SOURCE
    belief_estimate: str = DEFAULT_BELIEF_ESTIMATE
    batch: bool = False
    bins: Optional[Bins] = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise DomainError(f"Unknown policy '{self.kind}', expected one of {POLICY_KINDS}")
        if not 0.0 <= self.C <= 1.0:
            raise DomainError(f"C must be in [0, 1], got {self.C}")
        if self.prediction_source not in PREDICTION_SOURCES:
            raise DomainError(
                f"Unknown prediction source '{self.prediction_source}', expected one of {PREDICTION_SOURCES}"
            )
        if self.belief_estimate not in BELIEF_ESTIMATES:
            raise DomainError(f"Unknown belief estimate '{self.belief_estimate}'")

    @property
    def preemptive(self) -> bool:
        return self.kind in ('SPRPT', 'SPRPT_LP')

    @property
    def label(self) -> str:
        if self.kind == 'SPRPT_LP':
            return f"SPRPT_LP(C={self.C:g})"
        return self.kind


def threshold_age(policy: RankPolicy, job: Job) -> float:
    """a0: age from which a started job can no longer be preempted."""
    if policy.kind == 'SPRPT':
        return math.inf
    if policy.kind in ('FCFS', 'SPJF'):
        return 0.0
    a0 = policy.C * job.prediction.initial
    if policy.batch:
        return float(math.floor(a0 + _FLOOR_EPS))
    return a0


def scheduling_prediction(job: Job, policy: Optional[RankPolicy] = None) -> float:
    """
    Prediction the scheduler acts on.

    Belief source: midpoint of the most likely bin (or the expected length) of
    the current belief, an estimate of the remaining length. Static and
    trajectory sources: the predicted total size in force at the current age.
    """
    source = policy.prediction_source if policy is not None else _natural_source(job)
    prediction = job.prediction
    if source == 'belief' and prediction.bin_belief is not None:
        bins = (policy.bins if policy is not None else None) or Bins.default_token_bins()
        estimate = policy.belief_estimate if policy is not None else DEFAULT_BELIEF_ESTIMATE
        return scheduling_value(prediction.bin_belief, bins, estimate)
    if source == 'trajectory':
        return prediction.prediction_at(job.age)
    return prediction.initial


def _natural_source(job: Job) -> str:
    if job.prediction.bin_belief is not None:
        return 'belief'
    if job.prediction.trajectory is not None:
        return 'trajectory'
    return 'static'


def current_total_prediction(job: Job, policy: RankPolicy) -> float:
    value = scheduling_prediction(job, policy)
    if policy.prediction_source == 'belief' and job.prediction.bin_belief is not None:
        # belief values estimate the remaining length
        return value + job.age
    return value


def rank(policy: RankPolicy, job: Job, now: Optional[float] = None) -> RankValue:
    """Current rank of `job`; `now` is accepted for interface symmetry and unused."""
    if policy.kind == 'FCFS':
        value = NEG_INF if job.started else job.arrival_time
    elif policy.kind == 'SPJF':
        value = NEG_INF if job.started else scheduling_prediction(job, policy)
    elif policy.kind == 'SPRPT' or not job.started:
        value = current_total_prediction(job, policy) - job.age
    elif job.age < threshold_age(policy, job):
        value = current_total_prediction(job, policy) - job.age
    else:
        value = NEG_INF
    return RankValue(value, job.arrival_time, job.id)


def preemptable(policy: RankPolicy, job: Job) -> bool:
    return rank(policy, job).finite


def worst_future_rank(job: Job, a: float, policy: Optional[RankPolicy] = None) -> RankValue:
    """
    Largest rank the job will hold from age `a` on.

    Static predictions give r - a while a < a0 (rank only falls with age).
    A trajectory gives the max of r[b] - b over the remaining units before a0.
    Without a policy the job is treated as plain SPRPT.
    """
    policy = policy or RankPolicy(kind='SPRPT', prediction_source=_natural_source(job))
    tie = (job.arrival_time, job.id)

    if policy.kind in ('FCFS', 'SPJF'):
        if a > 0:
            return RankValue(NEG_INF, *tie)
        base = job.arrival_time if policy.kind == 'FCFS' else job.prediction.initial
        return RankValue(base, *tie)

    limit = threshold_age(policy, job)
    if a >= limit:
        return RankValue(NEG_INF, *tie)

    trajectory = job.prediction.trajectory
    if policy.prediction_source != 'trajectory' or not trajectory:
        return RankValue(job.prediction.initial - a, *tie)

    start = min(int(math.floor(a)), len(trajectory) - 1)
    values = [trajectory[start] - a]
    values.extend(trajectory[b] - b for b in range(start + 1, len(trajectory)) if b < limit)
    return RankValue(max(values), *tie)

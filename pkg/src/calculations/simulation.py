# src/calculations/simulation.py
"""Configuration and helpers shared by the continuous and batch engines."""

import math
import sys
from dataclasses import dataclass, field, replace
from typing import List, Optional

import pandas as pd

from ..config import (
    DEFAULT_PREEMPTION_COST_MODE, DEFAULT_RECOMPUTE_RATE, DEFAULT_REPLICATIONS, DEFAULT_SEED,
    DEFAULT_SIM_MODE, DEFAULT_WARMUP_FRACTION,
)
from ..core.domain import Bins, DomainError, Job
from .policy import RankPolicy
from .refine import ObservationModel
from .workload import ArrivalSpec, PredictorModel, ServiceDist, generate_workload

SIM_MODES = ('continuous', 'batch')
PREEMPTION_COST_MODES = ('hold', 'discard')


@dataclass(frozen=True)
class SimConfig:
    mode: str = DEFAULT_SIM_MODE
    arrival: ArrivalSpec = ArrivalSpec(kind='poisson', rate=0.5, count=10000)
    service: ServiceDist = ServiceDist()
    predictor: PredictorModel = PredictorModel()
    policy: RankPolicy = RankPolicy()
    memory_budget: float = math.inf
    preemption_cost_mode: str = DEFAULT_PREEMPTION_COST_MODE
    recompute_rate: int = DEFAULT_RECOMPUTE_RATE
    warmup_fraction: float = DEFAULT_WARMUP_FRACTION
    seed: int = DEFAULT_SEED
    replications: int = DEFAULT_REPLICATIONS
    bins: Bins = field(default_factory=Bins.default_token_bins)
    record_trace: bool = False

    def __post_init__(self):
        if self.mode not in SIM_MODES:
            raise DomainError(f"Unknown mode '{self.mode}', expected one of {SIM_MODES}")
        if not self.memory_budget > 0:
            raise DomainError(f"Memory budget must be > 0, got {self.memory_budget}")
        if self.preemption_cost_mode not in PREEMPTION_COST_MODES:
            raise DomainError(f"Unknown preemption cost mode '{self.preemption_cost_mode}'")
        if not self.recompute_rate > 0:
            raise DomainError(f"Recompute rate must be > 0, got {self.recompute_rate}")
        if not 0 <= self.warmup_fraction < 1:
            raise DomainError(f"Warmup fraction must be in [0, 1), got {self.warmup_fraction}")
        if self.replications < 1:
            raise DomainError(f"Replications must be >= 1, got {self.replications}")
        # the policy floors a0 in batch mode and needs the bins for belief midpoints
        object.__setattr__(self, 'policy', replace(self.policy, batch=(self.mode == 'batch'), bins=self.bins))

    @property
    def observation(self) -> ObservationModel:
        return self.predictor.observation_model()

    @property
    def offered_load(self) -> Optional[float]:
        if not self.arrival.steady_state:
            return None
        return self.arrival.rate * self.service.expected_size()

    @property
    def unstable(self) -> bool:
        load = self.offered_load
        return self.mode == 'continuous' and load is not None and load >= 1.0

    def with_seed(self, seed: int) -> 'SimConfig':
        return replace(self, seed=int(seed))


@dataclass
class MemoryTrace:
    """Memory samples (sum of ages of started, uncompleted jobs) taken at every event."""

    record: bool = False
    times: List[float] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    peak: float = 0.0

    def sample(self, time: float, memory: float):
        if memory > self.peak:
            self.peak = memory
        if self.record:
            self.times.append(time)
            self.values.append(memory)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'time': self.times, 'memory': self.values})


def build_jobs(config: SimConfig) -> List[Job]:
    return generate_workload(
        config.arrival, config.service, config.predictor, config.seed,
        integral_sizes=(config.mode == 'batch'), bins=config.bins,
        belief_estimate=config.policy.belief_estimate,
    )


def stability_warning(config: SimConfig) -> Optional[str]:
    if not config.unstable:
        return None
    return (f"Offered load {config.offered_load:.3f} >= 1: steady-state statistics are not meaningful "
            f"(arrival rate {config.arrival.rate}, mean size {config.service.expected_size()})")


def emit_warning(message: str, warnings: List[str]):
    print(f"⚠️ Warning: {message}", file=sys.stderr, flush=True)
    warnings.append(message)


def run_simulation(config: SimConfig, jobs: Optional[List[Job]] = None, progress_callback=None):
    """Dispatch to the engine selected by `config.mode`."""
    if config.mode == 'batch':
        from .batch_sim import run_batch
        return run_batch(config, jobs=jobs, progress_callback=progress_callback)
    from .continuous_sim import run_continuous
    return run_continuous(config, jobs=jobs, progress_callback=progress_callback)

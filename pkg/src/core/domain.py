# src/core/domain.py
"""
Core data types shared by the workload, refinement, policy, simulation and
analytic modules.

Bins and belief vectors are indexed 1-based at the public API (bin 1 is the
lowest-length bin). Internally numpy arrays are 0-based.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from ..config import DEFAULT_BIN_COUNT, DEFAULT_BIN_LOWER, DEFAULT_BIN_UPPER

NEG_INF = float('-inf')
SIMPLEX_TOL = 1e-12


class DomainError(ValueError):
    """Raised when a value falls outside the domain an operation accepts."""


class ZeroEvidenceError(DomainError):
    """Raised when a Bayesian update has a zero normalizing denominator."""


class InstabilityError(ValueError):
    """Raised when a load-dependent denominator is not strictly positive."""


@dataclass(frozen=True)
class Bins:
    """Length bins b_1 < ... < b_{k+1}; bin i covers [b_i, b_{i+1}), the last bin is closed."""

    boundaries: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(b) for b in self.boundaries)
        if len(values) < 2:
            raise DomainError("Bins need at least two boundaries")
        if not all(math.isfinite(b) for b in values):
            raise DomainError(f"Bin boundaries must be finite: {values}")
        if any(hi <= lo for lo, hi in zip(values, values[1:])):
            raise DomainError(f"Bin boundaries must be strictly increasing: {values}")
        object.__setattr__(self, 'boundaries', values)

    @classmethod
    def uniform(cls, lower: float, upper: float, count: int) -> 'Bins':
        if count < 1:
            raise DomainError(f"Bin count must be >= 1, got {count}")
        edges = np.linspace(float(lower), float(upper), int(count) + 1)
        return cls(tuple(edges.tolist()))

    @classmethod
    def default_token_bins(cls) -> 'Bins':
        return cls.uniform(DEFAULT_BIN_LOWER, DEFAULT_BIN_UPPER, DEFAULT_BIN_COUNT)

    @property
    def k(self) -> int:
        return len(self.boundaries) - 1

    @property
    def lower(self) -> float:
        return self.boundaries[0]

    @property
    def upper(self) -> float:
        return self.boundaries[-1]

    @property
    def edges(self) -> np.ndarray:
        return np.asarray(self.boundaries, dtype=float)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def midpoints(self) -> np.ndarray:
        edges = self.edges
        return (edges[:-1] + edges[1:]) / 2.0

    def clip(self, length: float) -> float:
        """Clamp a length into [b_1, b_{k+1}] so it can be binned."""
        return min(max(float(length), self.lower), self.upper)


def bin_index(length: float, bins: Bins) -> int:
    """Return the 1-based bin holding `length` (right-open except the last bin)."""
    if not math.isfinite(length) or length < bins.lower or length > bins.upper:
        raise DomainError(f"Length {length} outside bins [{bins.lower}, {bins.upper}]")
    if length == bins.upper:
        return bins.k
    return int(np.searchsorted(bins.edges, length, side='right'))


def bin_midpoint(i: int, bins: Bins) -> float:
    if not 1 <= i <= bins.k:
        raise DomainError(f"Bin index {i} outside [1, {bins.k}]")
    return (bins.boundaries[i - 1] + bins.boundaries[i]) / 2.0


@dataclass
class BeliefState:
    """Probability vector over the k length bins."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 1 or q.size == 0:
            raise DomainError(f"Belief must be a non-empty vector, got shape {q.shape}")
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise DomainError("Belief entries must be finite and non-negative")
        if abs(q.sum() - 1.0) > SIMPLEX_TOL:
            raise DomainError(f"Belief entries sum to {q.sum()!r}, not 1")
        self.q = q

    @classmethod
    def uniform(cls, k: int) -> 'BeliefState':
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def one_hot(cls, k: int, i: int) -> 'BeliefState':
        if not 1 <= i <= k:
            raise DomainError(f"Bin index {i} outside [1, {k}]")
        q = np.zeros(k)
        q[i - 1] = 1.0
        return cls(q)

    @property
    def k(self) -> int:
        return int(self.q.size)

    def argmax_bin(self) -> int:
        # np.argmax returns the first maximum, so ties go to the smaller index
        return int(np.argmax(self.q)) + 1


@dataclass(frozen=True)
class TransitionMatrix:
    """Column-stochastic-style k x k matrix applied as T @ q."""

    T: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise DomainError(f"Transition matrix must be square, got shape {T.shape}")
        object.__setattr__(self, 'T', T)

    @property
    def k(self) -> int:
        return int(self.T.shape[0])

    @classmethod
    def identity(cls, k: int) -> 'TransitionMatrix':
        return cls(np.eye(k))


class RankValue(NamedTuple):
    """Priority key. Smaller tuples are served first."""

    value: float
    arrival_time: float
    id: int

    @property
    def finite(self) -> bool:
        return self.value != NEG_INF


@dataclass
class PredictionSpec:
    """
    Predicted size of a job.

    `trajectory[b]` is the predicted total size after b units of service, so
    the rank trajectory is trajectory[b] - b.
    """

    initial: float
    trajectory: Optional[Tuple[float, ...]] = None
    bin_belief: Optional[BeliefState] = None

    def __post_init__(self):
        if not math.isfinite(self.initial) or self.initial <= 0:
            raise DomainError(f"Predicted size must be positive, got {self.initial}")
        if self.trajectory is not None:
            self.trajectory = tuple(float(r) for r in self.trajectory)

    def remaining_trajectory(self) -> List[float]:
        if self.trajectory is None:
            return []
        return [r - b for b, r in enumerate(self.trajectory)]

    def prediction_at(self, age: float) -> float:
        """Predicted total size in force at `age` (static unless a trajectory exists)."""
        if not self.trajectory:
            return self.initial
        unit = min(int(math.floor(age)), len(self.trajectory) - 1)
        return self.trajectory[unit]


@dataclass
class Job:
    id: int
    arrival_time: float
    size: float
    prediction: PredictionSpec
    age: float = 0.0
    first_service_time: Optional[float] = None
    completion_time: Optional[float] = None
    preemption_count: int = 0
    # Memory currently resident; lags `age` only after a discard-mode eviction
    resident: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.size) or self.size <= 0:
            raise DomainError(f"Job {self.id}: size must be positive, got {self.size}")
        if self.arrival_time < 0:
            raise DomainError(f"Job {self.id}: arrival time must be >= 0, got {self.arrival_time}")
        trajectory = self.prediction.trajectory
        if trajectory is not None and len(trajectory) != math.ceil(self.size):
            raise DomainError(
                f"Job {self.id}: trajectory has {len(trajectory)} entries, expected {math.ceil(self.size)}"
            )

    @property
    def started(self) -> bool:
        return self.first_service_time is not None

    @property
    def completed(self) -> bool:
        return self.completion_time is not None

    @property
    def remaining(self) -> float:
        return self.size - self.age

    @property
    def latency(self) -> Optional[float]:
        if self.completion_time is None:
            return None
        return self.completion_time - self.arrival_time

    @property
    def ttft(self) -> Optional[float]:
        if self.first_service_time is None:
            return None
        return self.first_service_time - self.arrival_time


PER_JOB_COLUMNS = [
    'id', 'arrival', 'size', 'prediction', 'first_service', 'completion',
    'latency', 'ttft', 'preemptions',
]

SUMMARY_COLUMNS = [
    'completed', 'measured', 'mean_latency', 'median_latency', 'p95_latency', 'p99_latency',
    'mean_ttft', 'median_ttft', 'mean_slowdown', 'peak_memory', 'preemptions', 'evictions',
    'busy_time', 'unschedulable', 'zero_evidence_fallbacks', 'unstable',
]


@dataclass
class SimStats:
    mean_latency: float = float('nan')
    median_latency: float = float('nan')
    mean_ttft: float = float('nan')
    median_ttft: float = float('nan')
    peak_memory: float = 0.0
    preemptions: int = 0
    completed: int = 0
    per_job: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=PER_JOB_COLUMNS))
    measured: int = 0
    p95_latency: float = float('nan')
    p99_latency: float = float('nan')
    mean_slowdown: float = float('nan')
    busy_time: float = 0.0
    evictions: int = 0
    unschedulable: int = 0
    zero_evidence_fallbacks: int = 0
    unstable: bool = False
    warnings: List[str] = field(default_factory=list)
    memory_trace: Optional[Any] = None

    def to_summary_dict(self) -> Dict[str, Any]:
        """Scalar metrics in a fixed column order."""
        return {name: getattr(self, name) for name in SUMMARY_COLUMNS}

# src/calculations/workload.py
"""
Arrival processes, service-time distributions and size predictors.

Randomness comes from named numpy streams derived from one master seed, so
changing how predictions are drawn never perturbs the arrival or size draws.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

import numpy as np
from scipy import integrate

from ..config import DEFAULT_CONCENTRATION, DEFAULT_TRAJECTORY_MEMORY, MIN_PREDICTION
from ..core.domain import BeliefState, Bins, DomainError, Job, PredictionSpec
from .refine import ObservationModel, scheduling_value, synth_observation

STREAM_NAMES = ('arrivals', 'sizes', 'predictions', 'observations')

SERVICE_KINDS = ('exponential', 'deterministic', 'bounded-pareto')
PREDICTOR_KINDS = ('perfect', 'exponential-noise', 'binned-synthetic', 'markov-trajectory')
ARRIVAL_KINDS = ('poisson', 'burst')


class SeedStreams:
    """Independent generators keyed by stream name, all derived from `master_seed`."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._streams: Dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        if name not in STREAM_NAMES:
            raise DomainError(f"Unknown seed stream '{name}', expected one of {STREAM_NAMES}")
        if name not in self._streams:
            seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(STREAM_NAMES.index(name),))
            self._streams[name] = np.random.default_rng(seq)
        return self._streams[name]


SeedLike = Union[int, np.random.Generator, SeedStreams]


def _as_generator(seed: SeedLike, stream: str) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedStreams):
        return seed.get(stream)
    return SeedStreams(seed).get(stream)


@dataclass(frozen=True)
class ServiceDist:
    """Service-time distribution: exponential(mean), deterministic(value) or bounded-pareto(shape, lo, hi)."""

    kind: str = 'exponential'
    mean: float = 1.0
    value: float = 1.0
    shape: float = 1.5
    lo: float = 1.0
    hi: float = 100.0

    def __post_init__(self):
        if self.kind not in SERVICE_KINDS:
            raise DomainError(f"Unknown service distribution '{self.kind}', expected one of {SERVICE_KINDS}")
        if self.kind == 'exponential' and not self.mean > 0:
            raise DomainError(f"Exponential mean must be > 0, got {self.mean}")
        if self.kind == 'deterministic' and not self.value > 0:
            raise DomainError(f"Deterministic value must be > 0, got {self.value}")
        if self.kind == 'bounded-pareto' and not (self.shape > 0 and 0 < self.lo < self.hi):
            raise DomainError(
                f"Bounded Pareto needs shape > 0 and 0 < lo < hi, got ({self.shape}, {self.lo}, {self.hi})"
            )

    @property
    def has_density(self) -> bool:
        return self.kind != 'deterministic'

    def _pareto_norm(self) -> float:
        return 1.0 - (self.lo / self.hi) ** self.shape

    def sample(self, rng: np.random.Generator, n: Optional[int] = None):
        if self.kind == 'exponential':
            return rng.exponential(self.mean, n)
        if self.kind == 'deterministic':
            return self.value if n is None else np.full(n, float(self.value))
        u = rng.random(n)
        return self.lo / (1.0 - u * self._pareto_norm()) ** (1.0 / self.shape)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == 'exponential':
            return np.where(x >= 0, np.exp(-np.maximum(x, 0) / self.mean) / self.mean, 0.0)
        if self.kind == 'deterministic':
            raise DomainError("Deterministic service has no density")
        inside = (x >= self.lo) & (x <= self.hi)
        safe = np.where(inside, x, self.lo)
        dens = self.shape * self.lo ** self.shape * safe ** (-self.shape - 1) / self._pareto_norm()
        return np.where(inside, dens, 0.0)

    def sf(self, x):
        """P(X > x)."""
        x = np.asarray(x, dtype=float)
        if self.kind == 'exponential':
            return np.where(x >= 0, np.exp(-np.maximum(x, 0) / self.mean), 1.0)
        if self.kind == 'deterministic':
            return np.where(x < self.value, 1.0, 0.0)
        clipped = np.clip(x, self.lo, self.hi)
        cdf = (1.0 - (self.lo / clipped) ** self.shape) / self._pareto_norm()
        return 1.0 - cdf

    def quantile(self, p: float) -> float:
        if not 0 <= p < 1:
            raise DomainError(f"Quantile level must be in [0, 1), got {p}")
        if self.kind == 'exponential':
            return -self.mean * math.log1p(-p)
        if self.kind == 'deterministic':
            return float(self.value)
        return self.lo / (1.0 - p * self._pareto_norm()) ** (1.0 / self.shape)

    def expected_size(self) -> float:
        if self.kind == 'exponential':
            return float(self.mean)
        if self.kind == 'deterministic':
            return float(self.value)
        value, _ = integrate.quad(lambda x: x * float(self.pdf(x)), self.lo, self.hi)
        return value

    def second_moment(self) -> float:
        if self.kind == 'exponential':
            return 2.0 * self.mean ** 2
        if self.kind == 'deterministic':
            return float(self.value) ** 2
        value, _ = integrate.quad(lambda x: x * x * float(self.pdf(x)), self.lo, self.hi)
        return value


@dataclass(frozen=True)
class PredictorModel:
    """
    How a job's predicted size is drawn from its true size x.

    perfect: r = x. exponential-noise: r ~ Exp(mean x). binned-synthetic: a
    belief over length bins (noise = mislabel rate). markov-trajectory: one
    refined prediction per service unit with AR(1) error on the remaining length.
    """

    kind: str = 'perfect'
    noise: float = 0.0
    concentration: float = DEFAULT_CONCENTRATION
    step_noise: float = 0.0
    trajectory_memory: float = DEFAULT_TRAJECTORY_MEMORY

    def __post_init__(self):
        if self.kind not in PREDICTOR_KINDS:
            raise DomainError(f"Unknown predictor '{self.kind}', expected one of {PREDICTOR_KINDS}")
        if not 0 <= self.noise < 1:
            raise DomainError(f"Predictor noise must be in [0, 1), got {self.noise}")
        if not self.concentration > 0:
            raise DomainError(f"Concentration must be > 0, got {self.concentration}")
        if self.step_noise < 0:
            raise DomainError(f"Step noise must be >= 0, got {self.step_noise}")
        if not 0 <= self.trajectory_memory < 1:
            raise DomainError(f"Trajectory memory must be in [0, 1), got {self.trajectory_memory}")

    def observation_model(self) -> ObservationModel:
        return ObservationModel(concentration=self.concentration, mislabel_rate=self.noise)


@dataclass(frozen=True)
class ArrivalSpec:
    """poisson(rate, count | horizon) or burst(n, at_time)."""

    kind: str = 'poisson'
    rate: float = 0.5
    count: Optional[int] = None
    horizon: Optional[float] = None
    n: int = 0
    at_time: float = 0.0

    def __post_init__(self):
        if self.kind not in ARRIVAL_KINDS:
            raise DomainError(f"Unknown arrival process '{self.kind}', expected one of {ARRIVAL_KINDS}")
        if self.kind == 'poisson':
            if not self.rate > 0:
                raise DomainError(f"Arrival rate must be > 0, got {self.rate}")
            if (self.count is None) == (self.horizon is None):
                raise DomainError("Poisson arrivals need exactly one of 'count' or 'horizon'")
            if self.count is not None and self.count <= 0:
                raise DomainError(f"Job count must be > 0, got {self.count}")
            if self.horizon is not None and self.horizon <= 0:
                raise DomainError(f"Horizon must be > 0, got {self.horizon}")
        else:
            if self.n <= 0:
                raise DomainError(f"Burst size must be > 0, got {self.n}")
            if self.at_time < 0:
                raise DomainError(f"Burst time must be >= 0, got {self.at_time}")

    @property
    def steady_state(self) -> bool:
        return self.kind == 'poisson'


def gen_arrivals(spec: ArrivalSpec, seed: SeedLike) -> np.ndarray:
    """Non-decreasing arrival times."""
    if spec.kind == 'burst':
        return np.full(spec.n, float(spec.at_time))

    rng = _as_generator(seed, 'arrivals')
    if spec.count is not None:
        return np.cumsum(rng.exponential(1.0 / spec.rate, spec.count))

    chunk = max(64, int(spec.rate * spec.horizon * 1.1) + 16)
    times = []
    last = 0.0
    while last <= spec.horizon:
        block = last + np.cumsum(rng.exponential(1.0 / spec.rate, chunk))
        times.append(block)
        last = float(block[-1])
    all_times = np.concatenate(times)
    return all_times[all_times <= spec.horizon]


def sample_service(dist: ServiceDist, seed: SeedLike, n: Optional[int] = None, integral: bool = False):
    """Draw sizes; `integral` rounds up to whole tokens with a minimum of 1."""
    rng = _as_generator(seed, 'sizes')
    sizes = dist.sample(rng, n)
    if integral:
        sizes = np.maximum(1.0, np.ceil(sizes))
        return float(sizes) if n is None else sizes
    return sizes


def _markov_trajectory(x: float, model: PredictorModel, rng: np.random.Generator) -> List[float]:
    trajectory = []
    error = 0.0
    for b in range(math.ceil(x)):
        remaining = x - b
        if model.step_noise > 0:
            error = model.trajectory_memory * error + model.step_noise * remaining * rng.standard_normal()
        else:
            error = 0.0
        trajectory.append(b + max(remaining + error, MIN_PREDICTION))
    return trajectory


def sample_prediction(model: PredictorModel, x: float, seed: SeedLike,
                      bins: Optional[Bins] = None, belief_estimate: str = 'argmax_midpoint') -> PredictionSpec:
    if x <= 0:
        raise DomainError(f"True size must be > 0, got {x}")
    rng = _as_generator(seed, 'predictions')

    if model.kind == 'perfect':
        return PredictionSpec(initial=float(x))
    if model.kind == 'exponential-noise':
        return PredictionSpec(initial=max(float(rng.exponential(x)), MIN_PREDICTION))
    if model.kind == 'markov-trajectory':
        trajectory = _markov_trajectory(float(x), model, rng)
        return PredictionSpec(initial=trajectory[0], trajectory=tuple(trajectory))

    bins = bins or Bins.default_token_bins()
    observation = synth_observation(bins.clip(x), bins, model.observation_model(), rng)
    belief = BeliefState(observation.p)
    initial = max(scheduling_value(belief, bins, belief_estimate), MIN_PREDICTION)
    return PredictionSpec(initial=initial, bin_belief=belief)


def sample_predictions(model: PredictorModel, sizes: np.ndarray, seed: SeedLike,
                       bins: Optional[Bins] = None, belief_estimate: str = 'argmax_midpoint') -> List[PredictionSpec]:
    """Predictions for many sizes; perfect and exponential-noise draws are vectorised."""
    rng = _as_generator(seed, 'predictions')
    if model.kind == 'perfect':
        return [PredictionSpec(initial=float(x)) for x in sizes]
    if model.kind == 'exponential-noise':
        draws = np.maximum(rng.exponential(np.asarray(sizes, dtype=float)), MIN_PREDICTION)
        return [PredictionSpec(initial=float(r)) for r in draws]
    return [sample_prediction(model, float(x), rng, bins, belief_estimate) for x in sizes]


def generate_workload(arrival: ArrivalSpec, service: ServiceDist, predictor: PredictorModel,
                      seed: SeedLike, integral_sizes: bool = False, bins: Optional[Bins] = None,
                      belief_estimate: str = 'argmax_midpoint') -> List[Job]:
    """Build the job list for one replication from the named seed streams."""
    streams = seed if isinstance(seed, SeedStreams) else SeedStreams(int(seed))
    arrivals = gen_arrivals(arrival, streams)
    n = len(arrivals)
    if n == 0:
        return []
    sizes = np.atleast_1d(sample_service(service, streams, n, integral=integral_sizes))
    predictions = sample_predictions(predictor, sizes, streams, bins, belief_estimate)
    return [
        Job(id=i, arrival_time=float(t), size=float(x), prediction=p)
        for i, (t, x, p) in enumerate(zip(arrivals, sizes, predictions))
    ]

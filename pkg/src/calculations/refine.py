# src/calculations/refine.py
"""
Iterative refinement of binned remaining-length predictions.

Each service iteration produces a classifier-style probability vector p_t over
the length bins. The belief is propagated one step with the transition matrix
(remaining length drops by one token per iteration) and multiplied by p_t.
A synthetic observation model replaces the trained classifier.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np
import pandas as pd
from scipy.special import softmax

from ..config import DEFAULT_CONCENTRATION, DEFAULT_MISLABEL_RATE
from ..core.domain import (
    SIMPLEX_TOL, BeliefState, Bins, DomainError, TransitionMatrix, ZeroEvidenceError,
    bin_index, bin_midpoint,
)

RECURSIONS = ('posterior', 'prior')


@dataclass(frozen=True)
class Observation:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
            raise DomainError("Observation must be a probability vector")
        object.__setattr__(self, 'p', p)

    @property
    def mode_bin(self) -> int:
        return int(np.argmax(self.p)) + 1


@dataclass(frozen=True)
class ObservationModel:
    concentration: float = DEFAULT_CONCENTRATION
    mislabel_rate: float = DEFAULT_MISLABEL_RATE

    def __post_init__(self):
        if not self.concentration > 0:
            raise DomainError(f"Concentration must be > 0, got {self.concentration}")
        if not 0 <= self.mislabel_rate < 1:
            raise DomainError(f"Mislabel rate must be in [0, 1), got {self.mislabel_rate}")


class RefinementResult(NamedTuple):
    steps: pd.DataFrame
    refined_mae: float
    raw_mae: float
    fallbacks: int


def build_transition(bins: Bins) -> TransitionMatrix:
    """
    Stay-or-step-down transition matrix.

    Column i holds 1 - 1/binsize_i on the diagonal and 1/binsize_i in row i-1,
    so T @ q moves mass toward lower remaining lengths. The lowest bin leaks
    1/binsize of its mass; the update's normalization restores the simplex.
    """
    widths = bins.widths
    if np.any(widths < 1):
        raise DomainError(f"Bin sizes must be >= 1 for a valid transition matrix, got {widths.min()}")
    T = np.diag(1.0 - 1.0 / widths)
    for i in range(1, bins.k):
        T[i - 1, i] = 1.0 / widths[i]
    return TransitionMatrix(T)


def _vector(state) -> np.ndarray:
    if isinstance(state, (BeliefState,)):
        return state.q
    if isinstance(state, Observation):
        return state.p
    return np.asarray(state, dtype=float)


def _posterior(prior: np.ndarray, p: np.ndarray) -> BeliefState:
    weighted = prior * p
    evidence = weighted.sum()
    if not evidence > 0:
        raise ZeroEvidenceError("Prior and observation have disjoint support")
    return BeliefState(weighted / evidence)


def bayes_update(q_prev: Union[BeliefState, np.ndarray], p_t: Union[Observation, np.ndarray],
                 T: TransitionMatrix) -> BeliefState:
    """q_prior = T @ q_prev; posterior proportional to q_prior * p_t. Raises ZeroEvidenceError."""
    q = _vector(q_prev)
    p = _vector(p_t)
    if q.shape != p.shape or q.size != T.k:
        raise DomainError(f"Shape mismatch: belief {q.shape}, observation {p.shape}, transition {T.T.shape}")
    return _posterior(T.T @ q, p)


def expected_length(q: Union[BeliefState, Observation, np.ndarray], bins: Bins) -> float:
    return float(np.dot(_vector(q), bins.midpoints))


def scheduling_value(belief: BeliefState, bins: Bins, estimate: str = 'argmax_midpoint') -> float:
    """Single number used for scheduling: midpoint of the most likely bin, or the expectation."""
    if estimate == 'expected':
        return expected_length(belief, bins)
    if estimate != 'argmax_midpoint':
        raise DomainError(f"Unknown belief estimate '{estimate}'")
    return bin_midpoint(belief.argmax_bin(), bins)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def synth_observation(true_remaining: float, bins: Bins, model: ObservationModel, seed) -> Observation:
    """
    Classifier-like output peaked at the true bin.

    With probability `mislabel_rate` the peak moves to a neighbouring bin
    (inward at the edges). Scores decay with the distance between midpoints in
    units of bin width; infinite concentration gives a one-hot vector.
    """
    if not bins.lower <= true_remaining <= bins.upper:
        raise DomainError(f"Remaining length {true_remaining} outside [{bins.lower}, {bins.upper}]")
    rng = _as_rng(seed)
    k = bins.k
    center = bin_index(true_remaining, bins) - 1

    if model.mislabel_rate > 0 and k > 1 and rng.random() < model.mislabel_rate:
        if center == 0:
            center = 1
        elif center == k - 1:
            center = k - 2
        else:
            center += 1 if rng.random() < 0.5 else -1

    if math.isinf(model.concentration):
        p = np.zeros(k)
        p[center] = 1.0
        return Observation(p)

    mids = bins.midpoints
    scores = -model.concentration * np.abs(mids - mids[center]) / bins.widths
    p = softmax(scores)
    return Observation(p / p.sum())


def refine_trajectory(true_size: int, bins: Bins, T: TransitionMatrix, model: ObservationModel,
                      seed, recursion: str = 'posterior') -> RefinementResult:
    """
    Run the update over iterations t = 0..true_size-1 against remaining length true_size - t.

    recursion='posterior' feeds T @ q_hat(t-1) as the prior; 'prior' uses the
    literal T @ q_prior(t-1) chain. A zero-evidence step falls back to p_t.
    """
    if true_size < 1:
        raise DomainError(f"True size must be >= 1, got {true_size}")
    if recursion not in RECURSIONS:
        raise DomainError(f"Unknown recursion '{recursion}', expected one of {RECURSIONS}")
    rng = _as_rng(seed)

    rows = []
    fallbacks = 0
    belief: Optional[BeliefState] = None
    prior_chain: Optional[np.ndarray] = None
    for t in range(int(true_size)):
        remaining = float(true_size - t)
        observation = synth_observation(bins.clip(remaining), bins, model, rng)
        if belief is None:
            belief = BeliefState(observation.p)
            prior_chain = observation.p.copy()
        else:
            try:
                if recursion == 'posterior':
                    belief = bayes_update(belief, observation, T)
                else:
                    prior_chain = T.T @ prior_chain
                    belief = _posterior(prior_chain, observation.p)
            except ZeroEvidenceError:
                fallbacks += 1
                belief = BeliefState(observation.p)
                prior_chain = observation.p.copy()
        rows.append((t, remaining, expected_length(observation, bins), expected_length(belief, bins)))

    steps = pd.DataFrame(rows, columns=['t', 'true_remaining', 'raw_Lt', 'refined_Lt'])
    raw_mae = float((steps['raw_Lt'] - steps['true_remaining']).abs().mean())
    refined_mae = float((steps['refined_Lt'] - steps['true_remaining']).abs().mean())
    return RefinementResult(steps, refined_mae, raw_mae, fallbacks)


def refine_ensemble(n_trajectories: int, bins: Bins, model: ObservationModel, seed: int,
                    size_scale: float = 100.0, recursion: str = 'posterior'):
    """
    Seeded ensemble: sizes ~ Exp(1) * size_scale rounded up and clipped to
    [1, bins.upper]. Returns (per-step rows, per-trajectory MAE rows).
    """
    if n_trajectories < 1:
        raise DomainError(f"Trajectory count must be >= 1, got {n_trajectories}")
    size_rng, obs_rng = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]
    max_size = max(1, int(math.floor(bins.upper)))
    sizes = np.clip(np.ceil(size_rng.exponential(1.0, n_trajectories) * size_scale), 1, max_size).astype(int)
    T = build_transition(bins)

    step_frames = []
    mae_rows = []
    for trajectory_id, size in enumerate(sizes):
        result = refine_trajectory(int(size), bins, T, model, obs_rng, recursion)
        steps = result.steps
        steps.insert(0, 'trajectory', trajectory_id)
        step_frames.append(steps)
        mae_rows.append((trajectory_id, int(size), result.raw_mae, result.refined_mae, result.fallbacks))

    steps_df = pd.concat(step_frames, ignore_index=True)
    mae_df = pd.DataFrame(mae_rows, columns=['trajectory', 'size', 'raw_mae', 'refined_mae', 'fallbacks'])
    return steps_df, mae_df

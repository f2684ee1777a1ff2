# src/calculations/intervals.py
"""
Old/new interval decomposition of a job's rank trajectory.

Relative to a tagged job with prediction r_max, another job's service splits
into intervals during which its rank is at most r_max. Interval 0 starts at
age 0 (when the job is born below r_max); every later one is recycled work.
"""

from typing import List, NamedTuple, Optional, Sequence

import pandas as pd

from ..core.domain import DomainError


class Interval(NamedTuple):
    index: int
    start: float
    end: float
    work: float

    @property
    def original(self) -> bool:
        return self.start == 0


def _ranks(trajectory: Sequence[float]) -> List[float]:
    return [r - a for a, r in enumerate(trajectory)]


def _interval_work(size: float, start: float, end: float) -> float:
    if size < start:
        return 0.0
    if size < end:
        return size - start
    return end - start


def intervals(trajectory: Sequence[float], r_max: float, size: Optional[float] = None) -> List[Interval]:
    """
    Maximal runs of ages [b, c) during which rank r[a] - a <= r_max.

    `trajectory` holds the predicted total size at each whole age. `size`
    defaults to the trajectory length; interval ends are clipped to it.
    """
    if not trajectory:
        raise DomainError("Trajectory must not be empty")
    size = float(len(trajectory) if size is None else size)
    if not 0 < size <= len(trajectory):
        raise DomainError(f"Size {size} does not fit a trajectory of {len(trajectory)} units")

    result: List[Interval] = []
    start: Optional[int] = None
    for age, value in enumerate(_ranks(trajectory)):
        below = value <= r_max
        if below and start is None:
            start = age
        elif not below and start is not None:
            result.append(Interval(len(result), float(start), float(age), _interval_work(size, start, age)))
            start = None
    if start is not None:
        result.append(Interval(len(result), float(start), size, _interval_work(size, start, size)))
    return result


def original_work(trajectory: Sequence[float], r_max: float, size: Optional[float] = None) -> float:
    """Work in interval 0; zero if the job is born above r_max."""
    found = intervals(trajectory, r_max, size)
    return found[0].work if found and found[0].original else 0.0


def recycled_work(trajectory: Sequence[float], r_max: float, size: Optional[float] = None) -> List[float]:
    return [item.work for item in intervals(trajectory, r_max, size) if not item.original]


def new_job_work(trajectory: Sequence[float], threshold: float, size: Optional[float] = None) -> float:
    """Service a new arrival receives before its rank first reaches `threshold`."""
    size = float(len(trajectory) if size is None else size)
    for age, value in enumerate(_ranks(trajectory)):
        if value >= threshold:
            return float(min(age, size))
    return size


def intervals_frame(trajectory: Sequence[float], r_max: float, size: Optional[float] = None) -> pd.DataFrame:
    rows = [
        {'interval': item.index, 'start': item.start, 'end': item.end, 'work': item.work,
         'kind': 'original' if item.original else 'recycled'}
        for item in intervals(trajectory, r_max, size)
    ]
    return pd.DataFrame(rows, columns=['interval', 'start', 'end', 'work', 'kind'])

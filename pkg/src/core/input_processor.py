# src/core/input_processor.py
"""Workload CSV export and import: id, arrival, size, prediction, trajectory."""

import os
from typing import List, Sequence

import pandas as pd

from .domain import DomainError, Job, PredictionSpec

WORKLOAD_COLUMNS = ['id', 'arrival', 'size', 'prediction', 'trajectory']


def workload_frame(jobs: Sequence[Job]) -> pd.DataFrame:
    rows = []
    for job in sorted(jobs, key=lambda j: j.id):
        trajectory = job.prediction.trajectory
        rows.append({
            'id': job.id,
            'arrival': job.arrival_time,
            'size': job.size,
            'prediction': job.prediction.initial,
            'trajectory': ' '.join(repr(float(v)) for v in trajectory) if trajectory else '',
        })
    return pd.DataFrame(rows, columns=WORKLOAD_COLUMNS)


def save_workload(jobs: Sequence[Job], path: str) -> str:
    workload_frame(jobs).to_csv(path, index=False, lineterminator='\n')
    return path


def load_workload(path: str) -> List[Job]:
    """
    Rebuild jobs from a workload CSV. Bin beliefs are not stored, so a
    belief-driven workload comes back with static predictions.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Workload file not found: {path}")
    df = pd.read_csv(path, dtype={'trajectory': str}, keep_default_na=False)
    missing = [c for c in WORKLOAD_COLUMNS if c not in df.columns]
    if missing:
        raise DomainError(f"{path}: workload is missing columns {missing}")

    jobs = []
    for row in df.itertuples(index=False):
        trajectory = tuple(float(v) for v in str(row.trajectory).split()) or None
        prediction = PredictionSpec(initial=float(row.prediction), trajectory=trajectory)
        jobs.append(Job(id=int(row.id), arrival_time=float(row.arrival), size=float(row.size), prediction=prediction))
    return jobs

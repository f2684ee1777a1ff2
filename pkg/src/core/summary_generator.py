# src/core/summary_generator.py

from typing import Iterable, List, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from ..config import DEFAULT_CONFIDENCE_LEVEL
from .domain import PER_JOB_COLUMNS, Job, SimStats


def per_job_frame(jobs: Iterable[Job]) -> pd.DataFrame:
    """One row per job, ordered by id."""
    records = [
        (
            job.id, job.arrival_time, job.size, job.prediction.initial,
            job.first_service_time, job.completion_time, job.latency, job.ttft, job.preemption_count,
        )
        for job in sorted(jobs, key=lambda j: j.id)
    ]
    return pd.DataFrame.from_records(records, columns=PER_JOB_COLUMNS)


def summarize_jobs(jobs: Sequence[Job], warmup_fraction: float = 0.0) -> SimStats:
    """
    Latency/TTFT statistics over completed jobs.

    The first `warmup_fraction` of completions (by completion time, then id)
    are dropped before computing means, medians and tail percentiles.
    """
    per_job = per_job_frame(jobs)
    done = per_job.dropna(subset=['completion']).sort_values(['completion', 'id'], kind='mergesort')
    completed = len(done)
    measured = done.iloc[int(np.floor(warmup_fraction * completed)):]

    summary = SimStats(per_job=per_job, completed=completed, measured=len(measured))
    if measured.empty:
        return summary

    latency = measured['latency'].to_numpy(dtype=float)
    ttft = measured['ttft'].to_numpy(dtype=float)
    summary.mean_latency = float(latency.mean())
    summary.median_latency = float(np.median(latency))
    summary.p95_latency = float(np.percentile(latency, 95))
    summary.p99_latency = float(np.percentile(latency, 99))
    summary.mean_ttft = float(ttft.mean())
    summary.median_ttft = float(np.median(ttft))
    summary.mean_slowdown = float((latency / measured['size'].to_numpy(dtype=float)).mean())
    return summary


def confidence_half_width(values: Sequence[float], level: float = DEFAULT_CONFIDENCE_LEVEL) -> float:
    """Student-t half width of the mean; NaN with fewer than two values."""
    values = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    if values.size < 2:
        return float('nan')
    scale = values.std(ddof=1) / np.sqrt(values.size)
    return float(stats.t.ppf(0.5 + level / 2.0, values.size - 1) * scale)


def aggregate_replications(rows: pd.DataFrame, group_cols: List[str], metric_cols: List[str],
                           level: float = DEFAULT_CONFIDENCE_LEVEL) -> pd.DataFrame:
    """
    Collapse replication rows to one row per grid point with mean and CI half width.

    Output columns: group columns, `replications`, then `<metric>` and
    `<metric>_ci` pairs in the order given.
    """
    records = []
    for key, group in rows.groupby(group_cols, sort=True, dropna=False):
        key = key if isinstance(key, tuple) else (key,)
        record = dict(zip(group_cols, key))
        record['replications'] = len(group)
        for metric in metric_cols:
            values = group[metric].astype(float).to_numpy()
            record[metric] = float(np.mean(values))
            record[f"{metric}_ci"] = confidence_half_width(values, level)
        if 'unstable' in group.columns:
            record['unstable'] = bool(group['unstable'].any())
        records.append(record)

    columns = list(group_cols) + ['replications']
    for metric in metric_cols:
        columns += [metric, f"{metric}_ci"]
    if 'unstable' in rows.columns:
        columns.append('unstable')
    return pd.DataFrame.from_records(records, columns=columns)

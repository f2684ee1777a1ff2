# src/calculations/sweep.py
"""
Parameter sweeps over arrival rate and preemption fraction C.

Every grid point reuses the same replication seeds, so points are compared on
common random numbers. Replications can be spread over worker processes; the
rows are reassembled in grid order, so the output does not depend on the
worker count.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..config import DEFAULT_CONFIDENCE_LEVEL, DEFAULT_SWEEP_WORKERS
from ..core.domain import SUMMARY_COLUMNS, DomainError
from ..core.summary_generator import aggregate_replications
from .simulation import SimConfig, run_simulation

SWEEP_METRICS = [
    'mean_latency', 'median_latency', 'p95_latency', 'p99_latency', 'mean_ttft', 'median_ttft',
    'mean_slowdown', 'peak_memory', 'preemptions', 'evictions', 'unschedulable',
]
GROUP_COLUMNS = ['rate', 'C', 'policy']


class SweepResult(NamedTuple):
    rows: pd.DataFrame
    summary: pd.DataFrame
    per_job: Dict[Tuple[float, float, int], pd.DataFrame]


def replication_seed(base_seed: int, replication: int) -> int:
    """Seed for one replication, shared by every grid point."""
    state = np.random.SeedSequence([int(base_seed), int(replication)]).generate_state(1)
    return int(state[0])


def grid_configs(base: SimConfig, rates: Optional[Sequence[float]] = None,
                 Cs: Optional[Sequence[float]] = None) -> List[Tuple[float, float, SimConfig]]:
    """(rate, C, config) for every grid point; an empty axis keeps the base value."""
    if base.arrival.kind == 'burst' and rates:
        raise DomainError("A rate sweep needs Poisson arrivals")
    rate_axis = list(rates) if rates else [base.arrival.rate if base.arrival.steady_state else math.nan]
    C_axis = list(Cs) if Cs else [base.policy.C]

    points = []
    for rate in rate_axis:
        arrival = replace(base.arrival, rate=float(rate)) if base.arrival.steady_state else base.arrival
        for C in C_axis:
            policy = replace(base.policy, C=float(C))
            points.append((float(rate), float(C), replace(base, arrival=arrival, policy=policy)))
    return points


def _run_point(task):
    rate, C, replication, config, keep_per_job = task
    stats = run_simulation(config)
    row = {'rate': rate, 'C': C, 'policy': config.policy.label, 'replication': replication, 'seed': config.seed}
    row.update(stats.to_summary_dict())
    return row, (stats.per_job if keep_per_job else None)


def sweep(base: SimConfig, rates: Optional[Sequence[float]] = None, Cs: Optional[Sequence[float]] = None,
          replications: Optional[int] = None, workers: int = DEFAULT_SWEEP_WORKERS,
          keep_per_job: bool = False, confidence_level: float = DEFAULT_CONFIDENCE_LEVEL,
          progress_callback=None) -> SweepResult:
    """
    Run every (rate, C) point for the given number of replications.

    Returns:
        SweepResult with one row per replication, one aggregated row per grid
        point (mean and confidence half width per metric) and, if requested,
        the per-job tables keyed by (rate, C, replication).
    """
    def log_progress(message, progress_type='info'):
        if progress_callback:
            progress_callback(message, progress_type)
        else:
            print(message, flush=True)

    replications = replications or base.replications
    if replications < 1:
        raise DomainError(f"Replications must be >= 1, got {replications}")
    if workers < 1:
        raise DomainError(f"Workers must be >= 1, got {workers}")

    seeds = [replication_seed(base.seed, k) for k in range(replications)]
    tasks = [
        (rate, C, k, config.with_seed(seeds[k]), keep_per_job)
        for rate, C, config in grid_configs(base, rates, Cs)
        for k in range(replications)
    ]
    total = len(tasks)
    log_progress("=" * 80, 'info')
    log_progress(f"Sweep: {total} runs ({total // replications} grid points x {replications} replications, "
                 f"{workers} worker{'s' if workers > 1 else ''})", 'info')

    results = []
    if workers == 1:
        for done, task in enumerate(tasks, start=1):
            results.append(_run_point(task))
            log_progress(f"  [{done}/{total}] rate={task[0]:g} C={task[1]:g} replication {task[2]}", 'info')
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for done, result in enumerate(pool.map(_run_point, tasks), start=1):
                results.append(result)
                log_progress(f"  [{done}/{total}] runs complete", 'info')

    rows = pd.DataFrame([row for row, _ in results],
                        columns=GROUP_COLUMNS + ['replication', 'seed'] + SUMMARY_COLUMNS)
    per_job = {
        (task[0], task[1], task[2]): frame
        for task, (_, frame) in zip(tasks, results) if frame is not None
    }
    summary = aggregate_replications(rows, GROUP_COLUMNS, SWEEP_METRICS, confidence_level)

    unstable = int(summary['unstable'].sum()) if 'unstable' in summary.columns else 0
    log_progress(f"Sweep complete: {len(summary)} grid points" +
                 (f", {unstable} flagged unstable" if unstable else ""), 'success')
    log_progress("=" * 80, 'info')
    return SweepResult(rows=rows, summary=summary, per_job=per_job)

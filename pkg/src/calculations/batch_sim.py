# src/calculations/batch_sim.py
"""
Iteration-level token-batch engine with a memory budget.

Every iteration re-ranks all admitted jobs and fills the batch in rank order.
A batched job commits memory for its whole size (its age plus every token it
has left), so a job in the batch can always take its next step. Filling stops
at the first job whose commitment does not fit. Jobs out of the batch keep
their resident age in hold mode and lose it in discard mode.

Each batched job then produces one token, or, if a discard-mode eviction left
its memory behind its age, rebuilds up to `recompute_rate` tokens instead.
"""

import math
from typing import Dict, List, Optional, Set

from ..core.domain import DomainError, Job, SimStats
from ..core.summary_generator import summarize_jobs
from .continuous_sim import BeliefUpdater
from .policy import preemptable, rank
from .simulation import MemoryTrace, SimConfig, build_jobs, emit_warning


def _select_hold(order: List[Job], budget: float) -> List[Job]:
    used = sum(job.resident for job in order)
    batch = []
    for job in order:
        extra = job.size - job.resident
        if used + extra > budget:
            break
        batch.append(job)
        used += extra
    return batch


def _select_discard(order: List[Job], budget: float) -> List[Job]:
    used = 0.0
    batch = []
    for job in order:
        if used + job.size > budget:
            break
        batch.append(job)
        used += job.size
    return batch


def run_batch(config: SimConfig, jobs: Optional[List[Job]] = None, progress_callback=None) -> SimStats:
    def log_progress(message, progress_type='info'):
        if progress_callback:
            progress_callback(message, progress_type)

    if config.mode != 'batch':
        raise DomainError(f"run_batch needs batch mode, got '{config.mode}'")
    if jobs is None:
        jobs = build_jobs(config)
    for job in jobs:
        if job.size != math.floor(job.size):
            raise DomainError(f"Job {job.id}: batch mode needs whole-token sizes, got {job.size}")

    policy = config.policy
    budget = config.memory_budget
    rate = float(config.recompute_rate)
    discard = config.preemption_cost_mode == 'discard'
    select = _select_discard if discard else _select_hold
    updater = BeliefUpdater(config) if policy.prediction_source == 'belief' else None
    log_progress(f"Simulating {len(jobs)} jobs under {policy.label} (batch, budget {budget})...", 'info')

    pending = sorted(jobs, key=lambda j: (j.arrival_time, j.id))
    n = len(pending)
    i = 0
    t = 0
    active: List[Job] = []
    previous: Set[int] = set()
    warnings: List[str] = []
    unschedulable: Dict[int, Job] = {}
    trace = MemoryTrace(record=config.record_trace)
    preemptions = evictions = busy = 0

    while i < n or active:
        if not active:
            t = max(t, math.ceil(pending[i].arrival_time))
        while i < n and pending[i].arrival_time <= t:
            job = pending[i]
            i += 1
            if job.size > budget:
                emit_warning(
                    f"Job {job.id} is unschedulable: its size {job.size:g} exceeds the memory budget {budget:g}",
                    warnings,
                )
                unschedulable[job.id] = job
            else:
                active.append(job)
        if not active:
            continue

        order = sorted(active, key=lambda job: rank(policy, job, t))
        batch = select(order, budget)
        while not batch:
            # memory pinned by held jobs blocks the top job: drop the worst-ranked holder
            victim = next(job for job in reversed(order[1:]) if job.resident > 0 and preemptable(policy, job))
            victim.resident = 0.0
            evictions += 1
            batch = select(order, budget)

        chosen = {job.id for job in batch}
        for job in order:
            if job.id in chosen:
                continue
            if job.id in previous:
                job.preemption_count += 1
                preemptions += 1
            if discard and job.resident > 0:
                job.resident = 0.0
                evictions += 1

        produced = []
        for job in sorted(batch, key=lambda j: j.id):
            if job.first_service_time is None:
                job.first_service_time = float(t)
            if job.resident < job.age:
                job.resident += min(rate, job.age - job.resident)
            else:
                job.age += 1
                job.resident += 1
                produced.append(job)
        busy += 1
        trace.sample(float(t + 1), sum(job.resident for job in active))

        for job in produced:
            if job.age >= job.size:
                job.completion_time = float(t + 1)
                job.resident = 0.0
            elif updater is not None:
                updater.advance(job)
        active = [job for job in active if job.completion_time is None]
        previous = chosen
        t += 1

    stats = summarize_jobs(jobs, config.warmup_fraction)
    stats.peak_memory = trace.peak
    stats.preemptions = preemptions
    stats.evictions = evictions
    stats.busy_time = float(busy)
    stats.unschedulable = len(unschedulable)
    stats.warnings = warnings
    stats.zero_evidence_fallbacks = updater.fallbacks if updater is not None else 0
    stats.memory_trace = trace if config.record_trace else None
    log_progress(f"Completed {stats.completed} jobs in {t} iterations", 'info')
    return stats

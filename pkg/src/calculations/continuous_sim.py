# src/calculations/continuous_sim.py
"""
Event-driven single-server preemptive queue.

Decision points are arrivals, completions and, when predictions can change
with age (trajectory or belief sources), each unit-age boundary of the running
job. Waiting jobs do not age, so their ranks are frozen while they sit in the
heap. A running job is preempted only if it is still preemptable and the best
waiting job's rank is strictly smaller.
"""

import heapq
import math
from typing import List, Optional

from ..core.domain import DomainError, Job, SimStats, ZeroEvidenceError
from ..core.summary_generator import summarize_jobs
from .policy import preemptable, rank
from .refine import bayes_update, build_transition, synth_observation
from .simulation import MemoryTrace, SimConfig, build_jobs, emit_warning, stability_warning
from .workload import SeedStreams


class BeliefUpdater:
    """Advances a job's bin belief after each unit of service."""

    def __init__(self, config: SimConfig):
        self.bins = config.bins
        self.model = config.observation
        self.T = build_transition(config.bins)
        self.rng = SeedStreams(config.seed).get('observations')
        self.fallbacks = 0

    def advance(self, job: Job):
        belief = job.prediction.bin_belief
        remaining = job.size - job.age
        if belief is None or remaining <= 0:
            return
        observation = synth_observation(self.bins.clip(remaining), self.bins, self.model, self.rng)
        try:
            job.prediction.bin_belief = bayes_update(belief, observation, self.T)
        except ZeroEvidenceError:
            self.fallbacks += 1
            job.prediction.bin_belief = type(belief)(observation.p)


def run_continuous(config: SimConfig, jobs: Optional[List[Job]] = None, progress_callback=None) -> SimStats:
    def log_progress(message, progress_type='info'):
        if progress_callback:
            progress_callback(message, progress_type)

    if config.mode != 'continuous':
        raise DomainError(f"run_continuous needs continuous mode, got '{config.mode}'")

    warnings: List[str] = []
    message = stability_warning(config)
    if message:
        emit_warning(message, warnings)

    if jobs is None:
        jobs = build_jobs(config)
    policy = config.policy
    log_progress(f"Simulating {len(jobs)} jobs under {policy.label} (continuous)...", 'info')

    pending = sorted(jobs, key=lambda j: (j.arrival_time, j.id))
    n = len(pending)
    unit_events = policy.preemptive and policy.prediction_source in ('trajectory', 'belief')
    updater = BeliefUpdater(config) if (unit_events and policy.prediction_source == 'belief') else None

    waiting: list = []          # (value, arrival, id, job)
    running: Optional[Job] = None
    t = 0.0
    i = 0
    idle_memory = 0.0           # ages of started jobs that are not running
    busy_time = 0.0
    preemptions = 0
    trace = MemoryTrace(record=config.record_trace)

    def push(job: Job):
        heapq.heappush(waiting, (*rank(policy, job, t), job))

    def start(job: Job):
        nonlocal idle_memory
        if job.first_service_time is None:
            job.first_service_time = t
        else:
            idle_memory -= job.age

    def challenge():
        """Serve the best waiting job if it outranks the running one."""
        nonlocal running, idle_memory, preemptions
        if not waiting:
            return
        if running is None:
            running = heapq.heappop(waiting)[-1]
            start(running)
            return
        if not preemptable(policy, running):
            return
        current = rank(policy, running, t)
        if tuple(waiting[0][:3]) < tuple(current):
            running.preemption_count += 1
            preemptions += 1
            idle_memory += running.age
            heapq.heappush(waiting, (*current, running))
            running = heapq.heappop(waiting)[-1]
            start(running)

    while i < n or running is not None or waiting:
        next_arrival = pending[i].arrival_time if i < n else math.inf
        finish = boundary = math.inf
        if running is not None:
            finish = t + (running.size - running.age)
            if unit_events:
                next_unit = math.floor(running.age) + 1
                if next_unit < running.size:
                    boundary = t + (next_unit - running.age)
        t_event = min(next_arrival, finish, boundary)

        if running is not None:
            elapsed = t_event - t
            running.age += elapsed
            busy_time += elapsed
        t = t_event
        trace.sample(t, idle_memory + (running.age if running is not None else 0.0))

        if running is not None and finish <= t_event:
            running.age = running.size
            running.completion_time = t
            running = None
        elif running is not None and boundary <= t_event:
            running.age = float(math.floor(running.age + 0.5))
            if updater is not None:
                updater.advance(running)

        while i < n and pending[i].arrival_time <= t:
            push(pending[i])
            i += 1

        challenge()

    stats = summarize_jobs(jobs, config.warmup_fraction)
    stats.peak_memory = trace.peak
    stats.preemptions = preemptions
    stats.busy_time = busy_time
    stats.unstable = config.unstable
    stats.warnings = warnings
    stats.zero_evidence_fallbacks = updater.fallbacks if updater is not None else 0
    stats.memory_trace = trace if config.record_trace else None
    log_progress(f"Completed {stats.completed} jobs, mean latency {stats.mean_latency:.4f}", 'info')
    return stats

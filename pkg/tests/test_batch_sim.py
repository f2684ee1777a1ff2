import math

import pandas as pd
import pytest

from src.calculations.batch_sim import run_batch
from src.calculations.policy import RankPolicy
from src.calculations.simulation import SimConfig, run_simulation
from src.calculations.workload import ArrivalSpec, PredictorModel, ServiceDist
from src.core.domain import DomainError


def _config(kind='SPRPT_LP', C=1.0, budget=math.inf, cost='hold', **kwargs):
    return SimConfig(
        mode='batch',
        arrival=kwargs.pop('arrival', ArrivalSpec(kind='poisson', rate=0.05, count=300)),
        service=kwargs.pop('service', ServiceDist(kind='exponential', mean=12.0)),
        predictor=kwargs.pop('predictor', PredictorModel(kind='exponential-noise')),
        policy=RankPolicy(kind=kind, C=C),
        memory_budget=budget,
        preemption_cost_mode=cost,
        warmup_fraction=kwargs.pop('warmup_fraction', 0.0),
        **kwargs,
    )


def test_batch_mode_floors_the_threshold():
    assert _config().policy.batch
    assert not SimConfig(mode='continuous').policy.batch


def test_unlimited_budget_serves_every_job_every_iteration():
    burst = ArrivalSpec(kind='burst', n=5)
    stats = run_batch(_config(arrival=burst, service=ServiceDist(kind='deterministic', value=3.0)))
    assert (stats.per_job['latency'] == 3.0).all()
    assert (stats.per_job['ttft'] == 0.0).all()
    assert stats.peak_memory == 15.0
    assert stats.busy_time == 3.0


def test_unlimited_budget_runs_a_burst_concurrently(make_job):
    jobs = [make_job(0, 0.0, 2.0), make_job(1, 0.0, 1.0), make_job(2, 0.0, 3.0)]
    stats = run_batch(_config(kind='SPJF', predictor=PredictorModel(kind='perfect')), jobs=jobs)
    assert stats.per_job['latency'].tolist() == [2.0, 1.0, 3.0]
    assert stats.preemptions == 0


@pytest.mark.parametrize("kind", ['FCFS', 'SPJF', 'SPRPT', 'SPRPT_LP'])
def test_unit_budget_serializes_jobs(make_job, kind):
    jobs = [make_job(0, 0.0, 1.0), make_job(1, 0.0, 1.0)]
    stats = run_batch(_config(kind=kind, budget=1.0), jobs=jobs)
    assert stats.per_job['ttft'].tolist() == [0.0, 1.0]
    assert stats.per_job['latency'].tolist() == [1.0, 2.0]
    assert stats.peak_memory == 1.0


def test_empty_workload():
    stats = run_batch(_config(budget=10.0), jobs=[])
    assert stats.completed == 0
    assert stats.peak_memory == 0.0


@pytest.mark.parametrize("cost", ['hold', 'discard'])
def test_locked_jobs_are_never_evicted(make_job, cost):
    # 6 + 6 exceeds the budget, so job 1 waits for job 0 instead of sharing memory with it
    jobs = [make_job(0, 0.0, 6.0), make_job(1, 0.0, 6.0)]
    stats = run_batch(_config(kind='FCFS', budget=8.0, cost=cost), jobs=jobs)
    assert jobs[0].completion_time == 6.0
    assert jobs[1].completion_time == 12.0
    assert stats.preemptions == 0
    assert stats.evictions == 0
    assert stats.peak_memory == 6.0


@pytest.mark.parametrize("cost", ['hold', 'discard'])
@pytest.mark.parametrize("seed", range(5))
def test_fcfs_burst_never_preempts(cost, seed):
    burst = ArrivalSpec(kind='burst', n=40)
    stats = run_batch(_config(kind='FCFS', budget=150.0, cost=cost, arrival=burst,
                              service=ServiceDist(kind='exponential', mean=20.0), seed=seed))
    assert stats.preemptions == 0
    assert stats.evictions == 0
    assert stats.per_job['preemptions'].sum() == 0


@pytest.mark.parametrize("cost", ['hold', 'discard'])
@pytest.mark.parametrize("seed", range(10))
def test_burst_traces_do_not_depend_on_the_threshold(cost, seed):
    burst = ArrivalSpec(kind='burst', n=40)
    service = ServiceDist(kind='exponential', mean=20.0)
    partial = run_batch(_config(C=0.8, budget=150.0, cost=cost, arrival=burst, service=service, seed=seed))
    full = run_batch(_config(C=1.0, budget=150.0, cost=cost, arrival=burst, service=service, seed=seed))
    pd.testing.assert_frame_equal(partial.per_job, full.per_job)
    assert partial.preemptions == full.preemptions == 0


@pytest.mark.parametrize("cost", ['hold', 'discard'])
def test_memory_never_exceeds_budget(cost):
    stats = run_batch(_config(C=0.5, budget=60.0, cost=cost, record_trace=True, seed=3))
    trace = stats.memory_trace.to_frame()
    assert trace['memory'].max() <= 60.0
    assert stats.completed + stats.unschedulable == 300


def test_oversized_job_is_reported_unschedulable(make_job, capsys):
    jobs = [make_job(0, 0.0, 50.0), make_job(1, 0.0, 4.0)]
    stats = run_batch(_config(kind='SPJF', budget=10.0), jobs=jobs)
    assert stats.unschedulable == 1
    assert jobs[0].completion_time is None
    assert jobs[1].completed
    assert "unschedulable" in capsys.readouterr().err
    assert stats.completed == 1
    assert len(stats.per_job) == 2
    assert math.isnan(stats.per_job.loc[stats.per_job['id'] == 0, 'completion'].iloc[0])


def test_hold_and_discard_pay_for_a_preemption_differently(make_job):
    held = [make_job(0, 0.0, 6.0), make_job(1, 2.0, 3.0)]
    discarded = [make_job(0, 0.0, 6.0), make_job(1, 2.0, 3.0)]
    hold = run_batch(_config(kind='SPRPT', budget=8.0, cost='hold', recompute_rate=1), jobs=held)
    discard = run_batch(_config(kind='SPRPT', budget=8.0, cost='discard', recompute_rate=1), jobs=discarded)
    # job 1 displaces job 0 at t=2; held memory resumes at once, discarded memory is rebuilt one token per iteration
    assert held[1].completion_time == discarded[1].completion_time == 5.0
    assert held[0].completion_time == 9.0
    assert discarded[0].completion_time == 11.0
    assert held[0].preemption_count == discarded[0].preemption_count == 1
    assert hold.preemptions == discard.preemptions == 1
    assert hold.evictions == 0
    assert discard.evictions == 1
    assert hold.peak_memory == discard.peak_memory == 6.0


def test_zero_threshold_matches_spjf_in_batch_mode():
    limited = run_batch(_config(kind='SPRPT_LP', C=0.0, budget=80.0, seed=5))
    spjf = run_batch(_config(kind='SPJF', budget=80.0, seed=5))
    pd.testing.assert_frame_equal(limited.per_job, spjf.per_job)


def test_integral_sizes_are_generated_and_required(make_job):
    stats = run_simulation(_config(seed=8))
    assert (stats.per_job['size'] % 1 == 0).all()
    with pytest.raises(DomainError):
        run_batch(_config(), jobs=[make_job(0, 0.0, 2.5)])


def test_belief_source_runs_in_batch_mode():
    config = SimConfig(
        mode='batch', arrival=ArrivalSpec(kind='poisson', rate=0.02, count=60),
        service=ServiceDist(kind='exponential', mean=40.0),
        predictor=PredictorModel(kind='binned-synthetic', noise=0.2),
        policy=RankPolicy(kind='SPRPT_LP', C=0.5, prediction_source='belief'),
        memory_budget=200.0, seed=2,
    )
    stats = run_batch(config)
    assert stats.completed + stats.unschedulable == 60


def test_batch_runs_are_deterministic():
    first = run_batch(_config(C=0.5, budget=50.0, cost='discard', seed=21))
    second = run_batch(_config(C=0.5, budget=50.0, cost='discard', seed=21))
    pd.testing.assert_frame_equal(first.per_job, second.per_job)

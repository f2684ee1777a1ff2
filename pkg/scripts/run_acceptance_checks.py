# scripts/run_acceptance_checks.py
"""
Full-scale acceptance checks: simulator oracles, analytic-vs-simulation
agreement, Monte Carlo moment oracles, the memory/latency trend, trace
equivalences, refinement benefit, Bayesian algebra and CLI determinism.

The pytest suite covers the same properties at small scale; this script runs
them at the sizes used for sign-off and exits non-zero if any check fails.
"""

import os
import sys
import tempfile
import time

# Add the project root to the Python path for module imports
current_dir = os.path.dirname(os.path.abspath(__file__))
project_root = os.path.dirname(current_dir)
sys.path.insert(0, project_root)

import numpy as np
import pandas as pd

from src.config import DEFAULT_RECYCLED_THRESHOLD, EXIT_OK
from src.calculations.analytic import (
    RECYCLED_THRESHOLDS, mean_response_aggregate, moment_old0_sq, moment_old1_sq, monte_carlo_terms, rho_prime,
)
from src.calculations.continuous_sim import run_continuous
from src.calculations.densities import DensityPair, QuadratureSpec
from src.calculations.policy import RankPolicy
from src.calculations.refine import (
    Observation, ObservationModel, bayes_update, build_transition, expected_length, refine_ensemble,
)
from src.calculations.simulation import SimConfig
from src.calculations.workload import ArrivalSpec, PredictorModel, ServiceDist
from src.core.domain import BeliefState, Bins
from src.main import main as cli_main

EXP1 = ServiceDist(kind='exponential', mean=1.0)
ACCEPTANCE_SEED = 20240601
FULL_PREEMPTION_THRESHOLD = 'own'


def _config(kind, C=1.0, rate=0.5, count=10000, predictor='exponential-noise', seed=ACCEPTANCE_SEED,
            arrival=None, warmup=0.2):
    return SimConfig(
        mode='continuous',
        arrival=arrival or ArrivalSpec(kind='poisson', rate=rate, count=count),
        service=EXP1,
        predictor=PredictorModel(kind=predictor),
        policy=RankPolicy(kind=kind, C=C),
        warmup_fraction=warmup,
        seed=seed,
    )


def check_fcfs_oracle(jobs):
    """FCFS mean latency against the M/M/1 value 1 / (1 - rate)."""
    ok = True
    for rate in (0.3, 0.5, 0.8):
        start = time.time()
        stats = run_continuous(_config('FCFS', rate=rate, count=jobs))
        elapsed = time.time() - start
        expected = 1.0 / (1.0 - rate)
        gap = abs(stats.mean_latency - expected) / expected
        passed = gap <= 0.02 and elapsed < 120
        ok &= passed
        print(f"  rate={rate}: simulated {stats.mean_latency:.4f} vs {expected:.4f} "
              f"(gap {gap:.2%}, {elapsed:.1f}s) {'ok' if passed else 'FAILED'}")
    return ok


def _analytic_vs_sim(pair_kind, predictor, points, jobs, tolerance, threshold, quad):
    pair = DensityPair(EXP1, pair_kind)
    alternate = next(name for name in RECYCLED_THRESHOLDS if name != threshold)
    ok = True
    for rate, C in points:
        stats = run_continuous(_config('SPRPT_LP', C=C, rate=rate, count=jobs, predictor=predictor))
        primary = mean_response_aggregate(C, rate, pair, quad, threshold=threshold, curve_points=2).mean
        other = mean_response_aggregate(C, rate, pair, quad, threshold=alternate, curve_points=2).mean
        gap = abs(stats.mean_latency - primary) / primary
        other_gap = abs(stats.mean_latency - other) / other
        passed = gap <= tolerance
        ok &= passed
        print(f"  rate={rate} C={C}: simulated {stats.mean_latency:.4f}, analytic {primary:.4f} ({threshold}, "
              f"gap {gap:.2%}), {other:.4f} ({alternate}, gap {other_gap:.2%}) {'ok' if passed else 'FAILED'}")
        if not passed:
            print(f"    ⚠️ Warning: the recycled-work term depends on whose threshold bounds the "
                  f"non-preemptable stretch; '{alternate}' gives gap {other_gap:.2%}. "
                  f"Moment quadrature is checked separately against Monte Carlo below.")
    return ok


def check_full_preemption(jobs, quad):
    # the own-threshold recycled term reduces to SRPT at C = 1; the tagged form does not
    print(f"  sign-off threshold: '{FULL_PREEMPTION_THRESHOLD}' (the other form is shown for comparison)")
    return _analytic_vs_sim('perfect', 'perfect', [(0.5, 1.0), (0.7, 1.0)], jobs, 0.05,
                            FULL_PREEMPTION_THRESHOLD, quad)


def check_limited_preemption(jobs, threshold, quad):
    points = [(rate, C) for rate in (0.7, 0.8) for C in (0.25, 0.5)]
    return _analytic_vs_sim('exponential', 'exponential-noise', points, jobs, 0.10, threshold, quad)


def check_moment_oracles(samples):
    rng = np.random.default_rng(ACCEPTANCE_SEED)
    quad = QuadratureSpec()
    ok = True
    start = time.time()
    for _ in range(5):
        pair = DensityPair(EXP1, str(rng.choice(['perfect', 'exponential'])))
        r, a0_fraction, lam = rng.uniform(0.2, 3.0), rng.uniform(0.0, 1.0), rng.uniform(0.1, 0.9)
        a0 = a0_fraction * r
        estimates = monte_carlo_terms(pair, lam, r, a0, samples, rng)
        analytic = {
            'rho_prime': rho_prime(r, pair, lam, quad),
            'm_old0_sq': moment_old0_sq(r, pair, quad),
            'm_old1_sq': moment_old1_sq(r, a0, pair, quad),
        }
        for name, (mean, stderr) in estimates.items():
            passed = abs(mean - analytic[name]) <= 4 * stderr + 1e-12
            ok &= passed
            print(f"  {pair.kind:<11} r={r:.3f} a0={a0:.3f} {name:<10} quadrature {analytic[name]:.6f} "
                  f"vs Monte Carlo {mean:.6f} ± {4 * stderr:.1e} {'ok' if passed else 'FAILED'}")
    elapsed = time.time() - start
    print(f"  elapsed {elapsed:.1f}s")
    return ok and elapsed < 60


def check_memory_latency_trend(jobs, replications):
    peaks = {C: [] for C in (0.0, 0.5, 1.0)}
    latencies = {C: [] for C in (0.0, 0.5, 1.0)}
    for k in range(replications):
        for C in peaks:
            stats = run_continuous(_config('SPRPT_LP', C=C, rate=0.9, count=jobs, seed=ACCEPTANCE_SEED + k))
            peaks[C].append(stats.peak_memory)
            latencies[C].append(stats.mean_latency)
    for C in peaks:
        print(f"  C={C}: mean peak memory {np.mean(peaks[C]):.3f}, mean latency {np.mean(latencies[C]):.4f}")
    return np.mean(peaks[0.5]) < np.mean(peaks[1.0]) and np.mean(latencies[0.5]) < np.mean(latencies[0.0])


def _same_traces(first, second):
    return first.per_job.equals(second.per_job)


def check_trace_equivalence(jobs):
    ok = True
    for seed in range(10):
        full = _same_traces(run_continuous(_config('SPRPT_LP', C=1.0, count=jobs, seed=seed)),
                            run_continuous(_config('SPRPT', count=jobs, seed=seed)))
        none = _same_traces(run_continuous(_config('SPRPT_LP', C=0.0, count=jobs, seed=seed)),
                            run_continuous(_config('SPJF', count=jobs, seed=seed)))
        ok &= full and none
        print(f"  seed {seed}: C=1 vs SPRPT {'identical' if full else 'DIFFER'}, "
              f"C=0 vs SPJF {'identical' if none else 'DIFFER'}")
    return ok


def check_burst_equivalence():
    burst = ArrivalSpec(kind='burst', n=1000)
    ok = True
    for seed in range(10):
        same = _same_traces(run_continuous(_config('SPRPT_LP', C=0.8, arrival=burst, seed=seed)),
                            run_continuous(_config('SPRPT_LP', C=1.0, arrival=burst, seed=seed)))
        ok &= same
        print(f"  seed {seed}: C=0.8 vs C=1 {'identical' if same else 'DIFFER'}")
    spjf = run_continuous(_config('SPJF', arrival=burst, predictor='perfect', warmup=0.0))
    fcfs = run_continuous(_config('FCFS', arrival=burst, predictor='perfect', warmup=0.0))
    print(f"  burst of 1000: SPJF mean latency {spjf.mean_latency:.3f}, FCFS {fcfs.mean_latency:.3f}")
    return ok and spjf.mean_latency < fcfs.mean_latency


def check_refinement_benefit(trajectories):
    bins = Bins.default_token_bins()
    _, mae = refine_ensemble(trajectories, bins, ObservationModel(2.0, 0.2), ACCEPTANCE_SEED)
    _, control = refine_ensemble(trajectories, bins, ObservationModel(np.inf, 0.0), ACCEPTANCE_SEED)
    raw, refined = mae['raw_mae'].mean(), mae['refined_mae'].mean()
    control_gap = float((control['refined_mae'] - control['raw_mae']).abs().max())
    print(f"  mean raw MAE {raw:.3f}, refined {refined:.3f} (ratio {raw / refined:.2f}); "
          f"noiseless control max gap {control_gap:.2e}")
    return refined < raw and control_gap <= 1e-9


def check_bayesian_algebra():
    T3 = build_transition(Bins((0, 2, 4, 6)))
    q = bayes_update(BeliefState([0.0, 0.0, 1.0]), Observation(np.array([0.2, 0.5, 0.3])), T3).q
    hand = np.allclose(q, [0.0, 0.625, 0.375], rtol=0, atol=1e-12)
    bins = Bins.default_token_bins()
    uniform = expected_length(BeliefState.uniform(10), bins) == 256.0
    T = build_transition(bins).T
    entries = (np.allclose(np.diag(T), 1 - 1 / 51.2, atol=1e-15)
               and np.allclose(np.diag(T, 1), 1 / 51.2, atol=1e-15))
    print(f"  3-bin example {'ok' if hand else 'FAILED'}, uniform expected length "
          f"{'ok' if uniform else 'FAILED'}, transition entries {'ok' if entries else 'FAILED'}")
    return hand and uniform and entries


def check_cli_determinism():
    config_dir = os.path.join(project_root, 'config')
    runs = [
        ('simulate', 'simulate_example.json', ['--set', 'arrival.count=5000']),
        ('simulate', 'batch_example.json', []),
        ('sweep', 'sweep_example.json', ['--set', 'arrival.count=2000', '--set', 'replications=2']),
        ('refine', 'refine_example.json', ['--set', 'refine.trajectories=50']),
        ('analyze', 'analyze_example.json', ['--set', 'sweep.rates=[0.5]', '--set', 'sweep.C=[0.5]',
                                             '--set', 'analytic.table_points=100']),
        ('validate', 'validate_example.json', ['--set', 'arrival.count=5000', '--set', 'replications=2',
                                               '--set', 'validation.tolerance=1.0']),
    ]
    ok = True
    with tempfile.TemporaryDirectory() as tmp:
        for command, config, extra in runs:
            outputs = []
            for attempt in ('a', 'b'):
                out_dir = os.path.join(tmp, f"{command}_{config}_{attempt}")
                code = cli_main([command, os.path.join(config_dir, config), '--output-dir', out_dir, '--quiet', *extra])
                files = {}
                for name in sorted(os.listdir(out_dir)):
                    with open(os.path.join(out_dir, name), 'rb') as f:
                        files[name] = f.read()
                outputs.append((code, files))
            same = outputs[0] == outputs[1] and outputs[0][0] == EXIT_OK
            ok &= same
            print(f"  {command} {config}: {len(outputs[0][1])} files {'identical' if same else 'DIFFER'}")
    return ok


def run_acceptance_checks(full_jobs=1_000_000, trend_jobs=20000, trace_jobs=5000, samples=10_000_000,
                          replications=20, trajectories=1000, threshold=DEFAULT_RECYCLED_THRESHOLD):
    quad = QuadratureSpec()
    checks = [
        ("1. FCFS against M/M/1", lambda: check_fcfs_oracle(full_jobs)),
        (f"2. Analytic vs simulation, C = 1 ({FULL_PREEMPTION_THRESHOLD} threshold)",
         lambda: check_full_preemption(full_jobs, quad)),
        (f"3. Analytic vs simulation, limited preemption ({threshold} threshold)",
         lambda: check_limited_preemption(full_jobs, threshold, quad)),
        ("4. Moment oracles", lambda: check_moment_oracles(samples)),
        ("5. Memory/latency trade-off", lambda: check_memory_latency_trend(trend_jobs, replications)),
        ("6. Trace equivalence", lambda: check_trace_equivalence(trace_jobs)),
        ("7. Burst equivalence", check_burst_equivalence),
        ("8. Refinement benefit", lambda: check_refinement_benefit(trajectories)),
        ("9. Bayesian algebra", check_bayesian_algebra),
        ("10. Determinism", check_cli_determinism),
    ]

    results = []
    for name, check in checks:
        print("=" * 60)
        print(name)
        print("=" * 60)
        start = time.time()
        try:
            passed = bool(check())
        except Exception as e:
            print(f"❌ Error: {e}")
            passed = False
        results.append({'check': name, 'passed': passed, 'seconds': round(time.time() - start, 1)})

    summary = pd.DataFrame(results)
    print("=" * 60)
    print(summary.to_string(index=False))
    failed = int((~summary['passed']).sum())
    print(f"{len(summary) - failed} of {len(summary)} checks passed")
    return failed == 0


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(description="Run the full-scale acceptance checks")
    parser.add_argument('--quick', action='store_true', help="Use reduced job and sample counts")
    parser.add_argument('--threshold', choices=RECYCLED_THRESHOLDS, default=DEFAULT_RECYCLED_THRESHOLD,
                        help="Recycled-work threshold for the limited-preemption comparison")
    args = parser.parse_args()

    if args.quick:
        passed = run_acceptance_checks(full_jobs=100_000, trend_jobs=5000, trace_jobs=1000, samples=1_000_000,
                                       replications=5, trajectories=200, threshold=args.threshold)
    else:
        passed = run_acceptance_checks(threshold=args.threshold)
    sys.exit(0 if passed else 1)

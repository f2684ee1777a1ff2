# src/main.py

import sys
import os
import argparse

# Add the parent directory to the Python path for module imports
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
sys.path.insert(0, parent_dir)

import math

import pandas as pd

from src.config import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_RUNTIME_ERROR, EXIT_TOLERANCE_FAILURE
from src.calculations.analytic import RECYCLED_THRESHOLDS, mean_response_aggregate
from src.calculations.densities import DensityPair
from src.calculations.refine import refine_ensemble
from src.calculations.simulation import build_jobs, run_simulation
from src.calculations.sweep import sweep
from src.calculations.validation import validate_grid
from src.core.auditable_module import RunRecord
from src.core.domain import InstabilityError
from src.core.environment import load_environment, resolve_output_dir
from src.core.experiment_config import ConfigError, ExperimentConfig, load_experiment
from src.core.input_processor import load_workload, save_workload
from src.core.output_generator import (
    ensure_output_dir, format_table, output_path, write_csv, write_json, write_workbook,
)

SUMMARY_PRINT_COLUMNS = ['policy', 'completed', 'mean_latency', 'p99_latency', 'mean_ttft', 'peak_memory', 'preemptions']


def make_progress_callback(quiet: bool):
    def progress(message, progress_type='info'):
        if not quiet:
            print(message, flush=True)
    return progress


def _finish(record: RunRecord, output_dir: str, prefix: str, log_progress) -> str:
    path = output_path(output_dir, prefix, 'summary.json')
    record.add_output('summary', os.path.basename(path))
    write_json(record.to_dict(), path)
    log_progress(record.summary(), 'info')
    return path


def run_simulate(experiment: ExperimentConfig, args, output_dir: str, log_progress) -> int:
    sim = experiment.sim
    prefix = experiment.prefix
    record = RunRecord('simulate', experiment)

    jobs = load_workload(args.workload) if args.workload else build_jobs(sim)
    if args.save_workload:
        path = save_workload(jobs, output_path(output_dir, prefix, 'workload.csv'))
        record.add_output('workload', os.path.basename(path))
        log_progress(f"Saved workload to {path}", 'info')

    stats = run_simulation(sim, jobs=jobs, progress_callback=log_progress)

    per_job_path = write_csv(stats.per_job, output_path(output_dir, prefix, 'per_job.csv'))
    summary = pd.DataFrame([{'policy': sim.policy.label, **stats.to_summary_dict()}])
    summary_path = write_csv(summary, output_path(output_dir, prefix, 'summary.csv'))
    record.add_output('per_job', os.path.basename(per_job_path))
    record.add_output('summary_table', os.path.basename(summary_path))
    if stats.memory_trace is not None:
        trace_path = write_csv(stats.memory_trace.to_frame(), output_path(output_dir, prefix, 'memory.csv'))
        record.add_output('memory_trace', os.path.basename(trace_path))

    record.set_metrics(stats.to_summary_dict())
    record.add_warnings(stats.warnings)
    log_progress(format_table(summary, SUMMARY_PRINT_COLUMNS), 'info')
    _finish(record, output_dir, prefix, log_progress)
    return EXIT_OK


def run_sweep(experiment: ExperimentConfig, args, output_dir: str, log_progress) -> int:
    prefix = experiment.prefix
    record = RunRecord('sweep', experiment)
    result = sweep(
        experiment.sim, experiment.rates, experiment.Cs, workers=experiment.workers,
        confidence_level=experiment.confidence_level, progress_callback=log_progress,
    )
    rows_path = write_csv(result.rows, output_path(output_dir, prefix, 'sweep_replications.csv'))
    summary_path = write_csv(result.summary, output_path(output_dir, prefix, 'sweep.csv'))
    record.add_output('replications', os.path.basename(rows_path))
    record.add_output('sweep', os.path.basename(summary_path))
    if experiment.xlsx or args.xlsx:
        book = write_workbook({'Sweep': result.summary, 'Replications': result.rows},
                              output_path(output_dir, prefix, 'sweep.xlsx'))
        record.add_output('workbook', os.path.basename(book))

    unstable = result.summary[result.summary['unstable']] if 'unstable' in result.summary else result.summary.iloc[0:0]
    for point in unstable.itertuples(index=False):
        record.add_warnings([f"rate={point.rate:g} C={point.C:g}: offered load >= 1, statistics are not steady-state"])
    record.set_metric('grid_points', len(result.summary))
    record.set_metric('unstable_points', len(unstable))
    log_progress(format_table(result.summary, ['rate', 'C', 'replications', 'mean_latency', 'mean_latency_ci',
                                               'mean_ttft', 'peak_memory', 'unstable']), 'info')
    _finish(record, output_dir, prefix, log_progress)
    return EXIT_OK


def run_validate(experiment: ExperimentConfig, args, output_dir: str, log_progress) -> int:
    prefix = experiment.prefix
    record = RunRecord('validate', experiment)
    report = validate_grid(
        experiment.sim, experiment.rates, experiment.Cs, quad=experiment.quad, tolerance=experiment.tolerance,
        analytic_predictor=experiment.analytic_predictor, threshold=experiment.recycled_threshold,
        workers=experiment.workers, progress_callback=log_progress,
    )
    report_path = write_csv(report, output_path(output_dir, prefix, 'validation.csv'))
    record.add_output('validation', os.path.basename(report_path))
    if experiment.xlsx or args.xlsx:
        book = write_workbook({'Validation': report}, output_path(output_dir, prefix, 'validation.xlsx'))
        record.add_output('workbook', os.path.basename(book))

    failing = report[~report['within_tolerance']]
    record.set_metric('points', len(report))
    record.set_metric('failing_points', len(failing))
    record.set_metric('max_relative_gap', float(report['relative_gap'].max()) if len(report) else math.nan)
    log_progress(format_table(report), 'info')
    _finish(record, output_dir, prefix, log_progress)

    if len(failing):
        print(f"❌ {len(failing)} of {len(report)} points outside tolerance {experiment.tolerance:g}:", file=sys.stderr)
        print(format_table(failing), file=sys.stderr, flush=True)
        return EXIT_TOLERANCE_FAILURE
    return EXIT_OK


def run_refine(experiment: ExperimentConfig, args, output_dir: str, log_progress) -> int:
    prefix = experiment.prefix
    settings = experiment.refine
    record = RunRecord('refine', experiment)
    log_progress(f"Refining {settings.trajectories} trajectories over {experiment.sim.bins.k} bins...", 'info')
    steps, mae = refine_ensemble(
        settings.trajectories, experiment.sim.bins, settings.model, experiment.sim.seed,
        size_scale=settings.size_scale, recursion=settings.recursion,
    )
    steps_path = write_csv(steps, output_path(output_dir, prefix, 'steps.csv'))
    mae_path = write_csv(mae, output_path(output_dir, prefix, 'mae.csv'))
    record.add_output('steps', os.path.basename(steps_path))
    record.add_output('mae', os.path.basename(mae_path))

    raw, refined = float(mae['raw_mae'].mean()), float(mae['refined_mae'].mean())
    fallbacks = int(mae['fallbacks'].sum())
    record.set_metrics({'mean_raw_mae': raw, 'mean_refined_mae': refined, 'zero_evidence_fallbacks': fallbacks})
    if fallbacks:
        record.add_warnings([f"{fallbacks} zero-evidence updates fell back to the raw observation"])
    ratio = raw / refined if refined > 0 else math.inf
    log_progress(f"Mean MAE: raw {raw:.4f}, refined {refined:.4f} (ratio {ratio:.2f})", 'success')
    _finish(record, output_dir, prefix, log_progress)
    return EXIT_OK


def run_analyze(experiment: ExperimentConfig, args, output_dir: str, log_progress) -> int:
    prefix = experiment.prefix
    sim = experiment.sim
    record = RunRecord('analyze', experiment)
    pair = DensityPair.from_predictor(sim.service, experiment.analytic_predictor or sim.predictor)
    threshold = experiment.recycled_threshold
    alternate = next(name for name in RECYCLED_THRESHOLDS if name != threshold)
    rates = experiment.rates or (sim.arrival.rate,)
    Cs = experiment.Cs or (sim.policy.C,)
    x_grid = tuple(args.x_grid) if args.x_grid else experiment.x_grid

    rows, curves = [], []
    for rate in rates:
        for C in Cs:
            try:
                result = mean_response_aggregate(C, rate, pair, experiment.quad, threshold=threshold,
                                                 curve_points=experiment.curve_points)
                alt = mean_response_aggregate(C, rate, pair, experiment.quad, threshold=alternate,
                                              curve_points=2).mean
            except InstabilityError as e:
                record.add_warnings([f"rate={rate:g} C={C:g}: {e}"])
                log_progress(f"  rate={rate:g} C={C:g}: unstable", 'warning')
                rows.append({'rate': rate, 'C': C, 'load': rate * sim.service.expected_size(),
                             'mean_response': math.nan, 'mean_response_alt': math.nan, 'unstable': True})
                continue
            rows.append({'rate': rate, 'C': C, 'load': rate * sim.service.expected_size(),
                         'mean_response': result.mean, 'mean_response_alt': alt, 'unstable': False})
            if x_grid:
                curve = pd.DataFrame({'x': x_grid,
                                      'mean_response': [result.table.conditional_mean(x) for x in x_grid]})
            else:
                curve = result.curve
            curve.insert(0, 'C', C)
            curve.insert(0, 'rate', rate)
            curves.append(curve)
            log_progress(f"  rate={rate:g} C={C:g}: E[T] = {result.mean:.6f} ({threshold}), {alt:.6f} ({alternate})",
                         'success')

    analysis = pd.DataFrame(rows, columns=['rate', 'C', 'load', 'mean_response', 'mean_response_alt', 'unstable'])
    analysis_path = write_csv(analysis, output_path(output_dir, prefix, 'analysis.csv'))
    record.add_output('analysis', os.path.basename(analysis_path))
    if curves:
        curve_path = write_csv(pd.concat(curves, ignore_index=True), output_path(output_dir, prefix, 'curve.csv'))
        record.add_output('curve', os.path.basename(curve_path))
    record.set_metric('recycled_threshold', threshold)
    record.set_metric('points', len(analysis))
    _finish(record, output_dir, prefix, log_progress)
    return EXIT_OK


COMMANDS = {
    'simulate': run_simulate,
    'sweep': run_sweep,
    'validate': run_validate,
    'refine': run_refine,
    'analyze': run_analyze,
}


def _float_list(text: str):
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Simulate and analyse SPRPT scheduling with limited preemption.")
    subparsers = parser.add_subparsers(dest='command', required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('config', type=str, help="Path to a JSON experiment file.")
    common.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help="Override a config field, e.g. --set policy.C=0.5 (repeatable).")
    common.add_argument('--seed', type=int, help="Override the master seed.")
    common.add_argument('--output-dir', type=str, help="Directory for output files.")
    common.add_argument('--jobs', type=int, help="Worker processes for replications.")
    common.add_argument('--quiet', action='store_true', help="Suppress progress output.")
    common.add_argument('--xlsx', action='store_true', help="Also write an Excel workbook (sweep, validate).")

    simulate = subparsers.add_parser('simulate', parents=[common], help="Run one simulation.")
    simulate.add_argument('--workload', type=str, help="Replay jobs from a workload CSV.")
    simulate.add_argument('--save-workload', action='store_true', help="Write the generated workload CSV.")
    subparsers.add_parser('sweep', parents=[common], help="Sweep arrival rate and C with replications.")
    subparsers.add_parser('validate', parents=[common], help="Compare simulated and analytic mean latency.")
    subparsers.add_parser('refine', parents=[common], help="Run the prediction-refinement ensemble.")
    analyze = subparsers.add_parser('analyze', parents=[common], help="Evaluate the analytic mean response time.")
    analyze.add_argument('--x-grid', type=_float_list, help="Comma-separated sizes for the E[T(x)] curve.")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    load_environment()
    log_progress = make_progress_callback(args.quiet)

    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.jobs is not None:
        overrides.append(f"sweep.workers={args.jobs}")
    try:
        experiment = load_experiment(args.config, overrides)
    except (ConfigError, FileNotFoundError) as e:
        print(f"❌ Config error: {e}", file=sys.stderr, flush=True)
        return EXIT_CONFIG_ERROR

    output_dir = ensure_output_dir(resolve_output_dir(args.output_dir, experiment.output_dir), verbose=not args.quiet)
    try:
        return COMMANDS[args.command](experiment, args, output_dir, log_progress)
    except Exception as e:
        print(f"❌ Error: {e}", file=sys.stderr, flush=True)
        return EXIT_RUNTIME_ERROR


if __name__ == '__main__':
    sys.exit(main())

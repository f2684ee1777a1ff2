# src/calculations/validation.py
"""Compare simulated mean latency with the analytic mean response time on a (rate, C) grid."""

import math
from typing import Optional, Sequence

import pandas as pd

from ..config import DEFAULT_RECYCLED_THRESHOLD, DEFAULT_VALIDATION_TOLERANCE
from ..core.domain import DomainError, InstabilityError
from .analytic import RECYCLED_THRESHOLDS, mean_response_aggregate
from .densities import DensityPair, QuadratureSpec
from .simulation import SimConfig
from .sweep import sweep
from .workload import PredictorModel

VALIDATION_COLUMNS = [
    'rate', 'C', 'replications', 'sim_mean', 'sim_ci', 'analytic', 'analytic_alt',
    'relative_gap', 'within_tolerance', 'unstable',
]


def validate_grid(base: SimConfig, rates: Optional[Sequence[float]] = None, Cs: Optional[Sequence[float]] = None,
                  quad: Optional[QuadratureSpec] = None, tolerance: float = DEFAULT_VALIDATION_TOLERANCE,
                  analytic_predictor: Optional[PredictorModel] = None,
                  threshold: str = DEFAULT_RECYCLED_THRESHOLD, workers: int = 1,
                  progress_callback=None) -> pd.DataFrame:
    """
    One row per grid point: simulated mean (with CI), the analytic value under
    `threshold`, the value under the other recycled threshold, and whether the
    relative gap is within `tolerance`.

    Unstable points are reported with NaN analytic values and never count as
    within tolerance.
    """
    def log_progress(message, progress_type='info'):
        if progress_callback:
            progress_callback(message, progress_type)
        else:
            print(message, flush=True)

    if base.mode != 'continuous' or not base.arrival.steady_state:
        raise DomainError("Validation needs continuous mode with Poisson arrivals")
    if base.policy.prediction_source != 'static':
        raise DomainError("Validation needs static predictions")
    quad = quad or QuadratureSpec()
    pair = DensityPair.from_predictor(base.service, analytic_predictor or base.predictor)
    alternate = next(name for name in RECYCLED_THRESHOLDS if name != threshold)

    result = sweep(base, rates, Cs, workers=workers, progress_callback=progress_callback)
    rows = []
    for point in result.summary.itertuples(index=False):
        rate, C = float(point.rate), float(point.C)
        try:
            analytic = mean_response_aggregate(C, rate, pair, quad, threshold=threshold).mean
            analytic_alt = mean_response_aggregate(C, rate, pair, quad, threshold=alternate).mean
        except InstabilityError as e:
            log_progress(f"  rate={rate:g} C={C:g}: {e}", 'warning')
            analytic = analytic_alt = math.nan
        gap = abs(point.mean_latency - analytic) / analytic if analytic > 0 else math.nan
        within = bool(gap <= tolerance) if not math.isnan(gap) else False
        rows.append({
            'rate': rate, 'C': C, 'replications': point.replications,
            'sim_mean': point.mean_latency, 'sim_ci': point.mean_latency_ci,
            'analytic': analytic, 'analytic_alt': analytic_alt,
            'relative_gap': gap, 'within_tolerance': within, 'unstable': bool(point.unstable),
        })
        status = 'ok' if within else 'OUTSIDE TOLERANCE'
        log_progress(f"  rate={rate:g} C={C:g}: sim {point.mean_latency:.4f} vs analytic {analytic:.4f} "
                     f"(gap {gap:.2%}) {status}", 'success' if within else 'warning')

    return pd.DataFrame(rows, columns=VALIDATION_COLUMNS)

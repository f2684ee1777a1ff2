# src/calculations/analytic.py
"""
Mean response time of SPRPT with limited preemption in an M/G/1 queue.

A job of size x with prediction r is served with rank r - a until its age
reaches a0 = C * r, after which it runs to completion. Its mean response time is

    E[T(x, r)] = lam * (m0 + m1) / (2 * (1 - rho'_r)^2)
                 + integral_0^min(a0, x) da / (1 - rho'_{r-a})
                 + max(0, x - a0)

where rho'_r is the load of jobs predicted at most r, m0 their second moment
and m1 the second moment of recycled work from jobs already past the point
where they outrank the tagged job.

The recycled term comes in two flavours. `tagged` measures the non-preemptable
stretch from the tagged job's a0 = C * r. `own` measures it from the recycled
job's own threshold, which reproduces SRPT exactly at C = 1.
"""

import math
from typing import Callable, Dict, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import integrate

from ..config import DEFAULT_RECYCLED_THRESHOLD
from ..core.domain import DomainError, InstabilityError
from .densities import DensityPair, QuadratureSpec, integrate_1d, integrate_2d

RECYCLED_THRESHOLDS = ('tagged', 'own')


def _check_inputs(lam: float, C: Optional[float] = None):
    if lam < 0:
        raise DomainError(f"Arrival rate must be >= 0, got {lam}")
    if C is not None and not 0.0 <= C <= 1.0:
        raise DomainError(f"C must be in [0, 1], got {C}")


def _partial_moment(r: float, pair: DensityPair, quad: QuadratureSpec, power: int) -> float:
    """E[X^power ; Y <= r]."""
    if r <= 0:
        return 0.0
    lo, hi = pair.x_support(quad)
    if pair.is_line_mass:
        return integrate_1d(lambda x: x ** power * float(pair.f(x)), lo, min(r, hi), quad)
    return integrate_1d(
        lambda x: x ** power * float(pair.f(x)) * float(pair.cond_cdf(r, x)), lo, hi, quad,
    )


def rho_prime(r: float, pair: DensityPair, lam: float, quad: Optional[QuadratureSpec] = None) -> float:
    """Load contributed by jobs whose prediction is at most r."""
    _check_inputs(lam)
    return lam * _partial_moment(r, pair, quad or QuadratureSpec(), 1)


def moment_new(r: float, a: float, pair: DensityPair, quad: Optional[QuadratureSpec] = None,
               a0: float = math.inf) -> float:
    """
    Mean work of a newly arriving job that preempts the tagged job at age a.

    Zero once the tagged job has passed its threshold a0 or its prediction r.
    """
    if a >= a0 or a >= r:
        return 0.0
    return _partial_moment(r - a, pair, quad or QuadratureSpec(), 1)


def moment_old0_sq(r: float, pair: DensityPair, quad: Optional[QuadratureSpec] = None) -> float:
    """E[X^2 ; Y <= r]: second moment of original-interval work."""
    return _partial_moment(r, pair, quad or QuadratureSpec(), 2)


def _recycled_own(r: float, C: float, pair: DensityPair, quad: QuadratureSpec) -> float:
    lo, hi = pair.x_support(quad)
    if pair.is_line_mass:
        kinks = [r / (1.0 - C)] if C < 1.0 else []
        return integrate_1d(
            lambda x: float(pair.f(x)) * max(r, (1.0 - C) * x) ** 2, max(r, lo), hi, quad, points=kinks,
        )

    tail_u = -math.log(quad.tail_mass)

    def inner(x: float) -> float:
        if x <= 0:
            return 0.0
        u_lo = r / x
        u_hi = u_lo + tail_u
        if C > 0:
            u_hi = min(u_hi, max(1.0 + u_lo, 1.0 / C))
        kinks = [u_lo / (1.0 - C)] if C < 1.0 else []

        def integrand(u):
            recycled_from = min(x * u - r, C * x * u)
            return math.exp(-u) * max(x - recycled_from, 0.0) ** 2

        return integrate_1d(integrand, u_lo, u_hi, quad, points=kinks)

    return integrate_1d(lambda x: float(pair.f(x)) * inner(x), lo, hi, quad)


def moment_old1_sq(r: float, a0: float, pair: DensityPair, quad: Optional[QuadratureSpec] = None,
                   C: Optional[float] = None, threshold: str = DEFAULT_RECYCLED_THRESHOLD) -> float:
    """
    Second moment of recycled work seen by a tagged job with prediction r.

    tagged: E[((X - (Y - r))^+)^2 ; Y >= r + a0].
    own:    E[((X - min(Y - r, C * Y))^+)^2 ; Y > r], needs C.
    """
    quad = quad or QuadratureSpec()
    if threshold not in RECYCLED_THRESHOLDS:
        raise DomainError(f"Unknown recycled threshold '{threshold}', expected one of {RECYCLED_THRESHOLDS}")
    if threshold == 'own':
        if C is None:
            raise DomainError("The 'own' recycled threshold needs C")
        return _recycled_own(r, C, pair, quad)

    if pair.is_line_mass:
        return r * r * float(pair.service.sf(r + a0))
    lo, hi = pair.x_support(quad)
    return integrate_1d(
        lambda x: float(pair.f(x)) * pair.recycled_inner(x, r + a0, x + r), max(lo, a0), hi, quad,
    )


def moment_old1_sq_2d(r: float, a0: float, pair: DensityPair, quad: Optional[QuadratureSpec] = None) -> float:
    """The tagged recycled moment by direct 2-D quadrature of the joint density."""
    quad = quad or QuadratureSpec()
    if pair.is_line_mass:
        raise DomainError("The perfect predictor has no 2-D joint density")
    lo, hi = pair.x_support(quad)
    return integrate_2d(
        lambda x, y: float(pair.g(x, y)) * (x - y + r) ** 2,
        r + a0, hi + r,
        lambda y: max(y - r, lo), lambda y: hi,
        quad,
    )


def mean_response(x: float, r: float, C: float, lam: float, pair: DensityPair,
                  quad: Optional[QuadratureSpec] = None, threshold: str = DEFAULT_RECYCLED_THRESHOLD) -> float:
    """
    Mean response time of a job with size x and prediction r.

    Raises:
        InstabilityError: if rho'_r >= 1
    """
    _check_inputs(lam, C)
    quad = quad or QuadratureSpec()
    a0 = C * r
    load = rho_prime(r, pair, lam, quad)
    if load >= 1.0:
        raise InstabilityError(f"rho'_r = {load:.6f} >= 1 at r = {r:g}, lam = {lam:g}")

    m0 = moment_old0_sq(r, pair, quad)
    m1 = moment_old1_sq(r, a0, pair, quad, C=C, threshold=threshold)
    waiting = lam * (m0 + m1) / (2.0 * (1.0 - load) ** 2)
    residence = integrate_1d(
        lambda a: 1.0 / (1.0 - rho_prime(max(r - a, 0.0), pair, lam, quad)), 0.0, min(a0, x), quad,
    )
    return waiting + residence + max(0.0, x - a0)


class SoapTerms(NamedTuple):
    old_sq: Sequence[float]
    old0_mean: float
    new_mean: Callable[[float], float]
    new_worst_mean: float
    jumps: Sequence[float]


def soap_mean_response(terms: SoapTerms, lam: float, x: float, quad: Optional[QuadratureSpec] = None) -> float:
    """
    Generic rank-based mean response time from old/new work moments.

        lam * sum E[X_i^old^2] / (2 (1 - lam E[X_0^old]) (1 - lam E[X^new(r_worst)]))
        + integral_0^x da / (1 - lam E[X^new(a)])
    """
    _check_inputs(lam)
    quad = quad or QuadratureSpec()
    busy_old = 1.0 - lam * terms.old0_mean
    busy_new = 1.0 - lam * terms.new_worst_mean
    if busy_old <= 0 or busy_new <= 0:
        raise InstabilityError(
            f"Unstable: 1 - lam E[X_0^old] = {busy_old:.6f}, 1 - lam E[X^new] = {busy_new:.6f}"
        )
    waiting = lam * float(sum(terms.old_sq)) / (2.0 * busy_old * busy_new)

    def residence(a: float) -> float:
        slack = 1.0 - lam * terms.new_mean(a)
        if slack <= 0:
            raise InstabilityError(f"1 - lam E[X^new({a:g})] = {slack:.6f} <= 0")
        return 1.0 / slack

    return waiting + integrate_1d(residence, 0.0, x, quad, points=terms.jumps)


def sprpt_lp_terms(r: float, C: float, pair: DensityPair, quad: Optional[QuadratureSpec] = None,
                   threshold: str = DEFAULT_RECYCLED_THRESHOLD) -> SoapTerms:
    """Old/new work moments of SPRPT with limited preemption for a job predicted r."""
    quad = quad or QuadratureSpec()
    a0 = C * r
    return SoapTerms(
        old_sq=(moment_old0_sq(r, pair, quad), moment_old1_sq(r, a0, pair, quad, C=C, threshold=threshold)),
        old0_mean=_partial_moment(r, pair, quad, 1),
        new_mean=lambda a: moment_new(r, a, pair, quad, a0=a0),
        new_worst_mean=_partial_moment(r, pair, quad, 1),
        jumps=(a0,),
    )


def fcfs_terms(pair: DensityPair) -> SoapTerms:
    service = pair.service
    return SoapTerms(
        old_sq=(service.second_moment(),),
        old0_mean=service.expected_size(),
        new_mean=lambda a: 0.0,
        new_worst_mean=0.0,
        jumps=(),
    )


def srpt_mean_response(x: float, lam: float, pair: DensityPair, quad: Optional[QuadratureSpec] = None) -> float:
    """Classical SRPT mean response time for a job of size x (exact sizes)."""
    _check_inputs(lam)
    quad = quad or QuadratureSpec()
    lo, _ = pair.x_support(quad)

    def load(t):
        return lam * integrate_1d(lambda s: s * float(pair.service.pdf(s)), lo, t, quad)

    rho_x = load(x)
    if rho_x >= 1.0:
        raise InstabilityError(f"rho(x) = {rho_x:.6f} >= 1 at x = {x:g}")
    second = integrate_1d(lambda s: s * s * float(pair.service.pdf(s)), lo, x, quad)
    waiting = lam * (second + x * x * float(pair.service.sf(x))) / (2.0 * (1.0 - rho_x) ** 2)
    return waiting + integrate_1d(lambda t: 1.0 / (1.0 - load(t)), 0.0, x, quad)


class ResponseTimeTable:
    """
    E[T(x, r)] for one (C, lam, pair), backed by rho', m0 and m1 tabulated on a
    prediction grid and linearly interpolated between grid points.
    """

    def __init__(self, C: float, lam: float, pair: DensityPair, quad: Optional[QuadratureSpec] = None,
                 threshold: str = DEFAULT_RECYCLED_THRESHOLD, progress_callback=None):
        def log_progress(message, progress_type='info'):
            if progress_callback:
                progress_callback(message, progress_type)

        _check_inputs(lam, C)
        self.C = C
        self.lam = lam
        self.pair = pair
        self.quad = quad or QuadratureSpec()
        self.threshold = threshold

        y_max = pair.y_upper(self.quad)
        # denser near zero, where rho' changes fastest
        self.r_grid = y_max * np.linspace(0.0, 1.0, self.quad.table_points) ** 2
        log_progress(f"Tabulating {len(self.r_grid)} prediction points up to r = {y_max:.3f}...", 'info')

        self.rho = np.array([rho_prime(r, pair, lam, self.quad) for r in self.r_grid])
        if self.rho[-1] >= 1.0:
            raise InstabilityError(f"Total load {self.rho[-1]:.6f} >= 1 at lam = {lam:g}")
        m0 = np.array([moment_old0_sq(r, pair, self.quad) for r in self.r_grid])
        m1 = np.array([
            moment_old1_sq(r, C * r, pair, self.quad, C=C, threshold=threshold) for r in self.r_grid
        ])
        self.waiting = lam * (m0 + m1) / (2.0 * (1.0 - self.rho) ** 2)
        self._slowdown = 1.0 / (1.0 - self.rho)
        self._cumulative = integrate.cumulative_trapezoid(self._slowdown, self.r_grid, initial=0.0)
        log_progress("Tabulation complete", 'success')

    def _residence_integral(self, v):
        """integral_0^v du / (1 - rho'_u), extended flat past the grid."""
        v = np.asarray(v, dtype=float)
        inside = np.interp(v, self.r_grid, self._cumulative)
        beyond = self._cumulative[-1] + (v - self.r_grid[-1]) * self._slowdown[-1]
        return np.where(v > self.r_grid[-1], beyond, inside)

    def response(self, x, r):
        """E[T(x, r)], vectorised over x and r."""
        x = np.asarray(x, dtype=float)
        r = np.asarray(r, dtype=float)
        a0 = self.C * r
        served = np.minimum(a0, x)
        waiting = np.interp(r, self.r_grid, self.waiting)
        residence = self._residence_integral(r) - self._residence_integral(r - served)
        return waiting + residence + np.maximum(0.0, x - a0)

    def conditional_mean(self, x: float) -> float:
        """E[T(x)] = E[T(x, Y) | X = x]."""
        kinks = [1.0 / self.C] if self.C > 0 else []
        return self.pair.conditional_expectation(lambda y: self.response(x, y), x, self.quad, kinks=kinks)

    def curve(self, points: int = 200) -> pd.DataFrame:
        lo, hi = self.pair.x_support(self.quad)
        xs = np.linspace(lo, hi, points)
        return pd.DataFrame({'x': xs, 'mean_response': [self.conditional_mean(x) for x in xs]})

    def aggregate(self) -> float:
        """E[T] = integral f(x) E[T(x)] dx over the truncated size range."""
        lo, hi = self.pair.x_support(self.quad)
        mass = 1.0 - float(self.pair.service.sf(hi))
        total = integrate_1d(lambda x: float(self.pair.f(x)) * self.conditional_mean(x), lo, hi, self.quad)
        return total / mass


class AggregateResult(NamedTuple):
    mean: float
    curve: pd.DataFrame
    table: ResponseTimeTable


def mean_response_aggregate(C: float, lam: float, pair: DensityPair, quad: Optional[QuadratureSpec] = None,
                            threshold: str = DEFAULT_RECYCLED_THRESHOLD, curve_points: int = 200,
                            progress_callback=None) -> AggregateResult:
    """
    Overall mean response time E[T] and the E[T(x)] curve.

    Raises:
        InstabilityError: if lam * E[X] >= 1
    """
    table = ResponseTimeTable(C, lam, pair, quad, threshold, progress_callback=progress_callback)
    return AggregateResult(mean=table.aggregate(), curve=table.curve(curve_points), table=table)


def monte_carlo_terms(pair: DensityPair, lam: float, r: float, a0: float, n: int,
                      rng: np.random.Generator) -> Dict[str, tuple]:
    """
    Sample estimates (value, standard error) of rho'_r, m0 and the tagged m1,
    drawn from the joint law.
    """
    x, y = pair.sample(rng, n)
    samples = {
        'rho_prime': lam * x * (y <= r),
        'm_old0_sq': x * x * (y <= r),
        'm_old1_sq': np.maximum(x - (y - r), 0.0) ** 2 * (y >= r + a0),
    }
    return {
        name: (float(values.mean()), float(values.std(ddof=1) / math.sqrt(n)))
        for name, values in samples.items()
    }

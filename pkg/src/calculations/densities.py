# src/calculations/densities.py
"""
Joint size/prediction densities and the quadrature rules used to integrate them.

Two joint laws are supported: a perfect predictor (prediction equals size, a
line mass handled by 1-D reductions) and the exponential predictor, where the
prediction given size x is exponential with mean x:

    g(x, y) = f(x) * (1/x) * exp(-y/x)
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from ..config import (
    DEFAULT_ABS_TOL, DEFAULT_GAUSS_LEGENDRE_NODES, DEFAULT_QUADRATURE_SCHEME, DEFAULT_REL_TOL,
    DEFAULT_TABLE_POINTS, DEFAULT_TAIL_MASS,
)
from ..core.domain import DomainError
from .workload import PredictorModel, ServiceDist

QUADRATURE_SCHEMES = ('adaptive', 'adaptive-simpson', 'gauss-legendre')
PAIR_KINDS = ('perfect', 'exponential')

_SIMPSON_MAX_DEPTH = 48


@dataclass(frozen=True)
class QuadratureSpec:
    scheme: str = DEFAULT_QUADRATURE_SCHEME
    rel_tol: float = DEFAULT_REL_TOL
    abs_tol: float = DEFAULT_ABS_TOL
    tail_mass: float = DEFAULT_TAIL_MASS
    nodes: int = DEFAULT_GAUSS_LEGENDRE_NODES
    panels: int = 64
    table_points: int = DEFAULT_TABLE_POINTS

    def __post_init__(self):
        if self.scheme not in QUADRATURE_SCHEMES:
            raise DomainError(f"Unknown quadrature scheme '{self.scheme}', expected one of {QUADRATURE_SCHEMES}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("Quadrature tolerances must be > 0")
        if not 0 < self.tail_mass < 1:
            raise DomainError(f"Tail mass must be in (0, 1), got {self.tail_mass}")
        if self.nodes < 1 or self.panels < 1 or self.table_points < 10:
            raise DomainError("Quadrature node, panel and table counts must be positive")


def _gauss_legendre(func, a: float, b: float, nodes: int, panels: int, points: Sequence[float] = ()) -> float:
    edges = np.linspace(a, b, panels + 1)
    if points:
        edges = np.unique(np.concatenate([edges, [p for p in points if a < p < b]]))
    ref_x, ref_w = np.polynomial.legendre.leggauss(nodes)
    lo, hi = edges[:-1, None], edges[1:, None]
    xs = (0.5 * (hi - lo) * ref_x + 0.5 * (hi + lo)).ravel()
    ws = (0.5 * (hi - lo) * ref_w).ravel()
    values = np.asarray([func(x) for x in xs], dtype=float)
    return float(np.dot(ws, values))


def _adaptive_simpson(func, a: float, b: float, eps: float) -> float:
    def simpson(lo, f_lo, hi, f_hi):
        mid = 0.5 * (lo + hi)
        f_mid = func(mid)
        return mid, f_mid, (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi)

    def recurse(lo, f_lo, hi, f_hi, mid, f_mid, whole, tol, depth):
        left_mid, f_left, left = simpson(lo, f_lo, mid, f_mid)
        right_mid, f_right, right = simpson(mid, f_mid, hi, f_hi)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (recurse(lo, f_lo, mid, f_mid, left_mid, f_left, left, tol / 2.0, depth - 1)
                + recurse(mid, f_mid, hi, f_hi, right_mid, f_right, right, tol / 2.0, depth - 1))

    f_a, f_b = func(a), func(b)
    mid, f_mid, whole = simpson(a, f_a, b, f_b)
    return recurse(a, f_a, b, f_b, mid, f_mid, whole, eps, _SIMPSON_MAX_DEPTH)


def integrate_1d(func: Callable[[float], float], a: float, b: float, quad: QuadratureSpec,
                 points: Sequence[float] = ()) -> float:
    """Integrate a scalar function on [a, b]; `points` are known kinks or jumps."""
    if not b > a:
        return 0.0
    breaks = sorted(p for p in points if a < p < b)
    if quad.scheme == 'gauss-legendre':
        return _gauss_legendre(func, a, b, quad.nodes, quad.panels, breaks)
    if quad.scheme == 'adaptive-simpson':
        edges = [a, *breaks, b]
        return float(sum(
            _adaptive_simpson(func, lo, hi, max(quad.abs_tol, 1e-14))
            for lo, hi in zip(edges, edges[1:])
        ))
    value, _ = integrate.quad(
        func, a, b, epsabs=quad.abs_tol, epsrel=quad.rel_tol, limit=200,
        points=breaks or None,
    )
    return float(value)


def integrate_2d(func: Callable[[float, float], float], outer_lo: float, outer_hi: float,
                 inner_lo: Callable[[float], float], inner_hi: Callable[[float], float],
                 quad: QuadratureSpec) -> float:
    """Integrate func(inner, outer) over outer in [outer_lo, outer_hi], inner in [inner_lo(outer), inner_hi(outer)]."""
    if not outer_hi > outer_lo:
        return 0.0
    if quad.scheme == 'adaptive':
        value, _ = integrate.dblquad(
            func, outer_lo, outer_hi, inner_lo, inner_hi, epsabs=quad.abs_tol, epsrel=quad.rel_tol,
        )
        return float(value)
    return integrate_1d(
        lambda outer: integrate_1d(lambda inner: func(inner, outer), inner_lo(outer), inner_hi(outer), quad),
        outer_lo, outer_hi, quad,
    )


class DensityPair:
    """Service density f and joint size/prediction density g on the truncated domain."""

    def __init__(self, service: ServiceDist, kind: str = 'exponential'):
        if kind not in PAIR_KINDS:
            raise DomainError(f"Unknown density pair '{kind}', expected one of {PAIR_KINDS}")
        if not service.has_density:
            raise DomainError(f"Service distribution '{service.kind}' has no density")
        self.service = service
        self.kind = kind

    @classmethod
    def from_predictor(cls, service: ServiceDist, predictor: PredictorModel) -> 'DensityPair':
        if predictor.kind == 'perfect':
            return cls(service, 'perfect')
        if predictor.kind == 'exponential-noise':
            return cls(service, 'exponential')
        raise DomainError(f"Predictor '{predictor.kind}' has no joint density for the analytic evaluator")

    @property
    def is_line_mass(self) -> bool:
        return self.kind == 'perfect'

    def f(self, x):
        return self.service.pdf(x)

    def g(self, x, y):
        """Joint density. For the perfect predictor this is the line-mass weight f(x) on y == x."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.is_line_mass:
            return np.where(y == x, self.f(x), 0.0)
        safe_x = np.where(x > 0, x, 1.0)
        dens = self.f(x) * np.exp(-np.maximum(y, 0.0) / safe_x) / safe_x
        return np.where((x > 0) & (y >= 0), dens, 0.0)

    def cond_cdf(self, r: float, x):
        """P(Y <= r | X = x)."""
        x = np.asarray(x, dtype=float)
        if self.is_line_mass:
            return np.where(x <= r, 1.0, 0.0)
        safe_x = np.where(x > 0, x, 1.0)
        return np.where(x > 0, -np.expm1(-max(r, 0.0) / safe_x), 1.0)

    def x_upper(self, quad: QuadratureSpec) -> float:
        """U with P(X > U) = tail mass."""
        return self.service.quantile(1.0 - quad.tail_mass)

    def y_upper(self, quad: QuadratureSpec) -> float:
        """Largest prediction that carries non-negligible mass."""
        if self.is_line_mass:
            return self.x_upper(quad)
        return self.x_upper(quad) * -math.log(quad.tail_mass)

    def x_support(self, quad: QuadratureSpec):
        lo = self.service.lo if self.service.kind == 'bounded-pareto' else 0.0
        return lo, self.x_upper(quad)

    def recycled_inner(self, x: float, lo: float, c: float) -> float:
        """E[(c - Y)^2 ; lo <= Y <= c | X = x]."""
        if c <= lo:
            return 0.0
        if self.is_line_mass:
            return (c - x) ** 2 if lo <= x <= c else 0.0
        if x <= 0:
            return 0.0
        span = c - lo
        head = span * span - 2.0 * x * span + 2.0 * x * x * -math.expm1(-span / x)
        return math.exp(-lo / x) * head

    def conditional_expectation(self, func: Callable[[np.ndarray], np.ndarray], x: float,
                                quad: QuadratureSpec, kinks: Sequence[float] = ()) -> float:
        """E[func(Y) | X = x] for a vectorised `func`; `kinks` are breakpoints in units of x."""
        if self.is_line_mass:
            return float(np.asarray(func(np.asarray([x])))[0])
        u_max = -math.log(quad.tail_mass)
        edges = np.linspace(0.0, u_max, quad.panels + 1)
        extra = [k for k in kinks if 0 < k < u_max]
        if extra:
            edges = np.unique(np.concatenate([edges, extra]))
        ref_x, ref_w = np.polynomial.legendre.leggauss(quad.nodes)
        lo, hi = edges[:-1, None], edges[1:, None]
        us = (0.5 * (hi - lo) * ref_x + 0.5 * (hi + lo)).ravel()
        ws = (0.5 * (hi - lo) * ref_w).ravel() * np.exp(-us)
        return float(np.dot(ws, func(x * us)) / ws.sum())

    def sample(self, rng: np.random.Generator, n: int):
        """Draw (size, prediction) pairs from the joint law."""
        x = np.asarray(self.service.sample(rng, n), dtype=float)
        if self.is_line_mass:
            return x, x.copy()
        return x, rng.exponential(x)

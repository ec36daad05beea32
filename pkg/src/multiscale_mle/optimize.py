"""
Golden-section maximization on a closed interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

PHI_RATIO = 2.0 / (1.0 + math.sqrt(5.0))


@dataclass(frozen=True)
class OptimizationResult:
    argmax: float
    maximum: float
    iterations: int
    converged: bool
    at_boundary: bool


def golden_section_max(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-6,
    max_iterations: int = 200,
) -> OptimizationResult:
    """
    Maximize a unimodal f on [lo, hi]. Only comparisons of f values are used, so
    the argmax is unchanged when f is multiplied by a positive constant.
    Ties go to the lower bracket. If an endpoint beats the interior optimum the
    endpoint is returned with at_boundary set.
    """
    if not lo < hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    a, b = float(lo), float(hi)
    x1 = b - PHI_RATIO * (b - a)
    x2 = a + PHI_RATIO * (b - a)
    f1 = f(x1)
    f2 = f(x2)
    iteration = 0
    while iteration < max_iterations and (b - a) > tol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - PHI_RATIO * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + PHI_RATIO * (b - a)
            f2 = f(x2)
        iteration += 1

    x_best = 0.5 * (a + b)
    f_best = f(x_best)
    f_lo = f(lo)
    f_hi = f(hi)
    converged = (b - a) <= tol and not (math.isnan(f1) or math.isnan(f2))

    if f_lo >= f_best and f_lo >= f_hi:
        return OptimizationResult(float(lo), f_lo, iteration, converged, True)
    if f_hi > f_best:
        return OptimizationResult(float(hi), f_hi, iteration, converged, True)
    at_boundary = (x_best - lo) <= tol or (hi - x_best) <= tol
    return OptimizationResult(x_best, f_best, iteration, converged, at_boundary)

"""
Continuous, discrete and modified log-likelihoods of the coarse model and the
drift estimators built on them.

All sums are Ito left-point sums over the data's own grid:
    L(theta) = sum F(x_n) (x_{n+1} - x_n) / K(x_n)^2 - 1/2 sum F(x_n)^2 step / K(x_n)^2
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import ModelError
from .optimize import golden_section_max
from .sde_models import CoarseModel, QuadraticPotential
from .simulator import Path, SampleSeries, as_series

logger = logging.getLogger(__name__)

A_FLOOR = 1e-12

Data = Union[Path, SampleSeries]


class Method(str, Enum):
    CONTINUOUS_LINEAR = "ContinuousLinear"
    CONTINUOUS_SCAN = "ContinuousScan"
    DISCRETE_LINEAR = "DiscreteLinear"
    DISCRETE_SCAN = "DiscreteScan"
    MODIFIED_SCAN = "ModifiedScan"


class LikelihoodKind(str, Enum):
    CONTINUOUS = "Continuous"
    DISCRETE = "Discrete"
    MODIFIED = "Modified"


SCAN_METHODS = {
    LikelihoodKind.CONTINUOUS: Method.CONTINUOUS_SCAN,
    LikelihoodKind.DISCRETE: Method.DISCRETE_SCAN,
    LikelihoodKind.MODIFIED: Method.MODIFIED_SCAN,
}


@dataclass(frozen=True)
class DataMeta:
    epsilon: float
    delta: float
    n_count: int
    horizon: float
    seed: Optional[int]


@dataclass(frozen=True)
class EstimationResult:
    theta_hat: float
    method: Method
    loglik_at_max: float
    A_sum: float
    B_sum: float
    meta: DataMeta
    degenerate: bool = False
    at_boundary: bool = False
    # closed-form value before clipping to the parameter interval
    unconstrained_theta_hat: Optional[float] = None

    def __post_init__(self) -> None:
        if self.degenerate and self.theta_hat != 0.0:
            raise ValueError("a degenerate estimate must be 0")


def _meta(data: Data) -> DataMeta:
    s = as_series(data)
    return DataMeta(s.epsilon, s.delta, s.n_count, s.horizon, s.seed)


def _k_squared(model: CoarseModel, x: np.ndarray) -> np.ndarray:
    k = np.asarray(model.diffusion(x), dtype=float)
    if np.any(k < model.k_min):
        raise ModelError(f"diffusion below floor {model.k_min} along the data")
    return np.broadcast_to(k * k, x.shape)


def _girsanov(values: np.ndarray, step: float, model: CoarseModel, theta: float) -> float:
    x = values[:-1]
    dx = np.diff(values)
    k2 = _k_squared(model, x)
    f = np.asarray(model.drift(x, theta), dtype=float)
    return float(np.sum(f * dx / k2) - 0.5 * np.sum(f * f / k2) * step)


def loglik_continuous(path: Data, model: CoarseModel, theta: float) -> float:
    """Left-point Girsanov log-likelihood on the path's native grid."""
    if isinstance(path, Path):
        return _girsanov(path.slow, path.dt, model, theta)
    return _girsanov(path.values, path.delta, model, theta)


def loglik_discrete(samples: Data, model: CoarseModel, theta: float) -> float:
    """Same sums over n = 0..N-2 of delta-spaced samples; the horizon is (N-1) delta."""
    s = as_series(samples)
    if s.n_count < 2:
        raise ValueError("need at least two samples")
    return _girsanov(s.values, s.delta, model, theta)


def _g_term(model: CoarseModel, x: np.ndarray, k2: np.ndarray, theta: float) -> np.ndarray:
    """G = K^2 d2V/dx2."""
    return k2 * np.asarray(model.potential.hess(x, theta), dtype=float)


def loglik_modified(samples: Data, model: CoarseModel, theta: float) -> float:
    """-1/2 sum (F^2/K^2 + K^2 V'') delta over all N samples; needs no increments."""
    if model.potential is None:
        raise ModelError(f"{model.name}: modified likelihood needs a potential")
    s = as_series(samples)
    if s.n_count < 2:
        raise ValueError("need at least two samples")
    x = s.values
    k2 = _k_squared(model, x)
    f = np.asarray(model.drift(x, theta), dtype=float)
    return float(-0.5 * np.sum(f * f / k2 + _g_term(model, x, k2, theta)) * s.delta)


@dataclass(frozen=True)
class _LinearSums:
    """Sufficient statistics of a drift theta * h(x)."""

    a_sum: float
    b_sum: float
    horizon: float

    def loglik(self, theta: float) -> float:
        return self.horizon * (theta * self.b_sum - 0.5 * theta * theta * self.a_sum)


def _linear_sums(values: np.ndarray, step: float, model: CoarseModel) -> _LinearSums:
    x = values[:-1]
    dx = np.diff(values)
    h = model.shape(x)
    k2 = _k_squared(model, x)
    horizon = step * len(dx)
    a = float(np.sum(h * h / k2) * step / horizon)
    b = float(np.sum(h * dx / k2) / horizon)
    return _LinearSums(a, b, horizon)


def _values_and_step(data: Data) -> tuple[np.ndarray, float]:
    if isinstance(data, Path):
        return data.slow, data.dt
    return data.values, data.delta


def mle_linear(data: Data, model: CoarseModel) -> EstimationResult:
    """
    theta_hat = B/A with A = (1/T) sum h^2/K^2 step and B = (1/T) sum h dx/K^2.
    |A| < 1e-12 gives the degenerate estimate 0. Values outside the parameter
    interval are clipped and flagged.
    """
    if not model.drift_is_linear_in_theta:
        raise ModelError("mle_linear needs a drift linear in theta")
    values, step = _values_and_step(data)
    sums = _linear_sums(values, step, model)
    method = Method.CONTINUOUS_LINEAR if isinstance(data, Path) else Method.DISCRETE_LINEAR
    meta = _meta(data)

    if abs(sums.a_sum) < A_FLOOR:
        logger.debug("degenerate information A=%.3g; estimate set to 0", sums.a_sum)
        return EstimationResult(0.0, method, sums.loglik(0.0), sums.a_sum, sums.b_sum, meta, degenerate=True)

    raw = sums.b_sum / sums.a_sum
    lo, hi = model.theta_interval
    theta_hat = min(max(raw, lo), hi)
    at_boundary = theta_hat != raw
    if at_boundary:
        logger.warning("closed-form estimate %.4g outside [%s, %s]; clipped", raw, lo, hi)
    return EstimationResult(
        theta_hat, method, sums.loglik(theta_hat), sums.a_sum, sums.b_sum, meta,
        at_boundary=at_boundary, unconstrained_theta_hat=raw,
    )


def _objective(data: Data, model: CoarseModel, kind: LikelihoodKind) -> Callable[[float], float]:
    if kind is LikelihoodKind.MODIFIED:
        if model.potential is None:
            raise ModelError(f"{model.name}: modified likelihood needs a potential")
        s = as_series(data)
        if model.drift_is_linear_in_theta and isinstance(model.potential, QuadraticPotential):
            x = s.values
            k2 = _k_squared(model, x)
            h = model.shape(x)
            sh2 = float(np.sum(h * h / k2))
            sk2 = float(np.sum(k2))
            scale = model.potential.scale
            return lambda th: -0.5 * (th * th * sh2 + th * scale * sk2) * s.delta
        return lambda th: loglik_modified(s, model, th)

    if kind is LikelihoodKind.DISCRETE:
        data = as_series(data)
    values, step = _values_and_step(data)
    if model.drift_is_linear_in_theta:
        return _linear_sums(values, step, model).loglik
    return lambda th: _girsanov(values, step, model, th)


def mle_scan(
    data: Data,
    model: CoarseModel,
    kind: Union[LikelihoodKind, str] = LikelihoodKind.CONTINUOUS,
    tol: float = 1e-6,
) -> EstimationResult:
    """Golden-section maximum of the chosen likelihood over the parameter interval."""
    kind = LikelihoodKind(kind)
    objective = _objective(data, model, kind)
    lo, hi = model.theta_interval
    opt = golden_section_max(objective, lo, hi, tol)
    if opt.at_boundary:
        logger.warning("%s likelihood maximized on the boundary of [%s, %s]", kind.value, lo, hi)

    a_sum = b_sum = math.nan
    if model.drift_is_linear_in_theta:
        values, step = _values_and_step(data if kind is LikelihoodKind.CONTINUOUS else as_series(data))
        sums = _linear_sums(values, step, model)
        a_sum, b_sum = sums.a_sum, sums.b_sum
    return EstimationResult(
        opt.argmax, SCAN_METHODS[kind], opt.maximum, a_sum, b_sum, _meta(data),
        at_boundary=opt.at_boundary,
    )


def mean_square_increment_rate(data: Data) -> float:
    """sum (x_{n+1} - x_n)^2 / ((N-1) delta)."""
    values, step = _values_and_step(data)
    dx = np.diff(values)
    return float(np.sum(dx * dx) / (step * len(dx)))


@dataclass(frozen=True)
class ErgodicDiagnostic:
    mean: float
    table: pd.DataFrame
    slope: float


def ergodic_average_diagnostic(
    paths: Union[Path, Sequence[Path]],
    observable: Callable[[np.ndarray], np.ndarray],
    levels: int = 4,
) -> ErgodicDiagnostic:
    """
    Time averages of the observable over nested horizons T, T/2, ..., T/2^(levels-1)
    for each path, the across-path variance per horizon and the slope of
    log-variance against log-horizon.
    """
    if isinstance(paths, Path):
        paths = [paths]
    if levels < 4:
        raise ValueError("need at least 4 dyadic horizons")
    n_steps = min(len(p) - 1 for p in paths)
    if n_steps // 2 ** (levels - 1) < 2:
        raise ValueError(f"paths of {n_steps} steps are too short for {levels} horizons")

    rows = []
    for k in range(levels):
        n = n_steps // 2**k
        averages = np.array([np.mean(observable(p.slow[:n])) for p in paths])
        variance = float(np.var(averages, ddof=1)) if len(averages) > 1 else math.nan
        rows.append({
            "horizon": n * paths[0].dt,
            "mean": float(averages.mean()),
            "variance": variance,
            "n_replicates": len(averages),
        })
    table = pd.DataFrame(rows)

    var = table["variance"].to_numpy()
    if np.all(np.isfinite(var)) and np.all(var > 0.0):
        slope = float(np.polyfit(np.log(table["horizon"].to_numpy()), np.log(var), 1)[0])
    else:
        slope = math.nan
    return ErgodicDiagnostic(float(table["mean"].iloc[0]), table, slope)

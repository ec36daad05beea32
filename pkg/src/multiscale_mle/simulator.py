"""
Euler-Maruyama trajectories of fast/slow systems and coarse models, subsampling,
and seeded replicate ensembles.

Brownian increments come from numpy's PCG64 generator, drawn in fixed-size chunks,
so a seed reproduces a path bit-exactly. The inner loops are compiled with numba
when every coefficient is an AffineField (resp. LinearDrift/ConstantDiffusion);
other callables run through a Python loop with the same arithmetic order.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numba import njit

from .errors import ModelError, ReplicateError, SimulationBlowUp, StepLimitExceeded
from .sde_models import (
    AffineField,
    CoarseModel,
    ConstantDiffusion,
    FastDomain,
    LinearDrift,
    MultiscaleModel,
    PeriodicPotential,
    Regime,
)

logger = logging.getLogger(__name__)

SEED_STRIDE = 0x9E3779B97F4A7C15
SEED_MASK = (1 << 64) - 1
CHUNK_STEPS = 1 << 16
MAX_STEPS = 100_000_000
MIN_RESOLUTION = 10


@dataclass(frozen=True, eq=False)
class Path:
    t0: float
    dt: float
    slow: np.ndarray
    fast: Optional[np.ndarray]
    epsilon: float
    seed: int
    model_name: str

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if len(self.slow) < 2:
            raise ValueError("a path needs at least two points")
        if self.fast is not None and len(self.fast) != len(self.slow):
            raise ValueError("slow and fast components differ in length")

    def __len__(self) -> int:
        return len(self.slow)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.slow))

    @property
    def horizon(self) -> float:
        return self.dt * (len(self.slow) - 1)

    def drop_burn_in(self, fraction: float) -> "Path":
        """Discard the first `fraction` of the stored steps."""
        if not 0.0 <= fraction < 0.5:
            raise ValueError(f"burn_in_fraction must lie in [0, 0.5), got {fraction}")
        start = int(math.floor(fraction * (len(self.slow) - 1)))
        if start == 0:
            return self
        fast = None if self.fast is None else self.fast[start:]
        return replace(self, t0=self.t0 + start * self.dt, slow=self.slow[start:], fast=fast)


@dataclass(frozen=True, eq=False)
class SampleSeries:
    delta: float
    values: np.ndarray
    epsilon: float
    origin_dt: float
    n_count: int
    stride: int = 1
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.n_count != len(self.values):
            raise ValueError("n_count does not match the number of samples")

    @property
    def horizon(self) -> float:
        """(N - 1) * delta, the span covered by complete increments."""
        return self.delta * (self.n_count - 1)


@dataclass(frozen=True)
class ReplicateSpec:
    base_seed: int
    n_replicates: int
    burn_in_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if not 0.0 <= self.burn_in_fraction < 0.5:
            raise ValueError("burn_in_fraction must lie in [0, 0.5)")

    def seeds(self) -> list[int]:
        return [derive_seed(self.base_seed, i) for i in range(self.n_replicates)]


def derive_seed(base_seed: int, index: int) -> int:
    """base XOR (index * odd stride) mod 2^64; injective in index for a fixed base."""
    return (int(base_seed) ^ (int(index) * SEED_STRIDE)) & SEED_MASK


# Compiled kernels

@njit(cache=True, nogil=True)
def _dp(y, coeffs):
    out = 0.0
    for k in range(coeffs.shape[0]):
        w = 2.0 * np.pi * (k + 1)
        out -= coeffs[k] * w * np.sin(w * y)
    return out


@njit(cache=True, nogil=True)
def _em_multiscale_chunk(xs, ys, start, y, z, dt, weights, scales, coeffs, periodic, store_fast):
    """
    Advance from xs[start] (and fast state y) through len(z) steps.
    weights rows: f0, f1, g0, g1, alpha0, alpha1, beta; columns: const, x, y, p'(y).
    Returns (final y, index of first non-finite state or -1).
    """
    sq = np.sqrt(dt)
    vals = np.empty(7)
    for j in range(z.shape[0]):
        i = start + j
        x = xs[i]
        ye = y - np.floor(y) if periodic else y
        dp = _dp(ye, coeffs) if coeffs.shape[0] > 0 else 0.0
        for r in range(7):
            vals[r] = weights[r, 0] + weights[r, 1] * x + weights[r, 2] * ye + weights[r, 3] * dp
        du = sq * z[j, 0]
        dv = sq * z[j, 1]
        x_new = x + (scales[0] * vals[0] + vals[1]) * dt + vals[4] * du + vals[5] * dv
        y = y + (scales[2] * vals[2] + scales[3] * vals[3]) * dt + scales[6] * vals[6] * dv
        if not (np.isfinite(x_new) and np.isfinite(y)):
            return y, i + 1
        xs[i + 1] = x_new
        if store_fast:
            ys[i + 1] = y
    return y, -1


@njit(cache=True, nogil=True)
def _em_coarse_chunk(xs, start, z, dt, a, k):
    sq = np.sqrt(dt)
    for j in range(z.shape[0]):
        i = start + j
        x_new = xs[i] + a * xs[i] * dt + k * sq * z[j]
        if not np.isfinite(x_new):
            return i + 1
        xs[i + 1] = x_new
    return -1


def regime_scales(model: MultiscaleModel) -> np.ndarray:
    """Multipliers of (f0, f1, g0, g1, alpha0, alpha1, beta) in the integrator."""
    eps = model.epsilon
    if model.regime is Regime.HOMOGENIZATION:
        return np.array([1.0 / eps, 1.0, 1.0 / eps**2, 1.0 / eps, 1.0, 1.0, 1.0 / eps])
    return np.array([0.0, 1.0, 1.0 / eps, 0.0, 1.0, 1.0, 1.0 / math.sqrt(eps)])


def step_size(model: MultiscaleModel, resolution_factor: int) -> float:
    if model.regime is Regime.HOMOGENIZATION:
        return model.epsilon**2 / resolution_factor
    return model.epsilon / resolution_factor


def _affine_weights(model: MultiscaleModel) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """(7x4 weights, cosine coefficients) if the model can run compiled, else None."""
    if not all(isinstance(f, AffineField) for f in model.fields):
        return None
    potentials = {f.potential for f in model.fields if f.cp != 0.0}
    if len(potentials) > 1:
        return None
    weights = np.array([f.coefficients(model.true_theta) for f in model.fields], dtype=float)
    p: Optional[PeriodicPotential] = next(iter(potentials), None)
    coeffs = np.asarray(p.coeffs if p is not None else (), dtype=float)
    return weights, coeffs


def _check_steps(n_steps: int, max_steps: int) -> None:
    if n_steps > max_steps:
        raise StepLimitExceeded(f"{n_steps} steps exceed max_steps={max_steps}")


def _chunks(n_steps: int):
    start = 0
    while start < n_steps:
        size = min(CHUNK_STEPS, n_steps - start)
        yield start, size
        start += size


def stationary_draw(density: Callable, u: float) -> float:
    """Inverse-CDF draw from an unnormalized density on the real line."""
    from .homogenize import line_density

    return line_density(density).sample(u)


def simulate_multiscale(
    model: MultiscaleModel,
    T: float,
    resolution_factor: int = 100,
    x0: Optional[float] = None,
    y0: Optional[float] = None,
    seed: int = 0,
    keep_fast: bool = True,
    max_steps: int = MAX_STEPS,
) -> Path:
    """
    Euler-Maruyama (Ito) path at dt = eps^2/resolution_factor (homogenization)
    or eps/resolution_factor (averaging). Missing x0/y0 are drawn from the slow
    stationary density and from rho(y; x0).
    """
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    if resolution_factor < MIN_RESOLUTION:
        raise ValueError(f"resolution_factor must be >= {MIN_RESOLUTION}, got {resolution_factor}")
    dt = step_size(model, resolution_factor)
    n_steps = int(round(T / dt))
    _check_steps(n_steps, max_steps)

    rng = np.random.default_rng(seed)
    if x0 is None:
        if model.slow_density is None:
            raise ModelError(f"{model.name}: no slow stationary density; pass x0")
        x0 = stationary_draw(model.slow_density, rng.random())
    if y0 is None:
        from .homogenize import fast_invariant_density

        y0 = fast_invariant_density(model, float(x0)).sample(rng.random())

    xs = np.empty(n_steps + 1)
    xs[0] = x0
    ys = np.empty(n_steps + 1 if keep_fast else 1)
    ys[0] = y0
    periodic = model.fast_domain is FastDomain.PERIODIC_UNIT
    scales = regime_scales(model)
    compiled = _affine_weights(model)
    logger.debug("%s: %d steps at dt=%.3g (%s)", model.name, n_steps, dt, "compiled" if compiled else "python")

    y = float(y0)
    for start, size in _chunks(n_steps):
        z = rng.standard_normal((size, 2))
        if compiled is not None:
            weights, coeffs = compiled
            y, bad = _em_multiscale_chunk(xs, ys, start, y, z, dt, weights, scales, coeffs, periodic, keep_fast)
        else:
            y, bad = _python_multiscale_chunk(model, xs, ys, start, y, z, dt, scales, periodic, keep_fast)
        if bad >= 0:
            raise SimulationBlowUp(bad)

    return Path(
        t0=0.0,
        dt=dt,
        slow=xs,
        fast=ys if keep_fast else None,
        epsilon=model.epsilon,
        seed=int(seed),
        model_name=model.name,
    )


def _python_multiscale_chunk(model, xs, ys, start, y, z, dt, scales, periodic, store_fast):
    sq = math.sqrt(dt)
    theta = model.true_theta
    for j in range(z.shape[0]):
        i = start + j
        x = xs[i]
        ye = y - math.floor(y) if periodic else y
        f0, f1, g0, g1, a0, a1, b = (float(fld(x, ye, theta)) for fld in model.fields)
        du = sq * z[j, 0]
        dv = sq * z[j, 1]
        x_new = x + (scales[0] * f0 + f1) * dt + a0 * du + a1 * dv
        y = y + (scales[2] * g0 + scales[3] * g1) * dt + scales[6] * b * dv
        if not (math.isfinite(x_new) and math.isfinite(y)):
            return y, i + 1
        xs[i + 1] = x_new
        if store_fast:
            ys[i + 1] = y
    return y, -1


def simulate_coarse(
    model: CoarseModel,
    theta: float,
    T: float,
    dt: float,
    x0: Optional[float] = None,
    seed: int = 0,
    max_steps: int = MAX_STEPS,
) -> Path:
    """Euler-Maruyama path of dX = F(X; theta) dt + K(X) dW; x0=None draws from pi(x; theta)."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not T / dt >= 10.0:
        raise ValueError(f"T/dt must be >= 10, got {T / dt}")
    n_steps = int(round(T / dt))
    _check_steps(n_steps, max_steps)

    rng = np.random.default_rng(seed)
    if x0 is None:
        if model.invariant_density is None:
            raise ModelError(f"{model.name}: no invariant density; pass x0")
        x0 = stationary_draw(lambda x: model.invariant_density(x, theta), rng.random())

    xs = np.empty(n_steps + 1)
    xs[0] = x0
    compiled = isinstance(model.drift, LinearDrift) and isinstance(model.diffusion, ConstantDiffusion)
    for start, size in _chunks(n_steps):
        z = rng.standard_normal(size)
        if compiled:
            bad = _em_coarse_chunk(xs, start, z, dt, theta * model.drift.slope, model.diffusion.value)
        else:
            bad = _python_coarse_chunk(model, theta, xs, start, z, dt)
        if bad >= 0:
            raise SimulationBlowUp(bad)

    return Path(t0=0.0, dt=dt, slow=xs, fast=None, epsilon=0.0, seed=int(seed), model_name=model.name)


def _python_coarse_chunk(model, theta, xs, start, z, dt):
    sq = math.sqrt(dt)
    for j in range(z.shape[0]):
        i = start + j
        x = xs[i]
        x_new = x + float(model.drift(x, theta)) * dt + float(model.diffusion(x)) * sq * z[j]
        if not math.isfinite(x_new):
            return i + 1
        xs[i + 1] = x_new
    return -1


def subsample(path: Path, delta: float) -> SampleSeries:
    """
    Keep every m-th point, m = round(delta/dt). The snapped delta = m*dt is
    recorded. Samples are x_0, x_m, ..., up to the last stored point.
    """
    if delta < path.dt * (1.0 - 1e-12):
        raise ValueError(f"delta={delta} is smaller than the path step {path.dt}")
    m = max(1, int(round(delta / path.dt)))
    values = path.slow[::m]
    if len(values) < 2:
        raise ValueError(f"subsampling at delta={delta} leaves fewer than 2 samples")
    snapped = m * path.dt
    if not math.isclose(snapped, delta, rel_tol=1e-9):
        logger.debug("delta %.6g snapped to %.6g (m=%d)", delta, snapped, m)
    return SampleSeries(
        delta=snapped,
        values=values,
        epsilon=path.epsilon,
        origin_dt=path.dt,
        n_count=len(values),
        stride=m,
        seed=path.seed,
    )


def as_series(data: Union[Path, SampleSeries]) -> SampleSeries:
    if isinstance(data, SampleSeries):
        return data
    return subsample(data, data.dt)


def default_workers() -> int:
    return min(8, os.cpu_count() or 1)


def run_replicates(
    spec: ReplicateSpec,
    job: Callable[[int], Union[float, Sequence[float], np.ndarray]],
    workers: Optional[int] = None,
) -> np.ndarray:
    """
    Run job(seed_i) for every replicate, possibly concurrently. Results are stacked
    in replicate order. The lowest-index failure is re-raised as ReplicateError.
    """
    seeds = spec.seeds()
    workers = workers or default_workers()
    if workers <= 1 or len(seeds) == 1:
        results = []
        for i, s in enumerate(seeds):
            try:
                results.append(job(s))
            except Exception as exc:
                raise ReplicateError(i, s, exc) from exc
        return np.asarray(results, dtype=float)

    with ThreadPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
        futures = [pool.submit(job, s) for s in seeds]
        results = []
        for i, fut in enumerate(futures):
            try:
                results.append(fut.result())
            except Exception as exc:
                for rest in futures[i + 1:]:
                    rest.cancel()
                raise ReplicateError(i, seeds[i], exc) from exc
    return np.asarray(results, dtype=float)

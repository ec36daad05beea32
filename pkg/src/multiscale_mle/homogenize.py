"""
Quadrature engine: Gibbs densities on the unit torus and on truncated lines, the
periodic cell problem, averaged/homogenized coefficients, asymptotic per-time
log-likelihood limits and the bias term E_inf, plus its simulation-based calibration.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import (
    DegenerateInformationError,
    InconclusiveCalibrationError,
    ModelError,
    NonIntegrableError,
    NumericalError,
)
from .optimize import OptimizationResult, golden_section_max
from .sde_models import (
    AffineField,
    CoarseModel,
    EntryName,
    FastDomain,
    ModelCatalogEntry,
    MultiscaleModel,
    PeriodicPotential,
    Potential,
    Regime,
    fd_step,
    field_vanishes,
)

logger = logging.getLogger(__name__)

TRUNCATION_GAP = 40.0
SIMPSON_NODES = 4097
CELL_NODES = 1024
MAX_HALFWIDTH = 1e6
K_IDENTITY_TOL = 1e-8
A_INFINITY_FLOOR = 1e-12
EXCESS_X_NODES = 257
DEFAULT_X_GRID = tuple(np.linspace(-3.0, 3.0, 13))


class Rule(str, Enum):
    PERIODIC_TRAPEZOID = "PeriodicTrapezoid"
    COMPOSITE_SIMPSON = "CompositeSimpson"


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    domain: str
    lo: float
    hi: float
    nodes: np.ndarray
    weights: np.ndarray
    rule: Rule

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def integrate(self, values) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))


def periodic_grid(n_nodes: int = CELL_NODES) -> QuadratureGrid:
    """Nodes j/n on [0, 1), equal weights 1/n."""
    if n_nodes < 2:
        raise ValueError(f"n_nodes must be >= 2, got {n_nodes}")
    nodes = np.arange(n_nodes) / n_nodes
    weights = np.full(n_nodes, 1.0 / n_nodes)
    return QuadratureGrid(FastDomain.PERIODIC_UNIT.value, 0.0, 1.0, nodes, weights, Rule.PERIODIC_TRAPEZOID)


def simpson_grid(lo: float, hi: float, n_nodes: int = SIMPSON_NODES) -> QuadratureGrid:
    """Composite Simpson on [lo, hi]; n_nodes must be odd."""
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError(f"n_nodes must be odd and >= 3, got {n_nodes}")
    if not lo < hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    nodes = np.linspace(lo, hi, n_nodes)
    h = (hi - lo) / (n_nodes - 1)
    weights = np.ones(n_nodes)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    weights *= h / 3.0
    return QuadratureGrid("TruncatedLine", lo, hi, nodes, weights, Rule.COMPOSITE_SIMPSON)


def truncation_window(
    energy: Callable,
    gap: float = TRUNCATION_GAP,
    start: float = 1.0,
    max_halfwidth: float = MAX_HALFWIDTH,
) -> tuple[float, float]:
    """
    Smallest symmetric [-x*, x*] (x* doubling from `start`) on whose ends the
    energy exceeds its interior minimum by `gap`.
    """
    w = start
    while w <= max_halfwidth:
        scan = np.linspace(-w, w, 2001)
        with np.errstate(over="ignore", invalid="ignore"):
            e = np.asarray(energy(scan), dtype=float)
        finite = e[np.isfinite(e)]
        if finite.size:
            e_min = finite.min()
            if e[0] - e_min >= gap and e[-1] - e_min >= gap:
                return -w, w
        w *= 2.0
    raise NonIntegrableError(f"exp(-energy) has no finite window within |x| <= {max_halfwidth:g}")


@dataclass(frozen=True, eq=False)
class GibbsDensity:
    """rho ~ exp(-beta * potential) on a quadrature grid; `values` are normalized."""

    potential: Callable
    beta: float
    grid: QuadratureGrid
    Z: float
    values: np.ndarray

    def __post_init__(self) -> None:
        if not self.Z > 0.0:
            raise NumericalError(f"normalization must be positive, got {self.Z}")

    @property
    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def expectation(self, f: Callable) -> float:
        return self.grid.integrate(np.asarray(f(self.grid.nodes), dtype=float) * self.values)

    def sample(self, u: float) -> float:
        nodes, values = self.grid.nodes, self.values
        if self.grid.rule is Rule.PERIODIC_TRAPEZOID:
            nodes = np.append(nodes, self.grid.hi)
            values = np.append(values, values[0])
        cdf = cumulative_trapezoid(values, nodes, initial=0.0)
        return float(np.interp(u * cdf[-1], cdf, nodes))


def gibbs_density(potential: Callable, beta: float, grid: QuadratureGrid) -> GibbsDensity:
    with np.errstate(over="ignore", invalid="ignore"):
        u = np.asarray(potential(grid.nodes), dtype=float)
    finite = u[np.isfinite(u)]
    if finite.size == 0:
        raise NonIntegrableError("potential is nowhere finite on the grid")
    shift = finite.min()
    with np.errstate(over="ignore", under="ignore"):
        w = np.where(np.isfinite(u), np.exp(-beta * (u - shift)), 0.0)
    mass = grid.integrate(w)
    z = mass * math.exp(-beta * shift) if -beta * shift < 700.0 else math.inf
    return GibbsDensity(potential, beta, grid, z, w / mass)


def line_density(density: Callable, n_nodes: int = SIMPSON_NODES) -> GibbsDensity:
    """Normalize an unnormalized density on the real line by truncated Simpson quadrature."""

    def energy(x):
        with np.errstate(divide="ignore"):
            return -np.log(np.asarray(density(x), dtype=float))

    lo, hi = truncation_window(energy)
    return gibbs_density(energy, 1.0, simpson_grid(lo, hi, n_nodes))


# Fast dynamics

def _fast_structure(model: MultiscaleModel, x: float):
    """(energy U(y), effective beta, periodic potential or None) of a reversible fast process."""
    g0, b = model.g0, model.beta
    if not (isinstance(g0, AffineField) and isinstance(b, AffineField)):
        raise ModelError("fast dynamics must be affine with constant noise")
    if b.cx != 0.0 or b.cy != 0.0 or b.cp != 0.0 or b.const == 0.0:
        raise ModelError("fast noise must be a nonzero constant")
    c, cx, cy, cp = g0.coefficients(model.true_theta)
    shift = c + cx * x
    beta_eff = 2.0 / b.const**2

    if model.fast_domain is FastDomain.PERIODIC_UNIT:
        if cy != 0.0 or shift != 0.0:
            raise ModelError("non-gradient fast dynamics on the torus are unsupported")
        p = g0.potential
        if p is None or cp == 0.0:
            return (lambda y: np.zeros_like(np.asarray(y, dtype=float))), beta_eff, None
        return (lambda y: -cp * p(y)), beta_eff, p

    if cp != 0.0 or not cy < 0.0:
        raise ModelError("fast dynamics on the line must be a confining linear drift")
    return (lambda y: -0.5 * cy * np.asarray(y, dtype=float) ** 2 - shift * np.asarray(y, dtype=float)), beta_eff, None


def fast_invariant_density(model: MultiscaleModel, x: float, n_nodes: Optional[int] = None) -> GibbsDensity:
    """rho(y; x) of the frozen-x fast process."""
    energy, beta_eff, _ = _fast_structure(model, x)
    if model.fast_domain is FastDomain.PERIODIC_UNIT:
        grid = periodic_grid(n_nodes or CELL_NODES)
    else:
        lo, hi = truncation_window(lambda y: beta_eff * energy(y))
        grid = simpson_grid(lo, hi, n_nodes or SIMPSON_NODES)
    return gibbs_density(energy, beta_eff, grid)


def corrector_derivative(model: MultiscaleModel, x: float, rho: GibbsDensity) -> np.ndarray:
    """
    d/dy of the solution of -L0 Phi = f0 at the density's nodes. Supported: a linear
    fast drift on the line with f0 affine in y, and a gradient fast drift on the
    torus with f0 proportional to g0.
    """
    f0 = model.f0
    if isinstance(f0, AffineField) and f0.is_zero:
        return np.zeros_like(rho.grid.nodes)
    if not isinstance(f0, AffineField):
        raise ModelError("corrector needs an affine f0")
    d0, dx, dy, dp = f0.coefficients(model.true_theta)
    g0 = model.g0
    c, cx, cy, cp = g0.coefficients(model.true_theta)

    if model.fast_domain is FastDomain.REAL_LINE:
        if dp != 0.0:
            raise ModelError("f0 with a p'(y) term on the line is unsupported")
        return np.full_like(rho.grid.nodes, -dy / cy)

    if d0 != 0.0 or dx != 0.0 or dy != 0.0 or cp == 0.0 or f0.potential is not g0.potential:
        raise ModelError("torus corrector needs f0 proportional to the fast gradient drift")
    kappa = dp / cp
    u = -cp * g0.potential(rho.grid.nodes)
    z_hat = rho.grid.integrate(np.exp(rho.beta * u))
    return kappa * (-1.0 + np.exp(rho.beta * u) / z_hat)


def _effective_coefficients(model: MultiscaleModel, theta: float, x_grid, with_corrector: bool):
    xs = np.asarray(x_grid, dtype=float)
    drift = np.empty_like(xs)
    diff2 = np.empty_like(xs)
    for i, x in enumerate(xs):
        rho = fast_invariant_density(model, float(x))
        y = rho.grid.nodes
        dphi = corrector_derivative(model, float(x), rho) if with_corrector else 0.0
        f1 = model.f1(x, y, theta)
        g1 = model.g1(x, y, theta) if with_corrector else 0.0
        a0 = model.alpha0(x, y, theta)
        a1 = model.alpha1(x, y, theta)
        b = model.beta(x, y, theta)
        drift[i] = rho.grid.integrate((f1 + dphi * g1) * rho.values)
        diff2[i] = rho.grid.integrate((a0**2 + (a1 + dphi * b) ** 2) * rho.values)
    return drift, diff2


def averaged_coefficients(model: MultiscaleModel, theta: float, x_grid=DEFAULT_X_GRID) -> tuple[np.ndarray, np.ndarray]:
    """F(x) = int f1 rho dy and K(x) = sqrt(int (alpha0^2 + alpha1^2) rho dy) on x_grid."""
    if model.regime is not Regime.AVERAGING:
        raise ModelError("averaged_coefficients needs an averaging-regime model")
    drift, diff2 = _effective_coefficients(model, theta, x_grid, with_corrector=False)
    return drift, np.sqrt(diff2)


@dataclass(frozen=True, eq=False)
class HomogenizedCoefficients:
    x_grid: np.ndarray
    drift: np.ndarray
    diffusion: np.ndarray
    # 1/(Z_p Zhat_p) for the periodic family, None otherwise
    cell_coefficient: Optional[float] = None


def homogenized_coefficients(
    entry: Union[ModelCatalogEntry, MultiscaleModel],
    theta: float,
    x_grid=DEFAULT_X_GRID,
) -> HomogenizedCoefficients:
    """
    F(x) = int (f1 + Phi' g1) rho dy and K(x)^2 = int (alpha0^2 + (alpha1 + Phi' beta)^2) rho dy.
    """
    model = entry.multiscale if isinstance(entry, ModelCatalogEntry) else entry
    if model.regime is not Regime.HOMOGENIZATION:
        raise ModelError("homogenized_coefficients needs a homogenization-regime model")
    drift, diff2 = _effective_coefficients(model, theta, x_grid, with_corrector=True)
    cell = None
    if model.fast_domain is FastDomain.PERIODIC_UNIT:
        energy, beta_eff, p = _fast_structure(model, 0.0)
        grid = periodic_grid()
        u = energy(grid.nodes)
        cell = 1.0 / (grid.integrate(np.exp(-beta_eff * u)) * grid.integrate(np.exp(beta_eff * u)))
    return HomogenizedCoefficients(np.asarray(x_grid, dtype=float), drift, np.sqrt(diff2), cell)


# Periodic cell problem

@dataclass(frozen=True, eq=False)
class CellSolution:
    p: Callable
    beta: float
    grid: QuadratureGrid
    dphi: np.ndarray
    Z_p: float
    Z_hat_p: float
    K: float
    K_quadrature: float


def solve_cell_problem(p: Callable, beta: float, n_nodes: int = CELL_NODES) -> CellSolution:
    """
    Closed-form cell solution d(phi)/dy = -1 + exp(beta p)/Zhat_p with
    K = 1/(Z_p Zhat_p), cross-checked against Z_p^-1 int (1 + phi')^2 exp(-beta p).
    """
    if n_nodes < 64 or n_nodes & (n_nodes - 1):
        raise ValueError(f"n_nodes must be a power of two >= 64, got {n_nodes}")
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if not isinstance(p, PeriodicPotential):
        ends = np.asarray(p(np.array([0.0, 1.0])), dtype=float)
        if not np.isclose(ends[0], ends[1], rtol=0.0, atol=1e-12):
            raise ModelError("cell problem needs a 1-periodic potential")

    grid = periodic_grid(n_nodes)
    pv = np.asarray(p(grid.nodes), dtype=float)
    with np.errstate(over="raise"):
        try:
            boltz = np.exp(-beta * pv)
            inv_boltz = np.exp(beta * pv)
        except FloatingPointError as exc:
            raise NumericalError(f"exp(beta p) overflows at beta={beta}") from exc
    z_p = grid.integrate(boltz)
    z_hat = grid.integrate(inv_boltz)
    dphi = -1.0 + inv_boltz / z_hat
    k = 1.0 / (z_p * z_hat)
    k_quad = grid.integrate((1.0 + dphi) ** 2 * boltz) / z_p
    if abs(k - k_quad) > K_IDENTITY_TOL:
        raise NumericalError(f"cell coefficient routes disagree: {k} vs {k_quad}")
    return CellSolution(p, float(beta), grid, dphi, z_p, z_hat, k, k_quad)


# Bias term

def _gradient_moment(potential: Potential, beta: float, theta: float) -> float:
    """Z_V^-1 int |dV/dx|^2 exp(-beta V(x; theta)) dx."""
    xs = np.linspace(-10.0, 10.0, 41)
    if np.all(np.asarray(potential.grad(xs, theta)) == 0.0):
        return 0.0
    energy = lambda x: beta * potential.value(x, theta)
    lo, hi = truncation_window(energy)
    rho = gibbs_density(lambda x: potential.value(x, theta), beta, simpson_grid(lo, hi))
    return rho.expectation(lambda x: np.asarray(potential.grad(x, theta)) ** 2)


def e_infinity_langevin(potential: Potential, beta: float, theta: float) -> float:
    """-(beta/2) Z_V^-1 int |V'|^2 exp(-beta V) dq; never positive."""
    return -0.5 * beta * _gradient_moment(potential, beta, theta)


@dataclass(frozen=True)
class BiasTerm:
    magnitude: float
    # sign printed in front of the closed form
    formula_sign: int
    # measured sign; None until calibrated
    sign: Optional[int] = None

    @property
    def value(self) -> float:
        if self.magnitude == 0.0:
            return 0.0
        if self.sign is None:
            raise ModelError("bias sign has not been calibrated")
        return self.sign * self.magnitude

    def with_sign(self, sign: int) -> "BiasTerm":
        return BiasTerm(self.magnitude, self.formula_sign, int(sign))


def e_infinity_multiscale(
    potential: Potential,
    p: Callable,
    beta: float,
    theta: float,
    sign: Optional[int] = None,
    n_nodes: int = CELL_NODES,
) -> BiasTerm:
    """|1 - 1/(Z_p Zhat_p)| (beta/2) Z_V^-1 int |V'|^2 exp(-beta V) dx, sign left to calibration."""
    cell = solve_cell_problem(p, beta, n_nodes)
    magnitude = abs(1.0 - cell.K) * 0.5 * beta * _gradient_moment(potential, beta, theta)
    return BiasTerm(magnitude, -1, sign)


def e_infinity(entry: ModelCatalogEntry, theta: float, sign: Optional[int] = None) -> float:
    if entry.regime is Regime.AVERAGING:
        return 0.0
    if entry.name is EntryName.LANGEVIN_HIGH_FRICTION:
        return e_infinity_langevin(entry.physical_potential, entry.inverse_temperature, theta)
    if entry.name is EntryName.MULTISCALE_POTENTIAL_1D:
        term = e_infinity_multiscale(entry.physical_potential, entry.fast_potential, entry.inverse_temperature, theta, sign)
        return term.value
    raise ModelError(f"no bias formula for {entry.name}")


def e_infinity_magnitude(entry: ModelCatalogEntry, theta: float) -> float:
    if entry.regime is Regime.AVERAGING:
        return 0.0
    if entry.name is EntryName.LANGEVIN_HIGH_FRICTION:
        return abs(e_infinity_langevin(entry.physical_potential, entry.inverse_temperature, theta))
    term = e_infinity_multiscale(entry.physical_potential, entry.fast_potential, entry.inverse_temperature, theta)
    return term.magnitude


def formula_sign(entry: ModelCatalogEntry) -> int:
    return 0 if entry.regime is Regime.AVERAGING else -1


# Asymptotic limits

def coarse_stationary_density(coarse: CoarseModel, theta0: float) -> GibbsDensity:
    if coarse.invariant_density is None:
        raise ModelError(f"{coarse.name}: no invariant density")
    return line_density(lambda x: coarse.invariant_density(x, theta0))


def coarse_limit_function(coarse: CoarseModel, theta0: float) -> Callable[[float], float]:
    """theta -> int (F(theta) F(theta0) - F(theta)^2 / 2) / K^2 pi(x; theta0) dx."""
    rho = coarse_stationary_density(coarse, theta0)
    x = rho.grid.nodes
    k2 = np.asarray(coarse.diffusion(x), dtype=float) ** 2
    if np.any(k2 < coarse.k_min**2):
        raise ModelError("diffusion below floor on the stationary support")
    f0 = np.asarray(coarse.drift(x, theta0), dtype=float)

    def coarse_limit(theta: float) -> float:
        f = np.asarray(coarse.drift(x, theta), dtype=float)
        return rho.grid.integrate((f * f0 - 0.5 * f * f) / k2 * rho.values)

    return coarse_limit


@dataclass(frozen=True)
class LimitFunctions:
    coarse_limit: Callable[[float], float]
    e_infinity: Callable[[float], float]
    full_limit: Callable[[float], float]
    coarse_argmax: OptimizationResult
    full_argmax: OptimizationResult
    theta0: float
    e_infinity_sign: Optional[int] = None


def asymptotic_limits(
    entry: ModelCatalogEntry,
    theta0: Optional[float] = None,
    e_infinity_sign: Optional[int] = None,
    tol: float = 1e-6,
) -> LimitFunctions:
    """
    coarse_limit(theta) = int (F(theta) F(theta0) - F(theta)^2 / 2) / K^2 pi(x; theta0) dx,
    full_limit = coarse_limit + e_infinity, both maximized over the coarse theta interval.
    """
    theta0 = entry.theta0 if theta0 is None else float(theta0)
    coarse = entry.coarse
    coarse_limit = coarse_limit_function(coarse, theta0)
    magnitude = e_infinity_magnitude(entry, theta0)
    if e_infinity_sign is None and magnitude > 0.0 and entry.name is EntryName.MULTISCALE_POTENTIAL_1D:
        raise ModelError("E_inf sign must be calibrated before the full limit can be formed")

    if entry.name is EntryName.MULTISCALE_POTENTIAL_1D:
        logger.info("E_inf weights by exp(-beta V(x; theta)); the coarse limit uses pi at theta0=%s", theta0)

    def e_inf(theta: float) -> float:
        return e_infinity(entry, theta, e_infinity_sign)

    def full_limit(theta: float) -> float:
        return coarse_limit(theta) + e_inf(theta)

    lo, hi = coarse.theta_interval
    coarse_argmax = golden_section_max(coarse_limit, lo, hi, tol)
    full_argmax = golden_section_max(full_limit, lo, hi, tol)
    if full_argmax.at_boundary:
        logger.warning("full-limit maximum on the boundary of [%s, %s]", lo, hi)
    return LimitFunctions(coarse_limit, e_inf, full_limit, coarse_argmax, full_argmax, theta0, e_infinity_sign)


def a_infinity(entry: Union[ModelCatalogEntry, CoarseModel], theta0: Optional[float] = None) -> float:
    """int (dF/dtheta / K)^2 pi(x; theta0) dx."""
    coarse = entry.coarse if isinstance(entry, ModelCatalogEntry) else entry
    if theta0 is None:
        if not isinstance(entry, ModelCatalogEntry):
            raise ValueError("theta0 is required for a bare coarse model")
        theta0 = entry.theta0
    rho = coarse_stationary_density(coarse, theta0)
    x = rho.grid.nodes
    if coarse.drift_is_linear_in_theta:
        h = coarse.shape(x)
    else:
        step = float(fd_step(theta0))
        h = (np.asarray(coarse.drift(x, theta0 + step)) - np.asarray(coarse.drift(x, theta0 - step))) / (2.0 * step)
    k2 = np.asarray(coarse.diffusion(x), dtype=float) ** 2
    value = rho.grid.integrate(h * h / k2 * rho.values)
    if value < A_INFINITY_FLOOR:
        raise DegenerateInformationError(f"A_inf = {value:.3g} below {A_INFINITY_FLOOR}")
    return value


# Simulation-based calibration

@dataclass(frozen=True)
class CalibrationReport:
    theta_probe: float
    sign: int
    estimate: float
    standard_error: float
    formula_magnitude: float
    ratio: float
    formula_sign: int
    agrees_with_formula: bool
    n_replicates: int
    # already subtracted from `estimate`
    native_step_correction: float = 0.0
    differences: tuple[float, ...] = field(default=(), repr=False)

    @property
    def inconclusive(self) -> bool:
        return not self.standard_error < abs(self.estimate)

    def as_dict(self) -> dict:
        keys = (
            "theta_probe", "sign", "estimate", "standard_error", "formula_magnitude",
            "ratio", "formula_sign", "agrees_with_formula", "n_replicates", "native_step_correction",
        )
        out = {k: getattr(self, k) for k in keys}
        out["inconclusive"] = self.inconclusive
        return out


def native_step_excess(entry: ModelCatalogEntry, theta: float, resolution_factor: int) -> float:
    """
    Expected per-time excess of the left-point log-likelihood on native Euler steps
    of a homogenization path over its continuous-time value:

        -1/(2 resolution_factor) * int int d/dx(F/K^2)(x; theta) f0(x, y)^2 rho(y; x) pi(x) dy dx

    Each step's squared slow increment carries (f0/eps)^2 dt^2 on top of the noise,
    and dt = eps^2/resolution_factor. Zero in the averaging regime and when f0 vanishes.
    """
    model = entry.multiscale
    if entry.regime is not Regime.HOMOGENIZATION or field_vanishes(model.f0, model.true_theta):
        return 0.0
    if resolution_factor <= 0:
        raise ValueError("resolution_factor must be positive")
    coarse = entry.coarse
    pi = line_density(lambda x: coarse.invariant_density(x, entry.theta0), EXCESS_X_NODES)
    x = pi.grid.nodes

    def phi(at):
        k = np.asarray(coarse.diffusion(at), dtype=float)
        return np.asarray(coarse.drift(at, theta), dtype=float) / (k * k)

    h = fd_step(x)
    dphi = (phi(x + h) - phi(x - h)) / (2.0 * h)
    f0_sq = np.empty_like(x)
    for i, xi in enumerate(x):
        rho = fast_invariant_density(model, xi)
        f0_sq[i] = rho.expectation(lambda y: np.asarray(model.f0(xi, y, model.true_theta), dtype=float) ** 2)
    return float(-0.5 * pi.grid.integrate(dphi * f0_sq * pi.values) / resolution_factor)


def simulated_limit_differences(
    entry: ModelCatalogEntry,
    thetas: Sequence[float],
    T: float,
    spec,
    resolution_factor: int = 100,
    coarse_dt: float = 1e-3,
    workers: Optional[int] = None,
    max_steps: Optional[int] = None,
    correct_native_step: bool = True,
) -> np.ndarray:
    """
    Per replicate and theta: (1/T) L(theta; multiscale path) - (1/T) L(theta; coarse path),
    both paths started stationary, burn-in dropped. Shape (n_replicates, len(thetas)).
    With correct_native_step, native_step_excess is subtracted column by column.
    """
    from .likelihood import loglik_continuous
    from .simulator import MAX_STEPS, derive_seed, run_replicates, simulate_coarse, simulate_multiscale

    thetas = [float(t) for t in thetas]
    limit = max_steps or MAX_STEPS

    def job(seed: int) -> np.ndarray:
        full = simulate_multiscale(
            entry.multiscale, T, resolution_factor, seed=seed, keep_fast=False, max_steps=limit,
        ).drop_burn_in(spec.burn_in_fraction)
        ref = simulate_coarse(
            entry.coarse, entry.theta0, T, coarse_dt, seed=derive_seed(seed, 1), max_steps=limit,
        ).drop_burn_in(spec.burn_in_fraction)
        return np.array([
            loglik_continuous(full, entry.coarse, th) / full.horizon
            - loglik_continuous(ref, entry.coarse, th) / ref.horizon
            for th in thetas
        ])

    out = run_replicates(spec, job, workers).reshape(spec.n_replicates, len(thetas))
    if correct_native_step:
        out = out - np.array([native_step_excess(entry, th, resolution_factor) for th in thetas])
    return out


def calibrate_e_infinity_sign(
    entry: ModelCatalogEntry,
    theta_probe: float,
    T: float,
    replicates: int,
    base_seed: int = 0,
    resolution_factor: int = 100,
    coarse_dt: float = 1e-3,
    burn_in_fraction: float = 0.1,
    workers: Optional[int] = None,
    max_steps: Optional[int] = None,
    raise_inconclusive: bool = True,
) -> CalibrationReport:
    """
    Estimate E_inf(theta_probe) as the replicate mean of simulated limit differences
    and compare its sign with the closed form. Raises InconclusiveCalibrationError
    when the standard error is not below |E|.
    """
    from .simulator import ReplicateSpec

    if theta_probe == 0.0:
        raise ValueError("theta_probe must be nonzero")
    spec = ReplicateSpec(base_seed, replicates, burn_in_fraction)
    diffs = simulated_limit_differences(
        entry, [theta_probe], T, spec, resolution_factor, coarse_dt, workers, max_steps,
    )[:, 0]
    report = summarize_differences(
        entry, theta_probe, diffs, native_step_excess(entry, theta_probe, resolution_factor),
    )
    logger.info(
        "calibration %s at theta=%s: E=%.5g (se %.2g), formula magnitude %.5g, sign %+d",
        entry.name.value, theta_probe, report.estimate, report.standard_error,
        report.formula_magnitude, report.sign,
    )
    if not report.agrees_with_formula and report.formula_sign != 0:
        logger.warning("simulated E_inf sign %+d disagrees with the closed form's %+d", report.sign, report.formula_sign)
    if raise_inconclusive and report.inconclusive:
        raise InconclusiveCalibrationError(report)
    return report


def summarize_differences(
    entry: ModelCatalogEntry, theta_probe: float, diffs, native_step_correction: float = 0.0,
) -> CalibrationReport:
    diffs = np.asarray(diffs, dtype=float)
    estimate = float(diffs.mean())
    se = float(diffs.std(ddof=1) / math.sqrt(len(diffs))) if len(diffs) > 1 else math.inf
    magnitude = e_infinity_magnitude(entry, theta_probe)
    ratio = abs(estimate) / magnitude if magnitude > 0.0 else math.nan
    sign = int(np.sign(estimate))
    f_sign = formula_sign(entry)
    return CalibrationReport(
        theta_probe=float(theta_probe),
        sign=sign,
        estimate=estimate,
        standard_error=se,
        formula_magnitude=magnitude,
        ratio=ratio,
        formula_sign=f_sign,
        agrees_with_formula=(sign == f_sign),
        n_replicates=len(diffs),
        native_step_correction=float(native_step_correction),
        differences=tuple(float(d) for d in diffs),
    )

"""
Data model for fast/slow systems and for the coarse-grained statistical model
fitted to their slow component, plus the built-in model catalog.

Fast/slow system, homogenization regime:
    dx = (f0/eps + f1) dt + alpha0 dU + alpha1 dV
    dy = (g0/eps^2 + g1/eps) dt + (beta/eps) dV
Averaging regime (f0 = g1 = 0):
    dx = f1 dt + alpha0 dU + alpha1 dV
    dy = (g0/eps) dt + (beta/sqrt(eps)) dV
Coarse model:
    dX = F(X; theta) dt + K(X) dW
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ModelError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
CENTERING_GRID = (-2.0, -1.0, 0.0, 1.0, 2.0)
CENTERING_TOL = 1e-10
POTENTIAL_TOL = 1e-6


class Regime(str, Enum):
    AVERAGING = "Averaging"
    HOMOGENIZATION = "Homogenization"


class FastDomain(str, Enum):
    PERIODIC_UNIT = "PeriodicUnit"
    REAL_LINE = "RealLine"


class SlowDomain(str, Enum):
    REAL_LINE = "RealLine"


class EntryName(str, Enum):
    AVG_OU_MODULATED = "AvgOuModulated"
    LANGEVIN_HIGH_FRICTION = "LangevinHighFriction"
    MULTISCALE_POTENTIAL_1D = "MultiscalePotential1D"

    @classmethod
    def parse(cls, name: "str | EntryName") -> "EntryName":
        if isinstance(name, EntryName):
            return name
        key = str(name).strip().lower()
        for member in cls:
            if key in (member.value.lower(), member.name.lower()):
                return member
        raise ModelError(f"unknown catalog entry: {name!r}")


# Potentials

@dataclass(frozen=True)
class PeriodicPotential:
    """p(y) = sum_k a_k cos(2 pi k y), k = 1..len(coeffs), on the unit torus."""

    coeffs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.coeffs) == 0:
            raise ModelError("periodic potential needs at least one cosine coefficient")
        if not all(math.isfinite(a) for a in self.coeffs):
            raise ModelError("periodic potential coefficients must be finite")

    @classmethod
    def from_coeffs(cls, coeffs: Sequence[float]) -> "PeriodicPotential":
        return cls(tuple(float(a) for a in coeffs))

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(1, len(self.coeffs) + 1, dtype=float)

    @property
    def is_constant(self) -> bool:
        return all(a == 0.0 for a in self.coeffs)

    @staticmethod
    def wrap(y):
        y = np.asarray(y, dtype=float)
        return y - np.floor(y)

    def _phases(self, y) -> np.ndarray:
        y = np.asarray(self.wrap(y), dtype=float)
        return TWO_PI * np.multiply.outer(y, self.wavenumbers)

    def __call__(self, y):
        return np.cos(self._phases(y)) @ np.asarray(self.coeffs)

    def derivative(self, y):
        a = np.asarray(self.coeffs) * TWO_PI * self.wavenumbers
        return -np.sin(self._phases(y)) @ a

    def second_derivative(self, y):
        a = np.asarray(self.coeffs) * (TWO_PI * self.wavenumbers) ** 2
        return -np.cos(self._phases(y)) @ a


class Potential:
    """V(x; theta) with first and second x-derivatives."""

    def value(self, x, theta):
        raise NotImplementedError

    def grad(self, x, theta):
        raise NotImplementedError

    def hess(self, x, theta):
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticPotential(Potential):
    """V(x; theta) = scale * theta * x^2 / 2."""

    scale: float = 1.0

    def value(self, x, theta):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.scale * theta * x * x

    def grad(self, x, theta):
        return self.scale * theta * np.asarray(x, dtype=float)

    def hess(self, x, theta):
        return np.full_like(np.asarray(x, dtype=float), self.scale * theta)


def fd_step(x) -> np.ndarray:
    return 1e-5 * (1.0 + np.abs(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class CallablePotential(Potential):
    """User potential; missing derivatives come from central finite differences."""

    fn: Callable
    grad_fn: Optional[Callable] = None
    hess_fn: Optional[Callable] = None

    def value(self, x, theta):
        return np.asarray(self.fn(np.asarray(x, dtype=float), theta), dtype=float)

    def grad(self, x, theta):
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(np.asarray(x, dtype=float), theta), dtype=float)
        x = np.asarray(x, dtype=float)
        h = fd_step(x)
        return (self.value(x + h, theta) - self.value(x - h, theta)) / (2.0 * h)

    def hess(self, x, theta):
        if self.hess_fn is not None:
            return np.asarray(self.hess_fn(np.asarray(x, dtype=float), theta), dtype=float)
        x = np.asarray(x, dtype=float)
        h = fd_step(x)
        return (self.value(x + h, theta) - 2.0 * self.value(x, theta) + self.value(x - h, theta)) / (h * h)


# Coefficient fields of the fast/slow system

class CoefficientField:
    """(x, y, theta) -> real, vectorized over numpy arrays."""

    depends_on_theta: bool = False
    smoothness_assumed: bool = True

    def __call__(self, x, y, theta):
        raise NotImplementedError


@dataclass(frozen=True)
class AffineField(CoefficientField):
    """
    const + cx*x + cy*y + cp*p'(y); the x term is multiplied by theta when
    theta_scales_x is set. Fields of this form run in the compiled integrator.
    """

    const: float = 0.0
    cx: float = 0.0
    cy: float = 0.0
    cp: float = 0.0
    theta_scales_x: bool = False
    potential: Optional[PeriodicPotential] = None
    smoothness_assumed: bool = True

    def __post_init__(self) -> None:
        if self.cp != 0.0 and self.potential is None:
            raise ModelError("affine field with a p'(y) term needs a periodic potential")

    @property
    def depends_on_theta(self) -> bool:
        return self.theta_scales_x and self.cx != 0.0

    @property
    def is_zero(self) -> bool:
        return self.const == 0.0 and self.cx == 0.0 and self.cy == 0.0 and self.cp == 0.0

    def coefficients(self, theta: float) -> tuple[float, float, float, float]:
        cx = self.cx * theta if self.theta_scales_x else self.cx
        return (self.const, cx, self.cy, self.cp)

    def __call__(self, x, y, theta):
        c, cx, cy, cp = self.coefficients(theta)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = c + cx * x + cy * y
        if cp != 0.0:
            out = out + cp * self.potential.derivative(y)
        return out


ZERO = AffineField()


def constant_field(value: float) -> AffineField:
    return AffineField(const=float(value))


@dataclass(frozen=True)
class FunctionField(CoefficientField):
    fn: Callable
    depends_on_theta: bool = False
    smoothness_assumed: bool = True

    def __call__(self, x, y, theta):
        return np.asarray(self.fn(x, y, theta), dtype=float)


def field_vanishes(fld: CoefficientField, theta: float = 1.0) -> bool:
    if isinstance(fld, AffineField):
        return fld.is_zero
    xs, ys = np.meshgrid(np.linspace(-3.0, 3.0, 7), np.linspace(-3.0, 3.0, 7))
    return bool(np.all(np.asarray(fld(xs, ys, theta)) == 0.0))


# Models

@dataclass(frozen=True)
class MultiscaleModel:
    regime: Regime
    f0: CoefficientField
    f1: CoefficientField
    g0: CoefficientField
    g1: CoefficientField
    alpha0: CoefficientField
    alpha1: CoefficientField
    beta: CoefficientField
    epsilon: float
    fast_domain: FastDomain
    true_theta: float
    slow_domain: SlowDomain = SlowDomain.REAL_LINE
    noise_dims: tuple[int, int] = (1, 1)
    name: str = "custom"
    # unnormalized stationary density of the slow variable, used for initial draws
    slow_density: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not (self.epsilon > 0.0 and math.isfinite(self.epsilon)):
            raise ModelError(f"epsilon must be positive, got {self.epsilon}")
        if self.noise_dims != (1, 1):
            raise ModelError("only scalar drivers U, V are supported")
        if self.regime is Regime.AVERAGING:
            if not field_vanishes(self.f0, self.true_theta) or not field_vanishes(self.g1, self.true_theta):
                raise ModelError("averaging regime requires f0 = 0 and g1 = 0")

    @property
    def fields(self) -> tuple[CoefficientField, ...]:
        return (self.f0, self.f1, self.g0, self.g1, self.alpha0, self.alpha1, self.beta)


@dataclass(frozen=True)
class LinearDrift:
    """F(x; theta) = theta * slope * x."""

    slope: float

    def __call__(self, x, theta):
        return theta * self.slope * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class ConstantDiffusion:
    value: float

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)


@dataclass(frozen=True)
class CoarseModel:
    drift: Callable
    diffusion: Callable
    theta_interval: tuple[float, float] = (0.05, 10.0)
    drift_is_linear_in_theta: bool = False
    potential: Optional[Potential] = None
    invariant_density: Optional[Callable] = field(default=None, compare=False)
    k_min: float = 1e-8
    name: str = "custom"

    def __post_init__(self) -> None:
        lo, hi = self.theta_interval
        if not lo < hi:
            raise ModelError(f"theta interval must satisfy lo < hi, got {self.theta_interval}")

    def shape(self, x):
        """h(x) with F(x; theta) = theta * h(x); only meaningful for linear drifts."""
        if not self.drift_is_linear_in_theta:
            raise ModelError("drift is not linear in theta")
        return np.asarray(self.drift(x, 1.0), dtype=float)

    def validate(self, x_grid: Sequence[float], theta_grid: Sequence[float]) -> None:
        """Check K >= k_min and, if a potential is attached, K^2 dV/dx = F."""
        xs = np.asarray(x_grid, dtype=float)
        k = np.asarray(self.diffusion(xs), dtype=float)
        if np.any(k < self.k_min):
            raise ModelError(f"diffusion below floor {self.k_min} on the working domain")
        if self.potential is None:
            return
        h = fd_step(xs)
        for theta in theta_grid:
            dv = (self.potential.value(xs + h, theta) - self.potential.value(xs - h, theta)) / (2.0 * h)
            gap = np.max(np.abs(k * k * dv - self.drift(xs, theta)))
            if gap > POTENTIAL_TOL:
                raise ModelError(f"potential inconsistent with drift at theta={theta}: gap {gap:.3g}")


@dataclass(frozen=True)
class ModelCatalogEntry:
    name: EntryName
    theta0: float
    epsilon: float
    inverse_temperature: float
    multiscale: MultiscaleModel
    coarse: CoarseModel
    # V(x; theta) of the physical system (pi ~ exp(-beta V(x; theta0)))
    physical_potential: QuadraticPotential
    fast_potential: Optional[PeriodicPotential] = None
    cell_coefficient: Optional[float] = None

    @property
    def regime(self) -> Regime:
        return self.multiscale.regime

    @property
    def reduces_to_coarse(self) -> bool:
        """True when the multiscale system is the coarse model itself (p == 0)."""
        return self.fast_potential is not None and self.fast_potential.is_constant


def avg_ou_stationary_moments(theta0: float, epsilon: float) -> dict[str, float]:
    """
    Exact stationary second moments of the averaging entry, from the Lyapunov
    equation M S + S M^T + Q = 0 with M = [[-theta, 1], [0, -1/eps]], Q = diag(2, 2/eps).
    """
    s_yy = 1.0
    s_xy = epsilon / (1.0 + theta0 * epsilon)
    s_xx = (1.0 + s_xy) / theta0
    return {
        "var_x": s_xx,
        "cov_xy": s_xy,
        "var_y": s_yy,
        "theta_limit": theta0 - s_xy / s_xx,
    }


def _gaussian_density(precision: float) -> Callable:
    def density(x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * precision * x * x)
    return density


def _gibbs_density(potential: QuadraticPotential, beta: float) -> Callable:
    def density(x, theta):
        return np.exp(-beta * potential.value(x, theta))
    return density


def _avg_ou_modulated(theta0, epsilon, beta, p, theta_interval) -> ModelCatalogEntry:
    if beta != 1.0:
        logger.debug("AvgOuModulated has fixed noise; inverse temperature %s ignored", beta)
    sqrt2 = math.sqrt(2.0)
    moments = avg_ou_stationary_moments(theta0, epsilon)
    multiscale = MultiscaleModel(
        regime=Regime.AVERAGING,
        f0=ZERO,
        f1=AffineField(cx=-1.0, cy=1.0, theta_scales_x=True),
        g0=AffineField(cy=-1.0),
        g1=ZERO,
        alpha0=constant_field(sqrt2),
        alpha1=ZERO,
        beta=constant_field(sqrt2),
        epsilon=epsilon,
        fast_domain=FastDomain.REAL_LINE,
        true_theta=theta0,
        name=EntryName.AVG_OU_MODULATED.value,
        slow_density=_gaussian_density(1.0 / moments["var_x"]),
    )
    physical = QuadraticPotential(1.0)
    coarse = CoarseModel(
        drift=LinearDrift(-1.0),
        diffusion=ConstantDiffusion(sqrt2),
        theta_interval=theta_interval,
        drift_is_linear_in_theta=True,
        potential=QuadraticPotential(-0.5),
        invariant_density=_gibbs_density(physical, 1.0),
        name=EntryName.AVG_OU_MODULATED.value,
    )
    return ModelCatalogEntry(EntryName.AVG_OU_MODULATED, theta0, epsilon, 1.0, multiscale, coarse, physical)


def _langevin_high_friction(theta0, epsilon, beta, p, theta_interval) -> ModelCatalogEntry:
    noise = math.sqrt(2.0 / beta)
    physical = QuadraticPotential(1.0)
    multiscale = MultiscaleModel(
        regime=Regime.HOMOGENIZATION,
        f0=AffineField(cy=1.0),
        f1=ZERO,
        g0=AffineField(cy=-1.0),
        g1=AffineField(cx=-1.0, theta_scales_x=True),
        alpha0=ZERO,
        alpha1=ZERO,
        beta=constant_field(noise),
        epsilon=epsilon,
        fast_domain=FastDomain.REAL_LINE,
        true_theta=theta0,
        name=EntryName.LANGEVIN_HIGH_FRICTION.value,
        slow_density=_gaussian_density(beta * theta0),
    )
    coarse = CoarseModel(
        drift=LinearDrift(-1.0),
        diffusion=ConstantDiffusion(noise),
        theta_interval=theta_interval,
        drift_is_linear_in_theta=True,
        potential=QuadraticPotential(-0.5 * beta),
        invariant_density=_gibbs_density(physical, beta),
        name=EntryName.LANGEVIN_HIGH_FRICTION.value,
    )
    return ModelCatalogEntry(EntryName.LANGEVIN_HIGH_FRICTION, theta0, epsilon, beta, multiscale, coarse, physical)


def _multiscale_potential_1d(theta0, epsilon, beta, p, theta_interval) -> ModelCatalogEntry:
    from .homogenize import solve_cell_problem

    if p is None:
        raise ModelError("MultiscalePotential1D needs a periodic potential (p_coeffs)")
    cell = solve_cell_problem(p, beta)
    k = cell.K
    noise = math.sqrt(2.0 / beta)
    physical = QuadraticPotential(1.0)
    multiscale = MultiscaleModel(
        regime=Regime.HOMOGENIZATION,
        f0=AffineField(cp=-1.0, potential=p),
        f1=AffineField(cx=-1.0, theta_scales_x=True),
        g0=AffineField(cp=-1.0, potential=p),
        g1=AffineField(cx=-1.0, theta_scales_x=True),
        alpha0=ZERO,
        alpha1=constant_field(noise),
        beta=constant_field(noise),
        epsilon=epsilon,
        fast_domain=FastDomain.PERIODIC_UNIT,
        true_theta=theta0,
        name=EntryName.MULTISCALE_POTENTIAL_1D.value,
        slow_density=_gaussian_density(beta * theta0),
    )
    coarse = CoarseModel(
        drift=LinearDrift(-k),
        diffusion=ConstantDiffusion(math.sqrt(2.0 * k / beta)),
        theta_interval=theta_interval,
        drift_is_linear_in_theta=True,
        potential=QuadraticPotential(-0.5 * beta),
        invariant_density=_gibbs_density(physical, beta),
        name=EntryName.MULTISCALE_POTENTIAL_1D.value,
    )
    return ModelCatalogEntry(
        EntryName.MULTISCALE_POTENTIAL_1D, theta0, epsilon, beta, multiscale, coarse, physical,
        fast_potential=p, cell_coefficient=k,
    )


CATALOG: dict[EntryName, Callable[..., ModelCatalogEntry]] = {
    EntryName.AVG_OU_MODULATED: _avg_ou_modulated,
    EntryName.LANGEVIN_HIGH_FRICTION: _langevin_high_friction,
    EntryName.MULTISCALE_POTENTIAL_1D: _multiscale_potential_1d,
}


def build_entry(
    entry_name: "str | EntryName",
    theta0: float,
    epsilon: float,
    beta: float = 1.0,
    p_coeffs: Optional[Sequence[float]] = None,
    theta_interval: tuple[float, float] = (0.05, 10.0),
) -> ModelCatalogEntry:
    """Build a catalog entry and check its invariants (centering, potential/drift consistency)."""
    name = EntryName.parse(entry_name)
    if not 0.0 < epsilon < 1.0:
        raise ModelError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not beta > 0.0:
        raise ModelError(f"inverse temperature must be positive, got {beta}")
    if not math.isfinite(theta0):
        raise ModelError("theta0 must be finite")
    p = None
    if name is EntryName.MULTISCALE_POTENTIAL_1D:
        if not p_coeffs:
            raise ModelError("MultiscalePotential1D needs a non-empty p_coeffs")
        p = PeriodicPotential.from_coeffs(p_coeffs)

    entry = CATALOG[name](float(theta0), float(epsilon), float(beta), p, tuple(theta_interval))

    lo, hi = entry.coarse.theta_interval
    entry.coarse.validate(CENTERING_GRID, (lo, theta0, hi))
    if entry.regime is Regime.HOMOGENIZATION and not check_centering(entry.multiscale, CENTERING_GRID, CENTERING_TOL):
        raise ModelError(f"{name.value}: centering condition fails")
    logger.debug("built %s (theta0=%s, eps=%s, beta=%s)", name.value, theta0, epsilon, beta)
    return entry


def build_model(
    entry_name: "str | EntryName",
    theta0: float,
    epsilon: float,
    beta: float = 1.0,
    p_coeffs: Optional[Sequence[float]] = None,
    theta_interval: tuple[float, float] = (0.05, 10.0),
) -> tuple[MultiscaleModel, CoarseModel]:
    entry = build_entry(entry_name, theta0, epsilon, beta, p_coeffs, theta_interval)
    return entry.multiscale, entry.coarse


def check_centering(model: MultiscaleModel, x_grid: Sequence[float], tol: float) -> bool:
    """True iff |int rho(y; x) f0(x, y) dy| <= tol for every x in the grid."""
    from .homogenize import fast_invariant_density

    if model.regime is Regime.AVERAGING:
        raise ModelError("centering condition is vacuous for an averaging model")
    for x in x_grid:
        rho = fast_invariant_density(model, float(x))
        mean = rho.expectation(lambda y: model.f0(x, y, model.true_theta))
        if abs(mean) > tol:
            logger.debug("centering fails at x=%s: %.3g", x, mean)
            return False
    return True

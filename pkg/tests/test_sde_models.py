import math

import numpy as np
import pytest

from multiscale_mle.errors import ModelError
from multiscale_mle.homogenize import averaged_coefficients, homogenized_coefficients
from multiscale_mle.sde_models import (
    AffineField,
    CallablePotential,
    CoarseModel,
    ConstantDiffusion,
    EntryName,
    FastDomain,
    LinearDrift,
    MultiscaleModel,
    PeriodicPotential,
    QuadraticPotential,
    Regime,
    ZERO,
    avg_ou_stationary_moments,
    build_entry,
    build_model,
    check_centering,
    constant_field,
)

from conftest import bessel_k

X_GRID = np.linspace(-2.0, 2.0, 9)


def test_entry_names_parse_case_insensitively():
    assert EntryName.parse("multiscalepotential1d") is EntryName.MULTISCALE_POTENTIAL_1D
    assert EntryName.parse("AvgOuModulated") is EntryName.AVG_OU_MODULATED
    with pytest.raises(ModelError):
        EntryName.parse("Heston")


def test_multiscale_entry_coarse_coefficients(multiscale_entry):
    k = bessel_k(1.0)
    assert multiscale_entry.cell_coefficient == pytest.approx(0.623860, abs=1e-6)
    assert multiscale_entry.cell_coefficient == pytest.approx(k, rel=1e-10)
    coarse = multiscale_entry.coarse
    assert float(coarse.drift(1.0, 1.0)) == pytest.approx(-k, rel=1e-10)
    assert float(coarse.diffusion(np.array([0.3]))[0]) == pytest.approx(math.sqrt(2.0 * k), rel=1e-10)


def test_flat_fast_potential_gives_unit_cell_coefficient(flat_multiscale_entry):
    assert flat_multiscale_entry.cell_coefficient == pytest.approx(1.0, abs=1e-12)
    assert flat_multiscale_entry.reduces_to_coarse


def test_langevin_entry_coarse_coefficients():
    _, coarse = build_model("LangevinHighFriction", theta0=2.0, epsilon=0.05)
    x = np.array([-1.0, 0.5, 2.0])
    np.testing.assert_allclose(coarse.drift(x, 2.0), -2.0 * x)
    np.testing.assert_allclose(coarse.diffusion(x), math.sqrt(2.0))


@pytest.mark.parametrize("epsilon", [0.0, 1.0, -0.1])
def test_epsilon_outside_unit_interval_rejected(epsilon):
    with pytest.raises(ModelError):
        build_entry("AvgOuModulated", theta0=1.0, epsilon=epsilon)


def test_multiscale_entry_needs_coefficients():
    with pytest.raises(ModelError):
        build_entry("MultiscalePotential1D", theta0=1.0, epsilon=0.1)
    with pytest.raises(ModelError):
        build_entry("MultiscalePotential1D", theta0=1.0, epsilon=0.1, p_coeffs=[])


def test_nonpositive_temperature_rejected():
    with pytest.raises(ModelError):
        build_entry("LangevinHighFriction", theta0=1.0, epsilon=0.1, beta=0.0)


def test_periodic_potential_derivatives_match_finite_differences():
    p = PeriodicPotential.from_coeffs([1.0, -0.4, 0.2])
    y = np.linspace(-0.7, 1.3, 17)
    h = 1e-6
    np.testing.assert_allclose(p.derivative(y), (p(y + h) - p(y - h)) / (2 * h), atol=1e-6)
    np.testing.assert_allclose(p.second_derivative(y), (p.derivative(y + h) - p.derivative(y - h)) / (2 * h), atol=1e-4)
    np.testing.assert_allclose(p(y), p(y + 3.0), atol=1e-12)


def test_callable_potential_finite_difference_fallback():
    v = CallablePotential(lambda x, th: 0.25 * th * x**4)
    x = np.array([-1.0, 0.5, 1.5])
    np.testing.assert_allclose(v.grad(x, 2.0), 2.0 * x**3, rtol=1e-6)
    np.testing.assert_allclose(v.hess(x, 2.0), 6.0 * x**2, rtol=1e-3)


def test_theta_independent_fields_ignore_theta(multiscale_entry):
    x = np.linspace(-1.0, 1.0, 5)
    y = np.linspace(0.0, 0.9, 5)
    for fld in multiscale_entry.multiscale.fields:
        if not fld.depends_on_theta:
            np.testing.assert_array_equal(fld(x, y, 0.3), fld(x, y, 4.0))


def test_centering_holds_for_catalog(multiscale_entry, langevin_entry):
    assert check_centering(multiscale_entry.multiscale, X_GRID, 1e-10)
    assert check_centering(langevin_entry.multiscale, X_GRID, 1e-10)


def test_centering_fails_for_constant_fast_forcing():
    p = PeriodicPotential.from_coeffs([1.0])
    model = MultiscaleModel(
        regime=Regime.HOMOGENIZATION,
        f0=constant_field(1.0),
        f1=ZERO,
        g0=AffineField(cp=-1.0, potential=p),
        g1=ZERO,
        alpha0=ZERO,
        alpha1=ZERO,
        beta=constant_field(math.sqrt(2.0)),
        epsilon=0.1,
        fast_domain=FastDomain.PERIODIC_UNIT,
        true_theta=1.0,
    )
    assert not check_centering(model, X_GRID, 1e-10)


def test_centering_is_undefined_for_averaging(averaging_entry):
    with pytest.raises(ModelError):
        check_centering(averaging_entry.multiscale, X_GRID, 1e-10)


def test_averaging_model_rejects_fast_forcing():
    with pytest.raises(ModelError):
        MultiscaleModel(
            regime=Regime.AVERAGING,
            f0=constant_field(1.0),
            f1=ZERO,
            g0=AffineField(cy=-1.0),
            g1=ZERO,
            alpha0=ZERO,
            alpha1=ZERO,
            beta=constant_field(1.0),
            epsilon=0.1,
            fast_domain=FastDomain.REAL_LINE,
            true_theta=1.0,
        )


def test_coarse_validate_catches_inconsistent_potential():
    coarse = CoarseModel(
        drift=LinearDrift(-1.0),
        diffusion=ConstantDiffusion(math.sqrt(2.0)),
        drift_is_linear_in_theta=True,
        potential=QuadraticPotential(0.5),
    )
    with pytest.raises(ModelError):
        coarse.validate(X_GRID, [1.0])


def test_coarse_validate_catches_small_diffusion():
    coarse = CoarseModel(drift=LinearDrift(-1.0), diffusion=ConstantDiffusion(1e-10))
    with pytest.raises(ModelError):
        coarse.validate(X_GRID, [1.0])


def test_empty_theta_interval_rejected():
    with pytest.raises(ModelError):
        CoarseModel(drift=LinearDrift(-1.0), diffusion=ConstantDiffusion(1.0), theta_interval=(2.0, 1.0))


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_catalog_drift_matches_quadrature(multiscale_entry, langevin_entry, averaging_entry, theta):
    for entry in (multiscale_entry, langevin_entry):
        coeffs = homogenized_coefficients(entry, theta, X_GRID)
        np.testing.assert_allclose(coeffs.drift, entry.coarse.drift(X_GRID, theta), atol=1e-6)
        np.testing.assert_allclose(coeffs.diffusion, entry.coarse.diffusion(X_GRID), atol=1e-6)
    drift, diffusion = averaged_coefficients(averaging_entry.multiscale, theta, X_GRID)
    np.testing.assert_allclose(drift, averaging_entry.coarse.drift(X_GRID, theta), atol=1e-6)
    np.testing.assert_allclose(diffusion, averaging_entry.coarse.diffusion(X_GRID), atol=1e-6)


def test_averaging_stationary_moments():
    m = avg_ou_stationary_moments(1.0, 0.1)
    assert m["cov_xy"] == pytest.approx(0.1 / 1.1)
    assert m["var_x"] == pytest.approx(1.0 + 0.1 / 1.1)
    assert m["theta_limit"] == pytest.approx(0.916667, abs=1e-6)

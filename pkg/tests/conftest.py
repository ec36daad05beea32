import math

import numpy as np
import pytest
from scipy.special import i0

from multiscale_mle.sde_models import (
    CoarseModel,
    ConstantDiffusion,
    LinearDrift,
    QuadraticPotential,
    build_entry,
)


def bessel_k(beta: float) -> float:
    """Homogenized coefficient of p = cos(2 pi y): 1 / I0(beta)^2."""
    return 1.0 / i0(beta) ** 2


@pytest.fixture(scope="session")
def k_cos() -> float:
    return bessel_k(1.0)


@pytest.fixture(scope="session")
def multiscale_entry():
    return build_entry("MultiscalePotential1D", theta0=1.0, epsilon=0.1, beta=1.0, p_coeffs=[1.0])


@pytest.fixture(scope="session")
def flat_multiscale_entry():
    return build_entry("MultiscalePotential1D", theta0=1.0, epsilon=0.1, beta=1.0, p_coeffs=[0.0])


@pytest.fixture(scope="session")
def langevin_entry():
    return build_entry("LangevinHighFriction", theta0=1.0, epsilon=0.1, beta=1.0)


@pytest.fixture(scope="session")
def averaging_entry():
    return build_entry("AvgOuModulated", theta0=1.0, epsilon=0.1)


@pytest.fixture
def ou_model() -> CoarseModel:
    """dX = -theta X dt + sqrt(2) dW."""
    return CoarseModel(
        drift=LinearDrift(-1.0),
        diffusion=ConstantDiffusion(math.sqrt(2.0)),
        theta_interval=(0.05, 10.0),
        drift_is_linear_in_theta=True,
        potential=QuadraticPotential(-0.5),
        invariant_density=lambda x, th: np.exp(-0.5 * th * np.asarray(x) ** 2),
        name="ou",
    )

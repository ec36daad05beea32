import math

import numpy as np
import pytest

from multiscale_mle.errors import ReplicateError, SimulationBlowUp, StepLimitExceeded
from multiscale_mle.likelihood import mean_square_increment_rate
from multiscale_mle.sde_models import (
    AffineField,
    CoarseModel,
    ConstantDiffusion,
    FastDomain,
    FunctionField,
    LinearDrift,
    MultiscaleModel,
    Regime,
    ZERO,
    constant_field,
)
from multiscale_mle.simulator import (
    Path,
    ReplicateSpec,
    derive_seed,
    run_replicates,
    simulate_coarse,
    simulate_multiscale,
    step_size,
    stationary_draw,
    subsample,
)


def _path(n_points: int, dt: float) -> Path:
    return Path(t0=0.0, dt=dt, slow=np.arange(n_points, dtype=float), fast=None, epsilon=0.1, seed=0, model_name="ramp")


def test_step_size_follows_regime(multiscale_entry, averaging_entry):
    assert step_size(multiscale_entry.multiscale, 100) == pytest.approx(1e-4)
    assert step_size(averaging_entry.multiscale, 100) == pytest.approx(1e-3)


def test_multiscale_path_shape(multiscale_entry):
    path = simulate_multiscale(multiscale_entry.multiscale, 0.01, 100, seed=3)
    assert path.dt == pytest.approx(1e-4)
    assert len(path) == 101
    assert path.fast is not None and len(path.fast) == 101
    assert path.horizon == pytest.approx(0.01)


def test_slow_variable_frozen_without_slow_forcing():
    model = MultiscaleModel(
        regime=Regime.HOMOGENIZATION,
        f0=ZERO,
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
    path = simulate_multiscale(model, 1.0, 10, x0=0.7, y0=0.0, seed=1)
    assert np.all(path.slow == 0.7)
    assert np.all(np.isfinite(path.fast))


def test_same_seed_same_path(multiscale_entry):
    a = simulate_multiscale(multiscale_entry.multiscale, 0.5, 100, seed=42)
    b = simulate_multiscale(multiscale_entry.multiscale, 0.5, 100, seed=42)
    c = simulate_multiscale(multiscale_entry.multiscale, 0.5, 100, seed=43)
    assert np.array_equal(a.slow, b.slow)
    assert np.array_equal(a.fast, b.fast)
    assert not np.array_equal(a.slow, c.slow)


def test_python_loop_matches_compiled_kernel(averaging_entry):
    compiled = averaging_entry.multiscale
    generic = MultiscaleModel(
        regime=compiled.regime,
        f0=compiled.f0,
        f1=FunctionField(lambda x, y, th: -th * x + y, depends_on_theta=True),
        g0=compiled.g0,
        g1=compiled.g1,
        alpha0=compiled.alpha0,
        alpha1=compiled.alpha1,
        beta=compiled.beta,
        epsilon=compiled.epsilon,
        fast_domain=compiled.fast_domain,
        true_theta=compiled.true_theta,
    )
    a = simulate_multiscale(compiled, 1.0, 10, x0=0.5, y0=-0.2, seed=9)
    b = simulate_multiscale(generic, 1.0, 10, x0=0.5, y0=-0.2, seed=9)
    np.testing.assert_allclose(a.slow, b.slow, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(a.fast, b.fast, rtol=1e-12, atol=1e-12)


def test_resolution_factor_floor(multiscale_entry):
    with pytest.raises(ValueError):
        simulate_multiscale(multiscale_entry.multiscale, 1.0, 5)


def test_step_limit(ou_model):
    with pytest.raises(StepLimitExceeded):
        simulate_coarse(ou_model, 1.0, 1000.0, 1e-3, x0=0.0, max_steps=1000)


def test_coarse_argument_checks(ou_model):
    with pytest.raises(ValueError):
        simulate_coarse(ou_model, 1.0, 1.0, 0.0, x0=0.0)
    with pytest.raises(ValueError):
        simulate_coarse(ou_model, 1.0, 0.05, 0.01, x0=0.0)


def test_blow_up_reports_step():
    exploding = CoarseModel(drift=LinearDrift(1.0), diffusion=ConstantDiffusion(1.0))
    with pytest.raises(SimulationBlowUp) as info:
        simulate_coarse(exploding, 1e4, 1000.0, 1.0, x0=1.0)
    assert 0 < info.value.step_index < 1000


def test_deterministic_decay():
    model = CoarseModel(drift=LinearDrift(-1.0), diffusion=ConstantDiffusion(0.0))
    path = simulate_coarse(model, 1.0, 1.0, 1e-4, x0=1.0)
    assert path.slow[-1] == pytest.approx(math.exp(-1.0), abs=1e-3)


def test_quadratic_variation_rate(ou_model):
    path = simulate_coarse(ou_model, 1.0, 100.0, 1e-3, seed=5)
    assert mean_square_increment_rate(path) == pytest.approx(2.0, rel=0.05)


def test_ou_stationary_variance(ou_model):
    path = simulate_coarse(ou_model, 1.0, 2000.0, 1e-2, seed=11)
    assert np.var(path.slow) == pytest.approx(1.0, abs=0.15)


def test_pure_diffusion_has_no_drift(ou_model):
    spec = ReplicateSpec(base_seed=7, n_replicates=200)
    finals = run_replicates(spec, lambda s: simulate_coarse(ou_model, 0.0, 1.0, 1e-2, x0=0.0, seed=s).slow[-1], workers=1)
    assert abs(finals.mean()) < 4.0 * math.sqrt(2.0 / 200)


def test_stationary_draw_inverts_cdf():
    gauss = lambda x: np.exp(-0.5 * np.asarray(x) ** 2)
    assert stationary_draw(gauss, 0.5) == pytest.approx(0.0, abs=1e-3)
    assert stationary_draw(gauss, 0.8413447460685429) == pytest.approx(1.0, abs=1e-3)


def test_subsample_stride():
    series = subsample(_path(10_001, 1e-4), 0.1)
    assert series.stride == 1000
    assert series.n_count == 11
    assert series.delta == pytest.approx(0.1)
    np.testing.assert_array_equal(series.values, np.arange(0, 10_001, 1000, dtype=float))


def test_subsample_snaps_delta():
    path = _path(3001, 3e-4)
    series = subsample(path, 0.1)
    assert series.stride == 333
    assert series.delta == pytest.approx(0.0999)
    assert series.n_count == (len(path) - 1) // 333 + 1


def test_subsample_at_native_step_is_identity():
    path = _path(50, 0.01)
    series = subsample(path, 0.01)
    assert series.n_count == len(path)
    np.testing.assert_array_equal(series.values, path.slow)


def test_subsample_rejects_bad_delta():
    path = _path(10, 0.01)
    with pytest.raises(ValueError):
        subsample(path, 0.001)
    with pytest.raises(ValueError):
        subsample(path, 1.0)


def test_drop_burn_in():
    path = _path(101, 0.1)
    trimmed = path.drop_burn_in(0.1)
    assert len(trimmed) == 91
    assert trimmed.t0 == pytest.approx(1.0)
    assert trimmed.slow[0] == 10.0
    with pytest.raises(ValueError):
        path.drop_burn_in(0.5)


def test_derived_seeds_are_distinct():
    seeds = ReplicateSpec(base_seed=12345, n_replicates=1000).seeds()
    assert len(set(seeds)) == 1000
    assert seeds[0] == 12345
    assert derive_seed(12345, 17) == seeds[17]
    assert all(0 <= s < 2**64 for s in seeds)


def test_replicates_in_order_regardless_of_workers():
    spec = ReplicateSpec(base_seed=3, n_replicates=12)
    job = lambda s: np.random.default_rng(s).standard_normal()
    serial = run_replicates(spec, job, workers=1)
    pooled = run_replicates(spec, job, workers=4)
    np.testing.assert_array_equal(serial, pooled)
    single = run_replicates(ReplicateSpec(base_seed=3, n_replicates=1), job)
    assert single[0] == job(3)


def test_replicate_failure_names_lowest_index():
    spec = ReplicateSpec(base_seed=0, n_replicates=6)
    bad = set(spec.seeds()[2:])

    def job(seed):
        if seed in bad:
            raise RuntimeError("boom")
        return 1.0

    with pytest.raises(ReplicateError) as info:
        run_replicates(spec, job, workers=3)
    assert info.value.index == 2
    assert info.value.seed == spec.seeds()[2]
    assert isinstance(info.value.cause, RuntimeError)

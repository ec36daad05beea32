import json
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from multiscale_mle.cli import EXIT_CONFIG, EXIT_INCONCLUSIVE, EXIT_NUMERICAL, EXIT_OK, exit_code, main
from multiscale_mle.errors import (
    ConfigError,
    InconclusiveCalibrationError,
    ModelError,
    ReplicateError,
    SimulationBlowUp,
    StepLimitExceeded,
)
from multiscale_mle.experiments import ESTIMATE_FIELDS, _sweep_rows
from multiscale_mle.outputs import BIAS_COLUMNS, ESTIMATE_COLUMNS, LIMITS_COLUMNS, SWEEP_COLUMNS, read_meta

LANGEVIN = """
entry = LangevinHighFriction
epsilon = 0.1
T = 1
resolution_factor = 10
replicates = 1
"""

AVERAGING = """
entry = AvgOuModulated
epsilon = 0.1
T = 20
resolution_factor = 10
alphas = 0.5
replicates = 2
workers = 2
"""


def _config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def _header(path):
    return path.read_text(encoding="utf-8").splitlines()[0].split(",")


def test_simulate_writes_path_and_meta(tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", _config(tmp_path, LANGEVIN), "--out", str(out)]) == EXIT_OK
    csv = out / "path_000.csv"
    assert _header(csv) == ["t", "x", "y"]
    df = pd.read_csv(csv)
    assert len(df) == 1001
    meta = read_meta(out / "path_000.meta")
    assert meta["model"] == "LangevinHighFriction"
    assert int(meta["rows"]) == 1001
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "simulate"
    assert manifest["seeds"] == [0]
    assert "Output dir:" in capsys.readouterr().out


def test_simulate_is_deterministic(tmp_path):
    cfg = _config(tmp_path, LANGEVIN)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "5"])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "5"])
    assert (tmp_path / "a" / "path_000.csv").read_bytes() == (tmp_path / "b" / "path_000.csv").read_bytes()


def test_estimate_table(tmp_path):
    out = tmp_path / "est"
    assert main(["estimate", "--config", _config(tmp_path, AVERAGING), "--out", str(out)]) == EXIT_OK
    df = pd.read_csv(out / "estimates.csv")
    assert list(df.columns) == list(ESTIMATE_COLUMNS)
    assert len(df) == 2 * 2 * 2
    assert set(df["method"]) == {"ContinuousLinear", "DiscreteLinear", "ModifiedScan"}


def test_sweep_rerun_from_manifest(tmp_path):
    first = tmp_path / "first"
    assert main(["sweep", "--config", _config(tmp_path, AVERAGING), "--out", str(first)]) == EXIT_OK
    assert _header(first / "sweep.csv") == list(SWEEP_COLUMNS)
    assert _header(first / "sweep_modified.csv") == list(SWEEP_COLUMNS)
    second = tmp_path / "second"
    assert main(["sweep", "--config", str(first / "manifest.json"), "--out", str(second)]) == EXIT_OK
    for name in ("sweep.csv", "sweep_modified.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_limits_of_langevin(tmp_path):
    out = tmp_path / "lim"
    assert main(["limits", "--config", _config(tmp_path, LANGEVIN), "--out", str(out)]) == EXIT_OK
    assert _header(out / "limits.csv") == list(LIMITS_COLUMNS)
    results = json.loads((out / "manifest.json").read_text(encoding="utf-8"))["results"]
    assert results["coarse_argmax"] == pytest.approx(1.0, abs=1e-5)
    assert results["full_argmax_at_boundary"]


def test_bias_without_fast_potential(tmp_path):
    out = tmp_path / "bias"
    cfg = _config(tmp_path, "entry = MultiscalePotential1D\np_coeffs = 0.0\nreplicates = 2\n")
    assert main(["bias", "--config", cfg, "--out", str(out)]) == EXIT_OK
    df = pd.read_csv(out / "bias.csv")
    assert list(df.columns) == list(BIAS_COLUMNS)
    assert (df["e_inf_formula_magnitude"] == 0.0).all()
    assert (df["e_inf_simulated"] == 0.0).all()
    assert df["ratio"].isna().all()
    assert (df["native_step_correction"] == 0.0).all()
    assert set(df["sign_agreement"]) == {"zero"}


def test_bias_inconclusive_with_one_replicate(tmp_path):
    out = tmp_path / "bias"
    cfg = _config(tmp_path, LANGEVIN.replace("T = 1", "T = 2") + "coarse_dt = 0.01\ntheta_grid = 1.0\n")
    assert main(["bias", "--config", cfg, "--out", str(out)]) == EXIT_INCONCLUSIVE
    assert (out / "bias.csv").exists()
    df = pd.read_csv(out / "bias.csv")
    assert df["sign_agreement"].tolist() == ["inconclusive"]
    # theta / (4 resolution_factor) for the Langevin entry
    assert df["native_step_correction"].tolist() == [pytest.approx(0.025, rel=1e-4)]
    assert np.isfinite(df["ratio"]).all()
    calibration = json.loads((out / "manifest.json").read_text(encoding="utf-8"))["results"]["calibration"]
    assert calibration[0]["native_step_correction"] == pytest.approx(0.025, rel=1e-4)
    assert "ratio" in calibration[0]


def test_bias_rejects_averaging(tmp_path):
    cfg = _config(tmp_path, AVERAGING)
    assert main(["bias", "--config", cfg, "--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_unknown_key_is_a_config_error(tmp_path):
    cfg = _config(tmp_path, "colour = blue\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_step_limit_is_a_numerical_failure(tmp_path):
    cfg = _config(tmp_path, LANGEVIN + "max_steps = 10\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "x")]) == EXIT_NUMERICAL


def test_sweep_row_keeps_unclipped_mean():
    estimates = np.zeros((2, 1, 2, len(ESTIMATE_FIELDS)))
    col = {name: i for i, name in enumerate(ESTIMATE_FIELDS)}
    estimates[:, 0, 0, col["delta"]] = 1e-4
    estimates[:, 0, 0, col["theta_hat"]] = (0.05, 0.1)
    estimates[:, 0, 0, col["unconstrained"]] = (-0.3, 0.1)
    estimates[:, 0, 0, col["at_boundary"]] = (1.0, 0.0)
    estimates[:, 0, 1, col["unconstrained"]] = np.nan
    (linear,) = _sweep_rows(estimates, (0.0,), 0)
    assert linear["theta_hat_mean"] == pytest.approx(0.075)
    assert linear["unconstrained_mean"] == pytest.approx(-0.1)
    assert linear["n_clipped"] == 1
    (modified,) = _sweep_rows(estimates, (0.0,), 1)
    assert np.isnan(modified["unconstrained_mean"])


def test_sweep_reports_clipping(tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", _config(tmp_path, LANGEVIN), "--out", str(out)]) == EXIT_OK
    df = pd.read_csv(out / "sweep.csv")
    row = df[df["alpha"] == 0.0].iloc[0]
    assert np.isfinite(row["unconstrained_mean"])
    assert 0 <= row["n_clipped"] <= row["n_replicates"]
    if row["unconstrained_mean"] < 0.05:
        assert row["n_clipped"] == 1
        assert row["theta_hat_mean"] == pytest.approx(0.05)


@pytest.mark.parametrize(
    "exc,code",
    [
        (ConfigError("x"), EXIT_CONFIG),
        (ModelError("x"), EXIT_CONFIG),
        (SimulationBlowUp(3), EXIT_NUMERICAL),
        (StepLimitExceeded("x"), EXIT_NUMERICAL),
        (ReplicateError(2, 7, ModelError("x")), EXIT_CONFIG),
        (InconclusiveCalibrationError(SimpleNamespace(estimate=0.0, standard_error=1.0)), EXIT_INCONCLUSIVE),
    ],
)
def test_exit_codes(exc, code):
    assert exit_code(exc) == code


def test_missing_subcommand_exits():
    with pytest.raises(SystemExit):
        main([])

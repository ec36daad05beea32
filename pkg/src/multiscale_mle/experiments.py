"""
Orchestration behind the CLI subcommands: simulate replicates, estimate at each
subsampling rate, aggregate sweeps, tabulate limits and bias terms, and record
everything in the output directory with a manifest.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .config import ExperimentConfig
from .errors import InconclusiveCalibrationError, ModelError, ReplicateError
from .homogenize import (
    asymptotic_limits,
    calibrate_e_infinity_sign,
    coarse_limit_function,
    e_infinity_magnitude,
    native_step_excess,
    simulated_limit_differences,
    summarize_differences,
)
from .likelihood import LikelihoodKind, mle_linear, mle_scan
from .outputs import (
    BIAS_COLUMNS,
    ESTIMATE_COLUMNS,
    LIMITS_COLUMNS,
    SWEEP_COLUMNS,
    write_manifest,
    write_path,
    write_table,
)
from .paths import ensure_output_dir, get_path_csv, get_table_path
from .sde_models import EntryName, ModelCatalogEntry, Regime, build_entry
from .simulator import ReplicateSpec, run_replicates, simulate_multiscale, subsample

logger = logging.getLogger(__name__)

# per (replicate, alpha, method); unconstrained is nan for the scan
ESTIMATE_FIELDS = (
    "delta", "theta_hat", "loglik_at_max", "A_sum", "B_sum", "degenerate", "at_boundary", "unconstrained",
)
METHODS = ("linear", "modified")


@dataclass
class RunSummary:
    command: str
    out_dir: Path
    files: list[Path] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    results: dict[str, Any] = field(default_factory=dict)
    steps: int = 0
    wall_time: float = 0.0


def build_entry_from_config(cfg: ExperimentConfig) -> ModelCatalogEntry:
    return build_entry(cfg.entry, cfg.theta0, cfg.epsilon, cfg.beta_inv, cfg.p_coeffs, cfg.theta_interval)


def replicate_spec(cfg: ExperimentConfig) -> ReplicateSpec:
    return ReplicateSpec(cfg.base_seed, cfg.replicates, cfg.burn_in_fraction)


def _finish(summary: RunSummary, cfg: ExperimentConfig, started: float) -> RunSummary:
    summary.wall_time = time.perf_counter() - started
    summary.files.append(write_manifest(summary.out_dir, summary.command, cfg.as_dict(), summary.seeds, summary.results))
    return summary


def run_simulate(cfg: ExperimentConfig, out_dir: Path) -> RunSummary:
    """One path dump (t,x[,y] + .meta) per replicate, paths started stationary."""
    started = time.perf_counter()
    entry = build_entry_from_config(cfg)
    spec = replicate_spec(cfg)
    summary = RunSummary("simulate", ensure_output_dir(out_dir), seeds=spec.seeds())
    for i, seed in enumerate(summary.seeds):
        try:
            path = simulate_multiscale(
                entry.multiscale, cfg.T, cfg.resolution_factor, seed=seed,
                keep_fast=cfg.keep_fast, max_steps=cfg.max_steps,
            )
        except Exception as exc:
            raise ReplicateError(i, seed, exc) from exc
        summary.steps += len(path) - 1
        summary.files.append(write_path(path, get_path_csv(summary.out_dir, i), cfg.csv_stride, cfg.keep_fast))
        summary.results.setdefault("dt", path.dt)
    summary.results["steps"] = summary.steps
    return _finish(summary, cfg, started)


def _estimate_job(entry: ModelCatalogEntry, cfg: ExperimentConfig):
    """seed -> array[alpha index, method, ESTIMATE_FIELDS]; alpha index 0 is the unsubsampled pseudo-row."""
    coarse = entry.coarse

    def job(seed: int) -> np.ndarray:
        path = simulate_multiscale(
            entry.multiscale, cfg.T, cfg.resolution_factor, seed=seed,
            keep_fast=False, max_steps=cfg.max_steps,
        ).drop_burn_in(cfg.burn_in_fraction)
        out = np.empty((len(cfg.alphas) + 1, len(METHODS), len(ESTIMATE_FIELDS)))
        for a, alpha in enumerate((0.0, *cfg.alphas)):
            data = path if alpha == 0.0 else subsample(path, cfg.epsilon**alpha)
            delta = path.dt if alpha == 0.0 else data.delta
            for m, result in enumerate((mle_linear(data, coarse), mle_scan(data, coarse, LikelihoodKind.MODIFIED))):
                out[a, m] = (
                    delta, result.theta_hat, result.loglik_at_max, result.A_sum, result.B_sum,
                    float(result.degenerate), float(result.at_boundary),
                    math.nan if result.unconstrained_theta_hat is None else result.unconstrained_theta_hat,
                )
        return out

    return job


def _run_estimates(cfg: ExperimentConfig, entry: ModelCatalogEntry) -> np.ndarray:
    spec = replicate_spec(cfg)
    logger.info("%s: %d replicates, alphas %s", entry.name.value, cfg.replicates, list(cfg.alphas))
    return run_replicates(spec, _estimate_job(entry, cfg), cfg.worker_count)


def run_estimate(cfg: ExperimentConfig, out_dir: Path) -> RunSummary:
    """Per-replicate estimates at delta = dt and delta = eps^alpha."""
    started = time.perf_counter()
    entry = build_entry_from_config(cfg)
    summary = RunSummary("estimate", ensure_output_dir(out_dir), seeds=replicate_spec(cfg).seeds())
    estimates = _run_estimates(cfg, entry)

    rows = []
    alphas = (0.0, *cfg.alphas)
    methods = ("DiscreteLinear", "ModifiedScan")
    for r, seed in enumerate(summary.seeds):
        for a, alpha in enumerate(alphas):
            for m, method in enumerate(methods):
                rec = dict(zip(ESTIMATE_FIELDS, estimates[r, a, m]))
                name = "ContinuousLinear" if (alpha == 0.0 and m == 0) else method
                rows.append({
                    "replicate": r,
                    "seed": seed,
                    "alpha": alpha,
                    "delta": rec["delta"],
                    "method": name,
                    "theta_hat": rec["theta_hat"],
                    "loglik_at_max": rec["loglik_at_max"],
                    "A_sum": rec["A_sum"],
                    "B_sum": rec["B_sum"],
                    "degenerate": bool(rec["degenerate"]),
                    "at_boundary": bool(rec["at_boundary"]),
                })
    summary.files.append(write_table(rows, get_table_path(summary.out_dir, "estimates"), ESTIMATE_COLUMNS))
    summary.results["rows"] = len(rows)
    return _finish(summary, cfg, started)


def _sweep_rows(estimates: np.ndarray, alphas, method_index: int) -> list[dict]:
    theta_col = ESTIMATE_FIELDS.index("theta_hat")
    free_col = ESTIMATE_FIELDS.index("unconstrained")
    clip_col = ESTIMATE_FIELDS.index("at_boundary")
    rows = []
    for a, alpha in enumerate(alphas):
        values = estimates[:, a, method_index, theta_col]
        free = estimates[:, a, method_index, free_col]
        n = len(values)
        se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        rows.append({
            "alpha": alpha,
            "delta": float(estimates[0, a, method_index, 0]),
            "theta_hat_mean": float(values.mean()),
            "theta_hat_se": se,
            # closed-form B/A before clipping to the parameter interval
            "unconstrained_mean": float(free.mean()) if np.all(np.isfinite(free)) else math.nan,
            "n_clipped": int(estimates[:, a, method_index, clip_col].sum()),
            "n_replicates": n,
        })
    return rows


def run_sweep(cfg: ExperimentConfig, out_dir: Path) -> RunSummary:
    """
    Replicate means of the linear and modified-likelihood estimators per alpha;
    the alpha = 0 row is the unsubsampled (delta = dt) estimate.
    """
    started = time.perf_counter()
    entry = build_entry_from_config(cfg)
    summary = RunSummary("sweep", ensure_output_dir(out_dir), seeds=replicate_spec(cfg).seeds())
    estimates = _run_estimates(cfg, entry)
    alphas = (0.0, *cfg.alphas)
    linear = _sweep_rows(estimates, alphas, 0)
    modified = _sweep_rows(estimates, alphas, 1)
    summary.files.append(write_table(linear, get_table_path(summary.out_dir, "sweep"), SWEEP_COLUMNS))
    summary.files.append(write_table(modified, get_table_path(summary.out_dir, "sweep_modified"), SWEEP_COLUMNS))
    summary.results["sweep"] = linear
    summary.results["sweep_modified"] = modified
    return _finish(summary, cfg, started)


def calibrated_sign(cfg: ExperimentConfig, entry: ModelCatalogEntry):
    """(sign, report) for entries whose bias sign is not fixed by the closed form."""
    if entry.name is not EntryName.MULTISCALE_POTENTIAL_1D or e_infinity_magnitude(entry, entry.theta0) == 0.0:
        return None, None
    report = calibrate_e_infinity_sign(
        entry, entry.theta0, cfg.T, cfg.replicates, cfg.base_seed, cfg.resolution_factor,
        cfg.coarse_dt, cfg.burn_in_fraction, cfg.worker_count, cfg.max_steps,
    )
    return report.sign, report


def run_limits(cfg: ExperimentConfig, out_dir: Path) -> RunSummary:
    """Tabulate coarse and full limits on theta_grid and record both argmaxes."""
    started = time.perf_counter()
    entry = build_entry_from_config(cfg)
    summary = RunSummary("limits", ensure_output_dir(out_dir))
    sign, report = calibrated_sign(cfg, entry)
    if report is not None:
        summary.seeds = replicate_spec(cfg).seeds()
        summary.results["calibration"] = report.as_dict()
    limits = asymptotic_limits(entry, e_infinity_sign=sign)
    rows = [
        {"theta": th, "coarse_limit": limits.coarse_limit(th), "full_limit": limits.full_limit(th)}
        for th in cfg.theta_grid
    ]
    summary.files.append(write_table(rows, get_table_path(summary.out_dir, "limits"), LIMITS_COLUMNS))
    summary.results.update({
        "coarse_argmax": limits.coarse_argmax.argmax,
        "coarse_argmax_at_boundary": limits.coarse_argmax.at_boundary,
        "full_argmax": limits.full_argmax.argmax,
        "full_argmax_at_boundary": limits.full_argmax.at_boundary,
        "e_infinity_sign": sign,
    })
    return _finish(summary, cfg, started)


def _sign_agreement(report) -> str:
    if report is None:
        return "zero"
    if report.inconclusive:
        return "inconclusive"
    return "agree" if report.agrees_with_formula else "disagree"


def run_bias(cfg: ExperimentConfig, out_dir: Path) -> RunSummary:
    """
    Coarse limit, closed-form E_inf magnitude and simulated E_inf per theta.
    Writes the table first; raises InconclusiveCalibrationError afterwards if any
    theta could not be resolved.
    """
    started = time.perf_counter()
    entry = build_entry_from_config(cfg)
    if entry.regime is not Regime.HOMOGENIZATION:
        raise ModelError("bias needs a homogenization-regime entry")
    summary = RunSummary("bias", ensure_output_dir(out_dir))
    thetas = list(cfg.theta_grid)
    coarse_limit = coarse_limit_function(entry.coarse, entry.theta0)
    magnitudes = [e_infinity_magnitude(entry, th) for th in thetas]

    reports: list[Optional[Any]] = [None] * len(thetas)
    if not entry.reduces_to_coarse:
        spec = replicate_spec(cfg)
        summary.seeds = spec.seeds()
        diffs = simulated_limit_differences(
            entry, thetas, cfg.T, spec, cfg.resolution_factor, cfg.coarse_dt, cfg.worker_count, cfg.max_steps,
        )
        reports = [
            summarize_differences(
                entry, th, diffs[:, j], native_step_excess(entry, th, cfg.resolution_factor),
            )
            for j, th in enumerate(thetas)
        ]

    rows = []
    for th, mag, rep in zip(thetas, magnitudes, reports):
        rows.append({
            "theta": th,
            "coarse_limit": coarse_limit(th),
            "e_inf_formula_magnitude": mag,
            "e_inf_simulated": 0.0 if rep is None else rep.estimate,
            "ratio": math.nan if rep is None else rep.ratio,
            "native_step_correction": 0.0 if rep is None else rep.native_step_correction,
            "sign_agreement": _sign_agreement(rep),
        })
        if rep is not None and not rep.inconclusive and abs(rep.ratio - 1.0) > 0.1:
            logger.warning("theta=%s: simulated |E_inf| is %.3g times the closed-form magnitude", th, rep.ratio)
    summary.files.append(write_table(rows, get_table_path(summary.out_dir, "bias"), BIAS_COLUMNS))
    summary.results["calibration"] = [r.as_dict() for r in reports if r is not None]
    _finish(summary, cfg, started)

    pending = [r for r in reports if r is not None and r.inconclusive]
    if pending:
        raise InconclusiveCalibrationError(pending[0])
    return summary


COMMANDS = {
    "simulate": run_simulate,
    "estimate": run_estimate,
    "sweep": run_sweep,
    "bias": run_bias,
    "limits": run_limits,
}

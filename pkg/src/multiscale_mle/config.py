"""
Load and validate experiment configs (flat key = value text, or the config echo
of a run manifest). Missing keys are filled from DEFAULT_CONFIG.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable, Optional

from .errors import ConfigError

# Default config used for keys a file does not set
DEFAULT_CONFIG: dict[str, Any] = {
    "entry": "MultiscalePotential1D",
    "theta0": 1.0,
    "epsilon": 0.1,
    "beta_inv": 1.0,
    "p_coeffs": [1.0],
    "T": 100.0,
    "resolution_factor": 100,
    "burn_in_fraction": 0.1,
    "alphas": [0.3, 0.5, 0.7],
    "replicates": 8,
    "base_seed": 0,
    "theta_lo": 0.05,
    "theta_hi": 10.0,
    "theta_grid": [0.5, 1.0, 2.0],
    "coarse_dt": 1e-3,
    "workers": 0,
    "max_steps": 100_000_000,
    "csv_stride": 1,
    "output_dir": "",
    "keep_fast": True,
}


def _to_float(value: Any) -> float:
    out = float(value)
    if not math.isfinite(out):
        raise ValueError(f"{value!r} is not finite")
    return out


def _to_int(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError("expected an integer")
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"{value!r} is not an integer")
        return int(value)
    return int(str(value).strip(), 0)


def _to_float_list(value: Any) -> list[float]:
    if isinstance(value, str):
        parts = [v for v in (s.strip() for s in value.split(",")) if v]
    else:
        parts = list(value)
    return [_to_float(v) for v in parts]


def _to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    key = str(value).strip().lower()
    if key in ("1", "true", "yes", "on"):
        return True
    if key in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{value!r} is not a boolean")


CONVERTERS: dict[str, Callable[[Any], Any]] = {
    "entry": lambda v: str(v).strip(),
    "theta0": _to_float,
    "epsilon": _to_float,
    "beta_inv": _to_float,
    "p_coeffs": _to_float_list,
    "T": _to_float,
    "resolution_factor": _to_int,
    "burn_in_fraction": _to_float,
    "alphas": _to_float_list,
    "replicates": _to_int,
    "base_seed": _to_int,
    "theta_lo": _to_float,
    "theta_hi": _to_float,
    "theta_grid": _to_float_list,
    "coarse_dt": _to_float,
    "workers": _to_int,
    "max_steps": _to_int,
    "csv_stride": _to_int,
    "output_dir": lambda v: str(v).strip(),
    "keep_fast": _to_bool,
}


@dataclass(frozen=True)
class ExperimentConfig:
    entry: str
    theta0: float
    epsilon: float
    beta_inv: float
    p_coeffs: tuple[float, ...]
    T: float
    resolution_factor: int
    burn_in_fraction: float
    alphas: tuple[float, ...]
    replicates: int
    base_seed: int
    theta_lo: float
    theta_hi: float
    theta_grid: tuple[float, ...]
    coarse_dt: float
    workers: int
    max_steps: int
    csv_stride: int
    output_dir: str
    keep_fast: bool

    def __post_init__(self) -> None:
        if not self.T > 0.0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        if not all(0.0 < a <= 1.0 for a in self.alphas):
            raise ConfigError(f"alphas must lie in (0, 1], got {list(self.alphas)}")
        if not self.theta_lo < self.theta_hi:
            raise ConfigError(f"theta_lo must be < theta_hi, got [{self.theta_lo}, {self.theta_hi}]")
        if not 0.0 <= self.burn_in_fraction < 0.5:
            raise ConfigError(f"burn_in_fraction must lie in [0, 0.5), got {self.burn_in_fraction}")
        if not 0 <= self.base_seed < 2**64:
            raise ConfigError("base_seed must be an unsigned 64-bit integer")
        if self.resolution_factor < 10:
            raise ConfigError(f"resolution_factor must be >= 10, got {self.resolution_factor}")
        if not self.coarse_dt > 0.0:
            raise ConfigError("coarse_dt must be positive")
        if self.csv_stride < 1:
            raise ConfigError("csv_stride must be >= 1")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0 (0 = automatic)")

    @property
    def theta_interval(self) -> tuple[float, float]:
        return (self.theta_lo, self.theta_hi)

    @property
    def worker_count(self) -> Optional[int]:
        return self.workers or None

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Apply non-None overrides (CLI flags) through the same normalization."""
        raw = self.as_dict()
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return config_from_mapping(raw)

    def as_dict(self) -> dict[str, Any]:
        out = asdict(self)
        for key in ("p_coeffs", "alphas", "theta_grid"):
            out[key] = list(out[key])
        return out


def parse_config_text(text: str) -> dict[str, str]:
    """Split `key = value` lines; `#` starts a comment."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def normalize_config(raw: dict[str, Any]) -> dict[str, Any]:
    unknown = sorted(set(raw) - set(DEFAULT_CONFIG))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    out: dict[str, Any] = {}
    for key, default in DEFAULT_CONFIG.items():
        if key not in raw:
            out[key] = default
            continue
        try:
            out[key] = CONVERTERS[key](raw[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {raw[key]!r} ({exc})") from exc
    return out


def config_from_mapping(raw: dict[str, Any]) -> ExperimentConfig:
    cfg = normalize_config(raw)
    for key in ("p_coeffs", "alphas", "theta_grid"):
        cfg[key] = tuple(cfg[key])
    names = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in cfg.items() if k in names})


def load_config(path: Optional[Path] = None) -> ExperimentConfig:
    """
    Load a key = value file, or the `config` echo of a manifest.json.
    No path gives DEFAULT_CONFIG.
    """
    if path is None:
        return config_from_mapping({})
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return config_from_mapping(data.get("config", data))
    return config_from_mapping(parse_config_text(text))


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    return str(value)


def save_config(cfg: ExperimentConfig, path: Path) -> None:
    """Write cfg as key = value lines, in DEFAULT_CONFIG order."""
    data = cfg.as_dict()
    lines = [f"{key} = {format_value(data[key])}" for key in DEFAULT_CONFIG]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

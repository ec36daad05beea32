"""
Write result tables (CSV), path dumps with .meta sidecars, and the JSON run manifest.
"""
from __future__ import annotations

import json
import socket
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from . import __version__
from .paths import get_manifest_path, get_meta_path
from .simulator import Path as SimPath

FLOAT_FORMAT = "%.17g"

ESTIMATE_COLUMNS = (
    "replicate", "seed", "alpha", "delta", "method", "theta_hat",
    "loglik_at_max", "A_sum", "B_sum", "degenerate", "at_boundary",
)
SWEEP_COLUMNS = (
    "alpha", "delta", "theta_hat_mean", "theta_hat_se", "unconstrained_mean", "n_clipped", "n_replicates",
)
BIAS_COLUMNS = (
    "theta", "coarse_limit", "e_inf_formula_magnitude", "e_inf_simulated", "ratio",
    "native_step_correction", "sign_agreement",
)
LIMITS_COLUMNS = ("theta", "coarse_limit", "full_limit")


def _hostname() -> str:
    try:
        return socket.gethostname() or "unknown"
    except Exception:
        return "unknown"


def write_table(rows: Union[pd.DataFrame, Iterable[dict]], path: Path, columns: Optional[Sequence[str]] = None) -> Path:
    """CSV with 17 significant digits, '\\n' line ends and minimal quoting."""
    df = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=columns)
    if columns is not None:
        df = df.loc[:, list(columns)]
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_path(path: SimPath, csv_path: Path, stride: int = 1, include_fast: bool = True) -> Path:
    """Dump t,x[,y] every `stride` steps plus a .meta sidecar."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    data = {"t": path.times[::stride], "x": path.slow[::stride]}
    if include_fast and path.fast is not None:
        data["y"] = path.fast[::stride]
    df = pd.DataFrame(data)
    write_table(df, csv_path)
    meta = {
        "model": path.model_name,
        "seed": path.seed,
        "dt": repr(path.dt),
        "epsilon": repr(path.epsilon),
        "stride": stride,
        "rows": len(df),
    }
    get_meta_path(csv_path).write_text(
        "".join(f"{k}: {v}\n" for k, v in meta.items()), encoding="utf-8",
    )
    return csv_path


def read_meta(meta_path: Path) -> dict[str, str]:
    out = {}
    for line in Path(meta_path).read_text(encoding="utf-8").splitlines():
        if ":" in line:
            key, value = line.split(":", 1)
            out[key.strip()] = value.strip()
    return out


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    return value


def write_manifest(
    out_dir: Path,
    command: str,
    config: dict[str, Any],
    seeds: Sequence[int],
    results: Optional[dict[str, Any]] = None,
) -> Path:
    path = get_manifest_path(out_dir)
    manifest = {
        "command": command,
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "host": _hostname(),
        "config": config,
        "seeds": [int(s) for s in seeds],
        "results": results or {},
    }
    path.write_text(json.dumps(_jsonable(manifest), indent=2), encoding="utf-8")
    return path

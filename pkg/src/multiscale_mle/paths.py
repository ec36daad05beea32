"""
Resolve the output folder of a run and the files inside it.
Uses an explicit --out, then the config's output_dir, then environment variable
MULTISCALE_MLE_OUT, then ./runs.
"""
import os
from pathlib import Path
from typing import Optional

ENV_VAR = "MULTISCALE_MLE_OUT"


def get_output_dir(explicit: Optional[str] = None, configured: Optional[str] = None) -> Path:
    """Root output directory for one run."""
    for candidate in (explicit, configured, os.environ.get(ENV_VAR)):
        if candidate:
            return Path(candidate).resolve()
    return (Path.cwd() / "runs").resolve()


def ensure_output_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def get_manifest_path(out_dir: Path) -> Path:
    """manifest.json: config echo, version, seeds, results."""
    return out_dir / "manifest.json"


def get_path_csv(out_dir: Path, replicate: int) -> Path:
    return out_dir / f"path_{replicate:03d}.csv"


def get_meta_path(csv_path: Path) -> Path:
    """Sidecar with the same basename."""
    return csv_path.with_suffix(".meta")


def get_table_path(out_dir: Path, name: str) -> Path:
    return out_dir / f"{name}.csv"

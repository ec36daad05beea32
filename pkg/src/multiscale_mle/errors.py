"""
Exception hierarchy. cli.exit_code maps these onto EXIT_CONFIG, EXIT_NUMERICAL and EXIT_INCONCLUSIVE.
"""
from __future__ import annotations

from typing import Any


class MultiscaleError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MultiscaleError, ValueError):
    """Malformed or inconsistent experiment configuration."""


class ModelError(MultiscaleError, ValueError):
    """A model is inconsistent or outside what the quadrature engine supports."""


class NumericalError(MultiscaleError):
    pass


class SimulationBlowUp(NumericalError):
    """Non-finite state produced by the integrator."""

    def __init__(self, step_index: int, message: str | None = None) -> None:
        self.step_index = int(step_index)
        super().__init__(message or f"non-finite state at step {self.step_index}")


class StepLimitExceeded(NumericalError):
    pass


class NonIntegrableError(NumericalError):
    """exp(-beta V) could not be truncated to a finite window."""


class DegenerateInformationError(NumericalError):
    """A_infinity below the invertibility floor."""


class ReplicateError(MultiscaleError):
    """Wraps the first failing replicate job."""

    def __init__(self, index: int, seed: int, cause: BaseException) -> None:
        self.index = index
        self.seed = seed
        self.cause = cause
        super().__init__(f"replicate {index} (seed {seed}) failed: {cause}")


class InconclusiveCalibrationError(MultiscaleError):
    """Replicate standard error exceeds the simulated bias estimate."""

    def __init__(self, report: Any) -> None:
        self.report = report
        super().__init__(
            f"inconclusive calibration: |E| = {abs(report.estimate):.4g} "
            f"<= standard error {report.standard_error:.4g}"
        )

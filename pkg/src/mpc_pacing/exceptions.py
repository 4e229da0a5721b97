"""Custom exceptions for mpc-pacing."""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from pathlib import Path


class MpcPacingError(Exception):
    """Base exception for mpc-pacing errors."""

    def __init__(self, message: str, cause: Exception | None = None) -> None:
        super().__init__(message)
        self.cause = cause


class ConfigurationError(MpcPacingError):
    """Raised when controller, link, flow or noise parameters are invalid."""

    pass


class ObservationError(MpcPacingError):
    """Raised when an RTT observation violates the controller's preconditions."""

    pass


class SimulationError(MpcPacingError):
    """Raised when a simulation request cannot be run."""

    pass


class ScenarioError(MpcPacingError):
    """Raised for unknown built-in scenarios and unparseable scenario files."""

    def __init__(
        self,
        message: str,
        path: Path | None = None,
        line: int | None = None,
        cause: Exception | None = None,
    ) -> None:
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}", cause)
        self.path = path
        self.line = line


class TraceFormatError(MpcPacingError):
    """Raised when a trace CSV row cannot be parsed."""

    def __init__(
        self, message: str, row: int | None = None, cause: Exception | None = None
    ) -> None:
        prefix = f"row {row}: " if row is not None else ""
        super().__init__(f"{prefix}{message}", cause)
        self.row = row


class StatisticsError(MpcPacingError):
    """Raised when a statistic is requested over too few samples."""

    pass


class ManifestError(MpcPacingError):
    """Raised when a manifest.json cannot be read back."""

    pass

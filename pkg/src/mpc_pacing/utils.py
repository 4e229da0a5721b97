"""Utility functions for mpc-pacing."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

from rich.console import Console
from rich.logging import RichHandler

if TYPE_CHECKING:
    from pathlib import Path

console = Console()


def setup_logging(verbose: bool = False) -> None:
    """Set up logging with appropriate level and formatting.

    Args:
        verbose: Enable verbose (DEBUG) logging if True, otherwise INFO
    """
    level = logging.DEBUG if verbose else logging.INFO

    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=verbose)],
        force=True,
    )


def safe_filename(name: str) -> str:
    """Convert a scenario name to a safe filename stem.

    Args:
        name: The original name

    Returns:
        A filename-safe version of the name
    """
    return "".join(
        char if (char.isascii() and char.isalnum()) or char in "-_." else "_"
        for char in name
    )


def ensure_output_dir(path: Path) -> Path:
    """Create the output directory (and parents) if needed and return it."""
    path.mkdir(parents=True, exist_ok=True)
    return path


def parse_float_list(text: str) -> list[float]:
    """Parse ``"1/16,0.5,2"`` into floats; simple ``a/b`` fractions are allowed.

    Raises:
        ValueError: If an item is neither a number nor a fraction
    """
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "/" in item:
            numerator, denominator = item.split("/", 1)
            values.append(float(numerator) / float(denominator))
        else:
            values.append(float(item))
    if not values:
        raise ValueError(f"no values in {text!r}")
    return values


def parse_int_list(text: str) -> list[int]:
    """Parse ``"1,2,4"`` into integers.

    Raises:
        ValueError: If an item is not an integer
    """
    values = [int(item) for item in text.split(",") if item.strip()]
    if not values:
        raise ValueError(f"no values in {text!r}")
    return values

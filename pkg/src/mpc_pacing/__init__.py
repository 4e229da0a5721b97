"""mpc-pacing: model-predictive pacing-rate control and a bottleneck simulator."""

import importlib.metadata

try:
    __version__: str = importlib.metadata.version("mpc-pacing")
except importlib.metadata.PackageNotFoundError:
    __version__ = "0.0.0+unknown"
__author__ = "mpc-pacing contributors"

from .cli import main

__all__ = ["main"]

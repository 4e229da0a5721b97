"""Run manifests recording what produced a set of output files."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

from .exceptions import ManifestError
from .scenario_file import scenario_to_dict

if TYPE_CHECKING:
    from collections.abc import Sequence

    from .scenarios import Scenario

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def scenario_hash(scenario: Scenario) -> str:
    """sha256 over the canonical JSON form of every scenario field."""
    content = json.dumps(scenario_to_dict(scenario), sort_keys=True, default=str)
    return hashlib.sha256(content.encode()).hexdigest()


@dataclass
class RunManifest:
    scenario_name: str
    scenario_hash: str
    seed: int
    tool_version: str
    warmup: float | None = None
    duration: float | None = None
    started_at: float = field(default_factory=time.time)
    finished_at: float | None = None
    outputs: dict[str, str] = field(default_factory=dict)

    @classmethod
    def for_scenario(cls, scenario: Scenario, tool_version: str) -> RunManifest:
        return cls(
            scenario_name=scenario.name,
            scenario_hash=scenario_hash(scenario),
            seed=scenario.seed,
            tool_version=tool_version,
            warmup=scenario.warmup,
            duration=scenario.duration,
        )

    def add_output(self, kind: str, path: Path) -> None:
        self.outputs[kind] = str(path)

    def finish(self) -> None:
        self.finished_at = time.time()

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def write_manifest(manifest: RunManifest, output_dir: Path) -> Path:
    """Write ``manifest.json`` into the output directory and return its path."""
    path = output_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    logger.debug(f"Wrote manifest to {path}")
    return path


def read_manifest(path: Path) -> RunManifest:
    """Read a manifest written by :func:`write_manifest`.

    Raises:
        ManifestError: If the file is not a manifest
    """
    try:
        data = json.loads(path.read_text())
        return RunManifest(**data)
    except (json.JSONDecodeError, TypeError) as e:
        raise ManifestError(f"{path}: not a run manifest ({e})", cause=e) from e


def recorded_window(trace_path: Path) -> tuple[float, float] | None:
    """Statistics window of the run that wrote ``trace_path``.

    Looks for ``manifest.json`` in the trace's directory; returns ``None``
    when there is none, it lists another trace, or it predates the window
    fields.
    """
    path = trace_path.parent / MANIFEST_NAME
    if not path.is_file():
        return None
    manifest = read_manifest(path)
    recorded = manifest.outputs.get("trace")
    if recorded is None or Path(recorded).name != trace_path.name:
        return None
    if manifest.warmup is None:
        return None
    end = manifest.duration if manifest.duration is not None else math.inf
    logger.debug(f"Using window [{manifest.warmup}, {end}] from {path}")
    return manifest.warmup, end


def scenarios_hash(scenarios: Sequence[Scenario]) -> str:
    """sha256 over the canonical JSON of a list of scenarios, in order."""
    content = json.dumps(
        [scenario_to_dict(scenario) for scenario in scenarios],
        sort_keys=True,
        default=str,
    )
    return hashlib.sha256(content.encode()).hexdigest()

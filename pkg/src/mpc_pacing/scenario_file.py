"""TOML scenario files.

A scenario file mirrors the :class:`~mpc_pacing.scenarios.Scenario` fields::

    name = "table1-capped"
    duration = 300.0
    warmup = 30.0

    [link]
    bottleneck_rate = 40.0
    buffer_capacity = 25
    propagation_rtt = 0.025
    service_burst = 3

    [noise]
    mean_fraction = 0.01
    max_fraction = 0.1
    seed = 0

    [[flows]]
    flow_id = 1
    base_rtt = 0.025
    rate_cap = 3.0

    [flows.controller]
    c1 = 0.2

Omitted optional keys take their defaults; ``rate_cap`` and the
``[link.ack_path]`` table are unbounded when absent, and a flow without
``base_rtt`` uses the link's ``propagation_rtt``.
"""

from __future__ import annotations

import logging
import re
import tomllib
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, NoReturn

import tomli_w

from .controller import ControllerConfig
from .exceptions import ConfigurationError, ScenarioError
from .scenarios import DEFAULT_DURATION, DEFAULT_WARMUP, Scenario
from .sim import DEFAULT_RATE_FLOOR, AckPathSpec, FlowSpec, LinkSpec, NoiseSpec

if TYPE_CHECKING:
    from pathlib import Path

logger = logging.getLogger(__name__)

MIDPOINT = "midpoint"

_TOP_KEYS = {"name", "duration", "warmup", "link", "noise", "flows"}
_LINK_KEYS = {
    "bottleneck_rate",
    "buffer_capacity",
    "propagation_rtt",
    "service_burst",
    "ack_path",
}
_ACK_PATH_KEYS = {"rate", "capacity"}
_NOISE_KEYS = {"mean_fraction", "max_fraction", "seed"}
_FLOW_KEYS = {
    "flow_id",
    "base_rtt",
    "rate_cap",
    "rate_floor",
    "initial_rate",
    "start_time",
    "controller",
}
_CONTROLLER_KEYS = {
    "c1",
    "c2",
    "c3",
    "alpha",
    "tau_d",
    "target_latency",
    "probe_interval",
    "probe_gain_up",
    "probe_gain_down",
    "probe_duration",
    "probing",
    "startup",
    "probe_excess",
    "rise_samples",
    "startup_rise",
    "estimator_min_window",
}

_DECODE_LINE = re.compile(r"line (\d+)")


@dataclass
class _Locator:
    """Map a key back to the source line it appears on."""

    lines: list[str]

    def line_of(
        self, key: str, section: str | None = None, index: int = 0
    ) -> int | None:
        """1-based line of ``key`` inside the ``index``-th ``[section]`` header."""
        start = 0
        if section is not None:
            header = re.compile(rf"^\s*\[{{1,2}}\s*{re.escape(section)}\s*\]{{1,2}}")
            found = [i for i, text in enumerate(self.lines) if header.match(text)]
            if index >= len(found):
                return found[-1] + 1 if found else None
            start = found[index]
        pattern = re.compile(rf"^\s*{re.escape(key)}\s*=")
        for i in range(start, len(self.lines)):
            if pattern.match(self.lines[i]):
                return i + 1
        return start + 1 if section is not None else None


class _Reader:
    """Typed accessors over one TOML table that report source lines on error."""

    def __init__(
        self,
        table: dict[str, Any],
        allowed: set[str],
        where: str,
        locator: _Locator,
        path: Path | None,
        section: str | None = None,
        index: int = 0,
    ) -> None:
        self.table = table
        self.where = where
        self.locator = locator
        self.path = path
        self.section = section
        self.index = index
        for key in table:
            if key not in allowed:
                self.fail(key, f"unknown key {key!r} in {where}")

    def fail(self, key: str, message: str) -> NoReturn:
        line = self.locator.line_of(key, self.section, self.index)
        raise ScenarioError(message, path=self.path, line=line)

    def _missing(self, key: str) -> NoReturn:
        self.fail(key, f"missing required key {key!r} in {self.where}")

    def optional_number(self, key: str) -> float | None:
        if key not in self.table:
            return None
        value = self.table[key]
        if isinstance(value, bool) or not isinstance(value, int | float):
            self.fail(key, f"{self.where}.{key} must be a number, got {value!r}")
        return float(value)

    def number(self, key: str, default: float | None = None) -> float:
        """Numeric value of ``key``; required when no default is given."""
        value = self.optional_number(key)
        if value is not None:
            return value
        if default is None:
            self._missing(key)
        return default

    def integer(self, key: str, default: int | None = None) -> int:
        if key not in self.table:
            if default is None:
                self._missing(key)
            return default
        value = self.table[key]
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(key, f"{self.where}.{key} must be an integer, got {value!r}")
        return value

    def boolean(self, key: str, default: bool) -> bool:
        value = self.table.get(key, default)
        if not isinstance(value, bool):
            self.fail(key, f"{self.where}.{key} must be true or false, got {value!r}")
        return value

    def table_of(self, key: str) -> dict[str, Any] | None:
        value = self.table.get(key)
        if value is not None and not isinstance(value, dict):
            self.fail(key, f"{self.where}.{key} must be a table")
        return value


def _controller_from_dict(reader: _Reader) -> ControllerConfig:
    defaults = ControllerConfig()
    if reader.table.get("target_latency", MIDPOINT) == MIDPOINT:
        target_latency = None
    else:
        target_latency = reader.optional_number("target_latency")

    return ControllerConfig(
        c1=reader.number("c1", defaults.c1),
        c2=reader.number("c2", defaults.c2),
        c3=reader.optional_number("c3"),
        alpha=reader.number("alpha", defaults.alpha),
        tau_d=reader.number("tau_d", defaults.tau_d),
        target_latency=target_latency,
        probe_interval=reader.optional_number("probe_interval"),
        probe_gain_up=reader.number("probe_gain_up", defaults.probe_gain_up),
        probe_gain_down=reader.number("probe_gain_down", defaults.probe_gain_down),
        probe_duration=reader.optional_number("probe_duration"),
        probing=reader.boolean("probing", defaults.probing),
        startup=reader.boolean("startup", defaults.startup),
        probe_excess=reader.number("probe_excess", defaults.probe_excess),
        rise_samples=reader.integer("rise_samples", defaults.rise_samples),
        startup_rise=reader.number("startup_rise", defaults.startup_rise),
        estimator_min_window=reader.optional_number("estimator_min_window"),
    )


def scenario_from_dict(
    data: dict[str, Any], path: Path | None = None, text: str = ""
) -> Scenario:
    """Build and validate a Scenario from parsed TOML data.

    Args:
        data: Parsed TOML document
        path: Source file, for diagnostics
        text: Source text, used to locate offending keys

    Raises:
        ScenarioError: If keys are missing, unknown, mistyped or invalid
    """
    locator = _Locator(text.splitlines())
    top = _Reader(data, _TOP_KEYS, "scenario", locator, path)

    name = data.get("name")
    if not isinstance(name, str) or not name:
        top.fail("name", "scenario needs a non-empty string 'name'")

    link_table = top.table_of("link")
    if link_table is None:
        raise ScenarioError("missing [link] table", path=path)
    link_reader = _Reader(link_table, _LINK_KEYS, "link", locator, path, "link")
    ack_table = link_reader.table_of("ack_path")
    ack_path = None
    if ack_table is not None:
        ack_reader = _Reader(
            ack_table, _ACK_PATH_KEYS, "link.ack_path", locator, path, "link.ack_path"
        )
        ack_path = AckPathSpec(
            rate=ack_reader.number("rate"),
            capacity=ack_reader.integer("capacity"),
        )
    link = LinkSpec(
        bottleneck_rate=link_reader.number("bottleneck_rate"),
        buffer_capacity=link_reader.integer("buffer_capacity"),
        propagation_rtt=link_reader.number("propagation_rtt"),
        ack_path=ack_path,
        service_burst=link_reader.integer("service_burst", 1),
    )

    noise_defaults = NoiseSpec()
    noise_reader = _Reader(
        top.table_of("noise") or {}, _NOISE_KEYS, "noise", locator, path, "noise"
    )
    noise = NoiseSpec(
        mean_fraction=noise_reader.number(
            "mean_fraction", noise_defaults.mean_fraction
        ),
        max_fraction=noise_reader.number("max_fraction", noise_defaults.max_fraction),
        seed=noise_reader.integer("seed", noise_defaults.seed),
    )

    raw_flows = data.get("flows")
    if not isinstance(raw_flows, list) or not raw_flows:
        raise ScenarioError("scenario needs at least one [[flows]] entry", path=path)
    flows = []
    for index, flow_table in enumerate(raw_flows):
        where = f"flows[{index}]"
        if not isinstance(flow_table, dict):
            raise ScenarioError(f"{where} must be a table", path=path)
        flow_reader = _Reader(
            flow_table, _FLOW_KEYS, where, locator, path, "flows", index
        )
        controller_reader = _Reader(
            flow_reader.table_of("controller") or {},
            _CONTROLLER_KEYS,
            f"{where}.controller",
            locator,
            path,
            "flows.controller",
            index,
        )
        flows.append(
            FlowSpec(
                flow_id=flow_reader.integer("flow_id"),
                base_rtt=flow_reader.optional_number("base_rtt"),
                rate_cap=flow_reader.optional_number("rate_cap"),
                rate_floor=flow_reader.number("rate_floor", DEFAULT_RATE_FLOOR),
                controller_config=_controller_from_dict(controller_reader),
                start_time=flow_reader.number("start_time", 0.0),
                initial_rate=flow_reader.optional_number("initial_rate"),
            )
        )

    scenario = Scenario(
        name=name,
        link=link,
        flows=tuple(flows),
        duration=top.number("duration", DEFAULT_DURATION),
        noise=noise,
        warmup=top.number("warmup", DEFAULT_WARMUP),
    )
    try:
        scenario.validate()
    except ConfigurationError as e:
        raise ScenarioError(str(e), path=path, cause=e) from e
    return scenario


def _drop_none(table: dict[str, Any]) -> dict[str, Any]:
    return {key: value for key, value in table.items() if value is not None}


def _controller_to_dict(config: ControllerConfig) -> dict[str, Any]:
    return _drop_none(
        {
            "c1": config.c1,
            "c2": config.c2,
            "c3": config.c3,
            "alpha": config.alpha,
            "tau_d": config.tau_d,
            "target_latency": (
                config.target_latency if config.target_latency is not None else MIDPOINT
            ),
            "probe_interval": config.probe_interval,
            "probe_gain_up": config.probe_gain_up,
            "probe_gain_down": config.probe_gain_down,
            "probe_duration": config.probe_duration,
            "probing": config.probing,
            "startup": config.startup,
            "probe_excess": config.probe_excess,
            "rise_samples": config.rise_samples,
            "startup_rise": config.startup_rise,
            "estimator_min_window": config.estimator_min_window,
        }
    )


def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    """Plain-data form of a scenario, matching the file schema."""
    link: dict[str, Any] = {
        "bottleneck_rate": scenario.link.bottleneck_rate,
        "buffer_capacity": scenario.link.buffer_capacity,
        "propagation_rtt": scenario.link.propagation_rtt,
        "service_burst": scenario.link.service_burst,
    }
    if scenario.link.ack_path is not None:
        link["ack_path"] = {
            "rate": scenario.link.ack_path.rate,
            "capacity": scenario.link.ack_path.capacity,
        }
    return {
        "name": scenario.name,
        "duration": scenario.duration,
        "warmup": scenario.warmup,
        "link": link,
        "noise": {
            "mean_fraction": scenario.noise.mean_fraction,
            "max_fraction": scenario.noise.max_fraction,
            "seed": scenario.noise.seed,
        },
        "flows": [
            _drop_none(
                {
                    "flow_id": flow.flow_id,
                    "base_rtt": flow.base_rtt,
                    "rate_cap": flow.rate_cap,
                    "rate_floor": flow.rate_floor,
                    "initial_rate": flow.initial_rate,
                    "start_time": flow.start_time,
                    "controller": _controller_to_dict(flow.controller_config),
                }
            )
            for flow in scenario.flows
        ],
    }


def load_scenario(path: Path) -> Scenario:
    """Read a scenario file.

    Raises:
        ScenarioError: If the file is missing, unreadable, not valid TOML or
            describes an invalid scenario
    """
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise ScenarioError("scenario file not found", path=path, cause=e) from e
    except (OSError, UnicodeDecodeError) as e:
        raise ScenarioError(
            f"cannot read scenario file: {e}", path=path, cause=e
        ) from e

    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = _DECODE_LINE.search(str(e))
        line = int(match.group(1)) if match else None
        raise ScenarioError(f"invalid TOML: {e}", path=path, line=line, cause=e) from e

    scenario = scenario_from_dict(data, path=path, text=text)
    logger.debug(f"Loaded scenario {scenario.name!r} from {path}")
    return scenario


def dumps_scenario(scenario: Scenario) -> str:
    return tomli_w.dumps(scenario_to_dict(scenario))


def dump_scenario(scenario: Scenario, path: Path) -> None:
    """Write a scenario as TOML readable by :func:`load_scenario`."""
    path.write_text(dumps_scenario(scenario), encoding="utf-8")
    logger.info(f"Wrote scenario {scenario.name!r} to {path}")

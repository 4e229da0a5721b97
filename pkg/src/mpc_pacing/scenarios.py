"""Built-in experiment scenarios and the buffer-size sweep grid."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from .controller import ControllerConfig
from .exceptions import ConfigurationError, ScenarioError
from .sim import FlowSpec, LinkSpec, NoiseSpec

logger = logging.getLogger(__name__)

DEFAULT_BOTTLENECK_RATE = 40.0
DEFAULT_BUFFER_CAPACITY = 25
DEFAULT_BASE_RTT = 0.025
DEFAULT_DURATION = 300.0
DEFAULT_WARMUP = 30.0
UNCAPPED_RATE_MULTIPLE = 10.0
TABLE_SERVICE_BURST = 3

TABLE1_CAPS = (3.0, 7.0, 10.0, 20.0)
TABLE2_RTTS = (0.025, 0.035, 0.045, 0.055)
TABLE2_CAP = 10.0

SWEEP_BOTTLENECK_RATE = 200_000.0
SWEEP_DURATION = 60.0
SWEEP_WARMUP = 10.0
SWEEP_FLOOR_SHARE = 1 / 8
DEFAULT_SWEEP_FRACTIONS = (1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0, 2.0, 4.0, 8.0, 16.0)
DEFAULT_SWEEP_FLOW_COUNTS = (1, 2, 4, 8)

SWEEP_NAME = "sweep"


@dataclass(frozen=True, slots=True)
class Scenario:
    """A complete simulation setup; statistics skip the first ``warmup`` seconds."""

    name: str
    link: LinkSpec
    flows: tuple[FlowSpec, ...]
    duration: float = DEFAULT_DURATION
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    warmup: float = DEFAULT_WARMUP

    def validate(self) -> None:
        """Check the scenario and every nested spec.

        Raises:
            ConfigurationError: If any field is invalid
        """
        if not self.name:
            raise ConfigurationError("scenario name must not be empty")
        if not self.flows:
            raise ConfigurationError(f"scenario {self.name!r} has no flows")
        if not self.duration > 0.0:
            raise ConfigurationError(f"duration must be positive, got {self.duration}")
        if not 0.0 <= self.warmup < self.duration:
            raise ConfigurationError(
                f"warmup must lie in [0, duration), got {self.warmup} "
                f"with duration {self.duration}"
            )
        ids = [flow.flow_id for flow in self.flows]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"flow ids must be unique, got {ids}")
        self.link.validate()
        self.noise.validate()
        for flow in self.flows:
            flow.validate()

    @property
    def seed(self) -> int:
        return self.noise.seed

    @property
    def total_cap(self) -> float:
        return sum(flow.max_rate for flow in self.flows)


class SweepCell(NamedTuple):
    fraction: float
    flow_count: int
    scenario: Scenario


def _round_half_up(value: float) -> int:
    return math.floor(value + 0.5)


def _default_link(
    bottleneck_rate: float = DEFAULT_BOTTLENECK_RATE,
    buffer_capacity: int = DEFAULT_BUFFER_CAPACITY,
    propagation_rtt: float = DEFAULT_BASE_RTT,
    service_burst: int = 1,
) -> LinkSpec:
    return LinkSpec(
        bottleneck_rate=bottleneck_rate,
        buffer_capacity=buffer_capacity,
        propagation_rtt=propagation_rtt,
        service_burst=service_burst,
    )


def _flows(
    rtts: Sequence[float],
    caps: Sequence[float | None],
    bottleneck_rate: float,
) -> tuple[FlowSpec, ...]:
    """Capped flows starting at their cap, uncapped ones at the fair share.

    Uncapped flows get a cap well above the bottleneck rate. Each flow starts
    one bottleneck service time after the previous one so the opening
    packets do not arrive as a single burst.
    """
    fair_share = bottleneck_rate / len(rtts)
    flows = []
    for flow_id, (rtt, cap) in enumerate(zip(rtts, caps, strict=True), start=1):
        rate_cap = cap if cap is not None else UNCAPPED_RATE_MULTIPLE * bottleneck_rate
        flows.append(
            FlowSpec(
                flow_id=flow_id,
                base_rtt=rtt,
                rate_cap=rate_cap,
                controller_config=ControllerConfig(),
                initial_rate=rate_cap if cap is not None else fair_share,
                start_time=(flow_id - 1) / bottleneck_rate,
            )
        )
    return tuple(flows)


def single_flow_scenario(seed: int = 0) -> Scenario:
    """One uncapped flow alone on the 40 packets/s bottleneck."""
    return Scenario(
        name="single",
        link=_default_link(),
        flows=_flows([DEFAULT_BASE_RTT], [None], DEFAULT_BOTTLENECK_RATE),
        noise=NoiseSpec(seed=seed),
    )


def _table_link() -> LinkSpec:
    """The 40 packets/s link of the four-flow tables, served in bursts of three."""
    return _default_link(service_burst=TABLE_SERVICE_BURST)


def table1_scenarios(seed: int = 0) -> tuple[Scenario, Scenario]:
    """Four equal-RTT flows, uncapped and capped at 3/7/10/20 packets/s."""
    rtts = [DEFAULT_BASE_RTT] * len(TABLE1_CAPS)
    uncapped = Scenario(
        name="table1-uncapped",
        link=_table_link(),
        flows=_flows(rtts, [None] * len(rtts), DEFAULT_BOTTLENECK_RATE),
        noise=NoiseSpec(seed=seed),
    )
    capped = Scenario(
        name="table1-capped",
        link=_table_link(),
        flows=_flows(rtts, TABLE1_CAPS, DEFAULT_BOTTLENECK_RATE),
        noise=NoiseSpec(seed=seed),
    )
    return uncapped, capped


def table2_scenarios(seed: int = 0) -> tuple[Scenario, Scenario]:
    """Four flows with RTTs 25/35/45/55 ms, uncapped and capped at 10 packets/s."""
    uncapped = Scenario(
        name="table2-uncapped",
        link=_table_link(),
        flows=_flows(TABLE2_RTTS, [None] * len(TABLE2_RTTS), DEFAULT_BOTTLENECK_RATE),
        noise=NoiseSpec(seed=seed),
    )
    capped = Scenario(
        name="table2-capped",
        link=_table_link(),
        flows=_flows(
            TABLE2_RTTS, [TABLE2_CAP] * len(TABLE2_RTTS), DEFAULT_BOTTLENECK_RATE
        ),
        noise=NoiseSpec(seed=seed),
    )
    return uncapped, capped


def buffer_sweep_cells(
    fractions: Sequence[float] = DEFAULT_SWEEP_FRACTIONS,
    flow_counts: Sequence[int] = DEFAULT_SWEEP_FLOW_COUNTS,
    *,
    bottleneck_rate: float = SWEEP_BOTTLENECK_RATE,
    base_rtt: float = DEFAULT_BASE_RTT,
    duration: float = SWEEP_DURATION,
    warmup: float = SWEEP_WARMUP,
    floor_share: float = SWEEP_FLOOR_SHARE,
    seed: int = 0,
) -> list[SweepCell]:
    """Build the buffer-size grid, ordered by flow count then fraction.

    Every flow is uncapped and starts at its floor of ``floor_share`` times
    the bottleneck rate. Flows leave their base RTT unset so they all take
    the link's propagation RTT, which also sizes the BDP.

    Raises:
        ConfigurationError: If a fraction is not positive or a flow count is
            below one
    """
    for fraction in fractions:
        if not fraction > 0.0:
            raise ConfigurationError(
                f"buffer fractions must be positive, got {fraction}"
            )
    for count in flow_counts:
        if count < 1:
            raise ConfigurationError(f"flow counts must be >= 1, got {count}")
    if not 0.0 < floor_share <= 1.0:
        raise ConfigurationError(f"floor share must lie in (0, 1], got {floor_share}")

    bdp = _default_link(bottleneck_rate, propagation_rtt=base_rtt).bdp
    floor = floor_share * bottleneck_rate
    cap = UNCAPPED_RATE_MULTIPLE * bottleneck_rate
    cells = []
    for count in flow_counts:
        for fraction in fractions:
            capacity = max(1, _round_half_up(fraction * bdp))
            flows = tuple(
                FlowSpec(
                    flow_id=flow_id,
                    rate_cap=cap,
                    rate_floor=floor,
                    controller_config=ControllerConfig(),
                    initial_rate=floor,
                    start_time=(flow_id - 1) / bottleneck_rate,
                )
                for flow_id in range(1, count + 1)
            )
            scenario = Scenario(
                name=f"{SWEEP_NAME}-{fraction:g}bdp-{count}flows",
                link=_default_link(bottleneck_rate, capacity, base_rtt),
                flows=flows,
                duration=duration,
                noise=NoiseSpec(seed=seed),
                warmup=warmup,
            )
            cells.append(SweepCell(fraction, count, scenario))
    logger.debug(f"Built {len(cells)} sweep cells (BDP {bdp} packets)")
    return cells


def buffer_sweep(
    fractions: Sequence[float] = DEFAULT_SWEEP_FRACTIONS,
    flow_counts: Sequence[int] = DEFAULT_SWEEP_FLOW_COUNTS,
    *,
    bottleneck_rate: float = SWEEP_BOTTLENECK_RATE,
    base_rtt: float = DEFAULT_BASE_RTT,
    duration: float = SWEEP_DURATION,
    warmup: float = SWEEP_WARMUP,
    floor_share: float = SWEEP_FLOOR_SHARE,
    seed: int = 0,
) -> list[Scenario]:
    """Scenarios for every (fraction, flow count) pair; see buffer_sweep_cells."""
    cells = buffer_sweep_cells(
        fractions,
        flow_counts,
        bottleneck_rate=bottleneck_rate,
        base_rtt=base_rtt,
        duration=duration,
        warmup=warmup,
        floor_share=floor_share,
        seed=seed,
    )
    return [cell.scenario for cell in cells]


BUILTIN_SCENARIOS: dict[str, Callable[[int], Scenario]] = {
    "single": single_flow_scenario,
    "table1-uncapped": lambda seed: table1_scenarios(seed)[0],
    "table1-capped": lambda seed: table1_scenarios(seed)[1],
    "table2-uncapped": lambda seed: table2_scenarios(seed)[0],
    "table2-capped": lambda seed: table2_scenarios(seed)[1],
}


def builtin_names() -> list[str]:
    """All built-in names, including the sweep grid."""
    return [*BUILTIN_SCENARIOS, SWEEP_NAME]


def get_builtin_scenario(name: str, seed: int = 0) -> Scenario:
    """Look up a single-run built-in scenario.

    Raises:
        ScenarioError: If the name is unknown or names the sweep grid
    """
    if name == SWEEP_NAME:
        raise ScenarioError(f"{name!r} is a grid of scenarios; use the sweep command")
    builder = BUILTIN_SCENARIOS.get(name)
    if builder is None:
        raise ScenarioError(
            f"unknown scenario {name!r} (available: {', '.join(builtin_names())})"
        )
    return builder(seed)


def with_overrides(
    scenario: Scenario,
    *,
    seed: int | None = None,
    duration: float | None = None,
    warmup: float | None = None,
) -> Scenario:
    """Return a validated copy with the given run parameters replaced.

    Raises:
        ConfigurationError: If the result is invalid
    """
    updated = scenario
    if seed is not None:
        updated = replace(updated, noise=replace(updated.noise, seed=seed))
    if duration is not None:
        updated = replace(updated, duration=duration)
    if warmup is not None:
        updated = replace(updated, warmup=warmup)
    updated.validate()
    return updated


BUILTIN_DESCRIPTIONS = {
    "single": "One uncapped flow, 40 packets/s bottleneck, 25 packet buffer",
    "table1-uncapped": "Four 25 ms flows sharing 40 packets/s without caps",
    "table1-capped": "Four 25 ms flows capped at 3/7/10/20 packets/s",
    "table2-uncapped": "Flows with 25/35/45/55 ms RTTs without caps",
    "table2-capped": "Flows with 25/35/45/55 ms RTTs capped at 10 packets/s",
    SWEEP_NAME: "Buffer size grid: BDP fractions x flow counts",
}

"""Discrete-event simulator of paced flows sharing one bottleneck queue.

Flows enqueue packets on the bottleneck buffer at intervals of one over
their current pacing rate. The bottleneck serves ``bottleneck_rate`` packets
per second through a token bucket of ``service_burst`` packets; each
departing packet produces an ACK that returns after the flow's base RTT
plus a truncated exponential noise sample, optionally passing through a
finite ACK buffer first. Buffer
overflow drops the packet and the sender learns of it one base RTT later.
A controller that halves its rate for a low probe is woken at the end of the
probe even when no ACK arrives in the meantime.

Random numbers come from numpy's PCG64 bit generator. The run seed feeds a
``SeedSequence`` that is spawned into one independent stream per flow, so a
(seed, scenario) pair always reproduces the same trace.
"""

from __future__ import annotations

import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .controller import (
    ControllerConfig,
    PacingController,
    RttObservation,
)
from .exceptions import ConfigurationError, ObservationError, SimulationError
from .trace import FlowCounters, Trace, TraceRecord

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

DEFAULT_NOISE_MEAN_FRACTION = 0.01
DEFAULT_NOISE_MAX_FRACTION = 0.10
DEFAULT_RATE_FLOOR = 1.0
NOISE_BLOCK_SIZE = 4096


def bdp_packets(bottleneck_rate: float, base_rtt: float) -> int:
    """Bandwidth-delay product in whole packets (half rounds up), at least one.

    Raises:
        ConfigurationError: If either argument is not positive
    """
    if not bottleneck_rate > 0.0 or not base_rtt > 0.0:
        raise ConfigurationError(
            f"BDP needs positive rate and RTT, got {bottleneck_rate} and {base_rtt}"
        )
    return max(1, math.floor(bottleneck_rate * base_rtt + 0.5))


@dataclass(frozen=True, slots=True)
class AckPathSpec:
    """Finite-rate, finite-buffer return path for ACKs."""

    rate: float
    capacity: int

    def validate(self) -> None:
        if not self.rate > 0.0:
            raise ConfigurationError(f"ACK path rate must be positive, got {self.rate}")
        if self.capacity < 1:
            raise ConfigurationError(
                f"ACK path capacity must be >= 1, got {self.capacity}"
            )


@dataclass(frozen=True, slots=True)
class LinkSpec:
    """Bottleneck link.

    ``propagation_rtt`` is the round trip of flows that do not set their own
    base RTT. ``ack_path`` of ``None`` is an infinite-rate return.
    """

    bottleneck_rate: float
    buffer_capacity: int
    propagation_rtt: float
    ack_path: AckPathSpec | None = None
    service_burst: int = 1

    @property
    def bdp(self) -> int:
        """Bandwidth-delay product over the propagation RTT, in packets."""
        return bdp_packets(self.bottleneck_rate, self.propagation_rtt)

    def validate(self) -> None:
        if not self.bottleneck_rate > 0.0:
            raise ConfigurationError(
                f"bottleneck rate must be positive, got {self.bottleneck_rate}"
            )
        if not isinstance(self.buffer_capacity, int) or self.buffer_capacity < 1:
            raise ConfigurationError(
                f"buffer capacity must be an integer >= 1, got {self.buffer_capacity}"
            )
        if not self.propagation_rtt > 0.0:
            raise ConfigurationError(
                f"propagation RTT must be positive, got {self.propagation_rtt}"
            )
        if not isinstance(self.service_burst, int) or self.service_burst < 1:
            raise ConfigurationError(
                f"service burst must be an integer >= 1, got {self.service_burst}"
            )
        if self.ack_path is not None:
            self.ack_path.validate()


@dataclass(frozen=True, slots=True)
class FlowSpec:
    """One paced sender.

    ``base_rtt`` of ``None`` takes the link's propagation RTT. ``rate_cap`` of
    ``None`` is unbounded; ``initial_rate`` of ``None`` starts the flow at its
    floor.
    """

    flow_id: int
    base_rtt: float | None = None
    rate_cap: float | None = None
    rate_floor: float = DEFAULT_RATE_FLOOR
    controller_config: ControllerConfig = field(default_factory=ControllerConfig)
    start_time: float = 0.0
    initial_rate: float | None = None

    @property
    def max_rate(self) -> float:
        return self.rate_cap if self.rate_cap is not None else math.inf

    @property
    def starting_rate(self) -> float:
        rate = self.initial_rate if self.initial_rate is not None else self.rate_floor
        return min(max(rate, self.rate_floor), self.max_rate)

    def on_link(self, link: LinkSpec) -> FlowSpec:
        """This flow with a missing base RTT filled in from ``link``."""
        if self.base_rtt is not None:
            return self
        return replace(self, base_rtt=link.propagation_rtt)

    def resolved_config(self) -> ControllerConfig:
        """Controller config with this flow's floor and cap applied."""
        return self.controller_config.with_limits(self.rate_floor, self.max_rate)

    def validate(self) -> None:
        if self.base_rtt is not None and not self.base_rtt > 0.0:
            raise ConfigurationError(
                f"flow {self.flow_id}: base RTT must be positive, got {self.base_rtt}"
            )
        if not self.rate_floor > 0.0:
            raise ConfigurationError(
                f"flow {self.flow_id}: rate floor must be positive, "
                f"got {self.rate_floor}"
            )
        if self.rate_cap is not None and self.rate_cap < self.rate_floor:
            raise ConfigurationError(
                f"flow {self.flow_id}: rate cap {self.rate_cap} below "
                f"floor {self.rate_floor}"
            )
        if self.start_time < 0.0:
            raise ConfigurationError(
                f"flow {self.flow_id}: start time must be >= 0, got {self.start_time}"
            )
        try:
            self.resolved_config().validate()
        except ConfigurationError as e:
            raise ConfigurationError(f"flow {self.flow_id}: {e}", cause=e) from e


@dataclass(frozen=True, slots=True)
class NoiseSpec:
    """Truncated exponential ACK noise as fractions of the base RTT."""

    mean_fraction: float = DEFAULT_NOISE_MEAN_FRACTION
    max_fraction: float = DEFAULT_NOISE_MAX_FRACTION
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.mean_fraction <= self.max_fraction:
            raise ConfigurationError(
                "noise requires 0 <= mean_fraction <= max_fraction, got "
                f"{self.mean_fraction} and {self.max_fraction}"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError(
                f"seed must be a 64-bit unsigned integer, got {self.seed}"
            )


class EventKind(IntEnum):
    ENQUEUE = 0
    DEQUEUE = 1
    ACK_DEQUEUE = 2
    ACK = 3
    LOSS_SIGNAL = 4
    PROBE_DEADLINE = 5


class Packet(NamedTuple):
    flow_id: int
    sequence: int
    send_time: float


class SimEvent(NamedTuple):
    """Heap entry; ordered by ``(time, sequence)``."""

    time: float
    sequence: int
    kind: EventKind
    flow_id: int = -1
    packet: Packet | None = None


class ScheduledEvent(NamedTuple):
    time: float
    kind: EventKind
    packet: Packet | None = None


class QueueStep(NamedTuple):
    scheduled: tuple[ScheduledEvent, ...] = ()
    loss: Packet | None = None
    departed: Packet | None = None


class FifoLink:
    """Finite FIFO buffer served at a fixed packet rate.

    Service is metered by a token bucket holding at most ``burst`` tokens and
    refilled at ``rate`` tokens per second; each departure spends one token.
    With ``burst = 1`` a packet entering an idle link departs immediately and
    later packets leave one service time apart. A larger burst lets up to that
    many packets leave back to back after an idle spell, like a link that
    serves aggregates, while the long-run rate stays ``rate``.
    """

    def __init__(
        self,
        rate: float,
        capacity: int,
        dequeue_kind: EventKind = EventKind.DEQUEUE,
        burst: int = 1,
    ) -> None:
        self.rate = rate
        self.capacity = capacity
        self.dequeue_kind = dequeue_kind
        self.burst = float(burst)
        self.buffer: deque[Packet] = deque()
        self.tokens = self.burst
        self.tokens_time = 0.0
        self.dequeue_pending = False

    @property
    def depth(self) -> int:
        return len(self.buffer)

    def _tokens_at(self, now: float) -> float:
        return min(self.burst, self.tokens + (now - self.tokens_time) * self.rate)

    def _next_service(self, now: float, tokens: float) -> float:
        if tokens >= 1.0:
            return now
        return now + (1.0 - tokens) / self.rate

    def enqueue(self, packet: Packet, now: float) -> QueueStep:
        if len(self.buffer) >= self.capacity:
            return QueueStep(loss=packet)
        self.buffer.append(packet)
        if self.dequeue_pending:
            return QueueStep()
        self.dequeue_pending = True
        at = self._next_service(now, self._tokens_at(now))
        return QueueStep(scheduled=(ScheduledEvent(at, self.dequeue_kind),))

    def dequeue(self, now: float) -> QueueStep:
        self.dequeue_pending = False
        if not self.buffer:
            return QueueStep()
        packet = self.buffer.popleft()
        # clamp float residue so a due departure is never pushed back
        self.tokens = max(self._tokens_at(now) - 1.0, 0.0)
        self.tokens_time = now
        if not self.buffer:
            return QueueStep(departed=packet)
        self.dequeue_pending = True
        return QueueStep(
            scheduled=(
                ScheduledEvent(self._next_service(now, self.tokens), self.dequeue_kind),
            ),
            departed=packet,
        )


def queue_step(link: FifoLink, event: SimEvent) -> QueueStep:
    """Apply one enqueue or dequeue event to a FIFO link.

    Enqueue events carry the packet; a full buffer reports it as the loss.
    Dequeue events on an empty buffer are discarded.
    """
    if event.kind is EventKind.ENQUEUE:
        if event.packet is None:
            raise SimulationError("enqueue event without a packet")
        return link.enqueue(event.packet, event.time)
    return link.dequeue(event.time)


def flow_generators(seed: int, count: int) -> list[np.random.Generator]:
    """Spawn one independent PCG64 generator per flow from a single seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def sample_ack_noise(
    noise: NoiseSpec, base_rtt: float, rng: np.random.Generator
) -> float:
    """Draw one additive ACK delay: exponential, truncated at the maximum."""
    if noise.mean_fraction <= 0.0:
        return 0.0
    draw = float(rng.exponential(noise.mean_fraction * base_rtt))
    return min(draw, noise.max_fraction * base_rtt)


def truncated_noise_mean(noise: NoiseSpec, base_rtt: float) -> float:
    """Closed-form mean of the truncated noise, ``m (1 - exp(-c / m))``."""
    mean = noise.mean_fraction * base_rtt
    if mean <= 0.0:
        return 0.0
    cap = noise.max_fraction * base_rtt
    return mean * (1.0 - math.exp(-cap / mean))


class NoiseStream:
    """Block-drawn ACK noise for one flow; same distribution as sample_ack_noise."""

    def __init__(
        self, noise: NoiseSpec, base_rtt: float, rng: np.random.Generator
    ) -> None:
        self.mean = noise.mean_fraction * base_rtt
        self.cap = noise.max_fraction * base_rtt
        self.rng = rng
        self._block: list[float] = []
        self._index = 0

    def next(self) -> float:
        if self.mean <= 0.0:
            return 0.0
        if self._index >= len(self._block):
            draws = self.rng.standard_exponential(NOISE_BLOCK_SIZE) * self.mean
            self._block = np.minimum(draws, self.cap).tolist()
            self._index = 0
        value = self._block[self._index]
        self._index += 1
        return value


class _FlowRuntime:
    """Simulator-side state for one flow."""

    def __init__(
        self,
        spec: FlowSpec,
        base_rtt: float,
        noise: NoiseStream,
        counters: FlowCounters,
    ) -> None:
        self.spec = spec
        self.base_rtt = base_rtt
        self.noise = noise
        self.counters = counters
        self.controller: PacingController | None = None
        self.next_sequence = 0
        self.acks_seen = 0
        self.armed_deadline: float | None = None


class Simulator:
    """Event loop for one scenario run."""

    def __init__(
        self,
        link: LinkSpec,
        flows: Sequence[FlowSpec],
        duration: float,
        noise: NoiseSpec,
        trace_stride: int = 1,
    ) -> None:
        """Validate the inputs and build per-flow state.

        Raises:
            SimulationError: If there are no flows, duplicate flow ids, a
                non-positive duration or stride
            ConfigurationError: If a link, flow or noise spec is invalid
        """
        if not flows:
            raise SimulationError("at least one flow is required")
        if not duration > 0.0:
            raise SimulationError(f"duration must be positive, got {duration}")
        if trace_stride < 1:
            raise SimulationError(f"trace stride must be >= 1, got {trace_stride}")
        ids = [flow.flow_id for flow in flows]
        if len(set(ids)) != len(ids):
            raise SimulationError(f"flow ids must be unique, got {ids}")
        link.validate()
        noise.validate()
        flows = [flow.on_link(link) for flow in flows]
        for flow in flows:
            flow.validate()

        self.link_spec = link
        self.duration = duration
        self.noise = noise
        self.trace_stride = trace_stride
        self.trace = Trace(duration=duration)
        self.bottleneck = FifoLink(
            link.bottleneck_rate, link.buffer_capacity, burst=link.service_burst
        )
        self.ack_link = (
            FifoLink(
                link.ack_path.rate,
                link.ack_path.capacity,
                dequeue_kind=EventKind.ACK_DEQUEUE,
            )
            if link.ack_path is not None
            else None
        )

        generators = flow_generators(noise.seed, len(flows))
        self.flows: dict[int, _FlowRuntime] = {}
        for flow, rng in zip(flows, generators, strict=True):
            base_rtt = flow.base_rtt or link.propagation_rtt
            counters = FlowCounters()
            self.trace.counters[flow.flow_id] = counters
            self.flows[flow.flow_id] = _FlowRuntime(
                flow, base_rtt, NoiseStream(noise, base_rtt, rng), counters
            )

        self._heap: list[SimEvent] = []
        self._sequence = 0
        self._last_event: tuple[float, int] = (-math.inf, -1)

    def _push(
        self,
        time: float,
        kind: EventKind,
        flow_id: int = -1,
        packet: Packet | None = None,
    ) -> None:
        event = SimEvent(time, self._sequence, kind, flow_id, packet)
        heapq.heappush(self._heap, event)
        self._sequence += 1

    def _push_steps(self, step: QueueStep) -> None:
        for scheduled in step.scheduled:
            self._push(scheduled.time, scheduled.kind)

    def run(self) -> Trace:
        """Process events in (time, sequence) order until the duration."""
        for runtime in self.flows.values():
            self._push(runtime.spec.start_time, EventKind.ENQUEUE, runtime.spec.flow_id)

        while self._heap:
            event = heapq.heappop(self._heap)
            if event.time > self.duration:
                break
            assert (event.time, event.sequence) > self._last_event, "event order"
            self._last_event = (event.time, event.sequence)

            kind = event.kind
            if kind is EventKind.ENQUEUE:
                self._on_send(event)
            elif kind is EventKind.DEQUEUE:
                self._on_dequeue(event)
            elif kind is EventKind.ACK:
                self._on_ack(event)
            elif kind is EventKind.ACK_DEQUEUE:
                self._on_ack_dequeue(event)
            elif kind is EventKind.PROBE_DEADLINE:
                self._on_probe_deadline(event)
            else:
                self._on_loss_signal(event)

        self.trace.queued_at_end = self.bottleneck.depth
        totals = self.trace.totals
        logger.info(
            f"Simulated {self.duration:g}s: sent={totals.sent} "
            f"delivered={totals.delivered} lost={totals.lost} "
            f"queued={self.trace.queued_at_end}"
        )
        return self.trace

    def _controller(self, runtime: _FlowRuntime, now: float) -> PacingController:
        if runtime.controller is None:
            spec = runtime.spec
            runtime.controller = PacingController(
                spec.resolved_config(), spec.starting_rate, runtime.base_rtt, now
            )
        return runtime.controller

    def _on_send(self, event: SimEvent) -> None:
        runtime = self.flows[event.flow_id]
        now = event.time
        controller = self._controller(runtime, now)
        packet = Packet(event.flow_id, runtime.next_sequence, now)
        runtime.next_sequence += 1
        runtime.counters.sent += 1

        step = self.bottleneck.enqueue(packet, now)
        if step.loss is not None:
            runtime.counters.lost += 1
            self._push(
                now + runtime.base_rtt, EventKind.LOSS_SIGNAL, event.flow_id
            )
        self._push_steps(step)
        self._push(now + 1.0 / controller.state.rate, EventKind.ENQUEUE, event.flow_id)

    def _on_dequeue(self, event: SimEvent) -> None:
        step = self.bottleneck.dequeue(event.time)
        self._push_steps(step)
        packet = step.departed
        if packet is None:
            return
        runtime = self.flows[packet.flow_id]
        runtime.counters.delivered += 1
        if self.ack_link is None:
            self._schedule_ack(runtime, packet, event.time)
            return
        ack_step = self.ack_link.enqueue(packet, event.time)
        if ack_step.loss is not None:
            runtime.counters.ack_dropped += 1
        self._push_steps(ack_step)

    def _on_ack_dequeue(self, event: SimEvent) -> None:
        assert self.ack_link is not None
        step = self.ack_link.dequeue(event.time)
        self._push_steps(step)
        if step.departed is not None:
            runtime = self.flows[step.departed.flow_id]
            self._schedule_ack(runtime, step.departed, event.time)

    def _schedule_ack(self, runtime: _FlowRuntime, packet: Packet, now: float) -> None:
        ack_time = now + runtime.base_rtt + runtime.noise.next()
        self._push(ack_time, EventKind.ACK, packet.flow_id, packet)

    def _on_ack(self, event: SimEvent) -> None:
        assert event.packet is not None
        runtime = self.flows[event.flow_id]
        controller = self._controller(runtime, event.time)
        rtt = event.time - event.packet.send_time
        runtime.counters.acked += 1
        try:
            decision = controller.on_ack(RttObservation(rtt=rtt, now=event.time))
        except ObservationError as e:
            logger.debug(f"Flow {event.flow_id}: skipped ACK update ({e})")
            decision = controller.decision()

        self._arm_deadline(runtime, controller)

        runtime.acks_seen += 1
        if (runtime.acks_seen - 1) % self.trace_stride:
            return
        self._record(event, decision.pacing_rate, rtt, loss=False)

    def _on_loss_signal(self, event: SimEvent) -> None:
        runtime = self.flows[event.flow_id]
        controller = self._controller(runtime, event.time)
        decision = controller.on_loss(event.time)
        self._arm_deadline(runtime, controller)
        self._record(event, decision.pacing_rate, math.nan, loss=True)

    def _on_probe_deadline(self, event: SimEvent) -> None:
        runtime = self.flows[event.flow_id]
        controller = runtime.controller
        if controller is None or event.time != runtime.armed_deadline:
            return
        runtime.armed_deadline = None
        decision = controller.on_deadline(event.time)
        if decision is None:
            # the probe already ended on an ACK
            return
        self._record(event, decision.pacing_rate, math.nan, loss=False)

    def _arm_deadline(
        self, runtime: _FlowRuntime, controller: PacingController
    ) -> None:
        deadline = controller.probe_deadline()
        if deadline is None or deadline == runtime.armed_deadline:
            return
        runtime.armed_deadline = deadline
        self._push(deadline, EventKind.PROBE_DEADLINE, runtime.spec.flow_id)

    def _record(self, event: SimEvent, rate: float, rtt: float, loss: bool) -> None:
        self.trace.append(
            TraceRecord(
                time=event.time,
                flow_id=event.flow_id,
                pacing_rate=rate,
                rtt_sample=rtt,
                queue_depth=self.bottleneck.depth,
                loss=loss,
            )
        )


def run_simulation(
    link: LinkSpec,
    flows: Sequence[FlowSpec],
    duration: float,
    noise: NoiseSpec,
    trace_stride: int = 1,
) -> Trace:
    """Run one simulation and return its trace.

    Args:
        link: Bottleneck link specification
        flows: Flows sharing the bottleneck (at least one)
        duration: Simulated time in seconds
        noise: ACK noise parameters and run seed
        trace_stride: Record every k-th ACK per flow; losses and rate changes
            at a probe deadline are always recorded

    Returns:
        The trace with per-flow packet counters
    """
    return Simulator(link, flows, duration, noise, trace_stride).run()

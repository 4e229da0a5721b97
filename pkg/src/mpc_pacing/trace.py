"""Simulation traces: per-ACK records, per-flow counters and CSV I/O."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from .exceptions import TraceFormatError

if TYPE_CHECKING:
    from collections.abc import Iterator
    from pathlib import Path

logger = logging.getLogger(__name__)

TRACE_HEADER = ("time", "flow_id", "pacing_rate", "rtt", "queue_depth", "loss")


class TraceRecord(NamedTuple):
    """One ACK delivery, loss notification or low-probe deadline.

    Loss and deadline records carry ``rtt_sample = nan``; only loss records
    set ``loss``.
    """

    time: float
    flow_id: int
    pacing_rate: float
    rtt_sample: float
    queue_depth: int
    loss: bool


@dataclass(slots=True)
class FlowCounters:
    """Packet accounting for one flow."""

    sent: int = 0
    delivered: int = 0
    lost: int = 0
    acked: int = 0
    ack_dropped: int = 0

    def add(self, other: FlowCounters) -> None:
        self.sent += other.sent
        self.delivered += other.delivered
        self.lost += other.lost
        self.acked += other.acked
        self.ack_dropped += other.ack_dropped

    @property
    def loss_fraction(self) -> float:
        return self.lost / self.sent if self.sent else 0.0


@dataclass
class Trace:
    """Column-oriented trace of a simulation run."""

    times: list[float] = field(default_factory=list)
    flow_ids: list[int] = field(default_factory=list)
    pacing_rates: list[float] = field(default_factory=list)
    rtts: list[float] = field(default_factory=list)
    queue_depths: list[int] = field(default_factory=list)
    losses: list[bool] = field(default_factory=list)
    counters: dict[int, FlowCounters] = field(default_factory=dict)
    queued_at_end: int = 0
    duration: float | None = None

    def append(self, record: TraceRecord) -> None:
        self.times.append(record.time)
        self.flow_ids.append(record.flow_id)
        self.pacing_rates.append(record.pacing_rate)
        self.rtts.append(record.rtt_sample)
        self.queue_depths.append(record.queue_depth)
        self.losses.append(record.loss)

    def __len__(self) -> int:
        return len(self.times)

    def records(self) -> Iterator[TraceRecord]:
        for row in zip(
            self.times,
            self.flow_ids,
            self.pacing_rates,
            self.rtts,
            self.queue_depths,
            self.losses,
            strict=True,
        ):
            yield TraceRecord(*row)

    @property
    def flow_id_set(self) -> list[int]:
        """Flow ids in first-seen order, including counter-only flows."""
        seen = dict.fromkeys(self.counters)
        seen.update(dict.fromkeys(self.flow_ids))
        return list(seen)

    @property
    def totals(self) -> FlowCounters:
        total = FlowCounters()
        for counters in self.counters.values():
            total.add(counters)
        return total

    @property
    def end_time(self) -> float:
        if self.duration is not None:
            return self.duration
        return self.times[-1] if self.times else 0.0

    def arrays(self) -> dict[str, np.ndarray]:
        """Return the trace as numpy columns keyed by CSV header name."""
        return {
            "time": np.asarray(self.times, dtype=float),
            "flow_id": np.asarray(self.flow_ids, dtype=int),
            "pacing_rate": np.asarray(self.pacing_rates, dtype=float),
            "rtt": np.asarray(self.rtts, dtype=float),
            "queue_depth": np.asarray(self.queue_depths, dtype=int),
            "loss": np.asarray(self.losses, dtype=bool),
        }


def _format_float(value: float) -> str:
    return repr(float(value)) if math.isfinite(value) else "nan"


def write_trace_csv(trace: Trace, path: Path) -> None:
    """Write a trace as CSV with a fixed header.

    Times use 9 decimal places; rates and RTTs use the shortest
    round-trippable representation.
    """
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for record in trace.records():
            writer.writerow(
                (
                    f"{record.time:.9f}",
                    record.flow_id,
                    _format_float(record.pacing_rate),
                    _format_float(record.rtt_sample),
                    record.queue_depth,
                    int(record.loss),
                )
            )
    logger.debug(f"Wrote {len(trace)} trace rows to {path}")


def read_trace_csv(path: Path) -> Trace:
    """Read a trace CSV written by :func:`write_trace_csv`.

    Raises:
        TraceFormatError: If the header or any row is malformed
    """
    trace = Trace()
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_HEADER:
            raise TraceFormatError(
                f"expected header {','.join(TRACE_HEADER)}, got {header}", row=1
            )
        for row_number, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_HEADER):
                raise TraceFormatError(
                    f"expected {len(TRACE_HEADER)} fields, got {len(row)}",
                    row=row_number,
                )
            try:
                record = TraceRecord(
                    time=float(row[0]),
                    flow_id=int(row[1]),
                    pacing_rate=float(row[2]),
                    rtt_sample=float(row[3]),
                    queue_depth=int(row[4]),
                    loss=_parse_flag(row[5]),
                )
            except ValueError as e:
                raise TraceFormatError(str(e), row=row_number, cause=e) from e
            trace.append(record)
    return trace


def _parse_flag(value: str) -> bool:
    if value in ("0", "1"):
        return value == "1"
    raise ValueError(f"loss flag must be 0 or 1, got {value!r}")

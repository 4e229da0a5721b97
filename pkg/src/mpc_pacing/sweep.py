"""Buffer-size sweep orchestration.

Each cell is reduced to the median of the all-flow acknowledged rate in
0.1 s bins after warmup, the median RTT after warmup, the loss fraction over
the whole run and the time the acknowledged rate first holds 90% of the
bottleneck rate for a second.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from rich.progress import (
    BarColumn,
    Progress,
    SpinnerColumn,
    TaskProgressColumn,
    TextColumn,
)

from .sim import run_simulation
from .stats import BoxStats, acked_rate_series, box_stats, subsample, time_to_rate
from .utils import console

if TYPE_CHECKING:
    from collections.abc import Sequence

    from .scenarios import SweepCell

logger = logging.getLogger(__name__)

TIME_TO_RATE_FRACTION = 0.9
RATE_BIN = 0.1
RTT_SAMPLE_LIMIT = 200_000
TARGET_ROWS_PER_SECOND = 2000.0


def default_trace_stride(bottleneck_rate: float) -> int:
    """Stride that records about 2000 ACKs per simulated second."""
    return max(1, round(bottleneck_rate / TARGET_ROWS_PER_SECOND))


@dataclass(frozen=True, slots=True)
class SweepCellResult:
    """Statistics for one (buffer fraction, flow count) cell.

    ``loss_fraction`` counts the whole run; rate and RTT use the post-warmup
    window.
    """

    fraction: float
    flow_count: int
    buffer_capacity: int
    bottleneck_rate: float
    median_combined_rate: float
    median_rtt: float
    loss_fraction: float
    rate_box: BoxStats
    time_to_rate: float
    sent: int
    lost: int

    @property
    def median_rtt_ms(self) -> float:
        return self.median_rtt * 1000.0

    @property
    def utilization(self) -> float:
        return self.median_combined_rate / self.bottleneck_rate


def evaluate_cell(cell: SweepCell, trace_stride: int = 1) -> SweepCellResult:
    """Simulate one sweep cell and reduce its trace to summary numbers."""
    scenario = cell.scenario
    trace = run_simulation(
        scenario.link,
        scenario.flows,
        scenario.duration,
        scenario.noise,
        trace_stride=trace_stride,
    )
    window = (scenario.warmup, scenario.duration)
    acked = acked_rate_series(trace, RATE_BIN, trace_stride)
    rate_box = box_stats(acked.within(window).values)

    columns = trace.arrays()
    times = columns["time"]
    rtts = columns["rtt"][(times >= window[0]) & (times <= window[1])]
    rtts = rtts[np.isfinite(rtts)]
    # median over at most RTT_SAMPLE_LIMIT evenly spaced samples
    rtts = subsample(rtts, RTT_SAMPLE_LIMIT)
    median_rtt = float(np.median(rtts)) if rtts.size else float("nan")

    totals = trace.totals
    bottleneck = scenario.link.bottleneck_rate
    result = SweepCellResult(
        fraction=cell.fraction,
        flow_count=cell.flow_count,
        buffer_capacity=scenario.link.buffer_capacity,
        bottleneck_rate=bottleneck,
        median_combined_rate=rate_box.median,
        median_rtt=median_rtt,
        loss_fraction=totals.loss_fraction,
        rate_box=rate_box,
        time_to_rate=time_to_rate(
            acked, bottleneck, TIME_TO_RATE_FRACTION, trace.end_time
        ),
        sent=totals.sent,
        lost=totals.lost,
    )
    logger.info(
        f"Cell {cell.fraction:g} BDP x {cell.flow_count} flows: "
        f"rate {result.median_combined_rate:.1f}, RTT {result.median_rtt_ms:.2f} ms, "
        f"loss {result.loss_fraction:.2e}"
    )
    return result


def run_sweep(
    cells: Sequence[SweepCell],
    jobs: int = 1,
    trace_stride: int = 1,
    show_progress: bool = True,
) -> list[SweepCellResult]:
    """Evaluate every cell, in parallel processes when ``jobs > 1``.

    Results come back in the order of ``cells`` whatever the completion order.
    """
    results: list[SweepCellResult | None] = [None] * len(cells)

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        console=console,
        disable=not show_progress,
    ) as progress:
        task = progress.add_task(f"Sweeping {len(cells)} cells...", total=len(cells))

        if jobs <= 1:
            for index, cell in enumerate(cells):
                progress.update(task, description=f"Cell {cell.scenario.name}")
                results[index] = evaluate_cell(cell, trace_stride)
                progress.update(task, advance=1)
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = {
                    pool.submit(evaluate_cell, cell, trace_stride): index
                    for index, cell in enumerate(cells)
                }
                for future in as_completed(futures):
                    results[futures[future]] = future.result()
                    progress.update(task, advance=1)

    return [result for result in results if result is not None]

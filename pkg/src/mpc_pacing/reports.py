"""CSV reports for single runs and buffer sweeps.

Column labels follow the published tables: ``Mean Rate``, ``Rate Std.``,
``Mean RTT``, ``RTT Std.`` and ``Losses``; RTTs are reported in
milliseconds.
"""

from __future__ import annotations

import csv
import logging
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

    from .stats import FlowSummary
    from .sweep import SweepCellResult

logger = logging.getLogger(__name__)

SUMMARY_HEADER = ("flow_id", "Mean Rate", "Rate Std.", "Mean RTT", "RTT Std.", "Losses")
SWEEP_HEADER = (
    "fraction",
    "flows",
    "buffer_capacity",
    "median_combined_rate",
    "median_rtt_ms",
    "loss_fraction",
    "rate_q1",
    "rate_q3",
    "rate_lower_fence",
    "rate_upper_fence",
    "rate_outlier_fraction",
    "time_to_rate",
)
TABLE_BLOCKS = (
    ("Median Combined Rate", "median_combined_rate"),
    ("Median RTT (ms)", "median_rtt_ms"),
    ("Losses (as Fraction of Packets Sent)", "loss_fraction"),
)

MS = 1000.0


def summary_rows(summaries: Sequence[FlowSummary]) -> list[tuple[str, ...]]:
    """Formatted summary rows (two decimals for rates and RTTs)."""
    return [
        (
            str(summary.flow_id),
            f"{summary.rate.mean:.2f}",
            f"{summary.rate.std:.2f}",
            f"{summary.rtt.mean * MS:.2f}",
            f"{summary.rtt.std * MS:.2f}",
            str(summary.losses),
        )
        for summary in summaries
    ]


def write_summary_csv(summaries: Sequence[FlowSummary], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        writer.writerows(summary_rows(summaries))
    logger.debug(f"Wrote summary for {len(summaries)} flows to {path}")


def write_sweep_csv(results: Sequence[SweepCellResult], path: Path) -> None:
    """One row per sweep cell, in the order given."""
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for result in results:
            writer.writerow(
                (
                    f"{result.fraction:g}",
                    result.flow_count,
                    result.buffer_capacity,
                    repr(result.median_combined_rate),
                    repr(result.median_rtt_ms),
                    repr(result.loss_fraction),
                    repr(result.rate_box.q1),
                    repr(result.rate_box.q3),
                    repr(result.rate_box.lower_fence),
                    repr(result.rate_box.upper_fence),
                    repr(result.rate_box.outlier_fraction),
                    repr(result.time_to_rate),
                )
            )


def write_sweep_table(results: Sequence[SweepCellResult], path: Path) -> None:
    """Three stacked blocks: rows are flow counts, columns are buffer fractions."""
    fractions = sorted({result.fraction for result in results})
    counts = sorted({result.flow_count for result in results})
    by_cell = {(result.flow_count, result.fraction): result for result in results}

    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        for index, (title, attribute) in enumerate(TABLE_BLOCKS):
            if index:
                writer.writerow(())
            writer.writerow((title, *(f"{fraction:g}" for fraction in fractions)))
            for count in counts:
                row = [str(count)]
                for fraction in fractions:
                    result = by_cell.get((count, fraction))
                    if result is None:
                        row.append("")
                        continue
                    row.append(f"{getattr(result, attribute):.6g}")
                writer.writerow(row)
    logger.debug(f"Wrote sweep table to {path}")

"""CLI display and formatting utilities.

Banners, scenario overviews and result tables rendered with rich.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from rich.panel import Panel
from rich.table import Table

from .reports import SUMMARY_HEADER, summary_rows
from .utils import console

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

    from .scenarios import Scenario
    from .stats import FlowSummary
    from .sweep import SweepCellResult


def print_banner(version: str) -> None:
    """Print the application banner."""
    console.print(
        Panel.fit(
            f"📶 [bold]mpc-pacing[/bold] v{version}\n"
            "Model-predictive pacing over a simulated bottleneck",
            border_style="bright_blue",
        )
    )


def print_scenario_table(scenario: Scenario) -> None:
    """Print the parameters of the scenario about to run."""
    table = Table(show_header=False, box=None, padding=(0, 1))
    table.add_column("Parameter", style="dim")
    table.add_column("Value")

    link = scenario.link
    table.add_row("🧪 Scenario", scenario.name)
    table.add_row("🚦 Bottleneck", f"{link.bottleneck_rate:g} packets/s")
    table.add_row("📦 Buffer", f"{link.buffer_capacity} packets")
    table.add_row("🌀 Flows", str(len(scenario.flows)))
    table.add_row(
        "⏱️ Duration", f"{scenario.duration:g}s (warmup {scenario.warmup:g}s)"
    )
    table.add_row("🎲 Seed", str(scenario.seed))

    console.print()
    console.print(table)


def print_summary(summaries: Sequence[FlowSummary], title: str = "Summary") -> None:
    """Print per-flow statistics with the same formatting as the summary CSV."""
    table = Table(title=title, show_header=True, header_style="bold")
    for index, header in enumerate(SUMMARY_HEADER):
        table.add_column(header, justify="left" if index == 0 else "right")
    for row in summary_rows(summaries):
        table.add_row(*row)
    console.print(table)


def print_sweep_table(results: Sequence[SweepCellResult]) -> None:
    table = Table(title="Buffer sweep", show_header=True, header_style="bold")
    table.add_column("BDP fraction", justify="right")
    table.add_column("Flows", justify="right")
    table.add_column("Median rate", justify="right")
    table.add_column("Median RTT (ms)", justify="right")
    table.add_column("Loss fraction", justify="right")
    table.add_column("Time to rate (s)", justify="right")
    for result in results:
        table.add_row(
            f"{result.fraction:g}",
            str(result.flow_count),
            f"{result.median_combined_rate:.1f}",
            f"{result.median_rtt_ms:.2f}",
            f"{result.loss_fraction:.2e}",
            f"{result.time_to_rate:.2f}",
        )
    console.print(table)


def print_outputs(outputs: dict[str, Path]) -> None:
    for kind, path in outputs.items():
        console.print(f"[dim]💾 {kind}:[/dim] {path}")


def print_scenario_list(names: Sequence[str], descriptions: dict[str, str]) -> None:
    table = Table(show_header=True, header_style="bold")
    table.add_column("Name", style="cyan")
    table.add_column("Description")
    for name in names:
        table.add_row(name, descriptions.get(name, ""))
    console.print(table)

"""Command-line interface for mpc-pacing."""

from __future__ import annotations

import math
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import click
from rich.markup import escape

from . import __version__
from .cli_display import (
    print_banner,
    print_outputs,
    print_scenario_list,
    print_scenario_table,
    print_summary,
    print_sweep_table,
)
from .exceptions import (
    ConfigurationError,
    ManifestError,
    MpcPacingError,
    ScenarioError,
    StatisticsError,
    TraceFormatError,
)
from .manifest import RunManifest, recorded_window, scenarios_hash, write_manifest
from .reports import write_summary_csv, write_sweep_csv, write_sweep_table
from .scenario_file import dump_scenario, dumps_scenario, load_scenario
from .scenarios import (
    BUILTIN_DESCRIPTIONS,
    BUILTIN_SCENARIOS,
    DEFAULT_BASE_RTT,
    DEFAULT_SWEEP_FLOW_COUNTS,
    DEFAULT_SWEEP_FRACTIONS,
    SWEEP_BOTTLENECK_RATE,
    SWEEP_DURATION,
    SWEEP_NAME,
    SWEEP_WARMUP,
    Scenario,
    buffer_sweep_cells,
    builtin_names,
    get_builtin_scenario,
    with_overrides,
)
from .sim import run_simulation
from .stats import summarize_trace
from .sweep import default_trace_stride, run_sweep
from .trace import read_trace_csv, write_trace_csv
from .utils import (
    console,
    ensure_output_dir,
    parse_float_list,
    parse_int_list,
    safe_filename,
    setup_logging,
)

DEFAULT_OUTPUT_DIR = Path("results")

USAGE_ERRORS = (ScenarioError, TraceFormatError, StatisticsError, ManifestError)


@contextmanager
def handle_errors(verbose: bool) -> Iterator[None]:
    """Map library errors to exit codes: 2 for bad input, 1 for runtime failures."""
    try:
        yield
    except USAGE_ERRORS as e:
        console.print(f"[red]❌ Error: {escape(str(e))}[/red]")
        if verbose:
            console.print_exception()
        sys.exit(2)
    except (MpcPacingError, OSError) as e:
        console.print(f"[red]❌ Error: {escape(str(e))}[/red]")
        if verbose:
            console.print_exception()
        sys.exit(1)
    except KeyboardInterrupt:
        console.print("\n[yellow]⚠️ Interrupted by user[/yellow]")
        sys.exit(130)
    except Exception as e:
        console.print(f"[red]❌ Unexpected error: {escape(str(e))}[/red]")
        if verbose:
            console.print_exception()
        sys.exit(1)


def _float_list(
    ctx: click.Context, param: click.Parameter, value: str | None
) -> list[float] | None:
    if value is None:
        return None
    try:
        return parse_float_list(value)
    except (ValueError, ZeroDivisionError) as e:
        raise click.BadParameter(str(e)) from e


def _int_list(
    ctx: click.Context, param: click.Parameter, value: str | None
) -> list[int] | None:
    if value is None:
        return None
    try:
        return parse_int_list(value)
    except ValueError as e:
        raise click.BadParameter(str(e)) from e


def resolve_scenario(
    source: str,
    seed: int | None = None,
    duration: float | None = None,
    warmup: float | None = None,
) -> Scenario:
    """Resolve a built-in name or scenario file and apply command-line overrides.

    Raises:
        ScenarioError: If the scenario cannot be found, parsed or overridden
    """
    if source in BUILTIN_SCENARIOS:
        scenario = get_builtin_scenario(source)
    else:
        scenario = load_scenario(Path(source))
    try:
        return with_overrides(scenario, seed=seed, duration=duration, warmup=warmup)
    except ConfigurationError as e:
        raise ScenarioError(str(e), cause=e) from e


seed_option = click.option(
    "--seed", type=click.IntRange(0, 2**64 - 1), help="Random seed (default: 0)"
)
out_option = click.option(
    "--out",
    "output_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=DEFAULT_OUTPUT_DIR,
    show_default=True,
    help="Directory for traces, summaries and the manifest",
)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose output")
@click.version_option(version=__version__)
@click.pass_context
def main(ctx: click.Context, verbose: bool = False) -> None:
    """Simulate model-predictive pacing over a shared bottleneck.

    Examples:

        # Reproduce the capped four-flow experiment
        mpc-pacing run table1-capped --seed 7

        # Recompute statistics from a saved trace
        mpc-pacing report results/table1-capped.trace.csv

        # Small buffer sweep
        mpc-pacing sweep --fractions 1/16,1/2,1 --flows 2 --bottleneck-rate 2000
    """
    setup_logging(verbose)
    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose


@main.command()
@click.argument("scenario", metavar="SCENARIO")
@seed_option
@click.option("--duration", type=float, help="Simulated seconds")
@click.option("--warmup", type=float, help="Seconds excluded from statistics")
@out_option
@click.option(
    "--trace-stride",
    type=click.IntRange(min=1),
    default=1,
    show_default=True,
    help="Record every k-th ACK per flow",
)
@click.pass_context
def run(
    ctx: click.Context,
    scenario: str,
    seed: int | None,
    duration: float | None,
    warmup: float | None,
    output_dir: Path,
    trace_stride: int,
) -> None:
    """Run SCENARIO (a built-in name or a TOML file) and write its results.

    Writes the trace CSV, a per-flow summary CSV and manifest.json, then
    prints the summary. The summary is computed from the written trace file.
    """
    verbose = ctx.obj["verbose"]
    if scenario == SWEEP_NAME:
        ctx.invoke(
            sweep, seed=seed, duration=duration, warmup=warmup, output_dir=output_dir
        )
        return

    with handle_errors(verbose):
        resolved = resolve_scenario(scenario, seed, duration, warmup)
        print_banner(__version__)
        print_scenario_table(resolved)

        manifest = RunManifest.for_scenario(resolved, __version__)
        trace = run_simulation(
            resolved.link,
            resolved.flows,
            resolved.duration,
            resolved.noise,
            trace_stride=trace_stride,
        )

        ensure_output_dir(output_dir)
        stem = safe_filename(resolved.name)
        trace_path = output_dir / f"{stem}.trace.csv"
        summary_path = output_dir / f"{stem}.summary.csv"
        write_trace_csv(trace, trace_path)

        summaries = summarize_trace(
            read_trace_csv(trace_path), (resolved.warmup, resolved.duration)
        )
        write_summary_csv(summaries, summary_path)

        manifest.add_output("trace", trace_path)
        manifest.add_output("summary", summary_path)
        manifest.finish()
        manifest_path = write_manifest(manifest, output_dir)

        title = f"{resolved.name} (after {resolved.warmup:g}s)"
        print_summary(summaries, title=title)
        print_outputs(
            {"Trace": trace_path, "Summary": summary_path, "Manifest": manifest_path}
        )


@main.command()
@click.option(
    "--fractions",
    callback=_float_list,
    help="Comma-separated buffer sizes as BDP fractions, e.g. 1/16,1/2,1",
)
@click.option(
    "--flows", "flow_counts", callback=_int_list, help="Comma-separated flow counts"
)
@seed_option
@click.option("--duration", type=float, help="Simulated seconds per cell")
@click.option("--warmup", type=float, help="Seconds excluded from statistics")
@click.option(
    "--bottleneck-rate",
    type=click.FloatRange(min=0.0, min_open=True),
    default=SWEEP_BOTTLENECK_RATE,
    show_default=True,
    help="Bottleneck rate in packets/s",
)
@click.option(
    "--jobs",
    type=click.IntRange(min=1),
    default=1,
    show_default=True,
    help="Cells simulated in parallel",
)
@click.option(
    "--trace-stride",
    type=click.IntRange(min=1),
    help="Record every k-th ACK per flow (default: about 2000 ACKs per second)",
)
@out_option
@click.pass_context
def sweep(
    ctx: click.Context,
    fractions: list[float] | None = None,
    flow_counts: list[int] | None = None,
    seed: int | None = None,
    duration: float | None = None,
    warmup: float | None = None,
    bottleneck_rate: float = SWEEP_BOTTLENECK_RATE,
    jobs: int = 1,
    trace_stride: int | None = None,
    output_dir: Path = DEFAULT_OUTPUT_DIR,
) -> None:
    """Run the buffer-size grid and write per-cell rows plus a table CSV."""
    verbose = ctx.obj["verbose"]
    with handle_errors(verbose):
        try:
            cells = buffer_sweep_cells(
                fractions or DEFAULT_SWEEP_FRACTIONS,
                flow_counts or DEFAULT_SWEEP_FLOW_COUNTS,
                bottleneck_rate=bottleneck_rate,
                base_rtt=DEFAULT_BASE_RTT,
                duration=duration if duration is not None else SWEEP_DURATION,
                warmup=warmup if warmup is not None else SWEEP_WARMUP,
                seed=seed or 0,
            )
            for cell in cells:
                cell.scenario.validate()
        except ConfigurationError as e:
            raise ScenarioError(str(e), cause=e) from e

        print_banner(__version__)
        console.print(
            f"[dim]🧪 {len(cells)} cells at {bottleneck_rate:g} packets/s[/dim]"
        )
        manifest = RunManifest(
            scenario_name=SWEEP_NAME,
            scenario_hash=scenarios_hash([cell.scenario for cell in cells]),
            seed=seed or 0,
            tool_version=__version__,
        )
        stride = trace_stride or default_trace_stride(bottleneck_rate)
        results = run_sweep(cells, jobs=jobs, trace_stride=stride)

        ensure_output_dir(output_dir)
        rows_path = output_dir / "sweep.csv"
        table_path = output_dir / "sweep_table.csv"
        write_sweep_csv(results, rows_path)
        write_sweep_table(results, table_path)
        manifest.add_output("sweep", rows_path)
        manifest.add_output("table", table_path)
        manifest.finish()
        manifest_path = write_manifest(manifest, output_dir)

        print_sweep_table(results)
        print_outputs(
            {"Sweep rows": rows_path, "Table": table_path, "Manifest": manifest_path}
        )


@main.command()
@click.argument("trace_path", metavar="TRACE", type=click.Path(path_type=Path))
@click.option("--warmup", type=float, help="Ignore rows before this time")
@click.option("--until", type=float, help="Ignore rows after this time")
@click.pass_context
def report(
    ctx: click.Context,
    trace_path: Path,
    warmup: float | None,
    until: float | None,
) -> None:
    """Recompute per-flow statistics from a trace CSV.

    Without --warmup and --until the window is the one recorded for TRACE by
    the manifest.json next to it, or the whole trace when there is none.
    """
    with handle_errors(ctx.obj["verbose"]):
        trace = read_trace_csv(trace_path)
        recorded = recorded_window(trace_path)
        if recorded is not None:
            console.print(
                f"[dim]📋 Run window [{recorded[0]:g}, {recorded[1]:g}] "
                "from manifest[/dim]"
            )
        default_start, default_end = recorded or (0.0, math.inf)
        start = warmup if warmup is not None else default_start
        end = until if until is not None else default_end
        summaries = summarize_trace(trace, (start, end))
        print_summary(summaries, title=f"{trace_path.name} [{start:g}, {end:g}]")


@main.command(name="list")
def list_scenarios() -> None:
    """List the built-in scenarios."""
    print_scenario_list(builtin_names(), BUILTIN_DESCRIPTIONS)


@main.command()
@click.argument("name", metavar="NAME")
@seed_option
@click.option(
    "--out",
    "output_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Write to this file instead of standard output",
)
@click.pass_context
def export(
    ctx: click.Context, name: str, seed: int | None, output_path: Path | None
) -> None:
    """Print a built-in scenario as an editable TOML file."""
    with handle_errors(ctx.obj["verbose"]):
        scenario = get_builtin_scenario(name, seed or 0)
        if output_path is None:
            click.echo(dumps_scenario(scenario), nl=False)
        else:
            dump_scenario(scenario, output_path)
            console.print(f"[green]✅ Wrote {output_path}[/green]")


if __name__ == "__main__":
    main()

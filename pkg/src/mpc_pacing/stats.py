"""Summary statistics over simulation traces.

Standard deviations are population deviations. Rates are summarized over
fixed-width time bins, either weighted by how long each pacing rate was held
or counted from the ACKs that arrived. Quartiles use linear
interpolation between closest ranks (numpy's ``"linear"`` percentile
method): for sorted samples ``x[0..n-1]`` the p-th percentile sits at rank
``(n - 1) * p / 100``. Points more than 1.5 IQR beyond the first or third
quartile are outliers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple, TypeVar

import numpy as np

from .exceptions import StatisticsError

if TYPE_CHECKING:
    from .trace import Trace

logger = logging.getLogger(__name__)

OUTLIER_IQR_MULTIPLE = 1.5
DEFAULT_SUSTAIN = 1.0
DEFAULT_RATE_BIN = 1.0

Window = tuple[float, float]
FULL_WINDOW: Window = (-math.inf, math.inf)


@dataclass(frozen=True, slots=True)
class Series:
    """Time-stamped samples as parallel numpy arrays."""

    times: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def within(self, window: Window) -> Series:
        start, end = window
        mask = (self.times >= start) & (self.times <= end)
        return Series(self.times[mask], self.values[mask])


class SummaryStats(NamedTuple):
    mean: float
    std: float
    count: int
    min: float
    max: float


class BoxStats(NamedTuple):
    median: float
    q1: float
    q3: float
    iqr: float
    lower_fence: float
    upper_fence: float
    outlier_count: int
    outlier_fraction: float


class FlowSummary(NamedTuple):
    """Per-flow statistics in the units printed by reports (RTT in seconds)."""

    flow_id: int
    rate: SummaryStats
    rtt: SummaryStats
    losses: int


def make_series(times: object, values: object) -> Series:
    """Build a Series from any pair of equal-length sequences."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise StatisticsError(
            f"times and values must be equal-length 1-D, got {t.shape} and {v.shape}"
        )
    return Series(t, v)


def summarize(series: Series, window: Window = FULL_WINDOW) -> SummaryStats:
    """Mean, population std, count and range of the finite samples in a window.

    Raises:
        StatisticsError: If no finite sample falls inside the window
    """
    values = series.within(window).values
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise StatisticsError(f"no samples in window [{window[0]}, {window[1]}]")
    return SummaryStats(
        mean=float(values.mean()),
        std=float(values.std()),
        count=int(values.size),
        min=float(values.min()),
        max=float(values.max()),
    )


def box_stats(values: object) -> BoxStats:
    """Quartiles, fences and outlier counts.

    Raises:
        StatisticsError: If fewer than four finite samples are given
    """
    data = np.asarray(values, dtype=float)
    data = data[np.isfinite(data)]
    if data.size < 4:
        raise StatisticsError(
            f"box statistics need at least 4 samples, got {data.size}"
        )
    q1, median, q3 = np.percentile(data, [25.0, 50.0, 75.0], method="linear")
    iqr = float(q3 - q1)
    lower = float(q1) - OUTLIER_IQR_MULTIPLE * iqr
    upper = float(q3) + OUTLIER_IQR_MULTIPLE * iqr
    outliers = int(np.count_nonzero((data < lower) | (data > upper)))
    return BoxStats(
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        iqr=iqr,
        lower_fence=lower,
        upper_fence=upper,
        outlier_count=outliers,
        outlier_fraction=outliers / data.size,
    )


def without_outliers(series: Series) -> Series:
    """Drop the samples that lie outside the box-plot fences."""
    stats = box_stats(series.values)
    mask = (series.values >= stats.lower_fence) & (series.values <= stats.upper_fence)
    return Series(series.times[mask], series.values[mask])


def subsample_indices(length: int, n: int) -> np.ndarray:
    """Indices ``rint(linspace(0, length - 1, n))``, or all when ``n >= length``."""
    if n < 1:
        raise StatisticsError(f"subsample size must be >= 1, got {n}")
    if n >= length:
        return np.arange(length)
    if n == 1:
        return np.zeros(1, dtype=int)
    return np.rint(np.linspace(0, length - 1, n)).astype(int)


_Sampled = TypeVar("_Sampled", Series, np.ndarray)


def subsample(series: _Sampled, n: int) -> _Sampled:
    """Evenly strided selection of ``min(n, len)`` points keeping both endpoints."""
    if isinstance(series, Series):
        indices = subsample_indices(len(series), n)
        return Series(series.times[indices], series.values[indices])
    return series[subsample_indices(len(series), n)]


def bin_edges(start: float, end: float, width: float) -> np.ndarray:
    """Edges of the whole ``width`` bins that fit in ``[start, end]``.

    A span shorter than one bin yields the single bin ``[start, end]``.

    Raises:
        StatisticsError: If ``width`` is not positive or the span is not finite
    """
    if not width > 0.0:
        raise StatisticsError(f"bin width must be positive, got {width}")
    if not (math.isfinite(start) and math.isfinite(end)):
        raise StatisticsError(f"bins need a finite span, got [{start}, {end}]")
    count = math.floor((end - start) / width + 1e-9) if end > start else 0
    if count == 0:
        return np.array([start, max(start, end)])
    return start + width * np.arange(count + 1)


def time_weighted_rate(times: object, rates: object, edges: np.ndarray) -> Series:
    """Per-bin mean of a rate that holds each sample until the next one.

    Bins that end before the first sample are dropped; a bin that starts
    before it is averaged over the part after it. The series is stamped with
    the bin start times.
    """
    t = np.asarray(times, dtype=float)
    r = np.asarray(rates, dtype=float)
    if t.size == 0:
        return Series(np.empty(0), np.empty(0))
    cumulative = np.concatenate(([0.0], np.cumsum(np.diff(t) * r[:-1])))

    def integral(at: np.ndarray) -> np.ndarray:
        at = np.maximum(at, t[0])
        index = np.searchsorted(t, at, side="right") - 1
        return cumulative[index] + r[index] * (at - t[index])

    lower = np.maximum(edges[:-1], t[0])
    upper = edges[1:]
    covered = upper - lower
    keep = covered > 0.0
    means = (integral(upper[keep]) - integral(lower[keep])) / covered[keep]
    return Series(edges[:-1][keep], means)


def counted_rate(times: object, edges: np.ndarray, weight: float = 1.0) -> Series:
    """Events per second in each bin, each event counting ``weight`` times."""
    counts, _ = np.histogram(np.asarray(times, dtype=float), bins=edges)
    return Series(edges[:-1].copy(), counts * weight / np.diff(edges))


def acked_rate_series(trace: Trace, bin_width: float, stride: int = 1) -> Series:
    """All-flow acknowledged packets per second in bins from time zero.

    ACK rows are the rows with a finite RTT; with a trace stride of ``k``
    each recorded ACK stands for ``k`` acknowledged packets.
    """
    columns = trace.arrays()
    acked = np.isfinite(columns["rtt"])
    edges = bin_edges(0.0, trace.end_time, bin_width)
    return counted_rate(columns["time"][acked], edges, float(stride))


def time_to_rate(
    series: Series,
    target_rate: float,
    fraction: float,
    end_time: float,
    sustain: float = DEFAULT_SUSTAIN,
) -> float:
    """First time a step series reaches ``fraction * target_rate`` for good.

    Each sample holds until the next one and the last until ``end_time``. The
    value has to stay at or above the threshold for at least ``sustain``
    seconds. Returns ``end_time`` if that never happens.

    Raises:
        StatisticsError: If ``fraction`` is outside ``(0, 1]``
    """
    if not 0.0 < fraction <= 1.0:
        raise StatisticsError(f"fraction must lie in (0, 1], got {fraction}")
    if len(series) == 0:
        return end_time

    above = series.values >= fraction * target_rate
    edges = np.diff(np.concatenate(([0], above.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    start_times = series.times[starts]
    stop_times = np.where(
        stops < len(series),
        series.times[np.minimum(stops, len(series) - 1)],
        end_time,
    )
    sustained = np.flatnonzero(stop_times - start_times >= sustain - 1e-9)
    if sustained.size == 0:
        return end_time
    return float(start_times[sustained[0]])


def summarize_trace(
    trace: Trace,
    window: Window = FULL_WINDOW,
    bin_width: float = DEFAULT_RATE_BIN,
) -> list[FlowSummary]:
    """Per-flow rate and RTT statistics plus loss counts inside a window.

    The rate statistics run over ``bin_width`` bins of the pacing rate
    weighted by how long each value was held, so a probe counts for as long
    as it lasted rather than for how many ACKs it saw. A flow whose rows all
    fall after the last whole bin is summarized over its per-row rates. RTT
    statistics run over the individual samples. Flows are ordered by id.

    Raises:
        StatisticsError: If a flow has no rate or RTT sample in the window
    """
    columns = trace.arrays()
    times = columns["time"]
    flow_ids = columns["flow_id"]
    rates = columns["pacing_rate"]
    in_window = (times >= window[0]) & (times <= window[1])
    if not in_window.any():
        raise StatisticsError(f"no trace rows in window [{window[0]}, {window[1]}]")
    start = max(window[0], float(times.min()))
    end = min(window[1], max(trace.end_time, float(times.max())))
    edges = bin_edges(start, end, bin_width)

    summaries = []
    for flow_id in sorted(int(f) for f in np.unique(flow_ids[in_window])):
        flow_rows = flow_ids == flow_id
        mask = in_window & flow_rows
        flow_times = times[mask]
        weighted = time_weighted_rate(times[flow_rows], rates[flow_rows], edges)
        if len(weighted) == 0:
            weighted = Series(flow_times, rates[mask])
        rate = summarize(weighted)
        try:
            rtt = summarize(Series(flow_times, columns["rtt"][mask]))
        except StatisticsError as e:
            raise StatisticsError(
                f"flow {flow_id} has no RTT samples in the window", cause=e
            ) from e
        losses = int(np.count_nonzero(columns["loss"][mask]))
        summaries.append(FlowSummary(flow_id, rate, rtt, losses))
    logger.debug(f"Summarized {len(summaries)} flows over {window}")
    return summaries

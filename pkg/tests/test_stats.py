"""Tests for summary statistics."""

from __future__ import annotations

import math

import numpy as np
import pytest

from mpc_pacing.exceptions import StatisticsError
from mpc_pacing.stats import (
    acked_rate_series,
    bin_edges,
    box_stats,
    counted_rate,
    make_series,
    subsample,
    subsample_indices,
    summarize,
    summarize_trace,
    time_to_rate,
    time_weighted_rate,
    without_outliers,
)
from mpc_pacing.trace import Trace, TraceRecord


def rate_trace(rows: list[tuple[float, int, float]], duration: float = 10.0) -> Trace:
    trace = Trace(duration=duration)
    for time, flow_id, rate in rows:
        trace.append(TraceRecord(time, flow_id, rate, 0.025, 0, False))
    return trace


def closest_rank_percentile(values: list[float], p: float) -> float:
    ordered = sorted(values)
    rank = (len(ordered) - 1) * p / 100.0
    low = math.floor(rank)
    high = min(low + 1, len(ordered) - 1)
    return ordered[low] + (ordered[high] - ordered[low]) * (rank - low)


class TestSummarize:
    """Tests for windowed mean and standard deviation."""

    def test_constant_series(self) -> None:
        stats = summarize(make_series([0, 1, 2], [5.0, 5.0, 5.0]))
        assert stats.mean == 5.0
        assert stats.std == 0.0
        assert stats.count == 3

    def test_population_deviation(self) -> None:
        stats = summarize(make_series([0, 1, 2, 3], [1.0, 2.0, 3.0, 4.0]))
        assert stats.mean == pytest.approx(2.5)
        assert stats.std == pytest.approx(1.118034, rel=1e-6)
        assert (stats.min, stats.max) == (1.0, 4.0)

    def test_window_is_inclusive(self) -> None:
        series = make_series([0, 1, 2, 3, 4], [9.0, 1.0, 2.0, 3.0, 9.0])
        assert summarize(series, (1.0, 3.0)).mean == pytest.approx(2.0)

    def test_nan_samples_skipped(self) -> None:
        stats = summarize(make_series([0, 1, 2], [1.0, math.nan, 3.0]))
        assert stats.count == 2
        assert stats.mean == pytest.approx(2.0)

    def test_empty_window(self) -> None:
        with pytest.raises(StatisticsError, match="no samples"):
            summarize(make_series([0, 1], [1.0, 2.0]), (5.0, 6.0))

    def test_mismatched_lengths(self) -> None:
        with pytest.raises(StatisticsError):
            make_series([0, 1, 2], [1.0, 2.0])


class TestBoxStats:
    """Tests for quartiles and outlier fences."""

    def test_linear_quartiles(self) -> None:
        stats = box_stats(range(1, 9))
        assert stats.q1 == pytest.approx(2.75)
        assert stats.median == pytest.approx(4.5)
        assert stats.q3 == pytest.approx(6.25)
        assert stats.iqr == pytest.approx(3.5)
        assert stats.outlier_count == 0

    def test_constant_values(self) -> None:
        stats = box_stats([3.0] * 10)
        assert stats.iqr == 0.0
        assert stats.outlier_count == 0
        assert stats.outlier_fraction == 0.0

    def test_matches_hand_computation(self) -> None:
        rng = np.random.default_rng(21)
        for _ in range(20):
            values = rng.normal(10.0, 2.0, size=int(rng.integers(4, 200))).tolist()
            values += [50.0, -30.0]
            stats = box_stats(values)

            q1 = closest_rank_percentile(values, 25.0)
            q3 = closest_rank_percentile(values, 75.0)
            iqr = q3 - q1
            expected = sum(
                1 for v in values if v < q1 - 1.5 * iqr or v > q3 + 1.5 * iqr
            )
            assert stats.q1 == pytest.approx(q1)
            assert stats.q3 == pytest.approx(q3)
            assert stats.outlier_count == expected
            assert stats.outlier_fraction == pytest.approx(expected / len(values))

    def test_too_few_samples(self) -> None:
        with pytest.raises(StatisticsError, match="at least 4"):
            box_stats([1.0, 2.0, 3.0])

    def test_without_outliers(self) -> None:
        series = make_series(range(9), [1, 2, 3, 4, 5, 6, 7, 8, 100])
        kept = without_outliers(series)
        assert kept.values.tolist() == [1, 2, 3, 4, 5, 6, 7, 8]
        assert kept.times.tolist() == list(range(8))


class TestSubsample:
    """Tests for evenly strided subsampling."""

    def test_known_indices(self) -> None:
        assert subsample(np.arange(10), 5).tolist() == [0, 2, 4, 7, 9]

    def test_short_input_unchanged(self) -> None:
        values = np.arange(4.0)
        assert subsample(values, 10).tolist() == values.tolist()

    def test_long_input_keeps_endpoints(self) -> None:
        indices = subsample_indices(10_000, 100)
        assert len(indices) == 100
        assert indices[0] == 0
        assert indices[-1] == 9_999
        assert np.all(np.diff(indices) > 0)

    def test_series_keeps_times_aligned(self) -> None:
        series = make_series(np.arange(10.0), np.arange(10.0) * 2)
        sampled = subsample(series, 3)
        assert sampled.times.tolist() == [0.0, 4.0, 9.0]
        assert sampled.values.tolist() == [0.0, 8.0, 18.0]

    def test_single_point(self) -> None:
        assert subsample_indices(10, 1).tolist() == [0]

    def test_rejects_zero(self) -> None:
        with pytest.raises(StatisticsError):
            subsample(np.arange(5), 0)


class TestBinnedRates:
    """Tests for bin edges, time-weighted and counted rates."""

    def test_whole_bins_only(self) -> None:
        assert bin_edges(0.0, 3.5, 1.0).tolist() == [0.0, 1.0, 2.0, 3.0]

    def test_exact_span(self) -> None:
        assert len(bin_edges(0.0, 1.0, 0.1)) == 11

    def test_short_span_is_one_bin(self) -> None:
        assert bin_edges(2.0, 2.5, 1.0).tolist() == [2.0, 2.5]

    def test_invalid_bins(self) -> None:
        with pytest.raises(StatisticsError, match="positive"):
            bin_edges(0.0, 1.0, 0.0)
        with pytest.raises(StatisticsError, match="finite"):
            bin_edges(0.0, math.inf, 1.0)

    def test_rate_holds_until_next_sample(self) -> None:
        edges = bin_edges(0.0, 4.0, 1.0)
        series = time_weighted_rate([0.0, 2.0], [10.0, 20.0], edges)
        assert series.times.tolist() == [0.0, 1.0, 2.0, 3.0]
        assert series.values.tolist() == pytest.approx([10.0, 10.0, 20.0, 20.0])

    def test_change_inside_a_bin(self) -> None:
        series = time_weighted_rate([0.0, 0.5], [10.0, 30.0], np.array([0.0, 1.0]))
        assert series.values.tolist() == pytest.approx([20.0])

    def test_partial_first_bin(self) -> None:
        edges = bin_edges(0.0, 3.0, 1.0)
        series = time_weighted_rate([0.5, 2.0], [10.0, 20.0], edges)
        assert series.times.tolist() == [0.0, 1.0, 2.0]
        assert series.values.tolist() == pytest.approx([10.0, 10.0, 20.0])

    def test_bins_before_first_sample_dropped(self) -> None:
        series = time_weighted_rate([5.0], [10.0], bin_edges(0.0, 2.0, 1.0))
        assert len(series) == 0

    def test_no_samples(self) -> None:
        assert len(time_weighted_rate([], [], bin_edges(0.0, 2.0, 1.0))) == 0

    def test_counted_rate(self) -> None:
        series = counted_rate([0.1, 0.2, 0.3, 1.5], bin_edges(0.0, 2.0, 1.0), 2.0)
        assert series.times.tolist() == [0.0, 1.0]
        assert series.values.tolist() == pytest.approx([6.0, 2.0])

    def test_counted_rate_scales_by_width(self) -> None:
        series = counted_rate([0.1, 0.2, 0.6], bin_edges(0.0, 1.0, 0.5))
        assert series.values.tolist() == pytest.approx([4.0, 2.0])

    def test_acked_rate_skips_rows_without_rtt(self) -> None:
        trace = Trace(duration=2.0)
        trace.append(TraceRecord(0.1, 1, 10.0, 0.025, 0, False))
        trace.append(TraceRecord(0.2, 1, 10.0, 0.025, 0, False))
        trace.append(TraceRecord(0.5, 2, 10.0, 0.030, 0, False))
        trace.append(TraceRecord(0.7, 1, 5.0, math.nan, 1, True))
        trace.append(TraceRecord(1.5, 2, 10.0, 0.030, 1, False))
        series = acked_rate_series(trace, 1.0, stride=2)
        assert series.times.tolist() == [0.0, 1.0]
        assert series.values.tolist() == pytest.approx([6.0, 2.0])


class TestTimeToRate:
    """Tests for the first sustained arrival at a target rate."""

    series = make_series([0.0, 0.5, 1.0, 1.5, 2.0], [10.0, 40.0, 10.0, 40.0, 40.0])

    def test_brief_peak_not_sustained(self) -> None:
        assert time_to_rate(self.series, 40.0, 0.9, end_time=5.0) == 1.5

    def test_short_sustain_accepts_first_peak(self) -> None:
        assert time_to_rate(self.series, 40.0, 0.9, 5.0, sustain=0.25) == 0.5

    def test_last_sample_holds_until_end(self) -> None:
        assert time_to_rate(self.series, 40.0, 0.9, 5.0, sustain=3.0) == 1.5

    def test_late_arrival_cut_short_by_end(self) -> None:
        series = make_series([0.0, 1.0], [0.0, 40.0])
        assert time_to_rate(series, 40.0, 0.9, end_time=1.5) == 1.5

    def test_never_reached_returns_end(self) -> None:
        assert time_to_rate(self.series, 100.0, 0.9, end_time=5.0) == 5.0

    def test_empty_series(self) -> None:
        assert time_to_rate(make_series([], []), 40.0, 0.9, end_time=4.0) == 4.0

    def test_invalid_fraction(self) -> None:
        with pytest.raises(StatisticsError):
            time_to_rate(self.series, 40.0, 0.0, end_time=5.0)


class TestSummarizeTrace:
    """Tests for per-flow trace summaries."""

    def make_trace(self) -> Trace:
        trace = Trace(duration=10.0)
        trace.append(TraceRecord(0.5, 2, 100.0, 0.5, 0, False))
        trace.append(TraceRecord(2.0, 2, 10.0, 0.030, 1, False))
        trace.append(TraceRecord(3.0, 1, 20.0, 0.025, 0, False))
        trace.append(TraceRecord(4.0, 2, 12.0, 0.040, 2, False))
        trace.append(TraceRecord(5.0, 2, 6.0, math.nan, 2, True))
        trace.append(TraceRecord(6.0, 1, 22.0, 0.027, 0, False))
        return trace

    def test_per_flow_statistics(self) -> None:
        summaries = summarize_trace(self.make_trace(), (1.0, 10.0))
        assert [s.flow_id for s in summaries] == [1, 2]

        first, second = summaries
        assert first.rate.count == 7
        assert first.rate.mean == pytest.approx(148.0 / 7)
        assert first.rtt.mean == pytest.approx(0.026)
        assert first.losses == 0

        assert second.rate.count == 9
        assert second.rate.mean == pytest.approx(18.0)
        assert second.rtt.count == 2
        assert second.rtt.mean == pytest.approx(0.035)
        assert second.losses == 1

    def test_rate_weighted_by_holding_time(self) -> None:
        rows = [(0.0, 1, 10.0)] + [(9.0 + 0.1 * i, 1, 30.0) for i in range(10)]
        (summary,) = summarize_trace(rate_trace(rows), (0.0, 10.0))
        assert summary.rate.mean == pytest.approx(12.0)
        assert summary.rtt.count == 11

    def test_late_flow_uses_row_rates(self) -> None:
        rows = [(0.0, 1, 10.0), (9.5, 2, 30.0)]
        summaries = summarize_trace(rate_trace(rows, duration=9.9), (0.0, 10.0))
        assert summaries[1].rate.mean == pytest.approx(30.0)
        assert summaries[1].rate.count == 1

    def test_empty_window(self) -> None:
        with pytest.raises(StatisticsError, match="no trace rows"):
            summarize_trace(self.make_trace(), (20.0, 30.0))

    def test_flow_with_only_losses(self) -> None:
        with pytest.raises(StatisticsError, match="flow 2"):
            summarize_trace(self.make_trace(), (4.5, 5.5))

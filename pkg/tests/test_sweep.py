"""Tests for buffer sweep evaluation."""

from __future__ import annotations

import pytest

from mpc_pacing.scenarios import SweepCell, buffer_sweep_cells
from mpc_pacing.sweep import default_trace_stride, evaluate_cell, run_sweep


def small_cells(fractions: list[float], counts: list[int]) -> list[SweepCell]:
    return buffer_sweep_cells(
        fractions, counts, bottleneck_rate=2000.0, duration=5.0, warmup=1.0, seed=1
    )


class TestTraceStride:
    """Tests for the default sweep trace stride."""

    def test_low_rates_record_every_ack(self) -> None:
        assert default_trace_stride(40.0) == 1
        assert default_trace_stride(2000.0) == 1

    def test_scales_with_rate(self) -> None:
        assert default_trace_stride(200_000.0) == 100
        assert default_trace_stride(50_000.0) == 25


class TestEvaluateCell:
    """Tests for single-cell evaluation."""

    def test_result_fields(self) -> None:
        cell = small_cells([1.0], [2])[0]
        result = evaluate_cell(cell, trace_stride=10)

        assert result.fraction == 1.0
        assert result.flow_count == 2
        assert result.buffer_capacity == 50
        assert result.bottleneck_rate == 2000.0
        assert result.sent > 0
        assert 0.0 <= result.loss_fraction <= 1.0
        assert result.lost == round(result.loss_fraction * result.sent)
        assert result.median_combined_rate > 0.0
        assert result.utilization == pytest.approx(result.median_combined_rate / 2000.0)
        assert result.median_rtt >= 0.025 - 1e-9
        assert result.median_rtt_ms == pytest.approx(result.median_rtt * 1000.0)
        assert 0.0 <= result.time_to_rate <= 5.0
        assert result.rate_box.q1 <= result.rate_box.median <= result.rate_box.q3

    def test_deterministic(self) -> None:
        cell = small_cells([0.5], [1])[0]
        first = evaluate_cell(cell, trace_stride=10)
        second = evaluate_cell(cell, trace_stride=10)
        assert first == second

    def test_acked_rate_bounded_by_bottleneck(self) -> None:
        cell = small_cells([4.0], [2])[0]
        result = evaluate_cell(cell, trace_stride=1)
        assert result.median_combined_rate <= 1.1 * 2000.0
        assert result.rate_box.q3 <= 1.1 * 2000.0


class TestRunSweep:
    """Tests for sweep orchestration."""

    def test_results_follow_cell_order(self) -> None:
        cells = small_cells([0.5, 2.0], [1, 2])
        results = run_sweep(cells, trace_stride=20, show_progress=False)
        assert [(r.flow_count, r.fraction) for r in results] == [
            (1, 0.5),
            (1, 2.0),
            (2, 0.5),
            (2, 2.0),
        ]

    @pytest.mark.slow
    def test_parallel_matches_serial(self) -> None:
        cells = small_cells([0.5, 2.0], [1, 2])
        serial = run_sweep(cells, jobs=1, trace_stride=20, show_progress=False)
        parallel = run_sweep(cells, jobs=2, trace_stride=20, show_progress=False)
        assert parallel == serial

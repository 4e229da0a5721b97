"""End-to-end runs of the built-in scenarios."""

from __future__ import annotations

from itertools import pairwise
from typing import TYPE_CHECKING

import numpy as np
import pytest

from mpc_pacing.scenarios import (
    DEFAULT_BOTTLENECK_RATE,
    TABLE1_CAPS,
    TABLE2_RTTS,
    Scenario,
    buffer_sweep_cells,
    get_builtin_scenario,
)
from mpc_pacing.sim import run_simulation
from mpc_pacing.stats import acked_rate_series, summarize, summarize_trace
from mpc_pacing.sweep import run_sweep

if TYPE_CHECKING:
    from mpc_pacing.sweep import SweepCellResult
    from mpc_pacing.trace import Trace

pytestmark = [pytest.mark.slow, pytest.mark.integration]

SWEEP_FRACTIONS = (1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0, 2.0, 4.0)
SWEEP_RATE = 2000.0
RTT_STEP_TOLERANCE = 1e-4


def simulate(scenario: Scenario) -> Trace:
    return run_simulation(
        scenario.link, scenario.flows, scenario.duration, scenario.noise
    )


def window(scenario: Scenario) -> tuple[float, float]:
    return scenario.warmup, scenario.duration


class TestSingleFlow:
    """One flow alone on the link keeps it full without a saw tooth."""

    def test_fills_the_link(self) -> None:
        scenario = get_builtin_scenario("single")
        trace = simulate(scenario)
        acked = acked_rate_series(trace, 1.0).within(window(scenario))
        assert summarize(acked).mean >= 0.9 * DEFAULT_BOTTLENECK_RATE

    def test_rate_is_smooth(self) -> None:
        scenario = get_builtin_scenario("single")
        (summary,) = summarize_trace(simulate(scenario), window(scenario))
        assert summary.rate.mean == pytest.approx(DEFAULT_BOTTLENECK_RATE, rel=0.05)
        assert summary.rate.std / summary.rate.mean <= 0.05

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_recovers_from_noise(self, seed: int) -> None:
        scenario = get_builtin_scenario("single", seed=seed)
        (summary,) = summarize_trace(simulate(scenario), window(scenario))
        assert summary.rate.min >= 0.5 * DEFAULT_BOTTLENECK_RATE


class TestEqualRtts:
    """Four flows with a 25 ms base RTT."""

    def test_uncapped_flows_share_fairly(self) -> None:
        scenario = get_builtin_scenario("table1-uncapped")
        summaries = summarize_trace(simulate(scenario), window(scenario))
        fair_share = DEFAULT_BOTTLENECK_RATE / len(scenario.flows)
        assert len(summaries) == 4
        for summary in summaries:
            assert summary.rate.mean == pytest.approx(fair_share, rel=0.15)

    def test_capped_flows_hold_their_caps(self) -> None:
        scenario = get_builtin_scenario("table1-capped")
        summaries = summarize_trace(simulate(scenario), window(scenario))
        means = [summary.rate.mean for summary in summaries]
        assert means[:3] == pytest.approx(list(TABLE1_CAPS[:3]), rel=0.1)
        assert 0.9 * 18.8 <= means[3] <= 1.1 * TABLE1_CAPS[3]
        for summary in summaries:
            assert summary.rate.std <= 0.3
            assert summary.rtt.std <= 0.5e-3

    def test_rates_stay_within_bounds(self) -> None:
        scenario = get_builtin_scenario("table1-capped")
        trace = simulate(scenario)
        caps = {flow.flow_id: flow.max_rate for flow in scenario.flows}
        floors = {flow.flow_id: flow.rate_floor for flow in scenario.flows}
        for record in trace.records():
            assert floors[record.flow_id] <= record.pacing_rate <= caps[record.flow_id]

    def test_runs_are_reproducible(self) -> None:
        scenario = get_builtin_scenario("table1-uncapped", seed=21)
        first, second = simulate(scenario), simulate(scenario)
        for name, column in first.arrays().items():
            np.testing.assert_array_equal(column, second.arrays()[name], err_msg=name)


class TestDifferentRtts:
    """Four flows with base RTTs of 25, 35, 45 and 55 ms."""

    def test_capped_flows_see_their_base_rtt(self) -> None:
        scenario = get_builtin_scenario("table2-capped")
        summaries = summarize_trace(simulate(scenario), window(scenario))
        for summary, base_rtt in zip(summaries, TABLE2_RTTS, strict=True):
            assert summary.rtt.mean == pytest.approx(base_rtt, abs=1e-3)
            assert summary.rtt.min >= base_rtt - 1e-9
            assert summary.rate.mean == pytest.approx(10.0, rel=0.1)
            assert summary.rate.std <= 0.3

    def test_packets_conserved(self) -> None:
        scenario = get_builtin_scenario("table2-uncapped")
        trace = simulate(scenario)
        totals = trace.totals
        assert totals.sent == totals.delivered + totals.lost + trace.queued_at_end


@pytest.fixture(scope="module")
def sweep_results() -> dict[float, SweepCellResult]:
    cells = buffer_sweep_cells(
        SWEEP_FRACTIONS, [2], bottleneck_rate=SWEEP_RATE, duration=60.0, warmup=10.0
    )
    results = run_sweep(cells, trace_stride=1, show_progress=False)
    return {result.fraction: result for result in results}


class TestBufferSweep:
    """Two flows on a 2000 packets/s link across buffer sizes."""

    def test_small_buffers_starve_the_link(
        self, sweep_results: dict[float, SweepCellResult]
    ) -> None:
        for fraction in (1 / 16, 1 / 8):
            assert sweep_results[fraction].utilization < 0.6
        for fraction in (1.0, 2.0, 4.0):
            assert sweep_results[fraction].utilization >= 0.95

    def test_small_buffers_lose_more(
        self, sweep_results: dict[float, SweepCellResult]
    ) -> None:
        small, large = sweep_results[1 / 16], sweep_results[4.0]
        assert small.buffer_capacity == 3
        assert large.buffer_capacity == 200
        assert small.loss_fraction > 0.0
        assert small.loss_fraction >= 10 * large.loss_fraction

    def test_rtt_grows_with_buffer(
        self, sweep_results: dict[float, SweepCellResult]
    ) -> None:
        rtts = [sweep_results[fraction].median_rtt for fraction in SWEEP_FRACTIONS]
        for smaller, larger in pairwise(rtts):
            assert larger >= smaller - RTT_STEP_TOLERANCE

    def test_full_buffer_converges_faster(
        self, sweep_results: dict[float, SweepCellResult]
    ) -> None:
        assert sweep_results[1.0].time_to_rate < sweep_results[1 / 2].time_to_rate

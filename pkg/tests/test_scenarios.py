"""Tests for the built-in scenarios."""

from __future__ import annotations

from dataclasses import replace

import pytest

from mpc_pacing.exceptions import ConfigurationError, ScenarioError
from mpc_pacing.scenarios import (
    BUILTIN_DESCRIPTIONS,
    TABLE_SERVICE_BURST,
    DEFAULT_SWEEP_FRACTIONS,
    SWEEP_NAME,
    TABLE1_CAPS,
    TABLE2_RTTS,
    buffer_sweep,
    buffer_sweep_cells,
    builtin_names,
    get_builtin_scenario,
    single_flow_scenario,
    table1_scenarios,
    table2_scenarios,
    with_overrides,
)


class TestBuiltinScenarios:
    """Tests for the single-run built-in scenarios."""

    def test_single(self) -> None:
        scenario = single_flow_scenario()
        scenario.validate()
        assert len(scenario.flows) == 1
        assert scenario.link.bottleneck_rate == 40.0
        assert scenario.link.buffer_capacity == 25
        assert scenario.duration == 300.0
        assert scenario.warmup == 30.0
        assert scenario.link.service_burst == 1

    def test_table1_caps(self) -> None:
        uncapped, capped = table1_scenarios()
        assert [flow.rate_cap for flow in capped.flows] == list(TABLE1_CAPS)
        assert capped.total_cap == pytest.approx(40.0)
        assert all(flow.base_rtt == 0.025 for flow in capped.flows)
        assert all(flow.rate_cap > 40.0 for flow in uncapped.flows)

    def test_table1_variants_share_everything_but_caps(self) -> None:
        uncapped, capped = table1_scenarios()
        assert uncapped.link == capped.link
        assert uncapped.noise == capped.noise
        for a, b in zip(uncapped.flows, capped.flows, strict=True):
            assert (a.flow_id, a.base_rtt, a.start_time) == (
                b.flow_id,
                b.base_rtt,
                b.start_time,
            )
            assert a.controller_config == b.controller_config

    def test_table2_rtts_and_caps(self) -> None:
        uncapped, capped = table2_scenarios()
        assert tuple(flow.base_rtt for flow in capped.flows) == TABLE2_RTTS
        assert tuple(flow.base_rtt for flow in uncapped.flows) == TABLE2_RTTS
        assert all(flow.rate_cap == 10.0 for flow in capped.flows)

    def test_capped_flows_start_at_cap(self) -> None:
        _, capped = table1_scenarios()
        assert [flow.starting_rate for flow in capped.flows] == [3.0, 7.0, 10.0, 20.0]

    def test_uncapped_flows_start_at_fair_share(self) -> None:
        uncapped, _ = table2_scenarios()
        assert [flow.starting_rate for flow in uncapped.flows] == [10.0] * 4

    def test_tables_serve_in_bursts(self) -> None:
        for scenario in (*table1_scenarios(), *table2_scenarios()):
            assert scenario.link.service_burst == TABLE_SERVICE_BURST == 3

    def test_flows_start_one_service_time_apart(self) -> None:
        _, capped = table1_scenarios()
        starts = [flow.start_time for flow in capped.flows]
        assert starts == pytest.approx([0.0, 0.025, 0.05, 0.075])

    def test_builders_are_pure(self) -> None:
        assert table1_scenarios(3) == table1_scenarios(3)
        assert table1_scenarios(3) != table1_scenarios(4)

    def test_all_builtins_validate(self) -> None:
        for name in builtin_names():
            if name == SWEEP_NAME:
                continue
            get_builtin_scenario(name).validate()
            assert name in BUILTIN_DESCRIPTIONS

    def test_seed_passed_through(self) -> None:
        assert get_builtin_scenario("table2-capped", seed=11).seed == 11

    def test_unknown_name(self) -> None:
        with pytest.raises(ScenarioError, match="available"):
            get_builtin_scenario("table3")

    def test_sweep_is_not_a_single_scenario(self) -> None:
        with pytest.raises(ScenarioError, match="sweep command"):
            get_builtin_scenario(SWEEP_NAME)


class TestScenarioValidation:
    """Tests for Scenario.validate and with_overrides."""

    def test_empty_name(self) -> None:
        with pytest.raises(ConfigurationError):
            replace(single_flow_scenario(), name="").validate()

    def test_duplicate_flow_ids(self) -> None:
        scenario = single_flow_scenario()
        doubled = replace(scenario, flows=scenario.flows * 2)
        with pytest.raises(ConfigurationError, match="unique"):
            doubled.validate()

    def test_overrides(self) -> None:
        scenario = with_overrides(
            single_flow_scenario(), seed=9, duration=20.0, warmup=2.0
        )
        assert (scenario.seed, scenario.duration, scenario.warmup) == (9, 20.0, 2.0)

    def test_no_overrides_returns_equal_scenario(self) -> None:
        assert with_overrides(single_flow_scenario()) == single_flow_scenario()

    def test_warmup_past_duration(self) -> None:
        with pytest.raises(ConfigurationError, match="warmup"):
            with_overrides(single_flow_scenario(), duration=10.0)


class TestBufferSweep:
    """Tests for the buffer-size grid."""

    def test_default_grid(self) -> None:
        cells = buffer_sweep_cells()
        assert len(cells) == 36
        assert [cell.flow_count for cell in cells[:9]] == [1] * 9
        assert [cell.fraction for cell in cells[:9]] == list(DEFAULT_SWEEP_FRACTIONS)
        assert cells[-1].flow_count == 8

    def test_buffer_capacity_from_bdp(self) -> None:
        cells = buffer_sweep_cells([1 / 16, 1.0, 16.0], [1])
        capacities = [cell.scenario.link.buffer_capacity for cell in cells]
        assert capacities == [313, 5000, 80000]

    def test_capacity_at_least_one_packet(self) -> None:
        cells = buffer_sweep_cells([1 / 16], [2], bottleneck_rate=40.0)
        assert cells[0].scenario.link.buffer_capacity == 1

    def test_flows_start_at_floor(self) -> None:
        cells = buffer_sweep_cells([1.0], [4], bottleneck_rate=2000.0)
        flows = cells[0].scenario.flows
        assert len(flows) == 4
        assert all(flow.rate_floor == 250.0 for flow in flows)
        assert all(flow.starting_rate == 250.0 for flow in flows)
        assert all(flow.rate_cap > 2000.0 for flow in flows)

    def test_flows_take_link_propagation_rtt(self) -> None:
        cells = buffer_sweep_cells([1.0], [2], base_rtt=0.05, bottleneck_rate=2000.0)
        scenario = cells[0].scenario
        assert all(flow.base_rtt is None for flow in scenario.flows)
        assert scenario.link.propagation_rtt == 0.05
        assert scenario.link.buffer_capacity == scenario.link.bdp == 100

    def test_cell_names(self) -> None:
        cells = buffer_sweep_cells([0.5], [2])
        assert cells[0].scenario.name == "sweep-0.5bdp-2flows"

    def test_scenarios_match_cells(self) -> None:
        scenarios = buffer_sweep([0.5, 2.0], [1, 2], seed=5)
        cells = buffer_sweep_cells([0.5, 2.0], [1, 2], seed=5)
        assert scenarios == [cell.scenario for cell in cells]
        assert all(scenario.seed == 5 for scenario in scenarios)

    @pytest.mark.parametrize(
        ("fractions", "counts"), [([0.0], [1]), ([1.0], [0]), ([-1.0], [2])]
    )
    def test_invalid_grid(self, fractions: list[float], counts: list[int]) -> None:
        with pytest.raises(ConfigurationError):
            buffer_sweep_cells(fractions, counts)

"""Fidelity configs, the cyclic scheduler, and the memory cost model."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from talkit.anchors import anchor_count
from talkit.errors import BudgetError, ConfigError, ValidationError
from talkit.fidelity import (
    CYCLE_ORDER,
    CostModel,
    FidelityConfig,
    ScheduleSpec,
    build_schedule,
    check_budget,
    config_at,
    default_lofi_configs,
    derive_config,
    estimate_peak_memory,
    memory_report,
    pixel_volume,
    reference_full_config,
)

FULL = reference_full_config()


class TestConfigs:
    def test_reference_dims(self):
        assert (FULL.num_snippets, FULL.height, FULL.width) == (100, 224, 224)
        assert pixel_volume(FULL) == 5_017_600

    def test_default_reductions(self):
        configs = default_lofi_configs(FULL)
        spatial, temporal, st_ = configs["spatial"], configs["temporal"], configs["spatiotemporal"]
        assert (spatial.num_snippets, spatial.height, spatial.width) == (100, 112, 112)
        assert (temporal.num_snippets, temporal.height, temporal.width) == (25, 224, 224)
        assert (st_.num_snippets, st_.height, st_.width) == (50, 158, 158)

    def test_reduced_volumes(self):
        configs = default_lofi_configs(FULL)
        assert pixel_volume(configs["spatial"]) == 1_254_400
        assert pixel_volume(configs["temporal"]) == 1_254_400
        assert pixel_volume(configs["spatiotemporal"]) == 1_248_200

    def test_quarter_parity(self):
        quarter = pixel_volume(FULL) / 4.0
        for config in default_lofi_configs(FULL).values():
            assert abs(pixel_volume(config) / quarter - 1.0) < 0.01

    def test_rounding_to_nearest(self):
        # 224 / sqrt(2) = 158.39... rounds down; 100 / 2 is exact
        st_ = derive_config("spatiotemporal", FULL, r_s=math.sqrt(2.0), r_t=2.0)
        assert (st_.height, st_.width, st_.num_snippets) == (158, 158, 50)

    def test_rounding_never_below_one(self):
        tiny = derive_config("temporal", FULL, r_t=1e6)
        assert tiny.num_snippets == 1

    def test_kind_must_match_factors(self):
        with pytest.raises(ConfigError):
            FidelityConfig(kind="spatial", num_snippets=100, height=224, width=224)
        with pytest.raises(ConfigError):
            FidelityConfig(kind="full", num_snippets=100, height=112, width=112, r_s=2.0)
        with pytest.raises(ConfigError):
            FidelityConfig(kind="temporal", num_snippets=50, height=112, width=112, r_s=2.0, r_t=2.0)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            FidelityConfig(kind="tiny", num_snippets=10, height=8, width=8)

    def test_factors_only_reduce(self):
        with pytest.raises(ValidationError):
            derive_config("spatial", FULL, r_s=0.5)
        with pytest.raises(ValidationError):
            FidelityConfig(kind="spatial", num_snippets=100, height=448, width=448, r_s=0.5)

    def test_derive_requires_full_source(self):
        reduced = derive_config("spatial", FULL, r_s=2.0)
        with pytest.raises(ConfigError):
            derive_config("temporal", reduced, r_t=4.0)

    def test_dims_at_least_one(self):
        with pytest.raises(ValidationError):
            FidelityConfig(kind="full", num_snippets=0, height=8, width=8)


class TestScheduleSpec:
    def test_defaults(self):
        spec = ScheduleSpec()
        assert (spec.mode, spec.c_s, spec.c_l) == ("long-cycle", 16, 1)

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            ScheduleSpec(mode="random")

    def test_cycle_lengths_positive(self):
        with pytest.raises(ValidationError):
            ScheduleSpec(c_s=0)
        with pytest.raises(ValidationError):
            ScheduleSpec(c_l=-1)

    def test_fixed_kind_must_be_reduced(self):
        with pytest.raises(ConfigError):
            ScheduleSpec(mode="fixed", fixed_kind="full")


class TestScheduler:
    configs = default_lofi_configs(FULL)

    def test_fixed_mode_is_constant(self):
        spec = ScheduleSpec(mode="fixed", fixed_kind="temporal")
        schedule = build_schedule(spec, self.configs, epochs=3, batches_per_epoch=5)
        assert all(c.kind == "temporal" for c in schedule)

    def test_long_cycle_rotates_per_epoch(self):
        spec = ScheduleSpec(mode="long-cycle", c_l=1)
        schedule = build_schedule(spec, self.configs, epochs=6, batches_per_epoch=4)
        per_epoch = [schedule[e * 4].kind for e in range(6)]
        assert per_epoch == ["spatial", "temporal", "spatiotemporal"] * 2
        # constant within each epoch
        for e in range(6):
            kinds = {c.kind for c in schedule[e * 4 : (e + 1) * 4]}
            assert len(kinds) == 1

    def test_long_cycle_holds_c_l_epochs(self):
        spec = ScheduleSpec(mode="long-cycle", c_l=2)
        schedule = build_schedule(spec, self.configs, epochs=8, batches_per_epoch=3)
        per_epoch = [schedule[e * 3].kind for e in range(8)]
        assert per_epoch == ["spatial"] * 2 + ["temporal"] * 2 + ["spatiotemporal"] * 2 + ["spatial"] * 2

    def test_short_cycle_changes_at_multiples(self):
        spec = ScheduleSpec(mode="short-cycle", c_s=16)
        schedule = build_schedule(spec, self.configs, epochs=8, batches_per_epoch=20)
        changes = [
            b
            for b in range(1, len(schedule))
            if schedule[b].kind != schedule[b - 1].kind
        ]
        assert changes == [b for b in range(16, 160, 16)]

    def test_full_fidelity_never_scheduled(self):
        for spec in (
            ScheduleSpec(mode="fixed", fixed_kind="spatiotemporal"),
            ScheduleSpec(mode="short-cycle", c_s=3),
            ScheduleSpec(mode="long-cycle", c_l=2),
        ):
            schedule = build_schedule(spec, self.configs, epochs=5, batches_per_epoch=7)
            assert all(c.kind != "full" for c in schedule)

    def test_full_config_in_table_rejected(self):
        bad = dict(self.configs)
        bad["spatial"] = FULL
        with pytest.raises(ConfigError):
            config_at(ScheduleSpec(), bad, 0, 10)

    def test_missing_kind_rejected(self):
        incomplete = {k: v for k, v in self.configs.items() if k != "temporal"}
        with pytest.raises(ConfigError):
            config_at(ScheduleSpec(), incomplete, 0, 10)

    def test_config_at_is_pure(self):
        spec = ScheduleSpec(mode="short-cycle", c_s=5)
        first = [config_at(spec, self.configs, b, 9) for b in range(30)]
        second = [config_at(spec, self.configs, b, 9) for b in range(30)]
        assert first == second

    def test_build_schedule_length_validation(self):
        with pytest.raises(ValidationError):
            build_schedule(ScheduleSpec(), self.configs, epochs=0, batches_per_epoch=5)

    @given(
        st.sampled_from(["fixed", "short-cycle", "long-cycle"]),
        st.integers(min_value=1, max_value=7),
        st.integers(min_value=1, max_value=5),
        st.integers(min_value=1, max_value=6),
        st.integers(min_value=1, max_value=8),
    )
    def test_schedule_invariants(self, mode, c_s, c_l, epochs, batches_per_epoch):
        spec = ScheduleSpec(mode=mode, c_s=c_s, c_l=c_l)
        schedule = build_schedule(spec, self.configs, epochs, batches_per_epoch)
        assert len(schedule) == epochs * batches_per_epoch
        assert all(c.kind in CYCLE_ORDER for c in schedule)
        assert schedule == [config_at(spec, self.configs, b, batches_per_epoch) for b in range(len(schedule))]


class TestCostModel:
    def test_coefficients_positive(self):
        with pytest.raises(ValidationError):
            CostModel(a_enc=0.0)
        with pytest.raises(ValidationError):
            CostModel(optimizer_multiplier=-1.0)

    def test_estimate_formula(self):
        cost = CostModel()
        got = estimate_peak_memory(FULL, cost, batch_size=16, frames_per_snippet=8)
        enc = 20.0 * 5_017_600 * 8 * 4
        head = 2000.0 * anchor_count(100) * 4
        assert got == 16 * (enc + head) * 3.0
        assert got == 156_003_456_000.0

    def test_estimate_monotone_in_batch(self):
        cost = CostModel()
        small = estimate_peak_memory(FULL, cost, batch_size=4)
        large = estimate_peak_memory(FULL, cost, batch_size=8)
        assert large == 2 * small

    def test_estimate_validates_sizes(self):
        with pytest.raises(ValidationError):
            estimate_peak_memory(FULL, CostModel(), batch_size=0)
        with pytest.raises(ValidationError):
            estimate_peak_memory(FULL, CostModel(), batch_size=4, frames_per_snippet=0)

    def test_check_budget_verdict(self):
        cost = CostModel()
        need = estimate_peak_memory(FULL, cost, batch_size=16)
        ok = check_budget(FULL, cost, 16, need)
        assert ok.feasible and ok.slack_bytes == 0.0
        tight = check_budget(FULL, cost, 16, need - 1)
        assert not tight.feasible and tight.slack_bytes == -1.0

    def test_negative_budget_rejected(self):
        with pytest.raises(BudgetError):
            check_budget(FULL, CostModel(), 16, -1.0)

    def test_memory_report_shape(self):
        report = memory_report(FULL, default_lofi_configs(FULL), CostModel(), 16, 128 * 2**30)
        assert set(report["configs"]) == {"full", "spatial", "temporal", "spatiotemporal"}
        full_entry = report["configs"]["full"]
        assert full_entry["pixel_volume"] == 5_017_600
        assert full_entry["parity_vs_quarter_full"] == pytest.approx(4.0)
        for kind in CYCLE_ORDER:
            entry = report["configs"][kind]
            assert abs(entry["parity_vs_quarter_full"] - 1.0) < 0.01
            assert entry["feasible"] is True
        assert full_entry["feasible"] is False

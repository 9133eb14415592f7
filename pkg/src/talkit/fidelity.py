"""Fidelity configurations, the cyclic fidelity scheduler, and the memory cost model.

A fidelity configuration fixes how large a mini-batch is along the axes that
dominate activation memory: snippet count L and spatial extent H x W. Reduced
configurations trade resolution on one or both axes so that end-to-end
encoder+head training fits a byte budget; the scheduler cycles through them
so no single axis is starved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .anchors import anchor_count
from .errors import BudgetError, ConfigError, ValidationError

KINDS = ("full", "spatial", "temporal", "spatiotemporal")

# The order reduced configurations are cycled through.
CYCLE_ORDER = ("spatial", "temporal", "spatiotemporal")


@dataclass(frozen=True)
class FidelityConfig:
    """One operating point: L snippets at H x W pixels.

    r_s and r_t record the reduction factors relative to the full
    configuration this one was derived from (1.0 when the axis is untouched).
    """

    kind: str
    num_snippets: int
    height: int
    width: int
    r_s: float = 1.0
    r_t: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown fidelity kind {self.kind!r}, expected one of {KINDS}")
        if self.num_snippets < 1 or self.height < 1 or self.width < 1:
            raise ValidationError(
                f"fidelity dims must be >= 1, got L={self.num_snippets}, "
                f"H={self.height}, W={self.width}"
            )
        if self.r_s < 1.0 or self.r_t < 1.0:
            raise ValidationError("reduction factors must be >= 1 (fidelity only ever reduces)")
        # kind must agree with which factors actually reduce
        spatial_reduced = self.r_s > 1.0
        temporal_reduced = self.r_t > 1.0
        expected = {
            "full": (False, False),
            "spatial": (True, False),
            "temporal": (False, True),
            "spatiotemporal": (True, True),
        }[self.kind]
        if (spatial_reduced, temporal_reduced) != expected:
            raise ConfigError(
                f"kind {self.kind!r} inconsistent with factors r_s={self.r_s}, r_t={self.r_t}"
            )


def _round_dim(value: float) -> int:
    return max(1, int(math.floor(value + 0.5)))


def derive_config(kind: str, full: FidelityConfig, r_s: float = 1.0, r_t: float = 1.0) -> FidelityConfig:
    """Reduce a full configuration by the given factors.

    Non-integer results round to nearest (so 224/sqrt(2) gives 158), never
    below 1. Factors below 1 would upscale and are rejected.
    """
    if full.kind != "full":
        raise ConfigError(f"can only derive from a full config, got kind {full.kind!r}")
    if r_s < 1.0 or r_t < 1.0:
        raise ValidationError(f"reduction factors must be >= 1, got r_s={r_s}, r_t={r_t}")
    return FidelityConfig(
        kind=kind,
        num_snippets=_round_dim(full.num_snippets / r_t),
        height=_round_dim(full.height / r_s),
        width=_round_dim(full.width / r_s),
        r_s=float(r_s),
        r_t=float(r_t),
    )


def reference_full_config() -> FidelityConfig:
    """The full configuration at standard benchmark dimensions."""
    return FidelityConfig(kind="full", num_snippets=100, height=224, width=224)


def default_lofi_configs(full: FidelityConfig) -> dict[str, FidelityConfig]:
    """The three stock reduced configurations, keyed by kind.

    Factors are chosen so each reduced pixel volume sits within 1% of a
    quarter of the full volume: spatial halves H and W, temporal quarters L,
    spatiotemporal halves L and divides H, W by sqrt(2).
    """
    return {
        "spatial": derive_config("spatial", full, r_s=2.0),
        "temporal": derive_config("temporal", full, r_t=4.0),
        "spatiotemporal": derive_config("spatiotemporal", full, r_s=math.sqrt(2.0), r_t=2.0),
    }


def pixel_volume(config: FidelityConfig) -> int:
    """L * H * W. Frames-per-snippet and channels are config-independent
    constants and belong to the cost model, not here."""
    return config.num_snippets * config.height * config.width


@dataclass(frozen=True)
class ScheduleSpec:
    """How fidelity varies over training.

    fixed: one reduced config throughout (fixed_kind picks it).
    long-cycle: config changes every c_l epochs, cycling CYCLE_ORDER.
    short-cycle: config changes every c_s global batches, same cycle.
    The modes are mutually exclusive; batch size never changes with them.
    """

    mode: str = "long-cycle"
    c_s: int = 16
    c_l: int = 1
    fixed_kind: str = "spatiotemporal"

    def __post_init__(self):
        if self.mode not in ("fixed", "short-cycle", "long-cycle"):
            raise ConfigError(f"unknown schedule mode {self.mode!r}")
        if self.c_s < 1 or self.c_l < 1:
            raise ValidationError(f"cycle lengths must be >= 1, got c_s={self.c_s}, c_l={self.c_l}")
        if self.fixed_kind not in CYCLE_ORDER:
            raise ConfigError(f"fixed_kind must be a reduced kind, got {self.fixed_kind!r}")


def _check_lofi_configs(configs: dict[str, FidelityConfig]) -> None:
    for kind in CYCLE_ORDER:
        if kind not in configs:
            raise ConfigError(f"schedule needs a {kind!r} config")
        if configs[kind].kind == "full":
            raise ConfigError("the full-fidelity config never appears in a reduced schedule")


def config_at(
    spec: ScheduleSpec,
    configs: dict[str, FidelityConfig],
    batch_index: int,
    batches_per_epoch: int,
) -> FidelityConfig:
    """Fidelity for one global batch index; pure in (spec, index)."""
    _check_lofi_configs(configs)
    if spec.mode == "fixed":
        return configs[spec.fixed_kind]
    if spec.mode == "short-cycle":
        return configs[CYCLE_ORDER[(batch_index // spec.c_s) % 3]]
    epoch = batch_index // batches_per_epoch
    return configs[CYCLE_ORDER[(epoch // spec.c_l) % 3]]


def build_schedule(
    spec: ScheduleSpec,
    configs: dict[str, FidelityConfig],
    epochs: int,
    batches_per_epoch: int,
) -> list[FidelityConfig]:
    """One FidelityConfig per global batch, length epochs * batches_per_epoch."""
    if epochs < 1 or batches_per_epoch < 1:
        raise ValidationError("epochs and batches_per_epoch must be >= 1")
    return [
        config_at(spec, configs, b, batches_per_epoch)
        for b in range(epochs * batches_per_epoch)
    ]


@dataclass(frozen=True)
class CostModel:
    """Analytic activation-memory proxy.

    Encoder activations scale with input pixels (a_enc elements per pixel,
    summed over layers); head activations scale with anchors (a_head elements
    per anchor). The optimizer multiplier covers gradients plus state.
    """

    bytes_per_elem: int = 4
    a_enc: float = 20.0
    a_head: float = 2000.0
    optimizer_multiplier: float = 3.0

    def __post_init__(self):
        if min(self.bytes_per_elem, self.a_enc, self.a_head, self.optimizer_multiplier) <= 0:
            raise ValidationError("all cost-model coefficients must be positive")


def estimate_peak_memory(
    config: FidelityConfig,
    cost: CostModel,
    batch_size: int,
    frames_per_snippet: int = 8,
) -> float:
    """Estimated peak training bytes for one mini-batch step."""
    if batch_size < 1 or frames_per_snippet < 1:
        raise ValidationError("batch_size and frames_per_snippet must be >= 1")
    enc = cost.a_enc * pixel_volume(config) * frames_per_snippet * cost.bytes_per_elem
    head = cost.a_head * anchor_count(config.num_snippets) * cost.bytes_per_elem
    return batch_size * (enc + head) * cost.optimizer_multiplier


@dataclass(frozen=True)
class BudgetVerdict:
    feasible: bool
    estimate_bytes: float
    budget_bytes: float

    @property
    def slack_bytes(self) -> float:
        return self.budget_bytes - self.estimate_bytes


def check_budget(
    config: FidelityConfig,
    cost: CostModel,
    batch_size: int,
    budget_bytes: float,
    frames_per_snippet: int = 8,
) -> BudgetVerdict:
    if budget_bytes < 0:
        raise BudgetError(f"budget must be non-negative, got {budget_bytes}")
    estimate = estimate_peak_memory(config, cost, batch_size, frames_per_snippet)
    return BudgetVerdict(feasible=estimate <= budget_bytes, estimate_bytes=estimate, budget_bytes=budget_bytes)


def memory_report(
    full: FidelityConfig,
    configs: dict[str, FidelityConfig],
    cost: CostModel,
    batch_size: int,
    budget_bytes: float,
    frames_per_snippet: int = 8,
) -> dict:
    """JSON-ready feasibility report over the full config and its reductions."""
    quarter = pixel_volume(full) / 4.0
    entries = {}
    for name, config in [("full", full)] + [(k, configs[k]) for k in CYCLE_ORDER]:
        verdict = check_budget(config, cost, batch_size, budget_bytes, frames_per_snippet)
        entries[name] = {
            "kind": config.kind,
            "num_snippets": config.num_snippets,
            "height": config.height,
            "width": config.width,
            "pixel_volume": pixel_volume(config),
            "fraction_of_full": pixel_volume(config) / pixel_volume(full),
            "parity_vs_quarter_full": pixel_volume(config) / quarter,
            "estimate_bytes": verdict.estimate_bytes,
            "feasible": verdict.feasible,
            "slack_bytes": verdict.slack_bytes,
        }
    return {
        "batch_size": batch_size,
        "budget_bytes": budget_bytes,
        "frames_per_snippet": frames_per_snippet,
        "configs": entries,
    }

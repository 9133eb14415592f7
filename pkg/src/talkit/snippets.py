"""Snippet extraction: windowing, striding, spatial rescaling, batch assembly.

A video of T frames becomes L snippets. Each snippet is a window of
consecutive frames centered on a grid position, subsampled by a stride.
Reduced temporal fidelity means fewer centers over the same span, never
fewer frames within a snippet.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError
from .fidelity import FidelityConfig
from .synthetic import RawVideo


@dataclass(frozen=True)
class SnippetPlan:
    """Fixed windowing parameters shared by every fidelity configuration.

    The snippet count L is deliberately not a field here: it varies per
    fidelity config, and duplicating it invites disagreement.
    """

    window: int = 64
    stride: int = 8

    def __post_init__(self):
        if self.window < 1 or self.stride < 1:
            raise ValidationError(f"window and stride must be >= 1, got {self.window}, {self.stride}")
        if self.window % self.stride != 0:
            raise ValidationError(f"window ({self.window}) must be divisible by stride ({self.stride})")

    @property
    def frames_per_snippet(self) -> int:
        return self.window // self.stride


@dataclass(frozen=True)
class TimeGrid:
    """Affine map between continuous snippet index and seconds.

    Built from the unrounded center grid lo + i*step so the map is exactly
    invertible; integer frame centers are a rounding of this grid.
    """

    lo: float
    step: float
    fps: float

    def seconds(self, index: float) -> float:
        return (self.lo + index * self.step) / self.fps

    def index(self, seconds: float) -> float:
        if self.step == 0.0:
            return 0.0
        return (seconds * self.fps - self.lo) / self.step


def center_grid(num_frames: int, num_snippets: int, plan: SnippetPlan | None = None) -> tuple[float, float]:
    """Return (lo, step) of the uniform center grid over [window/2, T - window/2]."""
    plan = plan or SnippetPlan()
    if num_snippets < 1:
        raise ValidationError(f"need at least one snippet, got {num_snippets}")
    if num_frames < plan.window:
        raise ValidationError(
            f"video has {num_frames} frames, shorter than the snippet window {plan.window}"
        )
    lo = plan.window / 2.0
    hi = num_frames - plan.window / 2.0
    if num_snippets == 1:
        return (lo + hi) / 2.0, 0.0
    return lo, (hi - lo) / (num_snippets - 1)


def snippet_centers(num_frames: int, num_snippets: int, plan: SnippetPlan | None = None) -> np.ndarray:
    """L integer frame indices uniformly spaced over the valid center range.

    A single snippet sits at the video midpoint; when the valid range
    collapses (T == window) every center lands on the same frame.
    """
    lo, step = center_grid(num_frames, num_snippets, plan)
    grid = lo + step * np.arange(num_snippets, dtype=np.float64)
    return np.floor(grid + 0.5).astype(np.int64)


def time_grid(num_frames: int, num_snippets: int, fps: float, plan: SnippetPlan | None = None) -> TimeGrid:
    lo, step = center_grid(num_frames, num_snippets, plan)
    return TimeGrid(lo=lo, step=step, fps=float(fps))


def sample_snippet(video: RawVideo, center: int, plan: SnippetPlan | None = None) -> np.ndarray:
    """Extract one snippet: `window` frames centered at `center`, every
    `stride`-th kept. Out-of-range indices clamp to the edge frames."""
    plan = plan or SnippetPlan()
    frames = video.frames
    num_frames = frames.shape[0]
    start = int(center) - plan.window // 2
    idx = start + np.arange(0, plan.window, plan.stride)
    idx = np.clip(idx, 0, num_frames - 1)
    return np.asarray(frames[idx], dtype=np.float32)


def _area_weights(source: int, target: int) -> np.ndarray:
    """Row-stochastic (target, source) matrix of fractional pixel overlaps.

    Output pixel i covers the input span [i*r, (i+1)*r) with r = source/target;
    each input pixel contributes its overlap with that span.
    """
    r = source / target
    weights = np.zeros((target, source), dtype=np.float64)
    for i in range(target):
        a, b = i * r, (i + 1) * r
        j0, j1 = int(np.floor(a)), int(np.ceil(b))
        for j in range(j0, min(j1, source)):
            weights[i, j] = min(b, j + 1) - max(a, j)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights


def rescale_spatial(frames: np.ndarray, height: int, width: int) -> np.ndarray:
    """Area-preserving downscale of (..., H, W, C) frames to (height, width).

    Each output pixel is the exact area-weighted mean of the input pixels it
    covers, so constants map to themselves and values stay in [0, 1].
    """
    src_h, src_w = frames.shape[-3], frames.shape[-2]
    if height > src_h or width > src_w:
        raise ValidationError(
            f"rescale target ({height}, {width}) exceeds source ({src_h}, {src_w}); "
            "fidelity only ever reduces"
        )
    if height == src_h and width == src_w:
        return frames
    wh = _area_weights(src_h, height)
    ww = _area_weights(src_w, width)
    x = np.moveaxis(np.asarray(frames, dtype=np.float64), -1, -3)  # (..., C, H, W)
    x = np.matmul(wh, x)
    x = np.matmul(x, ww.T)
    return np.moveaxis(x, -3, -1).astype(np.float32)


@dataclass(frozen=True)
class SnippetBatch:
    """A realized mini-batch: (B, L, frames_per_snippet, H, W, 3) in [0, 1]."""

    tensor: np.ndarray
    video_ids: tuple[str, ...]
    config: FidelityConfig
    plan: SnippetPlan = field(default_factory=SnippetPlan)

    def __post_init__(self):
        expected = batch_shape(len(self.video_ids), self.config, self.plan)
        if tuple(self.tensor.shape) != expected:
            raise ShapeError(f"batch tensor has shape {tuple(self.tensor.shape)}, expected {expected}")
        if self.tensor.size and (self.tensor.min() < 0.0 or self.tensor.max() > 1.0):
            raise ValidationError("batch values must lie in [0, 1]")

    @property
    def batch_size(self) -> int:
        return len(self.video_ids)


def batch_shape(batch_size: int, config: FidelityConfig, plan: SnippetPlan | None = None) -> tuple[int, ...]:
    """Shape a batch of this size would have, without materializing it."""
    plan = plan or SnippetPlan()
    return (batch_size, config.num_snippets, plan.frames_per_snippet, config.height, config.width, 3)


def build_batch(
    videos: list[RawVideo], config: FidelityConfig, plan: SnippetPlan | None = None
) -> SnippetBatch:
    """Assemble a mini-batch at the given fidelity.

    Temporal reduction recomputes config.L uniform centers over each whole
    video; spatial reduction rescales every snippet to (config.H, config.W).
    Deterministic in (videos, config, plan), independent of assembly order.
    """
    plan = plan or SnippetPlan()
    if not videos:
        raise ValidationError("build_batch needs at least one video")
    items = []
    for video in videos:
        centers = snippet_centers(video.frames.shape[0], config.num_snippets, plan)
        snips = np.stack([sample_snippet(video, c, plan) for c in centers])
        items.append(rescale_spatial(snips, config.height, config.width))
    tensor = np.ascontiguousarray(np.stack(items), dtype=np.float32)
    return SnippetBatch(
        tensor=tensor,
        video_ids=tuple(v.video_id for v in videos),
        config=config,
        plan=plan,
    )

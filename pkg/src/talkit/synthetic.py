"""Synthetic untrimmed videos with planted, motion-coded action segments.

Each class is a patch drifting with a class-specific direction and speed over
a noisy textured background; the class signal is motion, not appearance, so a
purely spatial model cannot separate the classes. Instances start and stop
abruptly, which makes their boundaries learnable.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import AnnotationSet, VideoAnnotations, save_annotations
from .errors import GenerationError, ValidationError
from .seeding import derive_seed
from .segments import ActionInstance, Segment
from .tensorio import read_tensor, write_tensor

SNIPPET_WINDOW = 64

# Rendering constants; the class signal lives in the motion vector alone.
PATCH_SIZE = 12
PATCH_VALUE = 0.92
BACKGROUND_LEVEL = 0.45
TEXTURE_STD = 0.10
BASE_SPEED = 0.25  # pixels per frame
PLACEMENT_GAP = 24  # frames kept clear between planted instances


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic dataset; generation is a pure function of this."""

    num_videos: int = 64
    frames_per_video: int = 800
    full_height: int = 32
    full_width: int = 32
    num_classes: int = 4
    speed_levels: int = 2
    instances_per_video: tuple[int, int] = (1, 2)
    min_instance_seconds: float = 6.0
    max_instance_seconds: float = 10.0
    fps: float = 25.0
    noise_std: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.frames_per_video < SNIPPET_WINDOW:
            raise ValidationError(
                f"frames_per_video must be at least the snippet window "
                f"({SNIPPET_WINDOW}), got {self.frames_per_video}"
            )
        if self.num_videos < 1 or self.num_classes < 1:
            raise ValidationError("num_videos and num_classes must be positive")
        if self.speed_levels < 1:
            raise ValidationError(f"speed_levels must be positive, got {self.speed_levels}")
        lo, hi = self.instances_per_video
        if not 0 <= lo <= hi:
            raise ValidationError(f"bad instances_per_video range {self.instances_per_video}")
        if not 0 < self.min_instance_seconds <= self.max_instance_seconds:
            raise ValidationError("instance length range must satisfy 0 < min <= max")
        if self.fps <= 0:
            raise ValidationError("fps must be positive")
        if self.max_instance_seconds * self.fps > self.frames_per_video:
            raise ValidationError("max instance length exceeds the video length")

    @property
    def duration(self) -> float:
        return self.frames_per_video / self.fps

    def class_names(self) -> tuple[str, ...]:
        return tuple(f"pattern_{k:02d}" for k in range(self.num_classes))


@dataclass(frozen=True)
class RawVideo:
    """An untrimmed video tensor of shape (T, H, W, 3) with values in [0, 1]."""

    video_id: str
    frames: np.ndarray


def class_velocity(label: int, num_classes: int, speed_levels: int) -> tuple[float, float]:
    """Per-class (dy, dx) drift in pixels per frame; direction and speed code the class.

    Directions are spread evenly over the circle and speeds cycle through a
    geometric ladder of `speed_levels` rungs. With speed_levels == num_classes
    every class has its own speed, so even a model that pools away spatial
    orientation can tell them apart by motion energy alone. Smaller values make
    classes share a speed, and telling those apart requires direction-aware
    features; that is what makes a frozen energy-only encoder beatable.
    """
    angle = 2.0 * math.pi * label / num_classes
    speed = BASE_SPEED * 2.0 ** (label % speed_levels)
    return speed * math.sin(angle), speed * math.cos(angle)


def _place_instances(
    rng: np.random.Generator, spec: SynthSpec, video_index: int
) -> list[tuple[int, int, int]]:
    """Pick non-overlapping (frame_start, frame_end, label) triples for one video.

    All lengths are drawn first and the remaining slack is split uniformly
    over the gaps (stars and bars), so placement fails only when the
    instances genuinely do not fit.
    """
    lo, hi = spec.instances_per_video
    count = int(rng.integers(lo, hi + 1))
    if count == 0:
        return []
    lengths = [
        min(
            int(round(rng.uniform(spec.min_instance_seconds, spec.max_instance_seconds) * spec.fps)),
            spec.frames_per_video,
        )
        for _ in range(count)
    ]
    labels = [int(rng.integers(0, spec.num_classes)) for _ in range(count)]
    slack = spec.frames_per_video - sum(lengths) - PLACEMENT_GAP * (count - 1)
    if slack < 0:
        raise GenerationError(
            f"{count} instances of {sum(lengths)} total frames plus gaps do not fit "
            f"in {spec.frames_per_video} frames",
            video_index=video_index,
        )
    # uniform composition of slack into count+1 gap extras
    marks = np.sort(rng.choice(slack + count, size=count, replace=False))
    extras = np.diff(np.concatenate([[-1], marks, [slack + count]])) - 1
    placed: list[tuple[int, int, int]] = []
    cursor = int(extras[0])
    for length, label, extra in zip(lengths, labels, extras[1:]):
        placed.append((cursor, cursor + length, label))
        cursor += length + PLACEMENT_GAP + int(extra)
    return placed


def dataset_texture(spec: SynthSpec) -> np.ndarray:
    """The static background texture, one per dataset.

    Shared across a dataset's videos so that appearance variation between
    clips stays below the motion signal; a differently seeded dataset (e.g.
    the pretraining one) gets a different texture, which is the appearance
    shift a pretrained encoder has to survive.
    """
    rng = np.random.default_rng(derive_seed(spec.seed, "texture"))
    H, W = spec.full_height, spec.full_width
    coarse = rng.normal(0.0, TEXTURE_STD, size=(max(1, H // 8), max(1, W // 8)))
    return np.repeat(np.repeat(coarse, 8, axis=0), 8, axis=1)[:H, :W].astype(np.float32)


def _render_video(
    rng: np.random.Generator, spec: SynthSpec, placed, texture: np.ndarray
) -> np.ndarray:
    T, H, W = spec.frames_per_video, spec.full_height, spec.full_width
    base = BACKGROUND_LEVEL + texture[None, :, :, None]
    frames = base + rng.normal(0.0, spec.noise_std, size=(T, H, W, 3)).astype(np.float32)
    for start, end, label in placed:
        dy, dx = class_velocity(label, spec.num_classes, spec.speed_levels)
        y0 = float(rng.integers(0, H))
        x0 = float(rng.integers(0, W))
        for t in range(start, end):
            step = t - start
            rows = (int(round(y0 + dy * step)) + np.arange(PATCH_SIZE)) % H
            cols = (int(round(x0 + dx * step)) + np.arange(PATCH_SIZE)) % W
            frames[t][np.ix_(rows, cols)] = PATCH_VALUE
    return np.clip(frames, 0.0, 1.0, out=frames)


def generate_dataset(spec: SynthSpec, out_dir: str | os.PathLike) -> tuple[list[RawVideo], AnnotationSet]:
    """Render and persist every video; byte-identical output for identical specs.

    Writes ``annotations.json`` and one tensor file per video under
    ``videos/``. The returned frames are memory-mapped from the files just
    written, so the caller holds the on-disk bytes, not fresh copies.
    """
    out = Path(out_dir)
    video_dir = out / "videos"
    video_dir.mkdir(parents=True, exist_ok=True)

    videos: list[RawVideo] = []
    annotated: dict[str, VideoAnnotations] = {}
    texture = dataset_texture(spec)
    for index in range(spec.num_videos):
        rng = np.random.default_rng(derive_seed(spec.seed, "video", index))
        placed = _place_instances(rng, spec, index)
        frames = _render_video(rng, spec, placed, texture)
        video_id = f"v{index:04d}"
        path = video_dir / f"{video_id}.bin"
        write_tensor(frames, path)
        videos.append(RawVideo(video_id, read_tensor(path, mmap=True)))
        instances = tuple(
            ActionInstance(
                Segment(round(s / spec.fps, 6), round(e / spec.fps, 6)), label
            )
            for s, e, label in placed
        )
        annotated[video_id] = VideoAnnotations(round(spec.duration, 6), instances)

    annotations = AnnotationSet(spec.class_names(), spec.fps, annotated)
    save_annotations(annotations, out / "annotations.json")
    return videos, annotations


@dataclass(frozen=True)
class TrimmedClip:
    """One positive segment cropped to its frame range, for classification."""

    video_id: str
    instance_index: int
    label: int
    frame_start: int
    frame_end: int
    padded: bool


class ClipDataset:
    """Lazy (clip tensor, label) pairs built from a dataset's positive segments."""

    def __init__(self, source: "VideoSource", clips: list[TrimmedClip], window: int = SNIPPET_WINDOW):
        self._source = source
        self.clips = clips
        self.window = window

    def __len__(self) -> int:
        return len(self.clips)

    def load(self, index: int) -> tuple[np.ndarray, int]:
        clip = self.clips[index]
        frames = self._source.frames(clip.video_id)[clip.frame_start : clip.frame_end]
        frames = np.asarray(frames, dtype=np.float32)
        if clip.padded:
            deficit = self.window - frames.shape[0]
            front = deficit // 2
            back = deficit - front
            frames = np.pad(frames, ((front, back), (0, 0), (0, 0), (0, 0)), mode="edge")
        return frames, clip.label

    def labels(self) -> list[int]:
        return [clip.label for clip in self.clips]


class VideoSource:
    """Minimal protocol shim: anything exposing frames(video_id) and annotations."""

    def frames(self, video_id: str) -> np.ndarray:  # pragma: no cover - interface only
        raise NotImplementedError


def make_trimmed_clips(source, annotations: AnnotationSet, window: int = SNIPPET_WINDOW) -> ClipDataset:
    """One clip per ground-truth instance, edge-padded up to the snippet window."""
    clips: list[TrimmedClip] = []
    for video_id in sorted(annotations.videos):
        video = annotations.videos[video_id]
        for index, instance in enumerate(video.instances):
            fs = int(round(instance.segment.start * annotations.fps))
            fe = int(round(instance.segment.end * annotations.fps))
            clips.append(
                TrimmedClip(
                    video_id=video_id,
                    instance_index=index,
                    label=instance.label,
                    frame_start=fs,
                    frame_end=fe,
                    padded=(fe - fs) < window,
                )
            )
    return ClipDataset(source, clips, window)

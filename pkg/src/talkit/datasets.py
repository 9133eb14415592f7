"""Directory-backed video dataset access and deterministic train/val splits."""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

from .annotations import AnnotationSet, load_annotations
from .errors import ValidationError
from .synthetic import RawVideo
from .tensorio import read_tensor


class VideoDataset:
    """A generated dataset on disk: annotations.json plus videos/<id>.bin files.

    Frames are memory-mapped on first access and cached, so repeated batch
    assembly touches only the frames it needs.
    """

    def __init__(self, root: str | os.PathLike, annotations: AnnotationSet | None = None):
        self.root = Path(root)
        if annotations is None:
            annotations = load_annotations(self.root / "annotations.json")
        self.annotations = annotations
        self.video_ids = tuple(sorted(annotations.videos))
        self._frames: dict[str, np.ndarray] = {}
        for video_id in self.video_ids:
            path = self.root / "videos" / f"{video_id}.bin"
            if not path.exists():
                raise ValidationError(f"dataset at {self.root} is missing video file {path.name}")

    @property
    def classes(self) -> tuple[str, ...]:
        return self.annotations.classes

    @property
    def fps(self) -> float:
        return self.annotations.fps

    def __len__(self) -> int:
        return len(self.video_ids)

    def frames(self, video_id: str) -> np.ndarray:
        cached = self._frames.get(video_id)
        if cached is None:
            cached = read_tensor(self.root / "videos" / f"{video_id}.bin", mmap=True)
            self._frames[video_id] = cached
        return cached

    def num_frames(self, video_id: str) -> int:
        return self.frames(video_id).shape[0]

    def duration(self, video_id: str) -> float:
        return self.annotations.videos[video_id].duration

    def raw_video(self, video_id: str) -> RawVideo:
        return RawVideo(video_id, self.frames(video_id))


def split_video_ids(
    video_ids, val_fraction: float = 0.25, seed: int = 0
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Hold out a validation split by seed-stable hash of the video id.

    The hash ranking depends only on (seed, id), so the split survives
    reordering, regeneration, and process boundaries.
    """
    if not 0.0 <= val_fraction < 1.0:
        raise ValidationError(f"val_fraction must lie in [0, 1), got {val_fraction}")
    ids = sorted(video_ids)
    ranked = sorted(
        ids, key=lambda vid: hashlib.sha256(f"{seed}:{vid}".encode("utf-8")).hexdigest()
    )
    n_val = int(len(ids) * val_fraction)
    val = set(ranked[:n_val])
    train = tuple(v for v in ids if v not in val)
    return train, tuple(v for v in ids if v in val)

"""Annotation and prediction containers plus their JSON file format.

File contract (annotations)::

    {"classes": ["name", ...], "fps": 25.0,
     "videos": {"vid": {"duration": 32.0,
                        "annotations": [{"segment": [s, e], "label": 0}]}}}

Prediction files are identical except ``annotations`` becomes ``predictions``
and every entry carries an extra ``"score"``. Serialization is deterministic:
video ids sorted, floats written with 6-decimal precision.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .errors import ParseError, ValidationError
from .segments import ActionInstance, Prediction, Segment

FLOAT_DECIMALS = 6


def _round6(x: float) -> float:
    return round(float(x), FLOAT_DECIMALS)


@dataclass(frozen=True)
class VideoAnnotations:
    duration: float
    instances: tuple[ActionInstance, ...]


@dataclass(frozen=True)
class AnnotationSet:
    """Ground-truth action instances for a collection of untrimmed videos."""

    classes: tuple[str, ...]
    fps: float
    videos: dict[str, VideoAnnotations]

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ValidationError(f"fps must be positive, got {self.fps}")
        for video_id, video in self.videos.items():
            if video.duration <= 0:
                raise ValidationError(f"video {video_id!r}: duration must be positive")
            for index, instance in enumerate(video.instances):
                seg = instance.segment
                if seg.end > video.duration:
                    raise ValidationError(
                        f"video {video_id!r}, instance {index}: segment "
                        f"[{seg.start}, {seg.end}] exceeds duration {video.duration}"
                    )
                if not 0 <= instance.label < len(self.classes):
                    raise ValidationError(
                        f"video {video_id!r}, instance {index}: label {instance.label} "
                        f"outside class table of size {len(self.classes)}"
                    )

    def num_instances(self) -> int:
        return sum(len(v.instances) for v in self.videos.values())


@dataclass(frozen=True)
class VideoPredictions:
    duration: float
    predictions: tuple[Prediction, ...]


@dataclass(frozen=True)
class PredictionSet:
    """Scored segment predictions per video, paired with a class table."""

    classes: tuple[str, ...]
    fps: float
    videos: dict[str, VideoPredictions]

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ValidationError(f"fps must be positive, got {self.fps}")
        for video_id, video in self.videos.items():
            for index, pred in enumerate(video.predictions):
                if not 0 <= pred.label < len(self.classes):
                    raise ValidationError(
                        f"video {video_id!r}, prediction {index}: label {pred.label} "
                        f"outside class table of size {len(self.classes)}"
                    )

    def num_predictions(self) -> int:
        return sum(len(v.predictions) for v in self.videos.values())


def _reject_duplicate_keys(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise ValidationError(f"duplicate key {key!r} in JSON object")
        seen[key] = value
    return seen


def _load_json(path: str | os.PathLike) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw.decode("utf-8"), object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=str(path), offset=exc.pos) from exc
    if not isinstance(doc, dict):
        raise ParseError("top-level JSON value must be an object", path=str(path))
    return doc


def _parse_header(doc: dict, path: str) -> tuple[tuple[str, ...], float, dict]:
    try:
        classes = tuple(str(name) for name in doc["classes"])
        fps = float(doc["fps"])
        videos = doc["videos"]
    except KeyError as exc:
        raise ParseError(f"missing required key {exc.args[0]!r}", path=path) from exc
    if not isinstance(videos, dict):
        raise ParseError("'videos' must be an object", path=path)
    return classes, fps, videos


def load_annotations(path: str | os.PathLike) -> AnnotationSet:
    doc = _load_json(path)
    classes, fps, raw_videos = _parse_header(doc, str(path))
    videos: dict[str, VideoAnnotations] = {}
    for video_id, entry in raw_videos.items():
        instances = []
        for index, item in enumerate(entry.get("annotations", ())):
            try:
                start, end = item["segment"]
                label = int(item["label"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(
                    f"video {video_id!r}, annotation {index}: malformed entry", path=str(path)
                ) from exc
            instances.append(ActionInstance(Segment(float(start), float(end)), label))
        videos[video_id] = VideoAnnotations(float(entry["duration"]), tuple(instances))
    return AnnotationSet(classes, fps, videos)


def load_predictions(path: str | os.PathLike) -> PredictionSet:
    doc = _load_json(path)
    classes, fps, raw_videos = _parse_header(doc, str(path))
    videos: dict[str, VideoPredictions] = {}
    for video_id, entry in raw_videos.items():
        preds = []
        for index, item in enumerate(entry.get("predictions", ())):
            try:
                start, end = item["segment"]
                label = int(item["label"])
                score = float(item["score"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(
                    f"video {video_id!r}, prediction {index}: malformed entry", path=str(path)
                ) from exc
            preds.append(Prediction(Segment(float(start), float(end)), label, score))
        videos[video_id] = VideoPredictions(float(entry["duration"]), tuple(preds))
    return PredictionSet(classes, fps, videos)


def save_annotations(annotations: AnnotationSet, path: str | os.PathLike) -> None:
    doc = {
        "classes": list(annotations.classes),
        "fps": _round6(annotations.fps),
        "videos": {
            video_id: {
                "duration": _round6(video.duration),
                "annotations": [
                    {
                        "segment": [_round6(i.segment.start), _round6(i.segment.end)],
                        "label": i.label,
                    }
                    for i in video.instances
                ],
            }
            for video_id, video in annotations.videos.items()
        },
    }
    _dump_json(doc, path)


def save_predictions(predictions: PredictionSet, path: str | os.PathLike) -> None:
    doc = {
        "classes": list(predictions.classes),
        "fps": _round6(predictions.fps),
        "videos": {
            video_id: {
                "duration": _round6(video.duration),
                "predictions": [
                    {
                        "segment": [_round6(p.segment.start), _round6(p.segment.end)],
                        "label": p.label,
                        "score": _round6(p.score),
                    }
                    for p in video.predictions
                ],
            }
            for video_id, video in predictions.videos.items()
        },
    }
    _dump_json(doc, path)


def _dump_json(doc: dict, path: str | os.PathLike) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.write("\n")

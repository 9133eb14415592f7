"""Synthetic dataset generation: specs, placement, rendering, trimmed clips."""

import filecmp
import math

import numpy as np
import pytest

from talkit.annotations import AnnotationSet, VideoAnnotations, load_annotations
from talkit.errors import GenerationError, ValidationError
from talkit.segments import ActionInstance, Segment
from talkit.synthetic import (
    BASE_SPEED,
    PATCH_SIZE,
    PATCH_VALUE,
    PLACEMENT_GAP,
    SNIPPET_WINDOW,
    SynthSpec,
    class_velocity,
    dataset_texture,
    generate_dataset,
    make_trimmed_clips,
)
from talkit.tensorio import read_tensor

SMALL_SPEC = SynthSpec(
    num_videos=3,
    frames_per_video=64,
    full_height=16,
    full_width=16,
    num_classes=2,
    speed_levels=1,
    instances_per_video=(1, 1),
    min_instance_seconds=1.0,
    max_instance_seconds=1.2,
    noise_std=0.05,
    seed=3,
)


class TestSpec:
    def test_video_shorter_than_window(self):
        with pytest.raises(ValidationError):
            SynthSpec(frames_per_video=SNIPPET_WINDOW - 1)

    def test_counts_positive(self):
        with pytest.raises(ValidationError):
            SynthSpec(num_videos=0)
        with pytest.raises(ValidationError):
            SynthSpec(num_classes=0)
        with pytest.raises(ValidationError):
            SynthSpec(speed_levels=0)

    def test_instance_range(self):
        with pytest.raises(ValidationError):
            SynthSpec(instances_per_video=(2, 1))
        with pytest.raises(ValidationError):
            SynthSpec(instances_per_video=(-1, 1))

    def test_instance_length_range(self):
        with pytest.raises(ValidationError):
            SynthSpec(min_instance_seconds=8.0, max_instance_seconds=6.0)
        with pytest.raises(ValidationError):
            SynthSpec(min_instance_seconds=0.0)
        with pytest.raises(ValidationError):
            SynthSpec(fps=0.0)

    def test_instance_must_fit_video(self):
        with pytest.raises(ValidationError):
            SynthSpec(frames_per_video=100, max_instance_seconds=10.0, fps=25.0)

    def test_duration_and_names(self):
        spec = SynthSpec(frames_per_video=200, fps=25.0, max_instance_seconds=8.0)
        assert spec.duration == 8.0
        assert spec.class_names() == ("pattern_00", "pattern_01", "pattern_02", "pattern_03")


class TestClassVelocity:
    def test_speed_ladder(self):
        for k in range(6):
            dy, dx = class_velocity(k, 6, 3)
            assert math.hypot(dy, dx) == pytest.approx(BASE_SPEED * 2.0 ** (k % 3))

    def test_single_level_uniform_speed(self):
        speeds = {math.hypot(*class_velocity(k, 4, 1)) for k in range(4)}
        assert len(speeds) == 1

    def test_classes_distinct(self):
        vecs = [class_velocity(k, 4, 2) for k in range(4)]
        assert len({(round(dy, 9), round(dx, 9)) for dy, dx in vecs}) == 4


class TestTexture:
    def test_deterministic_per_seed(self):
        a = dataset_texture(SMALL_SPEC)
        b = dataset_texture(SMALL_SPEC)
        np.testing.assert_array_equal(a, b)

    def test_seed_changes_texture(self):
        other = SynthSpec(**{**SMALL_SPEC.__dict__, "seed": 4})
        assert not np.array_equal(dataset_texture(SMALL_SPEC), dataset_texture(other))

    def test_shape(self):
        tex = dataset_texture(SMALL_SPEC)
        assert tex.shape == (16, 16)
        assert tex.dtype == np.float32


class TestGeneration:
    def test_byte_identical_reruns(self, tmp_path):
        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        generate_dataset(SMALL_SPEC, dir_a)
        generate_dataset(SMALL_SPEC, dir_b)
        assert filecmp.cmp(dir_a / "annotations.json", dir_b / "annotations.json", shallow=False)
        for i in range(SMALL_SPEC.num_videos):
            name = f"videos/v{i:04d}.bin"
            assert filecmp.cmp(dir_a / name, dir_b / name, shallow=False)

    def test_video_tensors(self, tmp_path):
        videos, _ = generate_dataset(SMALL_SPEC, tmp_path)
        assert [v.video_id for v in videos] == ["v0000", "v0001", "v0002"]
        for video in videos:
            assert video.frames.shape == (64, 16, 16, 3)
            assert video.frames.dtype == np.float32
            assert float(video.frames.min()) >= 0.0
            assert float(video.frames.max()) <= 1.0

    def test_annotation_invariants(self, micro_target_dir):
        annotations = load_annotations(micro_target_dir / "annotations.json")
        assert len(annotations.videos) == 8
        for video in annotations.videos.values():
            spans = sorted(
                (inst.segment.start, inst.segment.end, inst.label) for inst in video.instances
            )
            for start, end, label in spans:
                assert 0.0 <= start < end <= video.duration
                assert 0 <= label < len(annotations.classes)
            for (_, prev_end, _), (next_start, _, _) in zip(spans, spans[1:]):
                gap_frames = (next_start - prev_end) * annotations.fps
                assert gap_frames >= PLACEMENT_GAP - 0.5

    def test_patch_visible_only_inside_instances(self, micro_target_dir):
        annotations = load_annotations(micro_target_dir / "annotations.json")
        video = annotations.videos["v0000"]
        frames = read_tensor(micro_target_dir / "videos" / "v0000.bin", mmap=True)
        inside = set()
        for inst in video.instances:
            fs = int(round(inst.segment.start * annotations.fps))
            fe = int(round(inst.segment.end * annotations.fps))
            inside.update(range(fs, fe))
        assert inside
        patch_pixels = PATCH_SIZE * PATCH_SIZE * 3
        for t in range(frames.shape[0]):
            exact = int(np.count_nonzero(frames[t] == np.float32(PATCH_VALUE)))
            if t in inside:
                assert exact >= patch_pixels
            else:
                assert exact == 0

    def test_placement_failure_reports_video(self, tmp_path):
        # two ~35-frame instances plus the 24-frame gap cannot fit in 75 frames
        cramped = SynthSpec(
            num_videos=1,
            frames_per_video=75,
            full_height=16,
            full_width=16,
            num_classes=1,
            speed_levels=1,
            instances_per_video=(2, 2),
            min_instance_seconds=1.4,
            max_instance_seconds=1.5,
            seed=0,
        )
        with pytest.raises(GenerationError) as err:
            generate_dataset(cramped, tmp_path)
        assert err.value.video_index == 0


class _ArraySource:
    def __init__(self, arrays):
        self._arrays = arrays

    def frames(self, video_id):
        return self._arrays[video_id]


class TestTrimmedClips:
    def test_counts_and_labels(self, micro_target_dir):
        annotations = load_annotations(micro_target_dir / "annotations.json")
        arrays = {
            vid: read_tensor(micro_target_dir / "videos" / f"{vid}.bin", mmap=True)
            for vid in annotations.videos
        }
        dataset = make_trimmed_clips(_ArraySource(arrays), annotations)
        total = sum(len(v.instances) for v in annotations.videos.values())
        assert len(dataset) == total
        assert dataset.labels() == [clip.label for clip in dataset.clips]
        assert [c.video_id for c in dataset.clips] == sorted(c.video_id for c in dataset.clips)

    def test_edge_padding_centers_short_clips(self):
        # 10-frame instance against a 16-frame window: 3 front, 3 back
        ramp = np.broadcast_to(
            np.arange(20, dtype=np.float32)[:, None, None, None], (20, 2, 2, 3)
        ).copy()
        annotations = AnnotationSet(
            classes=("c0",),
            fps=1.0,
            videos={
                "clip": VideoAnnotations(20.0, (ActionInstance(Segment(2.0, 12.0), 0),))
            },
        )
        dataset = make_trimmed_clips(_ArraySource({"clip": ramp}), annotations, window=16)
        assert dataset.clips[0].padded
        frames, label = dataset.load(0)
        assert label == 0
        assert frames.shape == (16, 2, 2, 3)
        assert frames[:4, 0, 0, 0].tolist() == [2.0, 2.0, 2.0, 2.0]
        assert frames[-4:, 0, 0, 0].tolist() == [11.0, 11.0, 11.0, 11.0]
        assert frames[4:12, 0, 0, 0].tolist() == [float(v) for v in range(3, 11)]

    def test_long_clips_not_padded(self):
        ramp = np.zeros((80, 2, 2, 3), dtype=np.float32)
        annotations = AnnotationSet(
            classes=("c0",),
            fps=1.0,
            videos={
                "clip": VideoAnnotations(80.0, (ActionInstance(Segment(0.0, 70.0), 0),))
            },
        )
        dataset = make_trimmed_clips(_ArraySource({"clip": ramp}), annotations, window=64)
        assert not dataset.clips[0].padded
        frames, _ = dataset.load(0)
        assert frames.shape[0] == 70

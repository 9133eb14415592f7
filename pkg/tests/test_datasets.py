"""Directory-backed dataset access and hash-stable splits."""

import hashlib

import pytest

from talkit.datasets import VideoDataset, split_video_ids
from talkit.errors import ValidationError


class TestVideoDataset:
    def test_basic_properties(self, micro_target_dir):
        dataset = VideoDataset(micro_target_dir)
        assert dataset.video_ids == tuple(f"v{i:04d}" for i in range(8))
        assert len(dataset) == 8
        assert dataset.fps == 25.0
        assert dataset.classes == ("pattern_00", "pattern_01")

    def test_frames_and_durations(self, micro_target_dir):
        dataset = VideoDataset(micro_target_dir)
        assert dataset.num_frames("v0000") == 120
        assert dataset.duration("v0000") == 4.8
        frames = dataset.frames("v0003")
        assert frames.shape == (120, 16, 16, 3)
        # cached mmap, not reloaded per call
        assert dataset.frames("v0003") is frames
        raw = dataset.raw_video("v0003")
        assert raw.video_id == "v0003"

    def test_missing_video_file(self, micro_target_dir, tmp_path):
        broken = tmp_path / "broken"
        broken.mkdir()
        (broken / "videos").mkdir()
        (broken / "annotations.json").write_bytes(
            (micro_target_dir / "annotations.json").read_bytes()
        )
        with pytest.raises(ValidationError, match="missing video file"):
            VideoDataset(broken)


class TestSplit:
    ids = tuple(f"v{i:04d}" for i in range(12))

    def test_sizes_and_disjoint(self):
        train, val = split_video_ids(self.ids, val_fraction=0.25, seed=0)
        assert len(val) == 3
        assert len(train) == 9
        assert set(train) | set(val) == set(self.ids)
        assert not set(train) & set(val)

    def test_deterministic(self):
        assert split_video_ids(self.ids, 0.25, seed=5) == split_video_ids(self.ids, 0.25, seed=5)

    def test_input_order_irrelevant(self):
        shuffled = tuple(reversed(self.ids))
        assert split_video_ids(shuffled, 0.25, seed=1) == split_video_ids(self.ids, 0.25, seed=1)

    def test_seed_changes_split(self):
        splits = {split_video_ids(self.ids, 0.5, seed=s)[1] for s in range(6)}
        assert len(splits) > 1

    def test_outputs_sorted(self):
        train, val = split_video_ids(self.ids, 0.25, seed=2)
        assert list(train) == sorted(train)
        assert list(val) == sorted(val)

    def test_matches_hash_ranking(self):
        train, val = split_video_ids(self.ids, 0.25, seed=7)
        ranked = sorted(
            self.ids, key=lambda vid: hashlib.sha256(f"7:{vid}".encode()).hexdigest()
        )
        assert set(val) == set(ranked[:3])

    def test_zero_fraction(self):
        train, val = split_video_ids(self.ids, 0.0, seed=0)
        assert val == ()
        assert train == self.ids

    def test_fraction_validation(self):
        with pytest.raises(ValidationError):
            split_video_ids(self.ids, 1.0)
        with pytest.raises(ValidationError):
            split_video_ids(self.ids, -0.1)

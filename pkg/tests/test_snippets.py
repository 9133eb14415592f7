"""Snippet windowing, time grids, area rescaling, and batch assembly."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from talkit.errors import ShapeError, ValidationError
from talkit.fidelity import FidelityConfig
from talkit.snippets import (
    SnippetBatch,
    SnippetPlan,
    batch_shape,
    build_batch,
    rescale_spatial,
    sample_snippet,
    snippet_centers,
    time_grid,
)
from talkit.synthetic import RawVideo


def ramp_video(num_frames: int, height: int = 4, width: int = 4) -> RawVideo:
    t = np.linspace(0.0, 1.0, num_frames, dtype=np.float32)
    frames = np.broadcast_to(t[:, None, None, None], (num_frames, height, width, 3)).copy()
    return RawVideo("ramp", frames)


class TestPlan:
    def test_defaults(self):
        plan = SnippetPlan()
        assert (plan.window, plan.stride, plan.frames_per_snippet) == (64, 8, 8)

    def test_validation(self):
        with pytest.raises(ValidationError):
            SnippetPlan(window=0)
        with pytest.raises(ValidationError):
            SnippetPlan(stride=0)
        with pytest.raises(ValidationError):
            SnippetPlan(window=10, stride=4)


class TestCenters:
    def test_single_snippet_at_midpoint(self):
        centers = snippet_centers(200, 1)
        assert centers.tolist() == [100]

    def test_degenerate_span(self):
        # T == window collapses the valid range to one point
        centers = snippet_centers(64, 5)
        assert centers.tolist() == [32] * 5

    def test_endpoints(self):
        centers = snippet_centers(200, 10)
        assert centers[0] == 32
        assert centers[-1] == 200 - 32

    def test_too_short_video(self):
        with pytest.raises(ValidationError):
            snippet_centers(63, 4)
        with pytest.raises(ValidationError):
            snippet_centers(100, 0)

    @given(
        st.integers(min_value=64, max_value=1000),
        st.integers(min_value=1, max_value=64),
    )
    def test_monotone_within_bounds(self, num_frames, num_snippets):
        centers = snippet_centers(num_frames, num_snippets)
        assert centers.shape == (num_snippets,)
        assert np.all(np.diff(centers) >= 0)
        assert centers[0] >= 0
        assert centers[-1] <= num_frames - 1


class TestTimeGrid:
    def test_roundtrip(self):
        grid = time_grid(200, 10, fps=25.0)
        for i in (0.0, 1.0, 4.5, 9.0):
            assert grid.index(grid.seconds(i)) == pytest.approx(i, abs=1e-9)

    def test_degenerate_step(self):
        grid = time_grid(64, 3, fps=25.0)
        assert grid.step == 0.0
        assert grid.index(grid.seconds(2.0)) == 0.0

    def test_center_agreement(self):
        grid = time_grid(200, 10, fps=25.0)
        centers = snippet_centers(200, 10)
        for i, c in enumerate(centers):
            assert grid.seconds(i) * 25.0 == pytest.approx(float(c), abs=0.5)


class TestSampling:
    def test_shape_and_stride(self):
        video = ramp_video(200)
        snippet = sample_snippet(video, 100)
        assert snippet.shape == (8, 4, 4, 3)
        picked = snippet[:, 0, 0, 0]
        expected = video.frames[100 - 32 + np.arange(0, 64, 8), 0, 0, 0]
        np.testing.assert_array_equal(picked, expected)

    def test_clamps_at_edges(self):
        video = ramp_video(100)
        low = sample_snippet(video, 0)
        np.testing.assert_array_equal(low[:4, 0, 0, 0], np.zeros(4, dtype=np.float32))
        high = sample_snippet(video, 99)
        assert high[-1, 0, 0, 0] == video.frames[-1, 0, 0, 0]


class TestRescale:
    def test_constant_preserved(self):
        frames = np.full((2, 8, 8, 3), 0.37, dtype=np.float32)
        out = rescale_spatial(frames, 3, 5)
        assert out.shape == (2, 3, 5, 3)
        np.testing.assert_allclose(out, 0.37, rtol=1e-6)

    def test_integer_factor_is_block_mean(self):
        rng = np.random.default_rng(0)
        frames = rng.uniform(0.0, 1.0, size=(1, 8, 8, 3)).astype(np.float32)
        out = rescale_spatial(frames, 4, 4)
        blocks = frames.reshape(1, 4, 2, 4, 2, 3).mean(axis=(2, 4))
        np.testing.assert_allclose(out, blocks, atol=1e-6)

    @given(st.integers(min_value=1, max_value=12), st.integers(min_value=1, max_value=12), st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=40)
    def test_global_mean_preserved(self, height, width, seed):
        rng = np.random.default_rng(seed)
        frames = rng.uniform(0.0, 1.0, size=(12, 12)).astype(np.float64)[None, :, :, None]
        out = rescale_spatial(frames, height, width)
        assert float(out.mean()) == pytest.approx(float(frames.mean()), abs=1e-5)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_upscale_rejected(self):
        frames = np.zeros((1, 4, 4, 3), dtype=np.float32)
        with pytest.raises(ValidationError):
            rescale_spatial(frames, 8, 4)

    def test_identity_returns_same_object(self):
        frames = np.zeros((1, 4, 4, 3), dtype=np.float32)
        assert rescale_spatial(frames, 4, 4) is frames


class TestBatches:
    config = FidelityConfig(kind="full", num_snippets=5, height=4, width=4)

    def test_batch_shape_helper(self):
        assert batch_shape(3, self.config) == (3, 5, 8, 4, 4, 3)

    def test_shape_enforced(self):
        bad = np.zeros((2, 5, 8, 4, 4, 3), dtype=np.float32)
        SnippetBatch(bad, ("a", "b"), self.config)
        with pytest.raises(ShapeError):
            SnippetBatch(bad[:, :4], ("a", "b"), self.config)

    def test_range_enforced(self):
        hot = np.full((1, 5, 8, 4, 4, 3), 1.5, dtype=np.float32)
        with pytest.raises(ValidationError):
            SnippetBatch(hot, ("a",), self.config)

    def test_build_batch_deterministic(self):
        videos = [ramp_video(100), ramp_video(200)]
        a = build_batch(videos, self.config)
        b = build_batch(videos, self.config)
        np.testing.assert_array_equal(a.tensor, b.tensor)
        assert a.video_ids == ("ramp", "ramp")
        assert a.batch_size == 2

    def test_build_batch_order_independent_per_video(self):
        v1, v2 = ramp_video(100), ramp_video(160)
        ab = build_batch([v1, v2], self.config)
        ba = build_batch([v2, v1], self.config)
        np.testing.assert_array_equal(ab.tensor[0], ba.tensor[1])
        np.testing.assert_array_equal(ab.tensor[1], ba.tensor[0])

    def test_build_batch_reduces_fidelity(self):
        reduced = FidelityConfig(kind="spatiotemporal", num_snippets=3, height=2, width=2, r_s=2.0, r_t=2.0)
        batch = build_batch([ramp_video(100)], reduced)
        assert batch.tensor.shape == (1, 3, 8, 2, 2, 3)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValidationError):
            build_batch([], self.config)

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from talkit.errors import ValidationError
from talkit.segments import ActionInstance, Prediction, Segment, interval_iou, iou_1d


@st.composite
def segments(draw):
    start = draw(st.floats(min_value=0.0, max_value=1e5, allow_nan=False))
    length = draw(st.floats(min_value=0.01, max_value=1e5, allow_nan=False))
    return Segment(start, start + length)


class TestSegment:
    def test_length(self):
        assert Segment(1.5, 4.0).length == 2.5

    def test_rejects_negative_start(self):
        with pytest.raises(ValidationError):
            Segment(-0.1, 1.0)

    def test_rejects_empty_and_inverted(self):
        with pytest.raises(ValidationError):
            Segment(2.0, 2.0)
        with pytest.raises(ValidationError):
            Segment(3.0, 1.0)

    def test_rejects_non_finite(self):
        for bad in (math.nan, math.inf):
            with pytest.raises(ValidationError):
                Segment(0.0, bad)
        with pytest.raises(ValidationError):
            Segment(math.nan, 1.0)

    def test_ordering_is_by_fields(self):
        assert Segment(1.0, 2.0) < Segment(1.0, 3.0) < Segment(2.0, 2.5)


class TestLabeledTypes:
    def test_instance_rejects_negative_label(self):
        with pytest.raises(ValidationError):
            ActionInstance(Segment(0.0, 1.0), -1)

    def test_prediction_rejects_bad_score(self):
        for bad in (-0.01, 1.01, math.nan):
            with pytest.raises(ValidationError):
                Prediction(Segment(0.0, 1.0), 0, bad)

    def test_prediction_accepts_boundary_scores(self):
        Prediction(Segment(0.0, 1.0), 0, 0.0)
        Prediction(Segment(0.0, 1.0), 3, 1.0)


class TestIoU:
    def test_identical_segments(self):
        seg = Segment(2.0, 5.0)
        assert iou_1d(seg, seg) == 1.0

    def test_disjoint_and_touching_are_zero(self):
        assert iou_1d(Segment(0.0, 1.0), Segment(2.0, 3.0)) == 0.0
        # touching endpoints share zero measure
        assert iou_1d(Segment(0.0, 1.0), Segment(1.0, 2.0)) == 0.0

    def test_nested_half(self):
        assert iou_1d(Segment(0.0, 2.0), Segment(0.0, 1.0)) == pytest.approx(0.5)

    def test_partial_overlap(self):
        # overlap 1 over union 3
        assert iou_1d(Segment(0.0, 2.0), Segment(1.0, 3.0)) == pytest.approx(1.0 / 3.0)

    @given(segments(), segments())
    def test_symmetric_and_bounded(self, a, b):
        iou = iou_1d(a, b)
        assert 0.0 <= iou <= 1.0
        assert iou == iou_1d(b, a)

    @given(segments(), segments())
    def test_interval_form_agrees(self, a, b):
        assert interval_iou(a.start, a.end, b.start, b.end) == iou_1d(a, b)

    @given(segments())
    def test_self_iou_is_one(self, seg):
        assert iou_1d(seg, seg) == 1.0

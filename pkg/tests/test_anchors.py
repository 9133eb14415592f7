import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reference import ref_anchor_pairs
from talkit.anchors import anchor_count, enumerate_anchors
from talkit.errors import ValidationError


def test_count_hand_values():
    assert anchor_count(3) == 1
    assert anchor_count(4) == 3
    assert anchor_count(25) == 276
    assert anchor_count(100) == 4851


def test_count_below_three_is_zero():
    assert anchor_count(0) == 0
    assert anchor_count(1) == 0
    assert anchor_count(2) == 0


def test_negative_count_rejected():
    with pytest.raises(ValidationError):
        anchor_count(-1)
    with pytest.raises(ValidationError):
        enumerate_anchors(-5)


def test_enumeration_shape_and_dtype():
    anchors = enumerate_anchors(10)
    assert anchors.shape == (anchor_count(10), 2)
    assert anchors.dtype == np.int64


def test_enumeration_matches_set_builder():
    for L in range(0, 41):
        anchors = enumerate_anchors(L)
        assert anchors.shape[0] == anchor_count(L)
        assert set(map(tuple, anchors.tolist())) == ref_anchor_pairs(L)


def test_endpoints_strictly_inside():
    anchors = enumerate_anchors(12)
    assert anchors[:, 0].min() >= 1
    assert anchors[:, 1].max() <= 10
    assert (anchors[:, 0] < anchors[:, 1]).all()


def test_ordered_by_start_then_end():
    anchors = enumerate_anchors(15)
    keys = [tuple(row) for row in anchors.tolist()]
    assert keys == sorted(keys)


@given(st.integers(min_value=3, max_value=60))
def test_count_formula(L):
    assert anchor_count(L) == (L - 1) * (L - 2) // 2
    assert enumerate_anchors(L).shape[0] == anchor_count(L)

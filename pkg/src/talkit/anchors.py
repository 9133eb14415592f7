"""Anchor enumeration over snippet indices.

An anchor is a candidate segment (t_s, t_e) in snippet units. All pairs with
0 < t_s < t_e < L are enumerated, so both endpoints stay strictly inside the
sequence and the count is (L-1)(L-2)/2.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def anchor_count(num_snippets: int) -> int:
    """Number of anchors for a length-L snippet sequence; 0 when L < 3."""
    if num_snippets < 0:
        raise ValidationError(f"snippet count must be non-negative, got {num_snippets}")
    if num_snippets < 3:
        return 0
    return (num_snippets - 1) * (num_snippets - 2) // 2


def enumerate_anchors(num_snippets: int) -> np.ndarray:
    """All (t_s, t_e) with 0 < t_s < t_e < L, ordered by (t_s, t_e).

    Returns an int64 array of shape (anchor_count(L), 2).
    """
    if num_snippets < 0:
        raise ValidationError(f"snippet count must be non-negative, got {num_snippets}")
    pairs = [
        (t_s, t_e)
        for t_s in range(1, num_snippets - 1)
        for t_e in range(t_s + 1, num_snippets)
    ]
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)

"""Independent reference computations used by the tests.

Nothing here imports the geometry or statistics code under test: relations
are recomputed from explicit pixel sets, rates from closed forms.
"""

from __future__ import annotations

import math
from itertools import product


def rect_pixels(x0: int, y0: int, x1: int, y1: int) -> frozenset[tuple[int, int]]:
    return frozenset(product(range(x0, x1), range(y0, y1)))


def _extent(pixels):
    xs = [x for x, _ in pixels]
    ys = [y for _, y in pixels]
    return min(xs), min(ys), max(xs), max(ys)  # inclusive


def _shared(lo_a, hi_a, lo_b, hi_b) -> int:
    return len(set(range(lo_a, hi_a + 1)) & set(range(lo_b, hi_b + 1)))


def pair_relations(a, b, *, dir_overlap=0.25, inside=0.95, on_top=0.5, max_gap=5, next_to=15.0, overlap_iou=0.95):
    """Relation kinds holding for the ordered pair (a, b) of pixel sets."""
    ax0, ay0, ax1, ay1 = _extent(a)
    bx0, by0, bx1, by1 = _extent(b)
    acx, acy = (ax0 + ax1 + 1) / 2, (ay0 + ay1 + 1) / 2
    bcx, bcy = (bx0 + bx1 + 1) / 2, (by0 + by1 + 1) / 2
    h_ratio = _shared(ax0, ax1, bx0, bx1) / min(ax1 - ax0 + 1, bx1 - bx0 + 1)
    v_ratio = _shared(ay0, ay1, by0, by1) / min(ay1 - ay0 + 1, by1 - by0 + 1)
    inter = len(a & b)
    union = len(a | b)
    kinds = set()

    # a's rightmost column must end at or before b's centre line
    if acx < bcx and ax1 + 1 <= bcx and v_ratio >= dir_overlap:
        kinds.add("LeftOf")
    if bcx < acx and bx1 + 1 <= acx and v_ratio >= dir_overlap:
        kinds.add("RightOf")
    if acy < bcy and ay1 + 1 <= bcy and h_ratio >= dir_overlap:
        kinds.add("Above")
    if bcy < acy and by1 + 1 <= acy and h_ratio >= dir_overlap:
        kinds.add("Below")

    # empty rows between a's lowest row and b's top row
    gap_ab = by0 - ay1 - 1
    gap_ba = ay0 - by1 - 1
    if h_ratio >= on_top and 0 <= gap_ab <= max_gap:
        kinds.add("OnTopOf")
    if h_ratio >= on_top and 0 <= gap_ba <= max_gap:
        kinds.add("Beneath")

    if inter / len(a) >= inside and len(a) < len(b):
        kinds.add("Inside")
    if inter / len(b) >= inside and len(b) < len(a):
        kinds.add("Contains")

    if inter == 0:
        kinds.add("Disjoint")
        dx = max(0, bx0 - ax1 - 1, ax0 - bx1 - 1)
        dy = max(0, by0 - ay1 - 1, ay0 - by1 - 1)
        if math.hypot(dx, dy) <= next_to:
            kinds.add("NextTo")
    elif inter / union < overlap_iou:
        kinds.add("Overlapping")
    return kinds


def scene_relations(pixels_by_id: dict[str, frozenset]) -> set[tuple[str, str, str]]:
    out = set()
    for a, b in product(sorted(pixels_by_id), repeat=2):
        if a != b:
            out |= {(a, b, k) for k in pair_relations(pixels_by_id[a], pixels_by_id[b])}
    return out


def vertically_adjacent(a, b) -> bool:
    """Some pixel of a sits directly above some pixel of b."""
    return any((x, y + 1) in b for x, y in a)


def iou(a, b) -> float:
    return len(a & b) / len(a | b)


def binomial_3sigma(p: float, n: int) -> float:
    """Three standard errors of a proportion, in percentage points."""
    return 300.0 * math.sqrt(p * (1 - p) / n)


def retry_success(p: float, retries: int) -> float:
    return 1 - (1 - p) ** (retries + 1)


def end_to_end_demos(position_counts, demos_per_setting) -> int:
    total = demos_per_setting
    for c in position_counts:
        total *= c
    return total

from __future__ import annotations

import numpy as np
import pytest

from oracles import iou as oracle_iou
from oracles import pair_relations, rect_pixels, vertically_adjacent
from skillforge.errors import DegenerateBox, InvalidMask, MaskOutOfBounds
from skillforge.scene import (
    BoundingBox,
    RelationKind,
    SceneGraph,
    SceneObject,
    SegmentationMask,
    SpatialRelation,
    center,
    infer_relations,
    overlap_metrics,
)

W, H = 64, 48


def box(*xyxy):
    return BoundingBox(*xyxy)


def obj(oid, xyxy, label=None, masked=False):
    b = box(*xyxy)
    mask = SegmentationMask.from_box(b, W, H) if masked else None
    return SceneObject(oid, label or oid.lower(), b, mask)


def kinds(rels, a, b):
    return {r.kind.value for r in rels if r.subject_id == a and r.object_id == b}


@pytest.mark.parametrize(
    "xyxy, expected",
    [((0, 0, 10, 10), (5, 5)), ((2, 4, 6, 8), (4, 6)), ((0, 0, 1, 1), (0.5, 0.5))],
)
def test_center(xyxy, expected):
    assert center(box(*xyxy)) == expected


@pytest.mark.parametrize("xyxy", [(0, 0, 0, 5), (3, 3, 2, 9), (-1, 0, 4, 4)])
def test_degenerate_box_rejected(xyxy):
    with pytest.raises(DegenerateBox):
        box(*xyxy)


def test_side_by_side_boxes():
    rels = infer_relations([obj("A", (0, 0, 10, 10)), obj("B", (20, 0, 30, 10))])
    assert {"LeftOf", "Disjoint"} <= kinds(rels, "A", "B")
    assert {"RightOf", "Disjoint"} <= kinds(rels, "B", "A")
    assert "LeftOf" not in kinds(rels, "B", "A")


def test_mask_subset_gives_inside_and_contains():
    inner = np.zeros((H, W), bool)
    inner[10:20, 10:20] = True
    outer = np.zeros((H, W), bool)
    outer[5:30, 5:30] = True
    a = SceneObject("A", "a", box(10, 10, 20, 20), SegmentationMask.from_array(inner))
    b = SceneObject("B", "b", box(5, 5, 30, 30), SegmentationMask.from_array(outer))
    rels = infer_relations([a, b])
    assert "Inside" in kinds(rels, "A", "B")
    assert "Contains" in kinds(rels, "B", "A")
    assert "Inside" not in kinds(rels, "B", "A")


def test_resting_contact_is_on_top_of():
    a = obj("A", (10, 0, 20, 10), masked=True)
    b = obj("B", (8, 10, 22, 30), masked=True)
    pa, pb = rect_pixels(10, 0, 20, 10), rect_pixels(8, 10, 22, 30)
    assert vertically_adjacent(pa, pb)
    rels = infer_relations([a, b])
    assert "OnTopOf" in kinds(rels, "A", "B")
    assert "Beneath" in kinds(rels, "B", "A")
    assert overlap_metrics(a, b).horizontal_overlap == 1.0
    assert overlap_metrics(a, b).vertical_gap == 0
    assert pair_relations(pa, pb) == kinds(rels, "A", "B")


def test_overlap_metrics_identity_and_disjoint():
    a = obj("A", (0, 0, 10, 10))
    m = overlap_metrics(a, obj("B", (0, 0, 10, 10)))
    assert (m.iou, m.containment_a_in_b) == (1.0, 1.0)
    assert overlap_metrics(a, obj("B", (30, 30, 40, 40))).iou == 0.0


def test_half_shifted_iou_is_one_third():
    m = overlap_metrics(obj("A", (0, 0, 10, 10)), obj("B", (5, 0, 15, 10)))
    expected = oracle_iou(rect_pixels(0, 0, 10, 10), rect_pixels(5, 0, 15, 10))
    assert m.iou == pytest.approx(expected)
    assert m.iou == pytest.approx(1 / 3)


def test_identical_masks_are_not_mutually_inside():
    rels = infer_relations([obj("A", (0, 0, 10, 10), masked=True), obj("B", (0, 0, 10, 10), masked=True)])
    assert not {"Inside", "Contains", "Overlapping", "Disjoint"} & kinds(rels, "A", "B")


def test_relations_sorted_and_closed_under_inverse():
    objs = [obj("c", (40, 0, 50, 10)), obj("a", (0, 0, 10, 10)), obj("b", (20, 12, 30, 22))]
    rels = infer_relations(objs)
    assert rels == sorted(rels, key=SpatialRelation.sort_key)
    inverse = {"LeftOf": "RightOf", "Above": "Below", "OnTopOf": "Beneath", "Inside": "Contains"}
    inverse.update({v: k for k, v in inverse.items()})
    triples = {(r.subject_id, r.object_id, r.kind.value) for r in rels}
    for s, o, k in triples:
        partner = inverse.get(k, k)
        assert (o, s, partner) in triples


def test_infer_relations_rejects_empty_and_duplicates():
    with pytest.raises(ValueError):
        infer_relations([])
    with pytest.raises(ValueError):
        infer_relations([obj("A", (0, 0, 5, 5)), obj("A", (10, 0, 15, 5))])


def test_single_object_has_no_relations():
    g = SceneGraph.build("s", [obj("A", (0, 0, 5, 5))])
    assert g.relations == ()


def test_box_fallback_when_one_mask_missing():
    # A's mask stops at column 1, but B has no mask, so the boxes decide
    sliver = np.zeros((H, W), bool)
    sliver[0:10, 0:2] = True
    a = SceneObject("A", "a", box(0, 0, 3, 10), SegmentationMask.from_array(sliver))
    b = obj("B", (2, 0, 12, 10))
    assert overlap_metrics(a, b).iou == pytest.approx(10 / 120)
    b_masked = obj("B", (2, 0, 12, 10), masked=True)
    assert overlap_metrics(a, b_masked).iou == 0.0


def test_mask_rle_roundtrip_and_extent():
    arr = np.zeros((H, W), bool)
    arr[3:7, 5:9] = True
    arr[10, 0:4] = True
    m = SegmentationMask.from_array(arr)
    assert np.array_equal(m.to_array(), arr)
    assert m.pixel_count == int(arr.sum())
    assert m.extent() == BoundingBox(0, 3, 9, 11)
    assert SegmentationMask.from_dict(m.to_dict()) == m


def test_mask_run_wrapping_a_row_spans_full_width():
    m = SegmentationMask(10, 4, ((8, 4),))  # (8,0),(9,0),(0,1),(1,1)
    assert m.extent() == BoundingBox(0, 0, 10, 2)


@pytest.mark.parametrize(
    "runs, error",
    [(((0, 0),), InvalidMask), (((5, 3), (2, 1)), InvalidMask), (((38, 5),), MaskOutOfBounds), ((), InvalidMask)],
)
def test_invalid_masks(runs, error):
    with pytest.raises(error):
        SegmentationMask(10, 4, runs)


def test_mask_far_outside_box_rejected():
    m = SegmentationMask.from_box(box(30, 30, 40, 40), W, H)
    with pytest.raises(MaskOutOfBounds):
        SceneObject("A", "a", box(0, 0, 10, 10), m)


def test_label_must_be_lowercase():
    with pytest.raises(ValueError):
        SceneObject("A", "Banana", box(0, 0, 3, 3))


def test_graph_validate_detects_stale_relations():
    g = SceneGraph.build("s", [obj("A", (0, 0, 10, 10)), obj("B", (20, 0, 30, 10))])
    g.validate()
    stale = SceneGraph(g.scene_id, g.objects, g.relations[:-1])
    with pytest.raises(ValueError):
        stale.validate()


def test_relation_kind_values_are_closed():
    assert {k.value for k in RelationKind} == {
        "LeftOf", "RightOf", "Above", "Below", "OnTopOf", "Beneath",
        "Inside", "Contains", "NextTo", "Overlapping", "Disjoint",
    }

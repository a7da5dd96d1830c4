"""Geometric scene model and rule-based spatial relations.

Boxes use half-open pixel coordinates in the image frame (y grows downward):
``(0, 0, 10, 10)`` covers the 100 pixels with ``0 <= x < 10`` and
``0 <= y < 10``. Masks are row-major run-length encodings over the full image.

When both objects of a pair carry masks, pair metrics are computed on the mask
pixels; otherwise both objects fall back to their box interiors.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import DegenerateBox, InvalidMask, MaskOutOfBounds

MASK_SLACK_PX = 2


@dataclass(frozen=True)
class BoundingBox:
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        if min(self.x_min, self.y_min) < 0:
            raise DegenerateBox(f"negative coordinate in {self.as_list()}")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise DegenerateBox(f"zero-area box {self.as_list()}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @classmethod
    def from_list(cls, values: Sequence[int]) -> "BoundingBox":
        if len(values) != 4:
            raise DegenerateBox(f"expected 4 box coordinates, got {list(values)}")
        return cls(*(int(v) for v in values))


def center(bbox: BoundingBox) -> tuple[float, float]:
    return ((bbox.x_min + bbox.x_max) / 2, (bbox.y_min + bbox.y_max) / 2)


@dataclass(frozen=True)
class SegmentationMask:
    """Row-major run-length mask; each run is ``(start, length)`` over ``y * width + x``."""

    width: int
    height: int
    runs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "runs", tuple((int(s), int(n)) for s, n in self.runs))
        if self.width <= 0 or self.height <= 0:
            raise InvalidMask(f"mask size must be positive, got {self.width}x{self.height}")
        limit = self.width * self.height
        prev_end = 0
        for start, length in self.runs:
            if length <= 0:
                raise InvalidMask(f"run ({start}, {length}) has non-positive length")
            if start < 0 or start + length > limit:
                raise MaskOutOfBounds(f"run ({start}, {length}) outside {self.width}x{self.height}")
            if start < prev_end:
                raise InvalidMask("runs must be sorted and non-overlapping")
            prev_end = start + length
        if not self.runs:
            raise InvalidMask("mask has no foreground pixels")

    @property
    def pixel_count(self) -> int:
        return sum(n for _, n in self.runs)

    def extent(self) -> BoundingBox:
        """Tight half-open bounding box of the foreground."""
        w = self.width
        y_min = self.runs[0][0] // w
        last_start, last_len = self.runs[-1]
        y_max = (last_start + last_len - 1) // w + 1
        x_min, x_max = w, 0
        for start, length in self.runs:
            end = start + length - 1
            if start // w != end // w:
                # a run that wraps a row edge touches both image borders
                return BoundingBox(0, y_min, w, y_max)
            x_min = min(x_min, start % w)
            x_max = max(x_max, end % w + 1)
        return BoundingBox(x_min, y_min, x_max, y_max)

    def to_array(self) -> np.ndarray:
        flat = np.zeros(self.width * self.height, dtype=bool)
        for start, length in self.runs:
            flat[start : start + length] = True
        return flat.reshape(self.height, self.width)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "SegmentationMask":
        array = np.asarray(array, dtype=bool)
        height, width = array.shape
        flat = np.concatenate([[False], array.ravel(), [False]]).astype(np.int8)
        edges = np.flatnonzero(np.diff(flat))
        starts, ends = edges[0::2], edges[1::2]
        return cls(width, height, tuple(zip(starts.tolist(), (ends - starts).tolist())))

    @classmethod
    def from_box(cls, bbox: BoundingBox, width: int, height: int) -> "SegmentationMask":
        if bbox.x_max > width or bbox.y_max > height:
            raise MaskOutOfBounds(f"box {bbox.as_list()} exceeds {width}x{height}")
        runs = tuple((y * width + bbox.x_min, bbox.width) for y in range(bbox.y_min, bbox.y_max))
        return cls(width, height, runs)

    def to_dict(self) -> dict[str, Any]:
        return {"width": self.width, "height": self.height, "runs": [list(r) for r in self.runs]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SegmentationMask":
        return cls(int(data["width"]), int(data["height"]), tuple(tuple(r) for r in data["runs"]))


@dataclass(frozen=True)
class SceneObject:
    object_id: str
    label: str
    bbox: BoundingBox
    mask: SegmentationMask | None = None
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not self.object_id:
            raise ValueError("object_id must be non-empty")
        if not self.label.strip() or self.label != self.label.lower():
            raise ValueError(f"label must be a non-empty lowercase noun, got {self.label!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.mask is not None:
            ext, box = self.mask.extent(), self.bbox
            if (
                ext.x_min < box.x_min - MASK_SLACK_PX
                or ext.y_min < box.y_min - MASK_SLACK_PX
                or ext.x_max > box.x_max + MASK_SLACK_PX
                or ext.y_max > box.y_max + MASK_SLACK_PX
            ):
                raise MaskOutOfBounds(
                    f"mask of {self.object_id} extends beyond its box {box.as_list()}"
                )

    def with_mask(self, mask: SegmentationMask | None) -> "SceneObject":
        return SceneObject(self.object_id, self.label, self.bbox, mask, self.confidence)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "object_id": self.object_id,
            "label": self.label,
            "confidence": self.confidence,
            "bbox": self.bbox.as_list(),
        }
        if self.mask is not None:
            out["mask"] = self.mask.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SceneObject":
        mask = data.get("mask")
        return cls(
            object_id=str(data["object_id"]),
            label=str(data["label"]).strip().lower(),
            bbox=BoundingBox.from_list(data["bbox"]),
            mask=SegmentationMask.from_dict(mask) if mask else None,
            confidence=float(data.get("confidence", 1.0)),
        )


class RelationKind(str, enum.Enum):
    LEFT_OF = "LeftOf"
    RIGHT_OF = "RightOf"
    ABOVE = "Above"
    BELOW = "Below"
    ON_TOP_OF = "OnTopOf"
    BENEATH = "Beneath"
    INSIDE = "Inside"
    CONTAINS = "Contains"
    NEXT_TO = "NextTo"
    OVERLAPPING = "Overlapping"
    DISJOINT = "Disjoint"

    def __str__(self) -> str:
        return self.value


INVERSE_KIND = {
    RelationKind.LEFT_OF: RelationKind.RIGHT_OF,
    RelationKind.RIGHT_OF: RelationKind.LEFT_OF,
    RelationKind.ABOVE: RelationKind.BELOW,
    RelationKind.BELOW: RelationKind.ABOVE,
    RelationKind.ON_TOP_OF: RelationKind.BENEATH,
    RelationKind.BENEATH: RelationKind.ON_TOP_OF,
    RelationKind.INSIDE: RelationKind.CONTAINS,
    RelationKind.CONTAINS: RelationKind.INSIDE,
    RelationKind.NEXT_TO: RelationKind.NEXT_TO,
    RelationKind.OVERLAPPING: RelationKind.OVERLAPPING,
    RelationKind.DISJOINT: RelationKind.DISJOINT,
}


@dataclass(frozen=True, order=True)
class SpatialRelation:
    subject_id: str
    object_id: str
    kind: RelationKind

    def __post_init__(self) -> None:
        if self.subject_id == self.object_id:
            raise ValueError("a relation needs two distinct objects")
        object.__setattr__(self, "kind", RelationKind(self.kind))

    def sort_key(self) -> tuple[str, str, str]:
        return (self.subject_id, self.object_id, self.kind.value)


@dataclass(frozen=True)
class RelationThresholds:
    directional_overlap: float = 0.25
    inside_containment: float = 0.95
    on_top_overlap: float = 0.5
    on_top_max_gap: int = 5
    next_to_distance: float = 15.0
    overlapping_iou: float = 0.95


DEFAULT_THRESHOLDS = RelationThresholds()


@dataclass(frozen=True)
class OverlapMetrics:
    iou: float
    containment_a_in_b: float
    horizontal_overlap: float
    vertical_gap: int


def _interval_overlap(a0: int, a1: int, b0: int, b1: int) -> int:
    return max(0, min(a1, b1) - max(a0, b0))


def _run_intersection(a: Sequence[tuple[int, int]], b: Sequence[tuple[int, int]]) -> int:
    """Shared pixel count of two sorted run lists (linear merge)."""
    i = j = total = 0
    while i < len(a) and j < len(b):
        a0, a1 = a[i][0], a[i][0] + a[i][1]
        b0, b1 = b[j][0], b[j][0] + b[j][1]
        total += _interval_overlap(a0, a1, b0, b1)
        if a1 <= b1:
            i += 1
        else:
            j += 1
    return total


@dataclass(frozen=True)
class _PairGeometry:
    ext_a: BoundingBox
    ext_b: BoundingBox
    area_a: int
    area_b: int
    inter: int

    @property
    def iou(self) -> float:
        return self.inter / (self.area_a + self.area_b - self.inter)

    def containment(self, a_in_b: bool = True) -> float:
        return self.inter / (self.area_a if a_in_b else self.area_b)

    def horizontal_overlap(self) -> float:
        a, b = self.ext_a, self.ext_b
        return _interval_overlap(a.x_min, a.x_max, b.x_min, b.x_max) / min(a.width, b.width)

    def vertical_overlap(self) -> float:
        a, b = self.ext_a, self.ext_b
        return _interval_overlap(a.y_min, a.y_max, b.y_min, b.y_max) / min(a.height, b.height)

    def vertical_gap(self) -> int:
        """Rows between the bottom of a and the top of b (0 = touching, negative = overlap)."""
        return self.ext_b.y_min - self.ext_a.y_max

    def edge_distance(self) -> float:
        a, b = self.ext_a, self.ext_b
        dx = max(0, b.x_min - a.x_max, a.x_min - b.x_max)
        dy = max(0, b.y_min - a.y_max, a.y_min - b.y_max)
        return math.hypot(dx, dy)

    def swapped(self) -> "_PairGeometry":
        return _PairGeometry(self.ext_b, self.ext_a, self.area_b, self.area_a, self.inter)


def _pair_geometry(a: SceneObject, b: SceneObject) -> _PairGeometry:
    if a.mask is not None and b.mask is not None:
        inter = _run_intersection(a.mask.runs, b.mask.runs)
        return _PairGeometry(a.mask.extent(), b.mask.extent(), a.mask.pixel_count, b.mask.pixel_count, inter)
    ba, bb = a.bbox, b.bbox
    inter = _interval_overlap(ba.x_min, ba.x_max, bb.x_min, bb.x_max) * _interval_overlap(
        ba.y_min, ba.y_max, bb.y_min, bb.y_max
    )
    return _PairGeometry(ba, bb, ba.area, bb.area, inter)


def overlap_metrics(a: SceneObject, b: SceneObject) -> OverlapMetrics:
    g = _pair_geometry(a, b)
    return OverlapMetrics(
        iou=g.iou,
        containment_a_in_b=g.containment(),
        horizontal_overlap=g.horizontal_overlap(),
        vertical_gap=g.vertical_gap(),
    )


def _directed_kinds(g: _PairGeometry, t: RelationThresholds) -> list[RelationKind]:
    """Kinds whose rule fires for the ordered pair (a, b) of ``g``.

    Only the "forward" half of each antisymmetric pair is decided here; the
    inverse kinds are derived from the swapped geometry in ``infer_relations``.
    """
    kinds = []
    (ax, ay), (bx, by) = center(g.ext_a), center(g.ext_b)
    if ax < bx and g.ext_a.x_max <= bx and g.vertical_overlap() >= t.directional_overlap:
        kinds.append(RelationKind.LEFT_OF)
    if ay < by and g.ext_a.y_max <= by and g.horizontal_overlap() >= t.directional_overlap:
        kinds.append(RelationKind.ABOVE)
    if g.horizontal_overlap() >= t.on_top_overlap and 0 <= g.vertical_gap() <= t.on_top_max_gap:
        kinds.append(RelationKind.ON_TOP_OF)
    if g.containment() >= t.inside_containment and g.area_a < g.area_b:
        kinds.append(RelationKind.INSIDE)
    return kinds


def _symmetric_kinds(g: _PairGeometry, t: RelationThresholds) -> list[RelationKind]:
    kinds = []
    if g.inter == 0:
        kinds.append(RelationKind.DISJOINT)
        if g.edge_distance() <= t.next_to_distance:
            kinds.append(RelationKind.NEXT_TO)
    elif g.iou < t.overlapping_iou:
        kinds.append(RelationKind.OVERLAPPING)
    return kinds


def infer_relations(
    objects: Sequence[SceneObject], thresholds: RelationThresholds = DEFAULT_THRESHOLDS
) -> list[SpatialRelation]:
    if not objects:
        raise ValueError("infer_relations needs at least one object")
    ids = [o.object_id for o in objects]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate object_id in scene")
    ordered = sorted(objects, key=lambda o: o.object_id)
    out: list[SpatialRelation] = []
    for i, a in enumerate(ordered):
        for b in ordered[i + 1 :]:
            g = _pair_geometry(a, b)
            for kind in _directed_kinds(g, thresholds):
                out.append(SpatialRelation(a.object_id, b.object_id, kind))
                out.append(SpatialRelation(b.object_id, a.object_id, INVERSE_KIND[kind]))
            for kind in _directed_kinds(g.swapped(), thresholds):
                out.append(SpatialRelation(b.object_id, a.object_id, kind))
                out.append(SpatialRelation(a.object_id, b.object_id, INVERSE_KIND[kind]))
            for kind in _symmetric_kinds(g, thresholds):
                out.append(SpatialRelation(a.object_id, b.object_id, kind))
                out.append(SpatialRelation(b.object_id, a.object_id, kind))
    return sorted(set(out), key=SpatialRelation.sort_key)


@dataclass(frozen=True)
class SceneGraph:
    scene_id: str
    objects: tuple[SceneObject, ...]
    relations: tuple[SpatialRelation, ...]
    description: str = ""
    image_ref: str | None = None
    thresholds: RelationThresholds = field(default=DEFAULT_THRESHOLDS, compare=False)

    @classmethod
    def build(
        cls,
        scene_id: str,
        objects: Iterable[SceneObject],
        description: str = "",
        image_ref: str | None = None,
        thresholds: RelationThresholds = DEFAULT_THRESHOLDS,
    ) -> "SceneGraph":
        objs = tuple(sorted(objects, key=lambda o: o.object_id))
        rels = tuple(infer_relations(objs, thresholds)) if objs else ()
        return cls(scene_id, objs, rels, description, image_ref, thresholds)

    def object(self, object_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        raise KeyError(object_id)

    def validate(self) -> None:
        ids = {o.object_id for o in self.objects}
        for rel in self.relations:
            if rel.subject_id not in ids or rel.object_id not in ids:
                raise ValueError(f"relation {rel} references an unknown object")
        expected = tuple(infer_relations(self.objects, self.thresholds)) if self.objects else ()
        if tuple(self.relations) != expected:
            raise ValueError("relations are stale; rebuild the scene graph")

    def relation_triples(self) -> list[tuple[str, str, str]]:
        labels = {o.object_id: o.label for o in self.objects}
        return [(labels[r.subject_id], r.kind.value, labels[r.object_id]) for r in self.relations]

    def to_dict(self) -> dict[str, Any]:
        return {
            "scene_id": self.scene_id,
            "image_ref": self.image_ref,
            "description": self.description,
            "objects": [o.to_dict() for o in self.objects],
            "relations": [
                {"subject_id": r.subject_id, "object_id": r.object_id, "kind": r.kind.value}
                for r in self.relations
            ],
        }


def load_scene_fixture(path: str | Path) -> dict[str, Any]:
    """Read a scene fixture file and parse its objects.

    Returns the raw document with ``objects`` replaced by ``SceneObject``
    instances. Any ``relations`` key in the file is ignored.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    doc["objects"] = [SceneObject.from_dict(o) for o in doc.get("objects", [])]
    doc.pop("relations", None)
    return doc

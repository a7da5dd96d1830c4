"""Regenerate the bundled scene fixtures under src/skillforge/data/fixtures/scenes."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from skillforge.scene import BoundingBox, SegmentationMask

WIDTH, HEIGHT = 640, 480
OUT = Path(__file__).resolve().parents[1] / "src/skillforge/data/fixtures/scenes"


def ellipse_mask(box: list[int]) -> dict:
    b = BoundingBox.from_list(box)
    yy, xx = np.mgrid[0:HEIGHT, 0:WIDTH]
    cx, cy = (b.x_min + b.x_max - 1) / 2, (b.y_min + b.y_max - 1) / 2
    rx, ry = b.width / 2, b.height / 2
    inside = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    return SegmentationMask.from_array(inside).to_dict()


def rect_mask(box: list[int]) -> dict:
    return SegmentationMask.from_box(BoundingBox.from_list(box), WIDTH, HEIGHT).to_dict()


def obj(object_id, label, box, mask="ellipse", confidence=0.9):
    out = {"object_id": object_id, "label": label, "confidence": confidence, "bbox": box}
    if mask == "ellipse":
        out["mask"] = ellipse_mask(box)
    elif mask == "rect":
        out["mask"] = rect_mask(box)
    return out


SCENES = [
    {
        "scene_id": "banana_plate_1",
        "image_ref": "images/banana_plate_1.png",
        "description": "A yellow banana lies on a wooden table to the left of an empty white plate.",
        "objects": [
            obj("banana_1", "banana", [100, 200, 220, 260], confidence=0.93),
            obj("plate_1", "plate", [300, 180, 480, 300], confidence=0.97),
        ],
    },
    {
        "scene_id": "bottle_mug_1",
        "image_ref": "images/bottle_mug_1.png",
        "description": "A plastic water bottle stands upright on the table; a ceramic mug sits further right.",
        "objects": [
            obj("bottle_1", "bottle", [120, 100, 180, 320], mask="rect", confidence=0.95),
            obj("mug_1", "mug", [380, 220, 460, 320], confidence=0.91),
        ],
    },
    {
        "scene_id": "pen_holder_1",
        "image_ref": "images/pen_holder_1.png",
        "description": "A black pen lies flat on the desk in front of a cylindrical pen holder.",
        "objects": [
            obj("pen_1", "pen", [150, 300, 300, 320], mask="rect", confidence=0.88),
            obj("pen_holder_1", "pen holder", [400, 200, 470, 320], mask=None, confidence=0.9),
        ],
    },
    {
        "scene_id": "blocks_1",
        "image_ref": "images/blocks_1.png",
        "description": "Three wooden blocks, red, green and blue, are lined up on the table.",
        "objects": [
            obj("red_block_1", "red block", [100, 300, 160, 360], mask="rect"),
            obj("green_block_1", "green block", [260, 300, 320, 360], mask="rect"),
            obj("blue_block_1", "blue block", [420, 300, 480, 360], mask="rect"),
        ],
    },
    {
        "scene_id": "guest_water_1",
        "image_ref": "images/guest_water_1.png",
        "description": "A water bottle and an empty cup stand on a tray; a guest waits at the end of the table.",
        "objects": [
            obj("bottle_1", "bottle", [200, 120, 250, 330], mask="rect"),
            obj("cup_1", "cup", [300, 260, 360, 330], mask="rect"),
            obj("tray_1", "tray", [180, 330, 400, 360], mask="rect"),
            obj("guest_1", "guest", [520, 40, 640, 400], mask=None, confidence=0.8),
        ],
    },
    {
        "scene_id": "single_banana_1",
        "image_ref": "images/single_banana_1.png",
        "description": "A single banana on an otherwise empty table.",
        "objects": [obj("banana_1", "banana", [250, 200, 370, 260])],
    },
]


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for scene in SCENES:
        path = OUT / f"{scene['scene_id']}.json"
        path.write_text(json.dumps(scene, indent=1) + "\n", encoding="utf-8")
        print(path)


if __name__ == "__main__":
    main()

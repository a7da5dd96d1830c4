"""Regenerate bundled task specs and the Table-1-shaped demonstration suite.

Published success rates are used as *inputs*: each stage's executor gets the
conditional probability that reproduces the published unconditional rate
(stage 2 p = rate2 / rate1). Nothing here is a prediction.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src/skillforge/data"

TASK_SPECS = [
    {
        "task_id": "pour_water",
        "slots": [{"name": "bottle", "position_count": 3}, {"name": "mug", "position_count": 3}],
        "demos_per_setting": 3,
        "skill_split": [{"skill_id": "medium/grasp.bottle", "demos": 9}, {"skill_id": "medium/pour.bottle.mug", "demos": 9}],
    },
    {
        "task_id": "pick_place_banana",
        "slots": [{"name": "banana", "position_count": 4}, {"name": "plate", "position_count": 2}],
        "demos_per_setting": 3,
        "skill_split": [{"skill_id": "medium/pick-up.banana", "demos": 9}, {"skill_id": "medium/place.banana.plate", "demos": 6}],
    },
    {
        "task_id": "pick_place_pen",
        "slots": [{"name": "pen", "position_count": 3}, {"name": "holder", "position_count": 3}],
        "demos_per_setting": 3,
        "skill_split": [{"skill_id": "medium/pick-up.pen", "demos": 9}, {"skill_id": "medium/place.pen.pen-holder", "demos": 9}],
    },
]

BLOCK_SKILLS = [
    {"skill_id": "medium/move.red-block", "demos": 10},
    {"skill_id": "medium/move.green-block", "demos": 10},
    {"skill_id": "medium/move.blue-block", "demos": 10},
]
BLOCK_ORDERS = ["red-green-blue", "red-blue-green", "blue-green-red", "green-red-blue"]

# (method, [(r1, r2) for both ID, A OOD, B OOD, both OOD])
TABLE1 = {
    "pick_place_banana": {
        "instruction": "Pick up the banana and place it onto the plate",
        "scene_id": "banana_plate_1",
        "stage_labels": ["Pick up", "Place"],
        "slots": ["banana", "plate"],
        "rows": {
            "Octo(End-to-end)": [(100, 80), (40, 40), (80, 40), (20, 20)],
            "Octo(Ours)": [(100, 80), (40, 40), (80, 50), (40, 20)],
            "Octo(Ours-plus)": [(100, 100), (60, 60), (80, 60), (60, 40)],
            "RDT(End-to-end)": [(90, 90), (40, 40), (80, 40), (60, 30)],
            "RDT(Ours)": [(90, 80), (50, 40), (90, 70), (60, 30)],
            "RDT(Ours-plus)": [(100, 100), (80, 80), (100, 80), (80, 70)],
        },
    },
    "pour_water": {
        "instruction": "Pour water from the bottle into the mug",
        "scene_id": "bottle_mug_1",
        "stage_labels": ["Grasp", "Pour"],
        "slots": ["bottle", "mug"],
        "rows": {
            "Octo(End-to-end)": [(60, 0), (40, 0), (60, 0), (0, 0)],
            "Octo(Ours)": [(60, 0), (40, 0), (40, 0), (0, 0)],
            "Octo(Ours-plus)": [(80, 30), (60, 30), (80, 20), (60, 20)],
            "RDT(End-to-end)": [(80, 60), (60, 30), (90, 40), (70, 20)],
            "RDT(Ours)": [(90, 60), (60, 50), (90, 40), (80, 40)],
            "RDT(Ours-plus)": [(90, 70), (70, 60), (90, 50), (90, 50)],
        },
    },
    "pick_place_pen": {
        "instruction": "Pick up the pen and place it into the pen holder",
        "scene_id": "pen_holder_1",
        "stage_labels": ["Pick up", "Place"],
        "slots": ["pen", "holder"],
        "rows": {
            "Octo(End-to-end)": [(10, 0), (0, 0), (10, 0), (0, 0)],
            "Octo(Ours)": [(10, 0), (0, 0), (10, 0), (0, 0)],
            "Octo(Ours-plus)": [(30, 0), (0, 0), (20, 0), (0, 0)],
            "RDT(End-to-end)": [(100, 70), (60, 50), (100, 50), (50, 30)],
            "RDT(Ours)": [(100, 70), (70, 50), (100, 40), (70, 30)],
            "RDT(Ours-plus)": [(100, 90), (100, 70), (100, 70), (80, 40)],
        },
    },
}


def slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


def conditions(slots):
    a, b = slots
    return [
        {a: "ID", b: "ID"},
        {a: "OOD", b: "ID"},
        {a: "ID", b: "OOD"},
        {a: "OOD", b: "OOD"},
    ]


def build_suite():
    profiles, tasks = [], []
    for task_id, t in TABLE1.items():
        methods = []
        for method, cells in t["rows"].items():
            stage_ids = []
            for k in range(2):
                pid = f"{task_id}-{slug(method)}-s{k + 1}"
                entries = []
                for cond, (r1, r2) in zip(conditions(t["slots"]), cells):
                    p = r1 / 100 if k == 0 else (r2 / r1 if r1 else 0.0)
                    entries.append({"tags": cond, "p": round(p, 6)})
                profiles.append({"profile_id": pid, "default_p": None, "latency_ticks": 1, "conditions": entries})
                stage_ids.append(pid)
            methods.append({"label": method, "stage_profiles": stage_ids})
        tasks.append(
            {
                "task_id": task_id,
                "instruction": t["instruction"],
                "scene_id": t["scene_id"],
                "title": t["instruction"],
                "stage_labels": t["stage_labels"],
                "slots": t["slots"],
                "methods": methods,
            }
        )
    return {
        "suite_id": "table1",
        "trials": 10,
        "seed": 2025,
        "retry_limit": 0,
        "profiles": profiles,
        "tasks": tasks,
    }


def main() -> None:
    (DATA / "tasks").mkdir(parents=True, exist_ok=True)
    for spec in TASK_SPECS:
        (DATA / "tasks" / f"{spec['task_id']}.json").write_text(json.dumps(spec, indent=1) + "\n")
    for order in BLOCK_ORDERS:
        spec = {
            "task_id": f"move_blocks_{order.replace('-', '_')}",
            "slots": [{"name": "layout", "position_count": 1}],
            "demos_per_setting": 10,
            "skill_split": BLOCK_SKILLS,
        }
        (DATA / "tasks" / f"{spec['task_id']}.json").write_text(json.dumps(spec, indent=1) + "\n")
    (DATA / "suites").mkdir(parents=True, exist_ok=True)
    (DATA / "suites" / "table1.json").write_text(json.dumps(build_suite(), indent=1) + "\n")
    # constant demo profiles used by `run`
    (DATA / "profiles").mkdir(parents=True, exist_ok=True)
    for pid, p in [("sim-perfect", 1.0), ("sim-reliable", 0.9), ("sim-coinflip", 0.5)]:
        doc = {"profile_id": pid, "default_p": p, "latency_ticks": 1, "conditions": []}
        (DATA / "profiles" / f"{pid}.json").write_text(json.dumps(doc, indent=1) + "\n")
    doc = {
        "profile_id": "octo-banana-place",
        "default_p": None,
        "latency_ticks": 1,
        "conditions": [
            {"tags": {"banana": "ID", "plate": "ID"}, "p": 0.8},
            {"tags": {"banana": "OOD", "plate": "ID"}, "p": 1.0},
            {"tags": {"banana": "ID", "plate": "OOD"}, "p": 0.5},
            {"tags": {"banana": "OOD", "plate": "OOD"}, "p": 0.5},
        ],
    }
    (DATA / "profiles" / "octo-banana-place.json").write_text(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    main()

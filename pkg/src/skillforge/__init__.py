"""Skill-library construction and hierarchical task execution for manipulation robots.

Scenes are perceived into relation graphs, tasks are decomposed into
subtasks, subtasks are abstracted into reusable atomic skills, and a
versioned library records which skills exist and which are trained.
Execution is simulated with seeded stochastic executors.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .abstraction import AtomicSkillDefinition, Granularity, SkillSignature, abstract, canonicalize
from .errors import SkillforgeError
from .execution import ExecutionContext, ExecutorProfile, TaskSpec, data_cost, run_task
from .library import SkillLibrary, gap_report, new_library, record_training, update_cycle
from .planner import TaskInstruction, TaskPlan, decompose, next_directive
from .scene import BoundingBox, SceneGraph, SceneObject, SegmentationMask, infer_relations

__all__ = [
    "AtomicSkillDefinition",
    "BoundingBox",
    "ExecutionContext",
    "ExecutorProfile",
    "Granularity",
    "SceneGraph",
    "SceneObject",
    "SegmentationMask",
    "SkillLibrary",
    "SkillSignature",
    "SkillforgeError",
    "TaskInstruction",
    "TaskPlan",
    "TaskSpec",
    "abstract",
    "canonicalize",
    "data_cost",
    "decompose",
    "gap_report",
    "infer_relations",
    "new_library",
    "next_directive",
    "record_training",
    "run_task",
    "update_cycle",
]

"""Simulated skill executors, the task orchestration loop, and demo-cost arithmetic.

A trained skill is executed by drawing against the success probability its
executor profile assigns to the current placement condition. Draws come from
a counter-based stream keyed by ``(seed, trial, ordinal, attempt)``, so any
single trial can be replayed on its own and batches can run in any order.
"""

from __future__ import annotations

import copy
import enum
import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from .errors import ConfigError, InconsistentPlanState, SkillGap, SkillNotTrained, UnknownCondition
from .library import SkillLibrary, SkillRecord, SkillStatus, gap_report
from .planner import DirectiveKind, PlannerDirective, TaskPlan, next_directive

log = logging.getLogger(__name__)

_U64 = 2**64


class SlotTag(str, enum.Enum):
    ID = "ID"
    OOD = "OOD"


Condition = Mapping[str, SlotTag]


def parse_condition(data: Mapping[str, str] | Iterable[str]) -> dict[str, SlotTag]:
    """Accept ``{"banana": "OOD"}`` or ``["banana=OOD", ...]``."""
    if isinstance(data, Mapping):
        items = data.items()
    else:
        items = []
        for item in data:
            slot, sep, tag = item.partition("=")
            if not sep:
                raise ValueError(f"condition {item!r} must look like slot=ID|OOD")
            items.append((slot, tag))
    return {str(k).strip(): v if isinstance(v, SlotTag) else SlotTag(str(v).strip().upper()) for k, v in items}


@dataclass(frozen=True)
class ConditionEntry:
    tags: Mapping[str, SlotTag]
    p: float


@dataclass(frozen=True)
class ExecutorProfile:
    profile_id: str
    conditions: tuple[ConditionEntry, ...] = ()
    default_p: float | None = None
    latency_ticks: int | None = None

    def __post_init__(self) -> None:
        for p in [e.p for e in self.conditions] + ([self.default_p] if self.default_p is not None else []):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"profile {self.profile_id}: probability {p} outside [0, 1]")

    def probability(self, condition: Condition) -> float:
        """Most specific entry whose tags all agree with ``condition``; else the default."""
        best: ConditionEntry | None = None
        for entry in self.conditions:
            if all(condition.get(slot) == tag for slot, tag in entry.tags.items()):
                if best is None or len(entry.tags) > len(best.tags):
                    best = entry
        if best is not None:
            return best.p
        if self.default_p is None:
            tags = ", ".join(f"{k}={v.value}" for k, v in sorted(condition.items()))
            raise UnknownCondition(f"profile {self.profile_id} has no entry for {{{tags}}} and no default")
        return self.default_p

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExecutorProfile":
        return cls(
            profile_id=data["profile_id"],
            conditions=tuple(
                ConditionEntry(parse_condition(c["tags"]), float(c["p"])) for c in data.get("conditions", [])
            ),
            default_p=None if data.get("default_p") is None else float(data["default_p"]),
            latency_ticks=data.get("latency_ticks"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "profile_id": self.profile_id,
            "default_p": self.default_p,
            "latency_ticks": self.latency_ticks,
            "conditions": [
                {"tags": {k: v.value for k, v in e.tags.items()}, "p": e.p} for e in self.conditions
            ],
        }


def constant_profile(profile_id: str, p: float) -> ExecutorProfile:
    return ExecutorProfile(profile_id, default_p=p)


def load_profiles(source: str | Path | Iterable[Mapping[str, Any]]) -> dict[str, ExecutorProfile]:
    """Profiles from a directory of ``<id>.json`` files or an iterable of dicts."""
    if isinstance(source, (str, Path)):
        docs = [json.loads(p.read_text(encoding="utf-8")) for p in sorted(Path(source).glob("*.json"))]
    else:
        docs = list(source)
    profiles = [ExecutorProfile.from_dict(d) for d in docs]
    return {p.profile_id: p for p in profiles}


@dataclass(frozen=True)
class ExecutionContext:
    condition: Mapping[str, SlotTag] = field(default_factory=dict)
    rng_seed: int = 0
    trial_index: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "condition", parse_condition(self.condition))
        object.__setattr__(self, "rng_seed", self.rng_seed % _U64)


def counter_uniform(seed: int, trial_index: int, ordinal: int, attempt: int = 0) -> float:
    """Uniform [0, 1) draw that is a pure function of its four counters."""
    key = struct.pack("<4Q", seed % _U64, trial_index % _U64, ordinal % _U64, attempt % _U64)
    digest = hashlib.blake2b(key, digest_size=8, person=b"skillforge-rng").digest()
    return (int.from_bytes(digest, "little") >> 11) / float(1 << 53)


def _resolve_profile(
    record: SkillRecord, profiles: Mapping[str, ExecutorProfile], binding: str | None = None
) -> ExecutorProfile:
    if record.status is not SkillStatus.TRAINED:
        raise SkillNotTrained(f"{record.skill_id} is {record.status.value}, not Trained")
    profile_id = binding or record.executor_binding
    if not profile_id:
        raise SkillNotTrained(f"{record.skill_id} has no executor binding")
    try:
        return profiles[profile_id]
    except KeyError:
        raise ConfigError(f"{record.skill_id} is bound to unknown executor profile {profile_id!r}") from None


def execute_skill(
    record: SkillRecord,
    ctx: ExecutionContext,
    profiles: Mapping[str, ExecutorProfile],
    ordinal: int = 1,
    attempt: int = 0,
    binding: str | None = None,
) -> bool:
    profile = _resolve_profile(record, profiles, binding)
    p = profile.probability(ctx.condition)
    return counter_uniform(ctx.rng_seed, ctx.trial_index, ordinal, attempt) < p


@dataclass(frozen=True)
class StageOutcome:
    ordinal: int
    skill_id: str
    success: bool
    attempts: int = 1

    def to_dict(self) -> dict[str, Any]:
        return {"ordinal": self.ordinal, "skill_id": self.skill_id, "success": self.success, "attempts": self.attempts}


@dataclass(frozen=True)
class TrialOutcome:
    task_id: str
    per_stage: tuple[StageOutcome, ...]
    overall_success: bool
    directive_trace: tuple[PlannerDirective, ...]
    ticks: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "per_stage": [s.to_dict() for s in self.per_stage],
            "overall_success": self.overall_success,
            "directive_trace": [str(d) for d in self.directive_trace],
            "ticks": self.ticks,
        }


def check_runnable(plan: TaskPlan, lib: SkillLibrary, bindings: Mapping[str, str] | None = None) -> dict[int, SkillRecord]:
    """Records for each ordinal; raises SkillGap / SkillNotTrained when not runnable."""
    report = gap_report(lib, plan)
    if report.missing:
        raise SkillGap(report.missing_skill_ids)
    records = {}
    for ordinal, skill_id in report.matched:
        record = lib.get(skill_id)
        if record.status is not SkillStatus.TRAINED:
            raise SkillNotTrained(f"{skill_id} is {record.status.value}, not Trained")
        if not ((bindings or {}).get(skill_id) or record.executor_binding):
            raise SkillNotTrained(f"{skill_id} has no executor binding")
        records[ordinal] = record
    return records


def run_task(
    plan: TaskPlan,
    lib: SkillLibrary,
    ctx: ExecutionContext,
    profiles: Mapping[str, ExecutorProfile],
    retry_limit: int = 0,
    bindings: Mapping[str, str] | None = None,
    advisor: Callable[[TaskPlan], int | None] | None = None,
) -> TrialOutcome:
    """Execute one trial of ``plan`` under the planner's directives.

    ``bindings`` overrides executor profiles per skill id. ``advisor``, when
    given, is asked for the next ordinal before each Execute; a disagreement
    with the local state machine is logged and the state machine is followed.
    """
    records = check_runnable(plan, lib, bindings)
    bindings = bindings or {}
    work = copy.deepcopy(plan)
    work.reset()
    trace: list[PlannerDirective] = []
    stages: dict[int, StageOutcome] = {}
    ticks = 0
    last: bool | None = None
    max_steps = (retry_limit + 1) * len(work.subtasks) + 1
    for _ in range(max_steps):
        directive = next_directive(work, last, retry_limit)
        trace.append(directive)
        if directive.kind in (DirectiveKind.COMPLETE, DirectiveKind.ABORT):
            break
        ordinal = directive.ordinal
        assert ordinal is not None
        if advisor is not None and directive.kind is DirectiveKind.EXECUTE:
            suggested = advisor(work)
            if suggested is not None and suggested != ordinal:
                log.warning("planner suggested subtask %s, state machine chose %s", suggested, ordinal)
        attempt = directive.attempt or 0
        record = records[ordinal]
        binding = bindings.get(record.skill_id)
        profile = _resolve_profile(record, profiles, binding)
        last = execute_skill(record, ctx, profiles, ordinal, attempt, binding)
        ticks += profile.latency_ticks or 0
        stages[ordinal] = StageOutcome(ordinal, record.skill_id, last, attempt + 1)
    else:
        raise InconsistentPlanState(f"plan did not terminate within {max_steps} directives")
    per_stage = tuple(stages[k] for k in sorted(stages))
    overall = trace[-1].kind is DirectiveKind.COMPLETE and all(s.success for s in per_stage)
    return TrialOutcome(plan.task.task_id, per_stage, overall, tuple(trace), ticks)


# -- data cost ---------------------------------------------------------------


class Strategy(str, enum.Enum):
    END_TO_END = "EndToEnd"
    SKILL_BASED = "SkillBased"


@dataclass(frozen=True)
class SlotSpec:
    name: str
    position_count: int


@dataclass(frozen=True)
class SkillDemos:
    skill_id: str
    demos: int


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    slots: tuple[SlotSpec, ...]
    demos_per_setting: int
    skill_split: tuple[SkillDemos, ...]

    def __post_init__(self) -> None:
        counts = [s.position_count for s in self.slots] + [d.demos for d in self.skill_split]
        if self.demos_per_setting <= 0 or any(c <= 0 for c in counts):
            raise ValueError(f"task spec {self.task_id}: counts must be positive")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TaskSpec":
        return cls(
            task_id=data["task_id"],
            slots=tuple(SlotSpec(s["name"], int(s["position_count"])) for s in data.get("slots", [])),
            demos_per_setting=int(data["demos_per_setting"]),
            skill_split=tuple(SkillDemos(s["skill_id"], int(s["demos"])) for s in data.get("skill_split", [])),
        )


def load_task_spec(path: str | Path) -> TaskSpec:
    return TaskSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def data_cost(spec: TaskSpec, strategy: Strategy | str) -> int:
    strategy = Strategy(strategy)
    if strategy is Strategy.END_TO_END:
        return math.prod(s.position_count for s in spec.slots) * spec.demos_per_setting
    return sum(d.demos for d in spec.skill_split)

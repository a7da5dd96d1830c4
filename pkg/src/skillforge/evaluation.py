"""Batch evaluation, success-rate tables and data-cost comparison.

Stage rates are computed over *all* trials: a stage that a trial never reached
counts as a failure for that trial. Rates are therefore non-increasing along
the stage index.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from .errors import EmptyResults, InconsistentStageCount
from .execution import (
    ExecutionContext,
    ExecutorProfile,
    SlotTag,
    Strategy,
    TaskSpec,
    TrialOutcome,
    check_runnable,
    data_cost,
    parse_condition,
    run_task,
)
from .library import DEFAULT_DEMO_POLICY, DemoPolicy, SkillLibrary, gap_report
from .planner import TaskPlan


@dataclass(frozen=True)
class BatchSpec:
    task_id: str
    method: str
    condition: Mapping[str, SlotTag]
    trials: int
    seed: int
    retry_limit: int = 0
    bindings: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        object.__setattr__(self, "condition", parse_condition(self.condition))


@dataclass(frozen=True)
class BatchResult:
    task_id: str
    method: str
    condition: Mapping[str, SlotTag]
    trials: int
    stage_rates: tuple[float, ...]
    overall_rate: float
    outcomes: tuple[TrialOutcome, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "method": self.method,
            "condition": {k: v.value for k, v in self.condition.items()},
            "trials": self.trials,
            "stage_rates": list(self.stage_rates),
            "overall_rate": self.overall_rate,
        }


def run_batch(
    spec: BatchSpec,
    plan: TaskPlan,
    lib: SkillLibrary,
    profiles: Mapping[str, ExecutorProfile],
    keep_outcomes: bool = False,
    advisor: Callable[[TaskPlan], int | None] | None = None,
) -> BatchResult:
    check_runnable(plan, lib, spec.bindings)
    n_stages = len(plan.subtasks)
    successes = [0] * n_stages
    overall = 0
    kept = []
    for trial in range(spec.trials):
        ctx = ExecutionContext(spec.condition, spec.seed, trial)
        outcome = run_task(plan, lib, ctx, profiles, spec.retry_limit, spec.bindings, advisor)
        if keep_outcomes:
            kept.append(outcome)
        for stage in outcome.per_stage:
            successes[stage.ordinal - 1] += stage.success
        overall += outcome.overall_success
    rates = tuple(100.0 * s / spec.trials for s in successes)
    return BatchResult(
        spec.task_id, spec.method, spec.condition, spec.trials, rates, 100.0 * overall / spec.trials, tuple(kept)
    )


# -- tables ------------------------------------------------------------------


def condition_label(condition: Mapping[str, SlotTag], slots: Sequence[str]) -> str:
    ood = [s for s in slots if condition.get(s) is SlotTag.OOD]
    if not ood:
        return "both ID" if len(slots) == 2 else "all ID"
    if len(ood) == len(slots) and len(slots) > 1:
        return "both OOD" if len(slots) == 2 else "all OOD"
    return " + ".join(ood) + " OOD"


def _condition_order(condition: Mapping[str, SlotTag], slots: Sequence[str]) -> tuple[int, tuple[int, ...]]:
    ood = tuple(i for i, s in enumerate(slots) if condition.get(s) is SlotTag.OOD)
    return (len(ood), ood)


def standard_conditions(slots: Sequence[str]) -> list[dict[str, SlotTag]]:
    """Every ID/OOD combination, in table column order (both ID, A OOD, B OOD, both OOD)."""
    combos = []
    for mask in range(2 ** len(slots)):
        combos.append({s: SlotTag.OOD if mask >> i & 1 else SlotTag.ID for i, s in enumerate(slots)})
    return sorted(combos, key=lambda c: _condition_order(c, slots))


@dataclass(frozen=True)
class SuccessTable:
    task_id: str
    title: str
    stage_labels: tuple[str, ...]
    slots: tuple[str, ...]
    methods: tuple[str, ...]
    conditions: tuple[str, ...]
    cells: Mapping[tuple[str, str], tuple[float, ...]]

    def rows_for(self, method: str) -> list[tuple[str, ...]]:
        return [
            (method, label, *(_fmt(self.cells[(method, c)][k]) if (method, c) in self.cells else "" for c in self.conditions))
            for k, label in enumerate(self.stage_labels)
        ]


def build_table(
    results: Sequence[BatchResult],
    stage_labels: Sequence[str] | None = None,
    slots: Sequence[str] | None = None,
    title: str | None = None,
) -> SuccessTable:
    if not results:
        raise EmptyResults("no batch results to tabulate")
    task_ids = {r.task_id for r in results}
    if len(task_ids) != 1:
        raise ValueError(f"one table per task, got {sorted(task_ids)}")
    counts = {len(r.stage_rates) for r in results}
    if len(counts) != 1 or (stage_labels is not None and counts != {len(stage_labels)}):
        raise InconsistentStageCount(f"stage counts differ: {sorted(counts)}")
    n = counts.pop()
    labels = tuple(stage_labels) if stage_labels is not None else tuple(f"stage {k}" for k in range(1, n + 1))
    slots = tuple(slots) if slots is not None else tuple(dict.fromkeys(s for r in results for s in r.condition))
    for r in results:
        if any(not 0.0 <= x <= 100.0 for x in r.stage_rates):
            raise ValueError(f"rate outside [0, 100] in {r.method}")
    ordered = sorted({tuple(sorted(r.condition.items())) for r in results}, key=lambda c: _condition_order(dict(c), slots))
    conditions = tuple(condition_label(dict(c), slots) for c in ordered)
    methods = tuple(dict.fromkeys(r.method for r in results))
    cells = {(r.method, condition_label(r.condition, slots)): r.stage_rates for r in results}
    task_id = task_ids.pop()
    return SuccessTable(task_id, title or task_id, labels, slots, methods, conditions, cells)


def _fmt(rate: float) -> str:
    return f"{rate:.1f}".rstrip("0").rstrip(".")


@dataclass(frozen=True)
class RenderedTable:
    markdown: str
    csv: str


def _csv_text(rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def table_csv(table: SuccessTable, methods: Sequence[str] | None = None) -> str:
    header = ("method", "stage", *table.conditions)
    rows = [row for m in (methods or table.methods) for row in table.rows_for(m)]
    return _csv_text([header, *rows])


def table_markdown(table: SuccessTable) -> str:
    stages = " | ".join(table.stage_labels)
    lines = [
        f"### {table.title} : {stages}",
        "",
        "| Method | " + " | ".join(table.conditions) + " |",
        "|" + "---|" * (len(table.conditions) + 1),
    ]
    for m in table.methods:
        cells = [
            " / ".join(_fmt(x) for x in table.cells[(m, c)]) if (m, c) in table.cells else "-"
            for c in table.conditions
        ]
        lines.append(f"| {m} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit_table(
    results: Sequence[BatchResult] | SuccessTable,
    stage_labels: Sequence[str] | None = None,
    slots: Sequence[str] | None = None,
    title: str | None = None,
) -> RenderedTable:
    table = results if isinstance(results, SuccessTable) else build_table(results, stage_labels, slots, title)
    return RenderedTable(table_markdown(table), table_csv(table))


def method_slug(method: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", method.lower()).strip("-") or "method"


# -- strategy comparison -----------------------------------------------------


def compare_strategies(
    specs: Sequence[TaskSpec],
    new_tasks: Sequence[TaskPlan] = (),
    lib: SkillLibrary | None = None,
    new_task_specs: Mapping[str, TaskSpec] | None = None,
    demo_policy: DemoPolicy = DEFAULT_DEMO_POLICY,
) -> dict[str, Any]:
    """Demo counts per strategy, plus what each new task would additionally cost.

    A new task's skill-based cost is the demos for its missing skills only;
    its end-to-end cost is a full re-collection for its own spec, when one is
    supplied in ``new_task_specs``.
    """
    tasks = [
        {
            "task_id": s.task_id,
            Strategy.END_TO_END.value: data_cost(s, Strategy.END_TO_END),
            Strategy.SKILL_BASED.value: data_cost(s, Strategy.SKILL_BASED),
        }
        for s in specs
    ]
    totals = {
        Strategy.END_TO_END.value: sum(t[Strategy.END_TO_END.value] for t in tasks),
        Strategy.SKILL_BASED.value: sum(t[Strategy.SKILL_BASED.value] for t in tasks),
    }
    gaps = []
    for plan in new_tasks:
        if lib is None:
            raise ValueError("new tasks need a library to check coverage against")
        missing = gap_report(lib, plan).missing_skill_ids
        spec = (new_task_specs or {}).get(plan.task.task_id)
        gaps.append(
            {
                "task_id": plan.task.task_id,
                "missing_skills": missing,
                "additional_skills": len(missing),
                "skill_based_additional_demos": sum(demo_policy.entry_for(m).demos_required for m in missing),
                "end_to_end_recollection": data_cost(spec, Strategy.END_TO_END) if spec else None,
            }
        )
    return {"tasks": tasks, "totals": totals, "new_tasks": gaps}

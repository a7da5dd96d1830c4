"""Persistent atomic skill library.

Every mutation bumps ``library_version`` by one and appends one log entry, so
``library_version == 1 + len(update_log)`` holds for any library built through
this module. Mutating functions return a new library and leave their input
untouched.
"""

from __future__ import annotations

import copy
import enum
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from .abstraction import (
    AtomicSkillDefinition,
    Granularity,
    SkillSignature,
    abstract,
    project,
)
from .errors import (
    CorruptLibrary,
    GranularityMismatch,
    IllegalTransition,
    LibraryIOError,
    SchemaVersionMismatch,
    UnknownField,
    UnknownSkill,
)
from .planner import TaskPlan

SCHEMA_VERSION = 1

Clock = Callable[[], str]


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class SkillStatus(str, enum.Enum):
    DEFINED = "Defined"
    DATA_COLLECTED = "DataCollected"
    TRAINED = "Trained"
    DEPRECATED = "Deprecated"


@dataclass(frozen=True)
class SkillRecord:
    definition: AtomicSkillDefinition
    status: SkillStatus = SkillStatus.DEFINED
    demo_count: int = 0
    executor_binding: str | None = None
    version: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "status", SkillStatus(self.status))
        if self.demo_count < 0:
            raise ValueError("demo_count must be non-negative")
        if self.status is SkillStatus.TRAINED and (not self.executor_binding or self.demo_count <= 0):
            raise ValueError(f"{self.skill_id}: a trained skill needs demos and an executor binding")

    @property
    def skill_id(self) -> str:
        return self.definition.skill_id

    def to_dict(self) -> dict[str, Any]:
        return {
            "definition": self.definition.to_dict(),
            "status": self.status.value,
            "demo_count": self.demo_count,
            "executor_binding": self.executor_binding,
            "version": self.version,
        }


@dataclass(frozen=True)
class LogEntry:
    timestamp: str
    event: str
    skill_id: str | None
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"timestamp": self.timestamp, "event": self.event, "skill_id": self.skill_id, "detail": self.detail}


@dataclass
class SkillLibrary:
    granularity: Granularity = Granularity.MEDIUM
    records: dict[str, SkillRecord] = field(default_factory=dict)
    library_version: int = 1
    update_log: list[LogEntry] = field(default_factory=list)

    def copy(self) -> "SkillLibrary":
        return copy.deepcopy(self)

    def _mutate(self, event: str, skill_id: str | None, detail: str, clock: Clock | None) -> None:
        self.library_version += 1
        self.update_log.append(LogEntry((clock or utc_now)(), event, skill_id, detail))

    def definitions(self) -> list[AtomicSkillDefinition]:
        return [r.definition for r in self.records.values()]

    def get(self, skill_id: str) -> SkillRecord:
        try:
            return self.records[skill_id]
        except KeyError:
            raise UnknownSkill(f"no skill {skill_id!r} in library") from None

    def to_dict(self) -> dict[str, Any]:
        return {
            "granularity": self.granularity.value,
            "library_version": self.library_version,
            "records": [self.records[k].to_dict() for k in sorted(self.records)],
            "update_log": [e.to_dict() for e in self.update_log],
        }


def new_library(granularity: Granularity | str = Granularity.MEDIUM) -> SkillLibrary:
    return SkillLibrary(Granularity.parse(granularity))


# -- matching ----------------------------------------------------------------


def match_subtask(lib: SkillLibrary, sig: SkillSignature, g: Granularity) -> str | None:
    """Skill id matching ``sig`` at granularity ``g``, or None when missing.

    Deprecated records never match. Among several candidates the highest
    record version wins, then the lexicographically smallest id.
    """
    target = project(sig, g)
    candidates = [
        r
        for r in lib.records.values()
        if r.status is not SkillStatus.DEPRECATED and project(r.definition.signature, g) == target
    ]
    if not candidates:
        return None
    best = min(candidates, key=lambda r: (-r.version, r.skill_id))
    return best.skill_id


@dataclass(frozen=True)
class GapReport:
    task_id: str
    matched: tuple[tuple[int, str], ...]
    missing: tuple[tuple[int, AtomicSkillDefinition], ...]

    @property
    def missing_skill_ids(self) -> list[str]:
        return list(dict.fromkeys(d.skill_id for _, d in self.missing))

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "matched": [{"ordinal": o, "skill_id": s} for o, s in self.matched],
            "missing": [{"ordinal": o, "skill_id": d.skill_id, "definition": d.to_dict()} for o, d in self.missing],
        }


def gap_report(lib: SkillLibrary, plan: TaskPlan, g: Granularity | None = None) -> GapReport:
    g = lib.granularity if g is None else Granularity.parse(g)
    matched, unmatched = [], []
    for sub in plan.subtasks:
        skill_id = match_subtask(lib, sub.signature, g)
        if skill_id is None:
            unmatched.append(sub)
        else:
            matched.append((sub.ordinal, skill_id))
    missing = []
    if unmatched:
        live = [r.definition for r in lib.records.values() if r.status is not SkillStatus.DEPRECATED]
        result = abstract(unmatched, g, live)
        missing = [(s.ordinal, result.definitions[result.mapping[s.text]]) for s in unmatched]
    return GapReport(plan.task.task_id, tuple(matched), tuple(missing))


# -- update cycle ------------------------------------------------------------


def position_grid(rows: int = 3, cols: int = 3) -> tuple[str, ...]:
    return tuple(f"r{r}c{c}" for r in range(1, rows + 1) for c in range(1, cols + 1))


@dataclass(frozen=True)
class DemoPolicy:
    """How many demonstrations a new skill needs, and where to collect them."""

    demos_per_skill: int = 9
    grid_rows: int = 3
    grid_cols: int = 3
    overrides: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.demos_per_skill <= 0 or any(v <= 0 for v in self.overrides.values()):
            raise ValueError("demo counts must be positive")

    def entry_for(self, skill_id: str) -> "ManifestEntry":
        grid = position_grid(self.grid_rows, self.grid_cols) if self.grid_rows and self.grid_cols else ()
        return ManifestEntry(skill_id, self.overrides.get(skill_id, self.demos_per_skill), grid)


DEFAULT_DEMO_POLICY = DemoPolicy()


@dataclass(frozen=True)
class ManifestEntry:
    skill_id: str
    demos_required: int
    position_grid: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "skill_id": self.skill_id,
            "demos_required": self.demos_required,
            "position_grid": list(self.position_grid),
        }


@dataclass(frozen=True)
class DataManifest:
    entries: tuple[ManifestEntry, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"entries": [e.to_dict() for e in self.entries]}

    @property
    def total_demos(self) -> int:
        return sum(e.demos_required for e in self.entries)


def update_cycle(
    lib: SkillLibrary,
    plan: TaskPlan,
    g: Granularity | None = None,
    demo_policy: DemoPolicy = DEFAULT_DEMO_POLICY,
    clock: Clock | None = None,
) -> tuple[SkillLibrary, DataManifest]:
    g = lib.granularity if g is None else Granularity.parse(g)
    if g is not lib.granularity:
        raise GranularityMismatch(
            f"library is frozen at {lib.granularity.value}, update requested at {g.value}"
        )
    report = gap_report(lib, plan, g)
    out = lib.copy()
    entries = []
    new_defs = {d.skill_id: d for _, d in report.missing}
    for skill_id, definition in new_defs.items():
        out.records[skill_id] = SkillRecord(definition)
        out._mutate("register", skill_id, f"task {plan.task.task_id}", clock)
        entries.append(demo_policy.entry_for(skill_id))
    if not new_defs:
        out._mutate("covered", None, f"task {plan.task.task_id} needs no new skills", clock)
    return out, DataManifest(tuple(entries))


_ALLOWED = {
    SkillStatus.DEFINED: {SkillStatus.DATA_COLLECTED, SkillStatus.TRAINED, SkillStatus.DEPRECATED},
    SkillStatus.DATA_COLLECTED: {SkillStatus.TRAINED, SkillStatus.DEPRECATED},
    SkillStatus.TRAINED: {SkillStatus.DEPRECATED},
    SkillStatus.DEPRECATED: set(),
}


def _transition(
    lib: SkillLibrary, skill_id: str, status: SkillStatus, event: str, clock: Clock | None, **changes: Any
) -> SkillLibrary:
    record = lib.get(skill_id)
    if status not in _ALLOWED[record.status]:
        raise IllegalTransition(f"{skill_id}: {record.status.value} -> {status.value} is not allowed")
    out = lib.copy()
    out.records[skill_id] = replace(record, status=status, version=record.version + 1, **changes)
    detail = ", ".join(f"{k}={v}" for k, v in sorted(changes.items()))
    out._mutate(event, skill_id, detail, clock)
    return out


def record_data(lib: SkillLibrary, skill_id: str, demo_count: int, clock: Clock | None = None) -> SkillLibrary:
    if demo_count <= 0:
        raise ValueError("demo_count must be positive")
    return _transition(lib, skill_id, SkillStatus.DATA_COLLECTED, "data", clock, demo_count=demo_count)


def record_training(
    lib: SkillLibrary,
    skill_id: str,
    demo_count: int,
    executor_binding: str,
    clock: Clock | None = None,
) -> SkillLibrary:
    if demo_count <= 0 or not executor_binding:
        raise ValueError("training needs a positive demo_count and an executor binding")
    return _transition(
        lib,
        skill_id,
        SkillStatus.TRAINED,
        "train",
        clock,
        demo_count=demo_count,
        executor_binding=executor_binding,
    )


def deprecate(lib: SkillLibrary, skill_id: str, clock: Clock | None = None) -> SkillLibrary:
    return _transition(lib, skill_id, SkillStatus.DEPRECATED, "deprecate", clock)


def register(
    lib: SkillLibrary, definitions: Iterable[AtomicSkillDefinition], clock: Clock | None = None
) -> SkillLibrary:
    """Add definitions as Defined records; ids already present are skipped."""
    out = lib.copy()
    for d in definitions:
        if d.skill_id not in out.records:
            out.records[d.skill_id] = SkillRecord(d)
            out._mutate("register", d.skill_id, "", clock)
    return out


# -- persistence -------------------------------------------------------------

_TOP_KEYS = {"schema_version", "checksum", "library"}
_LIB_KEYS = {"granularity", "library_version", "records", "update_log"}
_RECORD_KEYS = {"definition", "status", "demo_count", "executor_binding", "version"}
_DEF_KEYS = {"skill_id", "signature", "granularity", "text_template", "created_from"}
_SIG_KEYS = {"verb", "object", "target", "modifiers"}
_LOG_KEYS = {"timestamp", "event", "skill_id", "detail"}


def _canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _checksum(payload: Mapping[str, Any]) -> str:
    return "sha256:" + hashlib.sha256(_canonical_json(payload).encode("utf-8")).hexdigest()


def save(lib: SkillLibrary, path: str | Path) -> None:
    """Write ``lib`` atomically (temp file in the same directory, then rename)."""
    path = Path(path)
    payload = lib.to_dict()
    doc = {"schema_version": SCHEMA_VERSION, "checksum": _checksum(payload), "library": payload}
    text = json.dumps(doc, indent=2, ensure_ascii=False, sort_keys=True) + "\n"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise LibraryIOError(f"cannot write library {path}: {exc}") from exc


def _expect_keys(obj: Any, allowed: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise CorruptLibrary(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise UnknownField(f"{where}: unknown field(s) {sorted(extra)}")
    missing = allowed - set(obj)
    if missing:
        raise CorruptLibrary(f"{where}: missing field(s) {sorted(missing)}")


def library_from_dict(payload: Mapping[str, Any]) -> SkillLibrary:
    _expect_keys(payload, _LIB_KEYS, "library")
    records: dict[str, SkillRecord] = {}
    for i, raw in enumerate(payload["records"]):
        _expect_keys(raw, _RECORD_KEYS, f"records[{i}]")
        _expect_keys(raw["definition"], _DEF_KEYS, f"records[{i}].definition")
        _expect_keys(raw["definition"]["signature"], _SIG_KEYS, f"records[{i}].definition.signature")
        rec = SkillRecord(
            definition=AtomicSkillDefinition.from_dict(raw["definition"]),
            status=SkillStatus(raw["status"]),
            demo_count=int(raw["demo_count"]),
            executor_binding=raw["executor_binding"],
            version=int(raw["version"]),
        )
        if rec.skill_id in records:
            raise CorruptLibrary(f"duplicate skill id {rec.skill_id}")
        records[rec.skill_id] = rec
    log = []
    for i, raw in enumerate(payload["update_log"]):
        _expect_keys(raw, _LOG_KEYS, f"update_log[{i}]")
        log.append(LogEntry(raw["timestamp"], raw["event"], raw["skill_id"], raw["detail"]))
    return SkillLibrary(
        granularity=Granularity.parse(payload["granularity"]),
        records=records,
        library_version=int(payload["library_version"]),
        update_log=log,
    )


def load(path: str | Path) -> SkillLibrary:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise LibraryIOError(f"cannot read library {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptLibrary(f"{path} is not valid JSON (truncated?): {exc}") from exc
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise CorruptLibrary(f"{path} has no schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"{path} has schema_version {doc['schema_version']!r}, this build reads {SCHEMA_VERSION}"
        )
    _expect_keys(doc, _TOP_KEYS, "document")
    if _checksum(doc["library"]) != doc["checksum"]:
        raise CorruptLibrary(f"{path}: checksum mismatch")
    try:
        return library_from_dict(doc["library"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CorruptLibrary):
            raise
        raise CorruptLibrary(f"{path}: {exc}") from exc

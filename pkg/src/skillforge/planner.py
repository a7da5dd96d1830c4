"""Task decomposition and the runtime subtask state machine.

Planner backends return raw text in this grammar::

    PLAN:
    1. <imperative phrase>
    2. <imperative phrase>
    NEXT: 1

The ``PLAN:`` header and the ``NEXT:`` line are optional; the numbered list is
not. ``decompose`` turns the phrases into a ``TaskPlan`` and never looks at the
skill library. ``next_directive`` then drives execution one subtask at a time.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Protocol

from .abstraction import LexiconCanonicalizer, SkillSignature, canonicalize
from .errors import (
    BackendTimeout,
    BackendUnavailable,
    EmptyInstruction,
    InconsistentPlanState,
    MalformedPlannerResponse,
    UnparsablePhrase,
)
from .scene import SceneGraph

log = logging.getLogger(__name__)

DEFAULT_RETRY_LIMIT = 1
DEFAULT_MALFORMED_RETRIES = 3
NONE_OBSERVED = "none observed"


@dataclass(frozen=True)
class TaskInstruction:
    task_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise EmptyInstruction("task instruction is empty")

    @classmethod
    def from_text(cls, text: str, task_id: str | None = None) -> "TaskInstruction":
        if not text or not text.strip():
            raise EmptyInstruction("task instruction is empty")
        return cls(task_id or default_task_id(text), text.strip())


def default_task_id(text: str) -> str:
    words = re.findall(r"[a-z0-9]+", text.lower())[:8]
    return "-".join(words) or "task"


class SubtaskStatus(str, enum.Enum):
    PENDING = "Pending"
    ACTIVE = "Active"
    DONE = "Done"
    FAILED = "Failed"


@dataclass
class Subtask:
    ordinal: int
    text: str
    signature: SkillSignature
    status: SubtaskStatus = SubtaskStatus.PENDING
    retries: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "ordinal": self.ordinal,
            "text": self.text,
            "signature": self.signature.to_dict(),
            "status": self.status.value,
            "retries": self.retries,
        }


@dataclass
class TaskPlan:
    task: TaskInstruction
    scene_id: str
    subtasks: list[Subtask]
    backend_id: str
    prompt_hash: str

    def __post_init__(self) -> None:
        if not self.subtasks:
            raise InconsistentPlanState("a plan needs at least one subtask")
        if [s.ordinal for s in self.subtasks] != list(range(1, len(self.subtasks) + 1)):
            raise InconsistentPlanState("subtask ordinals must be contiguous from 1")

    def subtask(self, ordinal: int) -> Subtask:
        return self.subtasks[ordinal - 1]

    def reset(self) -> None:
        for s in self.subtasks:
            s.status, s.retries = SubtaskStatus.PENDING, 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task.task_id,
            "instruction": self.task.text,
            "scene_id": self.scene_id,
            "subtasks": [s.to_dict() for s in self.subtasks],
            "provenance": {"backend_id": self.backend_id, "prompt_hash": self.prompt_hash},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TaskPlan":
        subtasks = [
            Subtask(
                s["ordinal"],
                s["text"],
                SkillSignature.from_dict(s["signature"]),
                SubtaskStatus(s.get("status", "Pending")),
                s.get("retries", 0),
            )
            for s in data["subtasks"]
        ]
        prov = data.get("provenance", {})
        return cls(
            TaskInstruction(data["task_id"], data["instruction"]),
            data["scene_id"],
            subtasks,
            prov.get("backend_id", ""),
            prov.get("prompt_hash", ""),
        )


class DirectiveKind(str, enum.Enum):
    EXECUTE = "Execute"
    RETRY = "Retry"
    ABORT = "Abort"
    COMPLETE = "Complete"


@dataclass(frozen=True)
class PlannerDirective:
    kind: DirectiveKind
    ordinal: int | None = None
    attempt: int | None = None
    reason: str | None = None

    def __str__(self) -> str:
        if self.kind is DirectiveKind.EXECUTE:
            return f"Execute({self.ordinal})"
        if self.kind is DirectiveKind.RETRY:
            return f"Retry({self.ordinal}, {self.attempt})"
        if self.kind is DirectiveKind.ABORT:
            return f"Abort({self.reason})"
        return "Complete"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        if self.ordinal is not None:
            out["ordinal"] = self.ordinal
        if self.attempt is not None:
            out["attempt"] = self.attempt
        if self.reason is not None:
            out["reason"] = self.reason
        return out


def Execute(ordinal: int) -> PlannerDirective:
    return PlannerDirective(DirectiveKind.EXECUTE, ordinal)


def Retry(ordinal: int, attempt: int) -> PlannerDirective:
    return PlannerDirective(DirectiveKind.RETRY, ordinal, attempt)


def Abort(reason: str) -> PlannerDirective:
    return PlannerDirective(DirectiveKind.ABORT, reason=reason)


COMPLETE = PlannerDirective(DirectiveKind.COMPLETE)


# -- prompt ------------------------------------------------------------------


@lru_cache(maxsize=8)
def load_prompt_template(path: str | None = None) -> str:
    if path is None:
        return resources.files("skillforge").joinpath("data/templates/vlp_prompt.txt").read_text("utf-8")
    return Path(path).read_text(encoding="utf-8")


def build_prompt(task: TaskInstruction, scene: SceneGraph, template: str | None = None) -> str:
    template = load_prompt_template() if template is None else template
    objects = "\n".join(f"- {o.object_id}: {o.label}" for o in scene.objects) or NONE_OBSERVED
    relations = "\n".join(f"- {s} {k} {o}" for s, k, o in scene.relation_triples()) or NONE_OBSERVED
    return template.format_map(
        {
            "description": scene.description.strip() or NONE_OBSERVED,
            "objects": objects,
            "relations": relations,
            "instruction": task.text.strip(),
        }
    )


def prompt_hash(prompt: str) -> str:
    return "sha256:" + hashlib.sha256(prompt.encode("utf-8")).hexdigest()


# -- response grammar --------------------------------------------------------

_NUMBERED = re.compile(r"^\s*(\d+)\s*[.)]\s*(.*?)\s*$")
_NEXT = re.compile(r"^\s*NEXT\s*:\s*(\d+)\s*$", re.IGNORECASE)
_PLAN = re.compile(r"^\s*PLAN\s*:\s*$", re.IGNORECASE)


def parse_plan_response(raw: str) -> list[str]:
    lines = raw.splitlines()
    start = next((i + 1 for i, line in enumerate(lines) if _PLAN.match(line)), 0)
    phrases: list[str] = []
    for line in lines[start:]:
        m = _NUMBERED.match(line)
        if m is None:
            if phrases and line.strip():
                break
            continue
        if int(m.group(1)) != len(phrases) + 1:
            raise MalformedPlannerResponse(f"plan numbering broken at {line.strip()!r}")
        if not m.group(2):
            raise MalformedPlannerResponse(f"plan item {m.group(1)} is blank")
        phrases.append(m.group(2))
    if not phrases:
        raise MalformedPlannerResponse(f"no numbered plan in response: {raw[:80]!r}")
    return phrases


def parse_next_ordinal(raw: str) -> int | None:
    for line in raw.splitlines():
        m = _NEXT.match(line)
        if m:
            return int(m.group(1))
    return None


def format_plan_response(phrases: list[str], next_ordinal: int = 1) -> str:
    body = "\n".join(f"{i}. {p}" for i, p in enumerate(phrases, 1))
    return f"PLAN:\n{body}\nNEXT: {next_ordinal}\n"


# -- backends ----------------------------------------------------------------


class PlannerBackend(Protocol):
    backend_id: str

    def complete(self, prompt: str, task: TaskInstruction) -> str: ...


def _normalize_instruction(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower()).rstrip(".!?")


class MockRuleTable:
    """Deterministic planner: instruction patterns mapped to fixed plans.

    Instructions that match no rule are split into clauses on "then", ";",
    sentence ends and "and" (when both sides are complete phrases); "it" in a
    clause is replaced by the previous clause's object.
    """

    backend_id = "mock-rules"

    def __init__(self, rules_path: str | Path | None = None):
        if rules_path is None:
            text = resources.files("skillforge").joinpath("data/fixtures/planner_rules.json").read_text("utf-8")
        else:
            text = Path(rules_path).read_text(encoding="utf-8")
        self.rules = json.loads(text)["rules"]
        for rule in self.rules:
            rule["_re"] = re.compile(rule["pattern"])

    def plan_phrases(self, instruction: str) -> list[str]:
        text = _normalize_instruction(instruction)
        for rule in self.rules:
            m = rule["_re"].match(text)
            if m is None:
                continue
            groups = {k: v.strip() for k, v in m.groupdict().items() if v is not None}
            if "each" in rule:
                items = [i for i in re.split(r"\s*,\s*(?:and\s+)?|\s+and\s+", groups[rule["each"]]) if i]
                return [step.format(item=item, **groups) for item in items for step in rule["steps"]]
            return [step.format(**groups) for step in rule["steps"]]
        return self._fallback(text)

    @staticmethod
    def _fallback(text: str) -> list[str]:
        clauses = [c for c in re.split(r"\s*(?:,?\s*and then\b|,?\s*then\b|;|\.\s)\s*", text) if c.strip()]
        phrases: list[str] = []
        for clause in clauses:
            parts: list[str] = []
            for part in clause.strip(" ,").split(" and "):
                if parts and not _parses(_PRONOUN.sub("thing", parts[-1])):
                    parts[-1] = f"{parts[-1]} and {part}"
                else:
                    parts.append(part)
            phrases.extend(p.strip(" ,") for p in parts if p.strip(" ,"))
        out: list[str] = []
        for phrase in phrases:
            if re.search(r"\bit\b", phrase) and out and _parses(out[-1]):
                obj = canonicalize(out[-1]).object_slot
                phrase = re.sub(r"\bit\b", f"the {obj}", phrase, count=1)
            out.append(phrase)
        return out

    def complete(self, prompt: str, task: TaskInstruction) -> str:
        phrases = self.plan_phrases(task.text)
        if not phrases:
            return "no plan"
        return format_plan_response(phrases)


_PRONOUN = re.compile(r"\b(?:it|them)\b")


def _parses(phrase: str) -> bool:
    try:
        canonicalize(phrase)
    except UnparsablePhrase:
        return False
    return True


class HttpLlm:
    """Generic chat-completion endpoint (OpenAI-style request/response JSON)."""

    def __init__(
        self,
        endpoint_url: str,
        model: str = "default",
        api_key_env: str | None = None,
        timeout: float = 30.0,
        max_retries: int = 2,
        backoff: float = 0.05,
    ):
        self.endpoint_url = endpoint_url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.backend_id = f"http-llm:{model}"

    def _chat(self, content: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env and os.environ.get(self.api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[self.api_key_env]}"
        body = json.dumps(
            {"model": self.model, "temperature": 0, "messages": [{"role": "user", "content": content}]}
        ).encode("utf-8")
        deadline = time.monotonic() + self.timeout * (self.max_retries + 1)
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            req = urllib.request.Request(self.endpoint_url, data=body, headers=headers, method="POST")
            try:
                with urllib.request.urlopen(req, timeout=min(self.timeout, remaining)) as resp:
                    doc = json.loads(resp.read().decode("utf-8"))
                return str(doc["choices"][0]["message"]["content"])
            except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
                raise MalformedPlannerResponse(f"unexpected chat-completion payload: {exc}") from exc
            except TimeoutError as exc:
                last = BackendTimeout(str(exc))
            except (urllib.error.URLError, OSError) as exc:
                last = exc
            if attempt < self.max_retries:
                time.sleep(max(0.0, min(self.backoff, deadline - time.monotonic())))
        if isinstance(last, BackendTimeout):
            raise last
        raise BackendUnavailable(f"{self.endpoint_url}: {last}")

    def complete(self, prompt: str, task: TaskInstruction) -> str:
        return self._chat(prompt)

    def confirm_next(self, prompt: str, plan: TaskPlan) -> int | None:
        """Ask the model which subtask comes next given the progress so far."""
        progress = "\n".join(f"{s.ordinal}. {s.text} [{s.status.value}]" for s in plan.subtasks)
        return parse_next_ordinal(self._chat(f"{prompt}\n\nProgress so far:\n{progress}\n"))


# -- decomposition -----------------------------------------------------------


def decompose(
    task: TaskInstruction,
    scene: SceneGraph,
    backend: PlannerBackend,
    canonicalizer: Callable[[str], SkillSignature] | None = None,
    template: str | None = None,
    malformed_retries: int = DEFAULT_MALFORMED_RETRIES,
) -> TaskPlan:
    if not task.text.strip():
        raise EmptyInstruction("task instruction is empty")
    canon = canonicalizer or LexiconCanonicalizer()
    prompt = build_prompt(task, scene, template)
    phrases: list[str] | None = None
    for attempt in range(malformed_retries + 1):
        raw = backend.complete(prompt, task)
        try:
            phrases = parse_plan_response(raw)
            break
        except MalformedPlannerResponse as exc:
            log.warning("planner response rejected (attempt %d): %s", attempt + 1, exc)
    if phrases is None:
        raise MalformedPlannerResponse(f"no valid plan after {malformed_retries + 1} attempts")
    subtasks = [Subtask(i, p, canon(p)) for i, p in enumerate(phrases, 1)]
    return TaskPlan(task, scene.scene_id, subtasks, backend.backend_id, prompt_hash(prompt))


# -- runtime directives ------------------------------------------------------


def _check_plan(plan: TaskPlan) -> Subtask | None:
    statuses = [s.status for s in plan.subtasks]
    active = [s for s in plan.subtasks if s.status is SubtaskStatus.ACTIVE]
    if len(active) > 1:
        raise InconsistentPlanState("more than one active subtask")
    # Done* (Active|Failed)? Pending*
    seen_open = False
    for st in statuses:
        if st is SubtaskStatus.DONE and seen_open:
            raise InconsistentPlanState("a subtask finished before an earlier one")
        if st is not SubtaskStatus.DONE:
            if seen_open and st is not SubtaskStatus.PENDING:
                raise InconsistentPlanState("subtasks out of order")
            seen_open = True
    return active[0] if active else None


def next_directive(
    plan: TaskPlan, last_outcome: bool | None = None, retry_limit: int = DEFAULT_RETRY_LIMIT
) -> PlannerDirective:
    """Advance ``plan`` by one step and return what to do next.

    ``last_outcome`` reports the result of the subtask that is currently
    Active. Statuses on ``plan`` are updated in place.
    """
    active = _check_plan(plan)
    if active is None:
        if last_outcome is not None:
            raise InconsistentPlanState("outcome reported but no subtask is active")
        failed = [s for s in plan.subtasks if s.status is SubtaskStatus.FAILED]
        if failed:
            return Abort(f"subtask {failed[0].ordinal} failed")
        return _start_next(plan)
    if last_outcome is None:
        raise InconsistentPlanState(f"subtask {active.ordinal} is active but no outcome was given")
    if last_outcome:
        active.status = SubtaskStatus.DONE
        return _start_next(plan)
    if active.retries < retry_limit:
        active.retries += 1
        return Retry(active.ordinal, active.retries)
    active.status = SubtaskStatus.FAILED
    return Abort(f"subtask {active.ordinal} failed after {active.retries + 1} attempts")


def _start_next(plan: TaskPlan) -> PlannerDirective:
    for s in plan.subtasks:
        if s.status is SubtaskStatus.PENDING:
            s.status = SubtaskStatus.ACTIVE
            return Execute(s.ordinal)
    return COMPLETE

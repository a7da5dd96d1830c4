"""Glue between configuration and the perception, planning and abstraction backends."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .abstraction import LexiconCanonicalizer, LlmCanonicalizer, SkillSignature, extract_label_hints
from .config import GlobalConfig
from .perception import BackendConfig, BackendKind, Perception, PerceptionRequest, build_scene_graph, make_perception
from .planner import HttpLlm, MockRuleTable, PlannerBackend, TaskInstruction, TaskPlan, build_prompt, decompose
from .scene import SceneGraph


@dataclass
class Backends:
    perception: Perception
    planner: PlannerBackend
    canonicalizer: Callable[[str], SkillSignature]
    template: str


def _llm(config: GlobalConfig) -> HttpLlm:
    assert config.llm_endpoint is not None
    return HttpLlm(config.llm_endpoint, config.llm_model, config.llm_api_key_env, config.llm_timeout)


def make_backends(config: GlobalConfig) -> Backends:
    if config.perception_backend == "http":
        pcfg = BackendConfig(
            BackendKind.HTTP,
            config.perception_endpoint,
            config.perception_api_key_env,
            config.perception_timeout,
            config.perception_max_retries,
        )
    else:
        pcfg = BackendConfig(BackendKind.FIXTURE, fixtures_dir=config.fixtures_dir)
    perception = make_perception(pcfg)

    if config.planner_backend == "http":
        planner: PlannerBackend = _llm(config)
    else:
        rules = Path(config.fixtures_dir) / "planner_rules.json"
        planner = MockRuleTable(rules if rules.is_file() else None)

    if config.abstraction_backend == "llm":
        llm = _llm(config)
        canonicalizer: Callable[[str], SkillSignature] = LlmCanonicalizer(llm._chat)
    else:
        canonicalizer = LexiconCanonicalizer()

    template_path = Path(config.templates_dir) / "vlp_prompt.txt"
    template = template_path.read_text(encoding="utf-8")
    return Backends(perception, planner, canonicalizer, template)


def perceive(backends: Backends, scene_id: str, instruction: str | None = None) -> SceneGraph:
    """Scene graph for ``scene_id``, restricted to objects the instruction mentions when any match."""
    hints = tuple(extract_label_hints(instruction)) if instruction else None
    graph = build_scene_graph(PerceptionRequest(scene_id=scene_id, label_hints=hints or None), backends.perception)
    if hints and not graph.objects:
        graph = build_scene_graph(PerceptionRequest(scene_id=scene_id), backends.perception)
    return graph


def plan_task(
    backends: Backends, text: str, scene_id: str, task_id: str | None = None
) -> tuple[TaskPlan, SceneGraph]:
    task = TaskInstruction.from_text(text, task_id)
    scene = perceive(backends, scene_id, task.text)
    plan = decompose(task, scene, backends.planner, backends.canonicalizer, backends.template)
    return plan, scene


def step_advisor(backends: Backends, plan: TaskPlan, scene: SceneGraph) -> Callable[[TaskPlan], int | None] | None:
    """Per-step confirmation hook for planners that support it."""
    confirm = getattr(backends.planner, "confirm_next", None)
    if confirm is None:
        return None
    prompt = build_prompt(plan.task, scene, backends.template)
    return lambda work: confirm(prompt, work)

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from skillforge.abstraction import SkillSignature
from skillforge.errors import EmptyInstruction, InconsistentPlanState, MalformedPlannerResponse
from skillforge.planner import (
    NONE_OBSERVED,
    DirectiveKind,
    HttpLlm,
    MockRuleTable,
    Subtask,
    SubtaskStatus,
    TaskInstruction,
    TaskPlan,
    build_prompt,
    decompose,
    format_plan_response,
    next_directive,
    parse_next_ordinal,
    parse_plan_response,
    prompt_hash,
)
from skillforge.pipeline import perceive, plan_task
from skillforge.scene import BoundingBox, SceneGraph, SceneObject


def sigs(plan):
    s = plan.subtasks
    return [(x.signature.verb, x.signature.object_slot, x.signature.target_slot) for x in s]


def test_banana_plan(backends):
    plan, _ = plan_task(backends, "Pick up the banana and place it onto the plate", "banana_plate_1")
    assert sigs(plan) == [("pick-up", "banana", None), ("place", "banana", "plate")]
    assert all(s.status is SubtaskStatus.PENDING for s in plan.subtasks)
    assert plan.backend_id == "mock-rules"
    assert plan.prompt_hash.startswith("sha256:")


def test_pour_plan(backends):
    plan, _ = plan_task(backends, "Pour water from the bottle into the mug", "bottle_mug_1")
    assert sigs(plan) == [("grasp", "bottle", None), ("pour", "bottle", "mug")]


def test_block_plan(backends):
    plan, _ = plan_task(backends, "Move the red, blue, and green blocks in that order", "blocks_1")
    assert sigs(plan) == [("move", "red block", None), ("move", "blue block", None), ("move", "green block", None)]


def test_serve_water_plan(backends):
    plan, _ = plan_task(backends, "Give the guest a cup of water", "guest_water_1")
    assert [s.text for s in plan.subtasks] == [
        "lift up the bottle",
        "align and tilt the bottle towards the cup",
        "deliver the cup",
    ]
    assert plan.subtasks[1].signature == SkillSignature("tilt", "bottle", "cup", ("align",))


def test_unmatched_instruction_uses_clause_split():
    phrases = MockRuleTable().plan_phrases("Grasp the cup, then lift it and place it onto the tray")
    assert phrases == ["grasp the cup", "lift the cup", "place the cup onto the tray"]


def test_empty_instruction():
    with pytest.raises(EmptyInstruction):
        TaskInstruction.from_text("   ")


def test_prompt_deterministic_and_has_relations(backends):
    task = TaskInstruction.from_text("Pick up the banana and place it onto the plate")
    scene = perceive(backends, "banana_plate_1", task.text)
    p1, p2 = build_prompt(task, scene, backends.template), build_prompt(task, scene, backends.template)
    assert p1 == p2 and prompt_hash(p1) == prompt_hash(p2)
    assert "banana LeftOf plate" in p1
    assert task.text in p1


def test_prompt_without_relations_uses_sentinel():
    scene = SceneGraph.build("s", [SceneObject("a", "cup", BoundingBox(0, 0, 5, 5))], description="a cup")
    prompt = build_prompt(TaskInstruction.from_text("deliver the cup"), scene)
    assert f"Spatial relations (subject RELATION object):\n{NONE_OBSERVED}" in prompt


def test_parse_plan_response():
    assert parse_plan_response("1. pick up the banana\n2. place the banana onto the plate") == [
        "pick up the banana",
        "place the banana onto the plate",
    ]
    raw = format_plan_response(["grasp the bottle", "pour water from the bottle into the mug"], 2)
    assert parse_plan_response(raw) == ["grasp the bottle", "pour water from the bottle into the mug"]
    assert parse_next_ordinal(raw) == 2


@pytest.mark.parametrize("raw", ["no plan", "1. pick up the banana\n2.   \n", "1. a\n3. b", ""])
def test_malformed_responses(raw):
    with pytest.raises(MalformedPlannerResponse):
        parse_plan_response(raw)


class _Flaky:
    backend_id = "flaky"

    def __init__(self, bad: int):
        self.bad, self.calls = bad, 0

    def complete(self, prompt, task):
        self.calls += 1
        return "sorry" if self.calls <= self.bad else "1. grasp the bottle"


def _scene():
    return SceneGraph.build("s", [SceneObject("b", "bottle", BoundingBox(0, 0, 5, 5))])


def test_decompose_retries_malformed_then_gives_up():
    backend = _Flaky(bad=2)
    plan = decompose(TaskInstruction.from_text("grasp the bottle"), _scene(), backend)
    assert backend.calls == 3 and len(plan.subtasks) == 1
    with pytest.raises(MalformedPlannerResponse):
        decompose(TaskInstruction.from_text("grasp the bottle"), _scene(), _Flaky(bad=10), malformed_retries=2)


def _plan(n=2):
    sig = SkillSignature("grasp", "bottle")
    return TaskPlan(TaskInstruction("t", "x"), "s", [Subtask(i, "grasp the bottle", sig) for i in range(1, n + 1)], "m", "h")


def test_directives_happy_path():
    plan = _plan()
    d = next_directive(plan)
    assert str(d) == "Execute(1)"
    assert str(next_directive(plan, True)) == "Execute(2)"
    assert [s.status for s in plan.subtasks] == [SubtaskStatus.DONE, SubtaskStatus.ACTIVE]
    assert next_directive(plan, True).kind is DirectiveKind.COMPLETE


def test_directive_from_done_pending_state():
    plan = _plan()
    plan.subtasks[0].status = SubtaskStatus.DONE
    assert str(next_directive(plan)) == "Execute(2)"


def test_retry_then_abort():
    plan = _plan()
    next_directive(plan)
    next_directive(plan, True)
    assert str(next_directive(plan, False, retry_limit=1)) == "Retry(2, 1)"
    d = next_directive(plan, False, retry_limit=1)
    assert d.kind is DirectiveKind.ABORT
    assert plan.subtasks[1].status is SubtaskStatus.FAILED
    assert next_directive(plan).kind is DirectiveKind.ABORT


def test_exhausted_retry_count_aborts_immediately():
    plan = _plan()
    plan.subtasks[0].status = SubtaskStatus.DONE
    plan.subtasks[1].status = SubtaskStatus.ACTIVE
    plan.subtasks[1].retries = 1
    assert next_directive(plan, False, retry_limit=1).kind is DirectiveKind.ABORT


def test_inconsistent_states():
    plan = _plan()
    with pytest.raises(InconsistentPlanState):
        next_directive(plan, True)
    plan.subtasks[0].status = SubtaskStatus.ACTIVE
    with pytest.raises(InconsistentPlanState):
        next_directive(plan)
    plan.subtasks[1].status = SubtaskStatus.ACTIVE
    with pytest.raises(InconsistentPlanState):
        next_directive(plan, True)
    plan.subtasks[0].status, plan.subtasks[1].status = SubtaskStatus.PENDING, SubtaskStatus.DONE
    with pytest.raises(InconsistentPlanState):
        next_directive(plan)


def test_plan_dict_roundtrip(backends):
    plan, _ = plan_task(backends, "Pick up the banana and place it onto the plate", "banana_plate_1")
    again = TaskPlan.from_dict(json.loads(json.dumps(plan.to_dict())))
    assert again == plan


# -- http llm ----------------------------------------------------------------


class _Chat(BaseHTTPRequestHandler):
    reply = "PLAN:\n1. grasp the bottle\nNEXT: 1"
    requests: list = []

    def log_message(self, *args):
        pass

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).requests.append(body)
        data = json.dumps({"choices": [{"message": {"role": "assistant", "content": self.reply}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture
def chat_server():
    handler = type("C", (_Chat,), {"requests": []})
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    threading.Thread(target=httpd.serve_forever, daemon=True).start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}/v1/chat/completions", handler
    httpd.shutdown()
    httpd.server_close()


def test_http_llm_plans(chat_server):
    url, handler = chat_server
    llm = HttpLlm(url, model="m1", timeout=2.0)
    plan = decompose(TaskInstruction.from_text("grasp the bottle"), _scene(), llm)
    assert [s.text for s in plan.subtasks] == ["grasp the bottle"]
    assert plan.backend_id == "http-llm:m1"
    sent = handler.requests[0]
    assert sent["model"] == "m1" and sent["temperature"] == 0
    assert "grasp the bottle" in sent["messages"][0]["content"]
    assert llm.confirm_next("prompt", plan) == 1

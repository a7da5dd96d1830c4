from __future__ import annotations

import json

import pytest

from skillforge.abstraction import (
    AtomicSkillDefinition,
    Granularity,
    LlmCanonicalizer,
    SkillSignature,
    abstract,
    canonicalize,
    extract_label_hints,
    make_skill_id,
    project,
)
from skillforge.errors import UnparsablePhrase

M, C, F = Granularity.MEDIUM, Granularity.COARSE, Granularity.FINE


@pytest.mark.parametrize(
    "text, verb, obj, target, mods",
    [
        ("pick up the banana", "pick-up", "banana", None, ()),
        ("Take the banana", "pick-up", "banana", None, ()),
        ("place the banana onto the plate", "place", "banana", "plate", ()),
        ("Align and tilt the bottle towards the cup", "tilt", "bottle", "cup", ("align",)),
        ("grasp the bottle", "grasp", "bottle", None, ()),
        ("grab the bottle", "grasp", "bottle", None, ()),
        ("pour water from the bottle into the mug", "pour", "bottle", "mug", ("water",)),
        ("move the red block", "move", "red block", None, ()),
        ("lift up the bottle", "lift", "bottle", None, ()),
        ("deliver the cup", "deliver", "cup", None, ()),
        ("place the pen into the pen holder", "place", "pen", "pen holder", ()),
    ],
)
def test_canonicalize(text, verb, obj, target, mods):
    assert canonicalize(text) == SkillSignature(verb, obj, target, mods)


@pytest.mark.parametrize("text", ["", "   ", "banana on the plate", "quickly the cup"])
def test_canonicalize_rejects(text):
    with pytest.raises(UnparsablePhrase):
        canonicalize(text)


def test_projection():
    sig = SkillSignature("tilt", "bottle", "cup", ("align",))
    assert project(sig, F) == sig
    assert project(sig, M) == SkillSignature("tilt", "bottle", "cup")
    for g in Granularity:
        assert project(project(sig, g), g) == project(sig, g)


def test_skill_ids_per_granularity():
    sig = SkillSignature("tilt", "bottle", "cup", ("align",))
    assert make_skill_id(sig, M) == "medium/tilt.bottle.cup"
    assert make_skill_id(sig, C) == "coarse/tilt.bottle.cup"
    assert make_skill_id(sig, F) == "fine/tilt.bottle.cup+align"
    assert make_skill_id(SkillSignature("move", "red block"), M) == "medium/move.red-block"


TABLE1_SUBTASKS = [
    "grasp the bottle",
    "pour water from the bottle into the mug",
    "pick up the banana",
    "place the banana onto the plate",
]


def test_table1_subtasks_give_four_medium_skills():
    result = abstract(TABLE1_SUBTASKS, M)
    assert sorted(result.definitions) == [
        "medium/grasp.bottle",
        "medium/pick-up.banana",
        "medium/place.banana.plate",
        "medium/pour.bottle.mug",
    ]
    assert set(result.mapping) == set(TABLE1_SUBTASKS)


@pytest.mark.parametrize("g", list(Granularity))
def test_reabstraction_is_a_fixpoint(g):
    first = abstract(TABLE1_SUBTASKS + ["align and tilt the bottle towards the cup"], g)
    texts = [d.instantiate() for d in first.definitions.values()]
    again = abstract(texts, g, first.definitions.values())
    assert again.new_ids == ()
    assert again.definitions == first.definitions


def test_serve_water_adds_only_deliver():
    existing = abstract(["lift up the bottle", "align and tilt the bottle towards the cup"], M).definitions
    serve = ["lift up the bottle", "align and tilt the bottle towards the cup", "deliver the cup"]
    result = abstract(serve, M, existing.values())
    assert result.new_ids == ("medium/deliver.cup",)
    assert all(result.definitions[k] == v for k, v in existing.items())


def test_fine_keeps_modifier_variants_apart():
    result = abstract(["tilt the bottle towards the cup", "align and tilt the bottle towards the cup"], F)
    assert len(result.new_ids) == 2
    assert len(abstract(["tilt the bottle towards the cup", "align and tilt the bottle towards the cup"], M).new_ids) == 1


def test_coarse_template_has_no_placeholders():
    d = AtomicSkillDefinition.create(canonicalize("place the banana onto the plate"), C)
    assert "{" not in d.text_template
    assert d.instantiate() == d.text_template
    m = AtomicSkillDefinition.create(canonicalize("place the banana onto the plate"), M)
    assert m.text_template == "place the {object} onto the {target}"


def test_definition_validation():
    sig = SkillSignature("tilt", "bottle", "cup", ("align",))
    with pytest.raises(ValueError):
        AtomicSkillDefinition("medium/tilt.bottle.cup", sig, M, "tilt the {object} towards the {target}")
    d = AtomicSkillDefinition.create(sig, M)
    assert AtomicSkillDefinition.from_dict(json.loads(json.dumps(d.to_dict()))) == d
    with pytest.raises(ValueError):
        AtomicSkillDefinition("medium/oops", d.signature, M, d.text_template)


def test_abstract_is_order_independent():
    a = abstract(TABLE1_SUBTASKS, M)
    b = abstract(list(reversed(TABLE1_SUBTASKS)), M)
    assert a.definitions == b.definitions and a.mapping == b.mapping


def test_unparsable_subtask_propagates():
    with pytest.raises(UnparsablePhrase):
        abstract(["pick up the banana", "do a little dance"], M)


def test_llm_canonicalizer_validates():
    good = LlmCanonicalizer(lambda p: '{"verb": "grab", "object": "Bottle", "target": null, "modifiers": []}')
    assert good("whatever") == SkillSignature("grasp", "bottle")
    with pytest.raises(UnparsablePhrase):
        LlmCanonicalizer(lambda p: '{"verb": "juggle", "object": "cup"}')("x")
    with pytest.raises(UnparsablePhrase):
        LlmCanonicalizer(lambda p: "I think it is grasping")("x")


@pytest.mark.parametrize(
    "text, hints",
    [
        ("Pick up the banana and place it onto the plate", ["banana", "plate"]),
        ("Move the red, blue, and green blocks in that order", ["red block", "blue block", "green block"]),
        ("Pick up the pen and place it into the pen holder", ["pen", "pen holder"]),
    ],
)
def test_label_hints(text, hints):
    assert extract_label_hints(text) == hints

"""Subtask phrases -> skill signatures -> atomic skill definitions.

A phrase is parsed with a small lexicon-driven grammar::

    [VERB and]* VERB  [the] [QUALIFIER]* OBJECT  [of CONTENT] [from SOURCE] [PREP TARGET]

Leading chained verbs ("align and tilt ...") and qualifier words become
modifiers. A ``from`` clause names the object actually manipulated, so in
"pour water from the bottle into the mug" the object is the bottle and
"water" is kept as a modifier.
"""

from __future__ import annotations

import enum
import json
import re
import string
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

from .errors import UnparsablePhrase


class Granularity(str, enum.Enum):
    COARSE = "coarse"
    MEDIUM = "medium"
    FINE = "fine"

    @classmethod
    def parse(cls, value: "str | Granularity") -> "Granularity":
        return value if isinstance(value, cls) else cls(str(value).strip().lower())


DEFAULT_GRANULARITY = Granularity.MEDIUM


@dataclass(frozen=True)
class SkillSignature:
    verb: str
    object_slot: str
    target_slot: str | None = None
    modifiers: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.verb:
            raise ValueError("signature verb must be non-empty")
        if not self.object_slot:
            raise ValueError("signature object_slot must be non-empty")
        object.__setattr__(self, "modifiers", tuple(sorted(set(self.modifiers))))

    def to_dict(self) -> dict[str, Any]:
        return {
            "verb": self.verb,
            "object": self.object_slot,
            "target": self.target_slot,
            "modifiers": list(self.modifiers),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SkillSignature":
        return cls(
            verb=data["verb"],
            object_slot=data["object"],
            target_slot=data.get("target"),
            modifiers=tuple(data.get("modifiers", ())),
        )

    def __str__(self) -> str:
        out = f"{self.verb}({self.object_slot}"
        if self.target_slot:
            out += f" -> {self.target_slot}"
        if self.modifiers:
            out += f" [{', '.join(self.modifiers)}]"
        return out + ")"


# -- lexicon -----------------------------------------------------------------


@dataclass(frozen=True)
class Lexicon:
    synonyms: Mapping[str, str]
    surface: Mapping[str, str]
    default_preposition: Mapping[str, str]
    target_prepositions: tuple[str, ...]
    determiners: frozenset[str]
    qualifiers: frozenset[str]
    nouns: tuple[str, ...]
    _max_verb_len: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_max_verb_len", max(len(k.split()) for k in self.synonyms))
        bad = set(self.default_preposition.values()) - set(self.target_prepositions)
        if bad:
            raise ValueError(f"default prepositions must be target prepositions: {sorted(bad)}")

    @property
    def verbs(self) -> frozenset[str]:
        return frozenset(self.synonyms.values())

    def surface_form(self, verb: str) -> str:
        return self.surface.get(verb, verb)

    def match_verb(self, tokens: Sequence[str], i: int) -> tuple[str, int] | None:
        """Longest synonym starting at ``tokens[i]``: (canonical verb, tokens consumed)."""
        for n in range(min(self._max_verb_len, len(tokens) - i), 0, -1):
            canonical = self.synonyms.get(" ".join(tokens[i : i + n]))
            if canonical is not None:
                return canonical, n
        return None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Lexicon":
        return cls(
            synonyms={k.lower(): v for k, v in data["synonyms"].items()},
            surface=dict(data.get("surface", {})),
            default_preposition=dict(data.get("default_preposition", {})),
            target_prepositions=tuple(data["target_prepositions"]),
            determiners=frozenset(data.get("determiners", ())),
            qualifiers=frozenset(data.get("qualifiers", ())),
            nouns=tuple(data.get("nouns", ())),
        )


def load_lexicon(path: str | Path | None = None) -> Lexicon:
    if path is None:
        return default_lexicon()
    with open(path, encoding="utf-8") as fh:
        return Lexicon.from_dict(json.load(fh))


@lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    text = resources.files("skillforge").joinpath("data/lexicon/verbs.json").read_text("utf-8")
    return Lexicon.from_dict(json.loads(text))


# -- canonicalization --------------------------------------------------------

_PUNCT = re.compile(f"[{re.escape(string.punctuation.replace('-', ''))}]")
_SPECIAL_PREPS = ("from", "of", "with")


def _tokenize(text: str) -> list[str]:
    return _PUNCT.sub(" ", text.lower()).split()


def _split_on_prepositions(tokens: list[str], preps: Sequence[str]) -> list[tuple[str | None, list[str]]]:
    multi = sorted((p.split() for p in preps), key=len, reverse=True)
    segments: list[tuple[str | None, list[str]]] = [(None, [])]
    i = 0
    while i < len(tokens):
        for p in multi:
            if tokens[i : i + len(p)] == p:
                segments.append((" ".join(p), []))
                i += len(p)
                break
        else:
            segments[-1][1].append(tokens[i])
            i += 1
    return segments


def canonicalize(text: str, lexicon: Lexicon | None = None) -> SkillSignature:
    lex = lexicon or default_lexicon()
    tokens = _tokenize(text)
    if not tokens:
        raise UnparsablePhrase("empty phrase")
    verbs: list[str] = []
    i = 0
    while True:
        hit = lex.match_verb(tokens, i)
        if hit is None:
            break
        verbs.append(hit[0])
        i += hit[1]
        if i < len(tokens) - 1 and tokens[i] == "and" and lex.match_verb(tokens, i + 1):
            i += 1
            continue
        break
    if not verbs:
        raise UnparsablePhrase(f"no known verb at the start of {text!r}")
    verb, modifiers = verbs[-1], set(verbs[:-1])

    def noun_phrase(words: list[str]) -> str:
        kept = []
        for w in words:
            if w in lex.determiners:
                continue
            if w in lex.qualifiers:
                modifiers.add(w)
            else:
                kept.append(w)
        return " ".join(kept)

    segments = _split_on_prepositions(tokens[i:], [*lex.target_prepositions, *_SPECIAL_PREPS])
    direct = noun_phrase(segments[0][1])
    source = target = None
    for prep, words in segments[1:]:
        np_ = noun_phrase(words)
        if not np_:
            continue
        if prep in ("of", "with"):
            modifiers.update(np_.split())
        elif prep == "from" and source is None:
            source = np_
        elif prep != "from" and target is None:
            target = np_
        else:
            modifiers.update(np_.split())
    if source is not None:
        if direct:
            modifiers.update(direct.split())
        direct = source
    if not direct:
        raise UnparsablePhrase(f"no object found in {text!r}")
    return SkillSignature(verb, direct, target, tuple(modifiers))


class Canonicalizer(Protocol):
    def __call__(self, text: str) -> SkillSignature: ...


class LexiconCanonicalizer:
    backend_id = "lexicon"

    def __init__(self, lexicon: Lexicon | None = None):
        self.lexicon = lexicon or default_lexicon()

    def __call__(self, text: str) -> SkillSignature:
        return canonicalize(text, self.lexicon)


LLM_ABSTRACTION_PROMPT = """\
Convert the robot subtask below into a JSON object with keys
"verb", "object", "target" (or null) and "modifiers" (list of strings).
Use one of these canonical verbs: {verbs}.
Subtask: {text}
JSON:"""


class LlmCanonicalizer:
    """Delegates parsing to a text-completion callable and validates the answer.

    The verb is folded through the lexicon synonyms; anything outside the
    canonical verb set is rejected rather than guessed.
    """

    backend_id = "llm"

    def __init__(self, complete: Callable[[str], str], lexicon: Lexicon | None = None):
        self.complete = complete
        self.lexicon = lexicon or default_lexicon()

    def __call__(self, text: str) -> SkillSignature:
        prompt = LLM_ABSTRACTION_PROMPT.format(verbs=", ".join(sorted(self.lexicon.verbs)), text=text)
        raw = self.complete(prompt)
        try:
            data = json.loads(raw[raw.index("{") : raw.rindex("}") + 1])
            verb = str(data["verb"]).strip().lower()
            obj = str(data["object"]).strip().lower()
        except (ValueError, KeyError, TypeError) as exc:
            raise UnparsablePhrase(f"LLM answer for {text!r} is not a signature: {raw!r}") from exc
        verb = self.lexicon.synonyms.get(verb, verb)
        if verb not in self.lexicon.verbs:
            raise UnparsablePhrase(f"LLM proposed unknown verb {verb!r} for {text!r}")
        if not obj:
            raise UnparsablePhrase(f"LLM proposed no object for {text!r}")
        target = data.get("target")
        mods = data.get("modifiers") or []
        return SkillSignature(
            verb,
            obj,
            str(target).strip().lower() or None if target else None,
            tuple(str(m).strip().lower() for m in mods if str(m).strip()),
        )


# -- projection and definitions ----------------------------------------------


def project(sig: SkillSignature, g: Granularity) -> SkillSignature:
    if g is Granularity.FINE:
        return sig
    return SkillSignature(sig.verb, sig.object_slot, sig.target_slot, ())


def _slug(text: str) -> str:
    return re.sub(r"\s+", "-", text.strip().lower())


def make_skill_id(sig: SkillSignature, g: Granularity) -> str:
    p = project(sig, g)
    parts = [_slug(p.verb), _slug(p.object_slot)]
    if p.target_slot:
        parts.append(_slug(p.target_slot))
    sid = f"{g.value}/" + ".".join(parts)
    if p.modifiers:
        sid += "+" + "+".join(_slug(m) for m in p.modifiers)
    return sid


_PLACEHOLDER = re.compile(r"\{(\w+)\}")


def make_template(sig: SkillSignature, g: Granularity, lexicon: Lexicon | None = None) -> str:
    """Human-readable instruction template for a projected signature.

    Medium and Fine templates keep ``{object}``/``{target}`` placeholders; a
    Coarse template is the whole subtask written out, with no placeholders.
    Rendering a template and canonicalizing the result gives back ``sig``.
    """
    lex = lexicon or default_lexicon()
    p = project(sig, g)
    verb_mods = [m for m in p.modifiers if m in lex.verbs]
    quals = [m for m in p.modifiers if m not in lex.verbs and m in lex.qualifiers]
    content = [m for m in p.modifiers if m not in lex.verbs and m not in lex.qualifiers]
    words = [f"{lex.surface_form(v)} and" for v in verb_mods]
    words += [lex.surface_form(p.verb), "the", *quals, "{object}"]
    words += [f"of {c}" for c in content]
    if p.target_slot:
        words += [lex.default_preposition.get(p.verb, "to"), "the", "{target}"]
    template = " ".join(words)
    if g is Granularity.COARSE:
        template = template.format(object=p.object_slot, target=p.target_slot)
    return template


@dataclass(frozen=True)
class AtomicSkillDefinition:
    skill_id: str
    signature: SkillSignature
    granularity: Granularity
    text_template: str
    created_from: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "granularity", Granularity.parse(self.granularity))
        object.__setattr__(self, "created_from", tuple(sorted(set(self.created_from))))
        if self.signature != project(self.signature, self.granularity):
            raise ValueError(f"{self.skill_id}: signature is not projected to {self.granularity.value}")
        if self.skill_id != make_skill_id(self.signature, self.granularity):
            raise ValueError(f"skill_id {self.skill_id!r} does not match its signature")
        expected = set()
        if self.granularity is not Granularity.COARSE:
            expected = {"object"} | ({"target"} if self.signature.target_slot else set())
        found = set(_PLACEHOLDER.findall(self.text_template))
        if found != expected:
            raise ValueError(f"{self.skill_id}: template placeholders {sorted(found)} != {sorted(expected)}")

    @classmethod
    def create(
        cls,
        sig: SkillSignature,
        g: Granularity,
        created_from: Iterable[str] = (),
        lexicon: Lexicon | None = None,
    ) -> "AtomicSkillDefinition":
        p = project(sig, g)
        return cls(make_skill_id(p, g), p, g, make_template(p, g, lexicon), tuple(created_from))

    def instantiate(self) -> str:
        """The template filled with this definition's own slots."""
        return self.text_template.format(
            object=self.signature.object_slot, target=self.signature.target_slot
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "skill_id": self.skill_id,
            "signature": self.signature.to_dict(),
            "granularity": self.granularity.value,
            "text_template": self.text_template,
            "created_from": list(self.created_from),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AtomicSkillDefinition":
        return cls(
            skill_id=data["skill_id"],
            signature=SkillSignature.from_dict(data["signature"]),
            granularity=Granularity.parse(data["granularity"]),
            text_template=data["text_template"],
            created_from=tuple(data.get("created_from", ())),
        )


@dataclass(frozen=True)
class AbstractionResult:
    definitions: dict[str, AtomicSkillDefinition]
    mapping: dict[str, str]
    new_ids: tuple[str, ...]


def _subtask_text_and_signature(item: Any, canon: Callable[[str], SkillSignature]) -> tuple[str, SkillSignature]:
    if isinstance(item, str):
        return item, canon(item)
    sig = getattr(item, "signature", None)
    return item.text, sig if sig is not None else canon(item.text)


def find_definition(
    definitions: Iterable[AtomicSkillDefinition], sig: SkillSignature, g: Granularity
) -> AtomicSkillDefinition | None:
    target = project(sig, g)
    hits = [d for d in definitions if project(d.signature, g) == target]
    return min(hits, key=lambda d: d.skill_id) if hits else None


def abstract(
    subtasks: Iterable[Any],
    g: Granularity,
    existing: Iterable[AtomicSkillDefinition] | Mapping[str, AtomicSkillDefinition] = (),
    canonicalizer: Callable[[str], SkillSignature] | None = None,
    lexicon: Lexicon | None = None,
) -> AbstractionResult:
    """Map subtasks onto definitions, creating only the ones that are missing.

    ``subtasks`` may be phrases or objects with ``text``/``signature``
    attributes. Existing definitions are never altered. The result does not
    depend on the order of ``subtasks``.
    """
    g = Granularity.parse(g)
    canon = canonicalizer or LexiconCanonicalizer(lexicon)
    current = dict(existing) if isinstance(existing, Mapping) else {d.skill_id: d for d in existing}
    parsed = [_subtask_text_and_signature(s, canon) for s in subtasks]

    mapping: dict[str, str] = {}
    pending: dict[SkillSignature, set[str]] = {}
    for text, sig in parsed:
        hit = find_definition(current.values(), sig, g)
        if hit is not None:
            mapping[text] = hit.skill_id
        else:
            pending.setdefault(project(sig, g), set()).add(text)

    new_ids = []
    for proj, texts in sorted(pending.items(), key=lambda kv: make_skill_id(kv[0], g)):
        definition = AtomicSkillDefinition.create(proj, g, texts, lexicon)
        current[definition.skill_id] = definition
        new_ids.append(definition.skill_id)
        for text in texts:
            mapping[text] = definition.skill_id
    return AbstractionResult(dict(sorted(current.items())), mapping, tuple(new_ids))


def extract_label_hints(text: str, lexicon: Lexicon | None = None) -> list[str]:
    """Lexicon nouns mentioned in an instruction, in order of first mention.

    Plurals are folded ("blocks" -> "block") and a coordinated adjective list
    before a plural noun is distributed ("red, blue, and green blocks" ->
    "red block", "blue block", "green block") when those compounds are known.
    """
    lex = lexicon or default_lexicon()
    nouns = set(lex.nouns)
    low = _PUNCT.sub(lambda m: " , " if m.group() == "," else " ", text.lower())
    found: list[str] = []

    coord = re.compile(r"((?:\w+\s*,\s*)*\w+\s*,?\s*and\s+\w+)\s+(\w+?)s\b")
    for m in coord.finditer(low):
        head = m.group(2)
        for adj in re.split(r"\s*,\s*(?:and\s+)?|\s+and\s+", m.group(1)):
            compound = f"{adj.strip()} {head}"
            if compound in nouns and compound not in found:
                found.append(compound)

    tokens = [t for t in low.split() if t != ","]
    folded = [t[:-1] if t.endswith("s") and t[:-1] in nouns | {n.split()[-1] for n in nouns} else t for t in tokens]
    multi = sorted((n.split() for n in nouns), key=len, reverse=True)
    i = 0
    while i < len(folded):
        for n in multi:
            if folded[i : i + len(n)] == n:
                noun = " ".join(n)
                if noun not in found and not any(f.endswith(" " + noun) for f in found):
                    found.append(noun)
                i += len(n)
                break
        else:
            i += 1
    return found

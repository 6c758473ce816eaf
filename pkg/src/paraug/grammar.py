"""Skill grammars (slot catalogs + intent templates) and utterance sampling."""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .textcore import EDGE_PUNCT, tokenize

_PLACEHOLDER = re.compile(r"^\{([A-Za-z_][A-Za-z0-9_]*)\}$")
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")


class GrammarError(ValueError):
    pass


@dataclass(frozen=True)
class SlotSpan:
    slot_type: str
    start: int
    end: int
    value: tuple[str, ...]


@dataclass(frozen=True)
class AnnotatedUtterance:
    skill_id: str
    intent: str
    tokens: tuple[str, ...]
    slots: tuple[SlotSpan, ...] = ()

    def __post_init__(self):
        validate_utterance(self)

    @property
    def slot_types(self) -> tuple[str, ...]:
        return tuple(s.slot_type for s in self.slots)

    def text(self) -> str:
        return " ".join(self.tokens)

    def to_dict(self) -> dict:
        return {
            "skill": self.skill_id,
            "intent": self.intent,
            "tokens": list(self.tokens),
            "slots": [
                {"type": s.slot_type, "start": s.start, "end": s.end} for s in self.slots
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> AnnotatedUtterance:
        tokens = tuple(d["tokens"])
        slots = tuple(
            SlotSpan(s["type"], s["start"], s["end"], tokens[s["start"] : s["end"]])
            for s in d.get("slots", ())
        )
        return cls(d["skill"], d["intent"], tokens, slots)


def validate_utterance(u: AnnotatedUtterance) -> None:
    if not u.tokens:
        raise ValueError("utterance has no tokens")
    prev_end = 0
    for s in u.slots:
        if not (0 <= s.start < s.end <= len(u.tokens)):
            raise ValueError(f"slot span {s.start}:{s.end} out of range")
        if s.start < prev_end:
            raise ValueError("slot spans overlap or are out of order")
        if tuple(u.tokens[s.start : s.end]) != tuple(s.value):
            raise ValueError("slot value does not match tokens")
        prev_end = s.end


@dataclass(frozen=True)
class Template:
    # each element is a literal token or ("slot", slot_type)
    elements: tuple
    line: int = 0

    def placeholders(self) -> list[str]:
        return [e[1] for e in self.elements if isinstance(e, tuple)]


@dataclass
class SkillGrammar:
    skill_id: str
    catalogs: dict[str, list[tuple[str, ...]]] = field(default_factory=dict)
    intents: dict[str, list[Template]] = field(default_factory=dict)

    def templates(self) -> list[tuple[str, Template]]:
        return [(intent, t) for intent, ts in self.intents.items() for t in ts]


def parse_template(text: str, line: int = 0) -> Template:
    elements: list = []
    for piece in text.split():
        stripped = piece.strip(EDGE_PUNCT)
        m = _PLACEHOLDER.match(stripped)
        if m:
            elements.append(("slot", m.group(1)))
        else:
            elements.extend(tokenize(piece))
    if not elements:
        raise GrammarError(f"line {line}: empty template")
    return Template(tuple(elements), line)


def parse_grammar(path: str | Path) -> SkillGrammar:
    """Parse a grammar file.

    Format::

        skill <id>
        catalog <slot_type>:
        one value per line
        intent <label>:
        one template per line, {slot_type} placeholders

    ``#`` starts a comment.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        return parse_grammar_text(f.read(), source=str(path))


def parse_grammar_text(text: str, source: str = "<string>") -> SkillGrammar:
    skill_id = None
    catalogs: dict[str, list[tuple[str, ...]]] = {}
    intents: dict[str, list[Template]] = {}
    section = None  # ("catalog" | "intent", name)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        where = f"{source}:{lineno}"
        if head == "skill" and rest and not rest.endswith(":"):
            if skill_id is not None:
                raise GrammarError(f"{where}: skill declared twice")
            skill_id = rest.strip()
            section = None
        elif head in ("catalog", "intent") and line.endswith(":"):
            name = rest[:-1].strip()
            if not _IDENT.match(name):
                raise GrammarError(f"{where}: bad {head} name {name!r}")
            if head == "catalog":
                if name in catalogs:
                    raise GrammarError(f"{where}: duplicate catalog {name!r}")
                catalogs[name] = []
            else:
                if name in intents:
                    raise GrammarError(f"{where}: duplicate intent {name!r}")
                intents[name] = []
            section = (head, name)
        elif section is None:
            raise GrammarError(f"{where}: line outside any section")
        elif section[0] == "catalog":
            value = tuple(tokenize(line))
            if value and value not in catalogs[section[1]]:
                catalogs[section[1]].append(value)
        else:
            intents[section[1]].append(parse_template(line, lineno))

    if skill_id is None:
        raise GrammarError(f"{source}: missing 'skill <id>' line")
    for name, values in catalogs.items():
        if not values:
            raise GrammarError(f"{source}: catalog {name!r} is empty")
    for intent, templates in intents.items():
        if not templates:
            raise GrammarError(f"{source}: intent {intent!r} has no templates")
        for t in templates:
            for slot_type in t.placeholders():
                if slot_type not in catalogs:
                    raise GrammarError(
                        f"{source}:{t.line}: template in intent {intent!r} "
                        f"references undeclared slot type {slot_type!r}"
                    )
    return SkillGrammar(skill_id, catalogs, intents)


def fill_template(
    grammar: SkillGrammar, intent: str, template: Template, values: list[tuple[str, ...]]
) -> AnnotatedUtterance:
    tokens: list[str] = []
    slots = []
    it = iter(values)
    for e in template.elements:
        if isinstance(e, tuple):
            value = next(it)
            start = len(tokens)
            tokens.extend(value)
            slots.append(SlotSpan(e[1], start, len(tokens), tuple(value)))
        else:
            tokens.append(e)
    return AnnotatedUtterance(grammar.skill_id, intent, tuple(tokens), tuple(slots))


def _decode_filling(index: int, sizes: list[int]) -> list[int]:
    # mixed radix, first placeholder most significant
    digits = []
    for size in reversed(sizes):
        index, d = divmod(index, size)
        digits.append(d)
    return digits[::-1]


def _filling_order(total: int, rng: np.random.Generator):
    if total <= 100_000:
        yield from (int(i) for i in rng.permutation(total))
        return
    seen: set[int] = set()
    while len(seen) < total:
        i = int(rng.integers(total))
        if i not in seen:
            seen.add(i)
            yield i


def sample_utterances(
    grammar: SkillGrammar, per_template: int, seed: int
) -> list[AnnotatedUtterance]:
    """Draw up to ``per_template`` distinct fillings of every template.

    Fillings are drawn uniformly without replacement; the result depends only
    on (grammar, per_template, seed).
    """
    if per_template < 1:
        raise ValueError("per_template must be >= 1")
    rng = np.random.default_rng(seed)
    out: list[AnnotatedUtterance] = []
    for intent, template in grammar.templates():
        slot_types = template.placeholders()
        sizes = [len(grammar.catalogs[s]) for s in slot_types]
        total = math.prod(sizes)
        seen: set[tuple[str, ...]] = set()
        for index in _filling_order(total, rng):
            digits = _decode_filling(index, sizes)
            values = [grammar.catalogs[s][d] for s, d in zip(slot_types, digits)]
            u = fill_template(grammar, intent, template, values)
            if u.tokens in seen:
                continue
            seen.add(u.tokens)
            out.append(u)
            if len(seen) == per_template:
                break
    return out


def split_templates(
    grammar: SkillGrammar, train_fraction: float, seed: int
) -> tuple[SkillGrammar, SkillGrammar]:
    """Split each intent's templates into a training and a held-out grammar.

    Every intent keeps at least one template on each side when it has two or more.
    """
    rng = np.random.default_rng(seed)
    train: dict[str, list[Template]] = {}
    held: dict[str, list[Template]] = {}
    for intent, templates in grammar.intents.items():
        n = len(templates)
        k = max(1, round(train_fraction * n))
        if n > 1:
            k = min(k, n - 1)
        order = rng.permutation(n)
        chosen = set(int(i) for i in order[:k])
        train[intent] = [t for i, t in enumerate(templates) if i in chosen]
        rest = [t for i, t in enumerate(templates) if i not in chosen]
        if rest:
            held[intent] = rest
    return (
        SkillGrammar(grammar.skill_id, grammar.catalogs, train),
        SkillGrammar(grammar.skill_id, grammar.catalogs, held),
    )


def write_utterances(data: Iterable[AnnotatedUtterance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for u in data:
            f.write(json.dumps(u.to_dict(), sort_keys=True) + "\n")


def read_utterances(path: str | Path) -> list[AnnotatedUtterance]:
    with open(path, encoding="utf-8") as f:
        return [AnnotatedUtterance.from_dict(json.loads(line)) for line in f if line.strip()]

"""Slot copying as pre- and post-processing around the paraphrase model.

On the input side every slot value is replaced by a per-type surrogate
(the most frequent non-stop-word value of that type).  On the output side
slot values become indexed slot tokens ``<Type_k>``, where ``k`` counts
occurrences of ``Type`` in the source.  After decoding, slot tokens are
replaced by the original input values; candidates whose slot tokens do not
match the input slots one-to-one are rejected.
"""
from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .grammar import AnnotatedUtterance, SlotSpan
from .mining import ParaphrasePair

_SLOT_TOKEN = re.compile(r"^<([A-Za-z_][A-Za-z0-9_]*)_(\d+)>$")

Binding = tuple[str, tuple[str, ...]]

MISSING_SLOT = "missing-slot"
EXTRA_SLOT = "extra-slot"
WRONG_TYPE = "wrong-type"
DUPLICATE_INDEX = "duplicate-index"


def slot_token(slot_type: str, k: int) -> str:
    return f"<{slot_type}_{k}>"


def parse_slot_token(token: str) -> tuple[str, int] | None:
    m = _SLOT_TOKEN.match(token)
    if m is None:
        return None
    return m.group(1), int(m.group(2))


class SlotRejection(Exception):
    """Raised when generated output cannot be mapped back onto the input slots."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


class NoSlotsError(ValueError):
    pass


SurrogateMap = dict[str, tuple[str, ...]]


def build_surrogates(
    data: Iterable[AnnotatedUtterance], stop_words: frozenset[str] | set[str]
) -> SurrogateMap:
    counts: dict[str, Counter] = defaultdict(Counter)
    for u in data:
        for s in u.slots:
            counts[s.slot_type][s.value] += 1
    if not counts:
        raise ValueError("no slot occurrences to build surrogates from")

    def best(counter: Counter) -> tuple[str, ...]:
        return min(counter, key=lambda v: (-counter[v], " ".join(v)))

    surrogates = {}
    for slot_type in sorted(counts):
        counter = counts[slot_type]
        content = Counter(
            {v: c for v, c in counter.items() if not all(t in stop_words for t in v)}
        )
        surrogates[slot_type] = best(content or counter)
    return surrogates


def save_surrogates(surrogates: SurrogateMap, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump({k: list(v) for k, v in sorted(surrogates.items())}, f, indent=1)
        f.write("\n")


def load_surrogates(path: str | Path) -> SurrogateMap:
    with open(path, encoding="utf-8") as f:
        return {k: tuple(v) for k, v in json.load(f).items()}


@dataclass(frozen=True)
class AbstractedPair:
    source_tokens: tuple[str, ...]
    target_tokens: tuple[str, ...]
    bindings: tuple[Binding, ...]


def _replace_spans(tokens: Sequence[str], spans: Sequence[SlotSpan], fills: Sequence[Sequence[str]]):
    out: list[str] = []
    pos = 0
    for span, fill in zip(spans, fills):
        out.extend(tokens[pos : span.start])
        out.extend(fill)
        pos = span.end
    out.extend(tokens[pos:])
    return tuple(out)


def _occurrence_indices(slots: Sequence[SlotSpan]) -> list[int]:
    seen: Counter = Counter()
    idx = []
    for s in slots:
        seen[s.slot_type] += 1
        idx.append(seen[s.slot_type])
    return idx


def abstract_input(
    u: AnnotatedUtterance, surrogates: SurrogateMap
) -> tuple[tuple[str, ...], tuple[Binding, ...]]:
    """Generation-time source: slot values replaced by surrogates."""
    if not u.slots:
        raise NoSlotsError(f"utterance has no slots: {u.text()!r}")
    fills = [surrogates.get(s.slot_type, s.value) for s in u.slots]
    bindings = tuple((s.slot_type, tuple(s.value)) for s in u.slots)
    return _replace_spans(u.tokens, u.slots, fills), bindings


def match_target_slots(source: AnnotatedUtterance, target: AnnotatedUtterance) -> list[int]:
    """For each target slot, the index of the source slot it binds to.

    Same-type slots are matched by value equality first, then by order of
    appearance.
    """
    used = [False] * len(source.slots)
    match: list[int | None] = [None] * len(target.slots)
    for j, t in enumerate(target.slots):
        for i, s in enumerate(source.slots):
            if not used[i] and s.slot_type == t.slot_type and s.value == t.value:
                used[i] = True
                match[j] = i
                break
    for j, t in enumerate(target.slots):
        if match[j] is not None:
            continue
        for i, s in enumerate(source.slots):
            if not used[i] and s.slot_type == t.slot_type:
                used[i] = True
                match[j] = i
                break
        else:
            raise ValueError("target slot has no counterpart in the source")
    return match  # type: ignore[return-value]


def abstract_pair(pair: ParaphrasePair, surrogates: SurrogateMap) -> AbstractedPair:
    source_tokens, bindings = abstract_input(pair.source, surrogates)
    occ = _occurrence_indices(pair.source.slots)
    match = match_target_slots(pair.source, pair.target)
    fills = [
        (slot_token(pair.source.slots[i].slot_type, occ[i]),) for i in match
    ]
    target_tokens = _replace_spans(pair.target.tokens, pair.target.slots, fills)
    return AbstractedPair(source_tokens, target_tokens, bindings)


def abstract_target(u: AnnotatedUtterance) -> tuple[str, ...]:
    """``u`` with its own slots replaced by indexed slot tokens."""
    occ = _occurrence_indices(u.slots)
    fills = [(slot_token(s.slot_type, k),) for s, k in zip(u.slots, occ)]
    return _replace_spans(u.tokens, u.slots, fills)


def restore_slots(
    generated: Sequence[str], bindings: Sequence[Binding]
) -> tuple[tuple[str, ...], tuple[SlotSpan, ...]]:
    """Replace slot tokens by the bound input values.

    Raises :class:`SlotRejection` unless every binding's slot token occurs
    exactly once and no other slot token occurs.
    """
    by_type: dict[str, list[tuple[str, ...]]] = defaultdict(list)
    for slot_type, value in bindings:
        by_type[slot_type].append(tuple(value))

    tokens: list[str] = []
    spans: list[SlotSpan] = []
    used: set[tuple[str, int]] = set()
    for tok in generated:
        parsed = parse_slot_token(tok)
        if parsed is None:
            tokens.append(tok)
            continue
        slot_type, k = parsed
        if slot_type not in by_type:
            raise SlotRejection(WRONG_TYPE, tok)
        if not 1 <= k <= len(by_type[slot_type]):
            raise SlotRejection(EXTRA_SLOT, tok)
        if parsed in used:
            raise SlotRejection(DUPLICATE_INDEX, tok)
        used.add(parsed)
        value = by_type[slot_type][k - 1]
        spans.append(SlotSpan(slot_type, len(tokens), len(tokens) + len(value), value))
        tokens.extend(value)
    if len(used) != len(bindings):
        raise SlotRejection(MISSING_SLOT)
    if not tokens:
        raise SlotRejection(MISSING_SLOT, "empty output")
    return tuple(tokens), tuple(spans)


def restore_by_value(
    generated: Sequence[str], bindings: Sequence[Binding]
) -> tuple[tuple[str, ...], tuple[SlotSpan, ...]]:
    """Annotate raw output (no slot tokens) by locating the input slot values.

    Each distinct value must occur exactly as often as it is bound; spans are
    assigned left to right and may not overlap.
    """
    tokens = tuple(generated)
    if not tokens:
        raise SlotRejection(MISSING_SLOT, "empty output")
    wanted = Counter((t, tuple(v)) for t, v in bindings)
    values = sorted({v for _, v in wanted}, key=lambda v: (-len(v), v))
    taken = [False] * len(tokens)
    found: list[tuple[int, tuple[str, ...]]] = []
    for v in values:
        n = len(v)
        hits = []
        i = 0
        while i + n <= len(tokens):
            if tokens[i : i + n] == v and not any(taken[i : i + n]):
                hits.append(i)
                i += n
            else:
                i += 1
        need = sum(c for (_, val), c in wanted.items() if val == v)
        if len(hits) < need:
            raise SlotRejection(MISSING_SLOT, " ".join(v))
        if len(hits) > need:
            raise SlotRejection(EXTRA_SLOT, " ".join(v))
        for i in hits:
            taken[i : i + n] = [True] * n
            found.append((i, v))
    found.sort()
    # assign types in input order for each value
    types_for: dict[tuple[str, ...], list[str]] = defaultdict(list)
    for t, v in bindings:
        types_for[tuple(v)].append(t)
    spans = []
    for i, v in found:
        spans.append(SlotSpan(types_for[v].pop(0), i, i + len(v), v))
    return tokens, tuple(spans)

"""Paraphrase-pair mining from annotated utterances.

Utterances sharing skill, intent and slot-type multiset are clustered when
they share more than half of the longer utterance's unique words (slot
spans count as a single slot-type symbol).  Ordered pairs within each
cluster form the paraphrase corpus.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .grammar import AnnotatedUtterance


def slot_symbol(slot_type: str) -> str:
    return f"<{slot_type}>"


def collapse_slots(u: AnnotatedUtterance) -> list[str]:
    """Tokens with each slot span replaced by its slot-type symbol."""
    out: list[str] = []
    pos = 0
    for s in u.slots:
        out.extend(u.tokens[pos : s.start])
        out.append(slot_symbol(s.slot_type))
        pos = s.end
    out.extend(u.tokens[pos:])
    return out


def group_key(u: AnnotatedUtterance) -> tuple:
    return (u.skill_id, u.intent, tuple(sorted(u.slot_types)))


def overlap_ok(u1: AnnotatedUtterance, u2: AnnotatedUtterance) -> bool:
    a, b = set(collapse_slots(u1)), set(collapse_slots(u2))
    return len(a & b) > 0.5 * max(len(a), len(b))


@dataclass
class ParaphraseGroup:
    key: tuple
    members: list[AnnotatedUtterance]


@dataclass(frozen=True)
class ParaphrasePair:
    source: AnnotatedUtterance
    target: AnnotatedUtterance


def group_paraphrases(data: Iterable[AnnotatedUtterance]) -> list[ParaphraseGroup]:
    """Greedy first-fit clustering within each (skill, intent, slot multiset) key.

    Slotless utterances are ignored and exact duplicates within a key are
    kept once. Singleton groups are dropped.
    """
    partitions: dict[tuple, list[AnnotatedUtterance]] = {}
    for u in data:
        if not u.slots:
            continue
        members = partitions.setdefault(group_key(u), [])
        if all(m.tokens != u.tokens for m in members):
            members.append(u)

    groups: list[ParaphraseGroup] = []
    for key, utts in partitions.items():
        clusters: list[list[AnnotatedUtterance]] = []
        for u in utts:
            for c in clusters:
                if all(overlap_ok(m, u) for m in c):
                    c.append(u)
                    break
            else:
                clusters.append([u])
        groups.extend(ParaphraseGroup(key, c) for c in clusters if len(c) > 1)
    return groups


def emit_pairs(groups: Iterable[ParaphraseGroup]) -> list[ParaphrasePair]:
    pairs = []
    for g in groups:
        for i, x in enumerate(g.members):
            for j, y in enumerate(g.members):
                if i != j:
                    pairs.append(ParaphrasePair(x, y))
    return pairs


def write_pairs(pairs: Iterable[ParaphrasePair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            rec = {"source": p.source.to_dict(), "target": p.target.to_dict()}
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def read_pairs(path: str | Path) -> list[ParaphrasePair]:
    pairs = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                pairs.append(
                    ParaphrasePair(
                        AnnotatedUtterance.from_dict(rec["source"]),
                        AnnotatedUtterance.from_dict(rec["target"]),
                    )
                )
    return pairs

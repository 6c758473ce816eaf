"""Intent/slot error rates, coverage scores and relative change."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .grammar import AnnotatedUtterance
from .mining import collapse_slots

Slot = tuple  # (slot_type, value tokens)


@dataclass
class SemerCounts:
    S: int = 0
    I: int = 0
    D: int = 0
    C: int = 0

    def __add__(self, other: SemerCounts) -> SemerCounts:
        return SemerCounts(self.S + other.S, self.I + other.I, self.D + other.D, self.C + other.C)


@dataclass(frozen=True)
class Prediction:
    """Reference and hypothesis intent plus slot lists for one utterance."""

    ref_intent: str
    ref_slots: tuple
    hyp_intent: str
    hyp_slots: tuple


def _slot_key(slot: Slot, type_only: bool):
    return slot[0] if type_only else (slot[0], tuple(slot[1]))


def align_slots(ref: Sequence[Slot], hyp: Sequence[Slot], type_only: bool = False) -> tuple[int, int, int, int]:
    """Minimum-edit alignment of slot lists: ``(S, I, D, C)``.

    Unit costs; a slot pair matches when type and value agree.  Among
    minimum-cost alignments the one with most matches wins; further ties
    prefer the diagonal move first.
    """
    r = [_slot_key(s, type_only) for s in ref]
    h = [_slot_key(s, type_only) for s in hyp]
    n, m = len(r), len(h)
    # cost[i][j] = (edits, -matches) for r[i:], h[j:]
    INF = (10**9, 0)
    cost = [[INF] * (m + 1) for _ in range(n + 1)]
    move = [[None] * (m + 1) for _ in range(n + 1)]
    cost[n][m] = (0, 0)
    for i in range(n, -1, -1):
        for j in range(m, -1, -1):
            if i == n and j == m:
                continue
            options = []
            if i < n and j < m:
                e, neg = cost[i + 1][j + 1]
                if r[i] == h[j]:
                    options.append(((e, neg - 1), "C"))
                else:
                    options.append(((e + 1, neg), "S"))
            if i < n:
                e, neg = cost[i + 1][j]
                options.append(((e + 1, neg), "D"))
            if j < m:
                e, neg = cost[i][j + 1]
                options.append(((e + 1, neg), "I"))
            best = min(options, key=lambda o: o[0])  # stable: diagonal first
            cost[i][j], move[i][j] = best
    counts = {"S": 0, "I": 0, "D": 0, "C": 0}
    i = j = 0
    while (i, j) != (n, m):
        op = move[i][j]
        counts[op] += 1
        i += op in "SCD"
        j += op in "SCI"
    return counts["S"], counts["I"], counts["D"], counts["C"]


def semer_counts(preds: Iterable[Prediction], type_only: bool = False) -> SemerCounts:
    total = SemerCounts()
    for p in preds:
        S, I, D, C = align_slots(p.ref_slots, p.hyp_slots, type_only)
        if p.ref_intent == p.hyp_intent:
            C += 1
        else:
            S += 1
        total = total + SemerCounts(S, I, D, C)
    return total


def semer_from_counts(c: SemerCounts) -> float:
    denom = c.S + c.D + c.C
    if denom == 0:
        raise ZeroDivisionError("SEMER undefined: no reference slots or intents")
    return (c.S + c.I + c.D) / denom


def semer(preds: Sequence[Prediction], type_only: bool = False) -> float:
    """(S + I + D) / (S + D + C), pooled over slots and intents."""
    if not preds:
        raise ValueError("SEMER needs at least one utterance")
    return semer_from_counts(semer_counts(preds, type_only))


def ser(preds: Sequence[Prediction], type_only: bool = False) -> float:
    errors = 0
    n_ref = 0
    for p in preds:
        S, I, D, _ = align_slots(p.ref_slots, p.hyp_slots, type_only)
        errors += S + I + D
        n_ref += len(p.ref_slots)
    if n_ref == 0:
        raise ZeroDivisionError("SER undefined: no reference slots")
    return errors / n_ref


def icer(preds: Sequence[Prediction]) -> float:
    if not preds:
        raise ValueError("ICER needs at least one utterance")
    return sum(p.ref_intent != p.hyp_intent for p in preds) / len(preds)


def word_coverage(train_tokens: Iterable[str], test_tokens: Iterable[str]) -> float:
    """Share of unique test words that also occur in training."""
    test = set(test_tokens)
    if not test:
        raise ValueError("no test words")
    return len(test & set(train_tokens)) / len(test)


def _bigrams(tokens: Sequence[str]) -> set:
    return set(zip(tokens, tokens[1:]))


def bigram_coverage_tokens(train: Iterable[Sequence[str]], test: Sequence[Sequence[str]]) -> float:
    train = [list(t) for t in train]
    train_bigrams = set().union(*(_bigrams(t) for t in train)) if train else set()
    train_words = {w for t in train for w in t}
    if not test:
        raise ValueError("no test sentences")
    total = 0.0
    for sent in test:
        bg = list(zip(sent, sent[1:]))
        if not bg:
            total += 1.0 if sent and sent[0] in train_words else 0.0
        else:
            total += sum(b in train_bigrams for b in bg) / len(bg)
    return total / len(test)


def bigram_coverage(train: Iterable[AnnotatedUtterance], test: Sequence[AnnotatedUtterance]) -> float:
    """Mean over test sentences of the fraction of their bigrams seen in training.

    Slot spans count as one slot-type symbol on both sides.
    """
    return bigram_coverage_tokens(
        [collapse_slots(u) for u in train], [collapse_slots(u) for u in test]
    )


def relative_change(baseline_err: float, new_err: float) -> float | None:
    """(new - baseline) / baseline; None when the baseline error is zero."""
    if baseline_err == 0:
        return None
    return (new_err - baseline_err) / baseline_err


def unique_patterns(data: Iterable[AnnotatedUtterance]) -> int:
    """Number of distinct utterance patterns (slot values abstracted to types)."""
    return len({tuple(collapse_slots(u)) for u in data})

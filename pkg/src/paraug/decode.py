"""Beam search and candidate filtering."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grammar import AnnotatedUtterance
from .seq2seq.model import Seq2SeqModel, initial_state, step_decoder_log
from .slotcopy import Binding, SlotRejection, restore_by_value, restore_slots
from .textcore import BOS_ID, EOS_ID, RESERVED

IDENTITY = "identity"
UNFINISHED = "unfinished"
INVALID_TOKEN = "invalid-token"


@dataclass(frozen=True)
class Hypothesis:
    token_ids: tuple[int, ...]  # includes the final EOS when finished
    score: float
    finished: bool

    def output_ids(self) -> tuple[int, ...]:
        return self.token_ids[:-1] if self.finished else self.token_ids


def _rank_key(h: Hypothesis):
    return (-h.score, h.token_ids)


def beam_search(
    model: Seq2SeqModel,
    source_ids: Sequence[int],
    beam_width: int = 8,
    n_best: int = 4,
    max_len: int = 20,
    length_normalize: bool = False,
) -> list[Hypothesis]:
    """Left-to-right beam search over the full output vocabulary.

    Each step keeps the ``beam_width`` best one-token extensions of the live
    hypotheses; extensions ending in EOS move to the finished pool.  Search
    stops once the pool holds ``beam_width`` hypotheses or ``max_len`` tokens
    were produced, in which case live hypotheses are added unfinished.
    Scores are summed log-probabilities; ties rank by token ids.
    """
    if beam_width < 1 or max_len < 1 or not 1 <= n_best <= beam_width:
        raise ValueError("need beam_width >= 1, 1 <= n_best <= beam_width, max_len >= 1")
    state = initial_state(model, source_ids)
    live_ids: list[tuple[int, ...]] = [()]
    live_scores = np.zeros(1)
    prev = np.array([BOS_ID])
    pool: list[Hypothesis] = []

    for _ in range(max_len):
        logp, state = step_decoder_log(model, state, prev)
        cand = live_scores[:, None] + logp  # (live, V)
        V = cand.shape[1]
        flat = cand.ravel()
        k = min(beam_width, flat.size)
        threshold = np.partition(flat, flat.size - k)[flat.size - k]
        # everything tied with the k-th score competes on token ids
        contenders = [divmod(int(j), V) for j in np.flatnonzero(flat >= threshold)]
        contenders.sort(key=lambda rt: (-flat[rt[0] * V + rt[1]], live_ids[rt[0]] + (rt[1],)))
        next_rows, next_ids, next_scores = [], [], []
        for row, tok in contenders[:k]:
            j = row * V + tok
            ids = live_ids[row] + (tok,)
            if tok == EOS_ID:
                pool.append(Hypothesis(ids, float(flat[j]), True))
            else:
                next_rows.append(row)
                next_ids.append(ids)
                next_scores.append(float(flat[j]))
        if len(pool) >= beam_width or not next_ids:
            break
        state = state.take(np.array(next_rows))
        live_ids = next_ids
        live_scores = np.array(next_scores)
        prev = np.array([ids[-1] for ids in live_ids])
    else:
        pool.extend(Hypothesis(ids, s, False) for ids, s in zip(live_ids, live_scores))

    if length_normalize:
        ranked = sorted(pool, key=lambda h: (-h.score / len(h.token_ids), h.token_ids))
    else:
        ranked = sorted(pool, key=_rank_key)
    return ranked[:n_best]


def sample_hypotheses(
    model: Seq2SeqModel,
    source_ids: Sequence[int],
    n: int,
    max_len: int,
    rng: np.random.Generator,
) -> list[Hypothesis]:
    """Ancestral sampling from the decoder posterior (off by default)."""
    out = []
    for _ in range(n):
        state = initial_state(model, source_ids)
        prev, ids, score = BOS_ID, [], 0.0
        for _ in range(max_len):
            logp, state = step_decoder_log(model, state, [prev])
            p = np.exp(logp[0])
            tok = int(rng.choice(len(p), p=p / p.sum()))
            score += float(logp[0, tok])
            ids.append(tok)
            prev = tok
            if tok == EOS_ID:
                break
        out.append(Hypothesis(tuple(ids), score, ids[-1] == EOS_ID))
    return sorted(out, key=_rank_key)


@dataclass
class FilterOptions:
    drop_identity: bool = True
    slot_tokens: bool = True  # False: locate slot values in raw output instead


@dataclass(frozen=True)
class Candidate:
    utterance: AnnotatedUtterance
    score: float


def filter_candidates(
    hyps: Sequence[Hypothesis],
    bindings: Sequence[Binding],
    original: AnnotatedUtterance,
    model: Seq2SeqModel,
    options: FilterOptions | None = None,
) -> tuple[list[Candidate], Counter]:
    """Restore slots in each hypothesis and drop the unusable ones.

    Returns accepted candidates (best score first) and a counter with one
    entry per dropped hypothesis: a rejection reason or ``"deduped"``.
    """
    options = options or FilterOptions()
    stats: Counter = Counter()
    best: dict[tuple[str, ...], Candidate] = {}
    restore = restore_slots if options.slot_tokens else restore_by_value
    for h in sorted(hyps, key=_rank_key):
        if not h.finished:
            stats[UNFINISHED] += 1
            continue
        tokens = model.output_vocab.decode(h.output_ids())
        if any(t in RESERVED for t in tokens):
            stats[INVALID_TOKEN] += 1
            continue
        try:
            restored, spans = restore(tokens, bindings)
        except SlotRejection as rej:
            stats[rej.reason] += 1
            continue
        if options.drop_identity and restored == original.tokens:
            stats[IDENTITY] += 1
            continue
        if restored in best:
            stats["deduped"] += 1
            continue
        utt = AnnotatedUtterance(original.skill_id, original.intent, restored, spans)
        best[restored] = Candidate(utt, h.score)
    return list(best.values()), stats

"""Linear-chain CRF over BIO tags, trained by gradient ascent.

Scores: start weights for the first tag, a tag-to-tag transition matrix and
sparse emission weights.  Transitions into ``I-T`` from anything but
``B-T``/``I-T`` and starting in ``I-T`` are fixed at -inf, so decoded tag
sequences are always valid BIO.  All inference runs in log space.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.special import logsumexp

from ..grammar import AnnotatedUtterance, SlotSpan

FORMAT = "paraug-crf"
VERSION = 1
NEG_INF = -np.inf


class BioError(ValueError):
    pass


# ---------------------------------------------------------------- BIO helpers

def to_bio(u: AnnotatedUtterance) -> list[str]:
    tags = ["O"] * len(u.tokens)
    for s in u.slots:
        tags[s.start] = f"B-{s.slot_type}"
        for i in range(s.start + 1, s.end):
            tags[i] = f"I-{s.slot_type}"
    return tags


def check_bio(tags: Sequence[str]) -> None:
    prev = "O"
    for i, t in enumerate(tags):
        if t != "O" and not (t.startswith("B-") or t.startswith("I-")) or t in ("B-", "I-"):
            raise BioError(f"malformed tag {t!r} at position {i}")
        if t.startswith("I-") and prev[2:] != t[2:]:
            raise BioError(f"{t} at position {i} does not continue a {t[2:]} span")
        prev = t


def bio_to_spans(tokens: Sequence[str], tags: Sequence[str]) -> list[SlotSpan]:
    spans = []
    start = None
    kind = None
    for i, t in enumerate(list(tags) + ["O"]):
        if start is not None and not (t.startswith("I-") and t[2:] == kind):
            spans.append(SlotSpan(kind, start, i, tuple(tokens[start:i])))
            start = None
        if t.startswith("B-") or (t.startswith("I-") and start is None):
            start, kind = i, t[2:]
    return spans


def tag_set(slot_types) -> list[str]:
    tags = ["O"]
    for t in sorted(set(slot_types)):
        tags += [f"B-{t}", f"I-{t}"]
    return tags


def transition_mask(tags: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Boolean allowed-start vector and allowed-transition matrix."""
    K = len(tags)
    start = np.array([not t.startswith("I-") for t in tags])
    trans = np.ones((K, K), dtype=bool)
    for j, t in enumerate(tags):
        if t.startswith("I-"):
            for i, p in enumerate(tags):
                trans[i, j] = p in (f"B-{t[2:]}", t)
    return start, trans


# ---------------------------------------------------------------- features

def ner_features(tokens: Sequence[str], i: int) -> list[str]:
    feats = [f"w={tokens[i]}"]
    feats.append(f"prev={tokens[i - 1]}" if i > 0 else "prev=<s>")
    feats.append(f"next={tokens[i + 1]}" if i + 1 < len(tokens) else "next=</s>")
    if i == 0:
        feats.append("first")
    if i == len(tokens) - 1:
        feats.append("last")
    return feats


@dataclass
class CrfModel:
    tags: list[str]
    features: dict[str, int]
    emission: np.ndarray  # (n_features, K)
    transition: np.ndarray  # (K, K); -inf where disallowed
    start: np.ndarray  # (K,); -inf where disallowed

    def emissions(self, tokens: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(tokens), len(self.tags)))
        for i in range(len(tokens)):
            for f in ner_features(tokens, i):
                j = self.features.get(f)
                if j is not None:
                    out[i] += self.emission[j]
        return out

    def to_dict(self) -> dict:
        def enc(a):
            return [[None if np.isneginf(v) else float(v) for v in row] for row in np.atleast_2d(a)]

        return {
            "format": FORMAT,
            "version": VERSION,
            "tags": self.tags,
            "features": sorted(self.features, key=self.features.get),
            "emission": enc(self.emission),
            "transition": enc(self.transition),
            "start": enc(self.start)[0],
        }

    @classmethod
    def from_dict(cls, d: dict) -> CrfModel:
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise ValueError("not a CRF model file of a supported version")

        def dec(rows):
            return np.array([[NEG_INF if v is None else v for v in r] for r in rows], dtype=float)

        K = len(d["tags"])
        feats = {f: i for i, f in enumerate(d["features"])}
        emission = dec(d["emission"]).reshape(len(feats), K)
        return cls(list(d["tags"]), feats, emission, dec(d["transition"]).reshape(K, K),
                   dec([d["start"]])[0])

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> CrfModel:
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


# ---------------------------------------------------------------- inference

def forward_logz(emis: np.ndarray, transition: np.ndarray, start: np.ndarray) -> tuple[float, np.ndarray]:
    """Log partition function and the forward table ``(n, K)``."""
    n, K = emis.shape
    alpha = np.empty((n, K))
    alpha[0] = start + emis[0]
    for t in range(1, n):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + transition, axis=0) + emis[t]
    return float(logsumexp(alpha[-1])), alpha


def backward_logz(emis: np.ndarray, transition: np.ndarray, start: np.ndarray) -> tuple[float, np.ndarray]:
    n, K = emis.shape
    beta = np.zeros((n, K))
    for t in range(n - 2, -1, -1):
        beta[t] = logsumexp(transition + (emis[t + 1] + beta[t + 1])[None, :], axis=1)
    return float(logsumexp(start + emis[0] + beta[0])), beta


def sequence_score(emis, transition, start, y: Sequence[int]) -> float:
    s = start[y[0]] + emis[0, y[0]]
    for t in range(1, len(y)):
        s += transition[y[t - 1], y[t]] + emis[t, y[t]]
    return float(s)


def viterbi(emis: np.ndarray, transition: np.ndarray, start: np.ndarray) -> list[int]:
    n, K = emis.shape
    delta = start + emis[0]
    back = np.zeros((n, K), dtype=np.int64)
    for t in range(1, n):
        cand = delta[:, None] + transition
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(K)] + emis[t]
    y = [int(np.argmax(delta))]
    for t in range(n - 1, 0, -1):
        y.append(int(back[t, y[-1]]))
    return y[::-1]


def tag(model: CrfModel, tokens: Sequence[str]) -> tuple[list[str], list[SlotSpan]]:
    if not tokens:
        return [], []
    y = viterbi(model.emissions(tokens), model.transition, model.start)
    tags = [model.tags[k] for k in y]
    return tags, bio_to_spans(tokens, tags)


# ---------------------------------------------------------------- training

@dataclass
class _Batch:
    X: sparse.csr_matrix  # (total tokens, F)
    offsets: np.ndarray  # sentence boundaries into the token rows
    gold: np.ndarray  # (total tokens,) tag ids
    lengths: np.ndarray


def _make_batch(data, features, tag_idx) -> _Batch:
    rows, cols = [], []
    gold = []
    lengths = []
    r = 0
    for tokens, tags in data:
        for i in range(len(tokens)):
            for f in ner_features(tokens, i):
                j = features.get(f)
                if j is not None:
                    rows.append(r)
                    cols.append(j)
            gold.append(tag_idx[tags[i]])
            r += 1
        lengths.append(len(tokens))
    X = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(r, len(features)))
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    return _Batch(X, offsets, np.array(gold, dtype=np.int64), np.array(lengths))


def _padded(batch: _Batch, emis_flat: np.ndarray):
    N, T = len(batch.lengths), int(batch.lengths.max())
    K = emis_flat.shape[1]
    emis = np.zeros((N, T, K))
    gold = np.zeros((N, T), dtype=np.int64)
    mask = np.zeros((N, T), dtype=bool)
    for n in range(N):
        a, b = batch.offsets[n], batch.offsets[n + 1]
        emis[n, : b - a] = emis_flat[a:b]
        gold[n, : b - a] = batch.gold[a:b]
        mask[n, : b - a] = True
    return emis, gold, mask


def log_likelihood_and_grad(model: CrfModel, batch: _Batch, l2: float):
    """Regularized log-likelihood and its gradient, batched over sentences."""
    trans, start = model.transition, model.start
    emis_flat = batch.X @ model.emission
    emis, gold, mask = _padded(batch, emis_flat)
    N, T, K = emis.shape
    lengths = batch.lengths
    rows = np.arange(N)

    alpha = np.full((N, T, K), NEG_INF)
    alpha[:, 0] = start + emis[:, 0]
    for t in range(1, T):
        new = logsumexp(alpha[:, t - 1, :, None] + trans[None], axis=1) + emis[:, t]
        alpha[:, t] = np.where(mask[:, t, None], new, alpha[:, t - 1])
    beta = np.zeros((N, T, K))
    for t in range(T - 2, -1, -1):
        nxt = logsumexp(trans[None] + (emis[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
        beta[:, t] = np.where(mask[:, t + 1, None], nxt, 0.0)
    logz = logsumexp(alpha[rows, lengths - 1], axis=1)

    # gold path scores
    gold_score = start[gold[:, 0]] + np.where(mask, np.take_along_axis(emis, gold[..., None], 2)[..., 0], 0).sum(1)
    pair_valid = mask[:, 1:]
    gold_score += np.where(pair_valid, trans[gold[:, :-1], gold[:, 1:]], 0).sum(1)
    ll = float(gold_score.sum() - logz.sum())

    node = np.exp(alpha + beta - logz[:, None, None]) * mask[..., None]
    # expected transition counts
    with np.errstate(invalid="ignore"):
        pair = (alpha[:, :-1, :, None] + trans[None, None] + (emis[:, 1:] + beta[:, 1:])[:, :, None, :]
                - logz[:, None, None, None])
    pair = np.where(pair_valid[..., None, None], np.exp(pair), 0.0)

    g_trans = -pair.sum(axis=(0, 1))
    np.add.at(g_trans, (gold[:, :-1][pair_valid], gold[:, 1:][pair_valid]), 1.0)
    g_start = -node[:, 0].sum(0)
    np.add.at(g_start, gold[:, 0], 1.0)

    node_flat = np.concatenate([node[n, : lengths[n]] for n in range(N)])
    resid = -node_flat
    resid[np.arange(len(batch.gold)), batch.gold] += 1.0
    g_emis = batch.X.T @ resid

    start_ok, trans_ok = np.isfinite(start), np.isfinite(trans)
    g_start = np.where(start_ok, g_start - l2 * np.where(start_ok, start, 0), 0.0)
    g_trans = np.where(trans_ok, g_trans - l2 * np.where(trans_ok, trans, 0), 0.0)
    g_emis = np.asarray(g_emis) - l2 * model.emission
    penalty = 0.5 * l2 * (
        np.sum(model.emission ** 2) + np.sum(start[start_ok] ** 2) + np.sum(trans[trans_ok] ** 2)
    )
    return ll - penalty, (g_emis, g_trans, g_start), logz


def init_crf(tags: list[str], features: dict[str, int]) -> CrfModel:
    start_ok, trans_ok = transition_mask(tags)
    K = len(tags)
    return CrfModel(
        tags,
        features,
        np.zeros((len(features), K)),
        np.where(trans_ok, 0.0, NEG_INF),
        np.where(start_ok, 0.0, NEG_INF),
    )


def _prepare(data):
    for tokens, tags in data:
        if len(tokens) != len(tags) or not tokens:
            raise BioError("tokens and tags must be non-empty and aligned")
        check_bio(tags)
    types = {t[2:] for _, tags in data for t in tags if t != "O"}
    tags = tag_set(types)
    features: dict[str, int] = {}
    for tokens, _ in data:
        for i in range(len(tokens)):
            for f in ner_features(tokens, i):
                features.setdefault(f, len(features))
    return tags, features


def train_ner(
    data: Sequence[tuple[Sequence[str], Sequence[str]]],
    l2: float = 0.1,
    epochs: int = 100,
    lr: float = 0.5,
    seed: int = 0,
    history: list | None = None,
) -> CrfModel:
    """Full-batch gradient ascent; steps use the objective divided by the number of sentences.

    Deterministic; ``seed`` is unused.
    """
    tags, features = _prepare(data)
    model = init_crf(tags, features)
    tag_idx = {t: i for i, t in enumerate(tags)}
    batch = _make_batch(data, features, tag_idx)
    n = len(data)
    for _ in range(epochs):
        obj, (g_e, g_t, g_s), _ = log_likelihood_and_grad(model, batch, l2)
        if history is not None:
            history.append(obj)
        model.emission = model.emission + (lr / n) * g_e
        model.transition = model.transition + (lr / n) * g_t
        model.start = model.start + (lr / n) * g_s
    return model

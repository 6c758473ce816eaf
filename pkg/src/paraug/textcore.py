"""Tokenization, vocabularies, stop words and fixed word-embedding tables."""
from __future__ import annotations

import hashlib
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
RESERVED = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

EDGE_PUNCT = ".,!?;:'\""

# 50 high-frequency English function words.
STOP_WORDS = frozenset(
    """a an the of to in is it that for on with as at by from this be are was
    were or and but not no so if then than i you he she we they me my your our
    his her its their do does did can will would""".split()
)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and strip punctuation from token edges."""
    tokens = []
    for piece in text.lower().split():
        piece = piece.strip(EDGE_PUNCT)
        if piece:
            tokens.append(piece)
    return tokens


def load_stop_words(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        return STOP_WORDS
    with open(path, encoding="utf-8") as f:
        return frozenset(line.strip().lower() for line in f if line.strip())


class Vocabulary:
    """Bijective token <-> id map with ids 0..3 reserved for PAD, BOS, EOS, UNK."""

    def __init__(self, tokens: Sequence[str], slot_tokens: Iterable[str] = ()):
        if tuple(tokens[:4]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self._tokens = tuple(tokens)
        self._ids = {t: i for i, t in enumerate(self._tokens)}
        self.slot_token_ids = frozenset(self._ids[t] for t in slot_tokens)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self._tokens == other._tokens
            and self.slot_token_ids == other.slot_token_ids
        )

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)}, slots={len(self.slot_token_ids)})"

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        return self._tokens[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self._ids.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._tokens[i] for i in ids]

    def extended(self, tokens: Iterable[str], slot_tokens: Iterable[str] = ()) -> Vocabulary:
        """New vocabulary with unseen ``tokens`` appended; existing ids are kept."""
        slot_tokens = list(slot_tokens)
        new = list(self._tokens)
        for t in list(tokens) + slot_tokens:
            if t not in self._ids and t not in new:
                new.append(t)
        slots = [self._tokens[i] for i in self.slot_token_ids] + slot_tokens
        return Vocabulary(new, slots)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update("\n".join(self._tokens).encode("utf-8"))
        h.update(b"\x00")
        h.update(",".join(str(i) for i in sorted(self.slot_token_ids)).encode())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "tokens": list(self._tokens),
            "slot_tokens": [self._tokens[i] for i in sorted(self.slot_token_ids)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Vocabulary:
        return cls(d["tokens"], d.get("slot_tokens", ()))


def build_vocab(
    corpus: Iterable[Sequence[str]], min_count: int = 1, extra_tokens: Sequence[str] = ()
) -> Vocabulary:
    """Ids after the reserved four go by descending frequency, then lexicographically.

    ``extra_tokens`` (slot tokens) are always included and flagged as slot tokens.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(t for sent in corpus for t in sent)
    for t in RESERVED:
        counts.pop(t, None)
    extra = [t for t in extra_tokens if t not in RESERVED]
    for t in extra:
        counts[t] = max(counts[t], min_count)
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(list(RESERVED) + kept, extra)


class EmbeddingTable:
    """Fixed word vectors; unknown tokens map to the mean of all loaded vectors."""

    def __init__(self, vectors: dict[str, np.ndarray], dim: int):
        if not vectors:
            raise ValueError("empty embedding table")
        self.dim = dim
        self.vectors = vectors
        self.unk_vector = np.mean(np.stack(list(vectors.values())), axis=0)

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def lookup(self, token: str) -> np.ndarray:
        return self.vectors.get(token, self.unk_vector)

    def vocabulary(self) -> Vocabulary:
        return build_vocab([sorted(self.vectors)], min_count=1)

    def matrix(self, vocab: Vocabulary) -> np.ndarray:
        """Rows aligned with ``vocab`` ids; PAD is the zero vector."""
        mat = np.empty((len(vocab), self.dim))
        for i, tok in enumerate(vocab.tokens):
            mat[i] = self.lookup(tok)
        mat[PAD_ID] = 0.0
        return mat


class EmbeddingFormatError(ValueError):
    pass


def load_embeddings(path: str | Path, expected_dim: int) -> EmbeddingTable:
    """Read a text embedding file: ``token v1 ... vdim`` per line."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split(" ")
            if len(parts) - 1 != expected_dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: expected {expected_dim} values, got {len(parts) - 1}"
                )
            try:
                vectors[parts[0]] = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: {exc}") from None
    if not vectors:
        raise EmbeddingFormatError(f"{path}: no embeddings found")
    return EmbeddingTable(vectors, expected_dim)


def write_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for tok, vec in table.vectors.items():
            f.write(tok + " " + " ".join(repr(float(v)) for v in vec) + "\n")

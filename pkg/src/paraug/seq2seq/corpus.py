"""Parallel corpora: one ``source<TAB>target`` pair per line."""
from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from ..textcore import Vocabulary, tokenize
from .model import wrap_target


def read_parallel(path: str | Path) -> list[tuple[list[str], list[str]]]:
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.count("\t") != 1:
                raise ValueError(f"{path}:{lineno}: expected exactly one TAB")
            src, tgt = line.split("\t")
            src_toks, tgt_toks = tokenize(src), tokenize(tgt)
            if not src_toks or not tgt_toks:
                raise ValueError(f"{path}:{lineno}: empty side")
            pairs.append((src_toks, tgt_toks))
    return pairs


def encode_pairs(
    pairs: Iterable[tuple[Sequence[str], Sequence[str]]],
    input_vocab: Vocabulary,
    output_vocab: Vocabulary,
) -> list[tuple[list[int], list[int]]]:
    """Token pairs to (source ids, BOS ... EOS wrapped target ids)."""
    return [
        (input_vocab.encode(src), wrap_target(output_vocab.encode(tgt))) for src, tgt in pairs
    ]

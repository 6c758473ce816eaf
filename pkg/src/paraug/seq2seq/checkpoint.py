"""Binary checkpoint format.

Layout::

    16 bytes   magic  b"PARAUG-S2S-CKPT\\0"
    4 bytes    format version, little-endian uint32
    8 bytes    header length N, little-endian uint64
    N bytes    UTF-8 JSON header
    ...        parameter blocks, little-endian float64, C order, in the
               order listed by header["blocks"]

The header carries the dimensions, scheme, frozen blocks, both
vocabularies with their content hashes, block names/shapes and a SHA-256
of the payload.  The fixed input embedding matrix is stored as the last
block.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from ..textcore import Vocabulary
from .model import PARAM_ORDER, Seq2SeqModel

MAGIC = b"PARAUG-S2S-CKPT\x00"
FORMAT_VERSION = 1
EMBEDDING_BLOCK = "embedding"


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: Seq2SeqModel, path: str | Path, extra: dict | None = None) -> None:
    blocks = [(n, model.params[n]) for n in PARAM_ORDER] + [(EMBEDDING_BLOCK, model.embedding)]
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in blocks)
    header = {
        "format_version": FORMAT_VERSION,
        "embedding_dim": model.embedding_dim,
        "hidden_dim": model.hidden_dim,
        "scheme": model.scheme,
        "frozen": sorted(model.frozen),
        "input_vocab": model.input_vocab.to_dict(),
        "output_vocab": model.output_vocab.to_dict(),
        "input_vocab_hash": model.input_vocab.content_hash(),
        "output_vocab_hash": model.output_vocab.content_hash(),
        "blocks": [[n, list(a.shape)] for n, a in blocks],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        f.write(payload)
    os.replace(tmp, path)


def read_header(path: str | Path) -> dict:
    with open(path, "rb") as f:
        header, _ = _read(f)
    return header


def _read(f):
    magic = f.read(16)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    raw = f.read(4)
    if len(raw) != 4:
        raise CheckpointError("truncated checkpoint")
    (version,) = struct.unpack("<I", raw)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    raw = f.read(8)
    if len(raw) != 8:
        raise CheckpointError("truncated checkpoint")
    (n,) = struct.unpack("<Q", raw)
    head = f.read(n)
    if len(head) != n:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(head.decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    return header, f.read()


def load_checkpoint(
    path: str | Path,
    input_vocab: Vocabulary | None = None,
    output_vocab: Vocabulary | None = None,
) -> Seq2SeqModel:
    """Load a model; optional vocabularies must match the stored hashes."""
    with open(path, "rb") as f:
        header, payload = _read(f)
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError("checkpoint payload is truncated or corrupt")

    in_vocab = Vocabulary.from_dict(header["input_vocab"])
    out_vocab = Vocabulary.from_dict(header["output_vocab"])
    if in_vocab.content_hash() != header["input_vocab_hash"]:
        raise CheckpointError("stored input vocabulary does not match its hash")
    if out_vocab.content_hash() != header["output_vocab_hash"]:
        raise CheckpointError("stored output vocabulary does not match its hash")
    if input_vocab is not None and input_vocab.content_hash() != header["input_vocab_hash"]:
        raise CheckpointError("input vocabulary does not match the checkpoint")
    if output_vocab is not None and output_vocab.content_hash() != header["output_vocab_hash"]:
        raise CheckpointError("output vocabulary does not match the checkpoint")

    arrays = {}
    offset = 0
    for name, shape in header["blocks"]:
        size = int(np.prod(shape)) if shape else 1
        nbytes = 8 * size
        if offset + nbytes > len(payload):
            raise CheckpointError("checkpoint payload is truncated")
        arrays[name] = np.frombuffer(payload, dtype="<f8", count=size, offset=offset).reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError("trailing bytes after checkpoint payload")

    model = Seq2SeqModel(
        params={n: arrays[n] for n in PARAM_ORDER},
        embedding=arrays[EMBEDDING_BLOCK],
        input_vocab=in_vocab,
        output_vocab=out_vocab,
        frozen=frozenset(header["frozen"]),
        scheme=header["scheme"],
    )
    model.validate()
    return model

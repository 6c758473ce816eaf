import json
from pathlib import Path

import numpy as np
import pytest

from paraug.grammar import AnnotatedUtterance, SlotSpan
from paraug.seq2seq import init_model
from paraug.textcore import RESERVED, Vocabulary

REPO = Path(__file__).resolve().parents[1]
DATA = REPO / "data"


def utt(text, slots=(), intent="Ask", skill="s"):
    """Build an utterance from text plus (type, start, end) triples."""
    tokens = tuple(text.split())
    spans = tuple(SlotSpan(t, a, b, tokens[a:b]) for t, a, b in slots)
    return AnnotatedUtterance(skill, intent, tokens, spans)


def toy_model(n_in=3, n_out=2, dim=3, hidden=4, seed=0, extra_out=(), slot_tokens=()):
    """Small random model; output vocab = reserved ids + ``n_out`` words (+ extras)."""
    in_vocab = Vocabulary(list(RESERVED) + [f"w{i}" for i in range(n_in)])
    out_vocab = Vocabulary(
        list(RESERVED) + [f"o{i}" for i in range(n_out)] + list(extra_out), slot_tokens
    )
    rng = np.random.default_rng(seed + 1000)
    emb = rng.normal(0, 1, (len(in_vocab), dim))
    emb[0] = 0.0
    return init_model(in_vocab, out_vocab, emb, hidden, seed)


@pytest.fixture
def desk_config(tmp_path):
    """Desk config copied next to a private workdir."""
    cfg = json.loads((DATA / "desk_config.json").read_text())
    p = cfg["paths"]
    p["grammar"] = str(DATA / p["grammar"])
    p["indomain_grammars"] = [str(DATA / g) for g in p["indomain_grammars"]]
    p["parallel"] = [str(DATA / g) for g in p["parallel"]]
    p["embeddings"] = str(DATA / p["embeddings"])
    p["workdir"] = str(tmp_path / "work")
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


# one (criterion, passed, detail) entry per acceptance check, echoed at the end of the run
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")

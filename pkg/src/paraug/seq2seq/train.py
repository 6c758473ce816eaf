"""Mini-batch gradient descent for the paraphrase network."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .model import ENCODER_BLOCKS, PARAM_ORDER, Seq2SeqModel, gradients

log = logging.getLogger(__name__)

SCHEMES = ("mt_pretrain", "no_slot_copy", "fixed_encoder", "fine_tune")
FROZEN_ENCODER_SCHEMES = ("no_slot_copy", "fixed_encoder")

Corpus = Sequence[tuple[Sequence[int], Sequence[int]]]


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    scheme: str = "mt_pretrain"
    learning_rate: float = 0.5
    epochs: int = 50
    batch_size: int = 16
    grad_clip_norm: float = 5.0
    seed: int = 0
    max_sequence_length: int = 30

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.grad_clip_norm <= 0:
            raise ValueError("grad_clip_norm must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def apply_scheme(model: Seq2SeqModel, scheme: str) -> Seq2SeqModel:
    new = model.copy()
    new.scheme = scheme
    new.frozen = frozenset(ENCODER_BLOCKS) if scheme in FROZEN_ENCODER_SCHEMES else frozenset()
    return new


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(grads[n] ** 2)) for n in PARAM_ORDER if n in grads)))
    if norm > max_norm:
        scale = max_norm / norm
        for n in grads:
            grads[n] = grads[n] * scale
    return norm


def _check_corpus(corpus: Corpus, max_len: int) -> None:
    if len(corpus) == 0:
        raise TrainingError("empty training corpus")
    for src, tgt in corpus:
        if not 1 <= len(src) <= max_len or len(tgt) > max_len + 2:
            raise TrainingError(
                f"sequence length out of range (max {max_len}): {len(src)} / {len(tgt)}"
            )


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def train_shared_encoder(
    models: Sequence[Seq2SeqModel], corpora: Sequence[Corpus], config: TrainConfig
) -> tuple[list[Seq2SeqModel], list[float]]:
    """Train one decoder per corpus on top of a single shared encoder.

    Minibatches from the corpora are interleaved round-robin.  Targets must
    already be BOS ... EOS wrapped.  Returns the trained models (fresh
    copies; inputs are untouched) and the per-epoch mean example loss.
    """
    if len(models) != len(corpora) or not models:
        raise ValueError("need one model per corpus")
    for c in corpora:
        _check_corpus(c, config.max_sequence_length)

    trained = [apply_scheme(m, config.scheme) for m in models]
    shared = trained[0].params
    for m in trained[1:]:
        for n in ENCODER_BLOCKS:
            m.params[n] = shared[n]

    rng = np.random.default_rng(config.seed)
    history: list[float] = []
    total = sum(len(c) for c in corpora)
    for epoch in range(config.epochs):
        schedules = [_batches(len(c), config.batch_size, rng) for c in corpora]
        epoch_loss = 0.0
        for step in range(max(len(s) for s in schedules)):
            for k, (model, corpus) in enumerate(zip(trained, corpora)):
                if step >= len(schedules[k]):
                    continue
                idx = schedules[k][step]
                loss, grads = gradients(
                    model, [corpus[i][0] for i in idx], [corpus[i][1] for i in idx]
                )
                if not np.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss {loss} at epoch {epoch}, corpus {k}, step {step}"
                    )
                clip_by_global_norm(grads, config.grad_clip_norm)
                for n in PARAM_ORDER:
                    if n not in model.frozen:
                        # in place, so the shared encoder arrays stay shared
                        model.params[n] -= config.learning_rate * grads[n]
                epoch_loss += loss * len(idx)
        history.append(epoch_loss / total)
        log.debug("epoch %d loss %.6f", epoch, history[-1])
    return trained, history


def train(
    model: Seq2SeqModel, corpus: Corpus, config: TrainConfig
) -> tuple[Seq2SeqModel, list[float]]:
    (trained,), history = train_shared_encoder([model], [corpus], config)
    return trained, history

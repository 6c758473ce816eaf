"""Encoder-decoder paraphrase network.

Encoder: a bidirectional LSTM over fixed word embeddings, then a
unidirectional LSTM over the concatenated forward/backward outputs.  Its
final ``(h, c)`` is the context.  Decoder: two stacked LSTMs, both started
from the context state; at every step layer 1 reads the context ``h``
concatenated with the one-hot previous token.  An affine projection and a
softmax give the next-token distribution.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..textcore import BOS_ID, EOS_ID, PAD_ID, Vocabulary
from .lstm import cell_step, layer_backward, layer_forward

ENCODER_LAYERS = ("enc_fwd", "enc_bwd", "enc_l2")
DECODER_LAYERS = ("dec_l1", "dec_l2")


def param_order() -> list[str]:
    names = [f"{layer}.{p}" for layer in ENCODER_LAYERS + DECODER_LAYERS for p in ("W_x", "W_h", "b")]
    return names + ["out.W", "out.b"]


PARAM_ORDER = param_order()
ENCODER_BLOCKS = frozenset(n for n in PARAM_ORDER if n.startswith("enc_"))
DECODER_BLOCKS = frozenset(PARAM_ORDER) - ENCODER_BLOCKS


def param_shapes(embedding_dim: int, hidden_dim: int, out_size: int) -> dict[str, tuple]:
    D, H, V = embedding_dim, hidden_dim, out_size
    in_dims = {"enc_fwd": D, "enc_bwd": D, "enc_l2": 2 * H, "dec_l1": H + V, "dec_l2": H}
    shapes = {}
    for layer, n_in in in_dims.items():
        shapes[f"{layer}.W_x"] = (4 * H, n_in)
        shapes[f"{layer}.W_h"] = (4 * H, H)
        shapes[f"{layer}.b"] = (4 * H,)
    shapes["out.W"] = (V, H)
    shapes["out.b"] = (V,)
    return shapes


@dataclass
class Seq2SeqModel:
    params: dict[str, np.ndarray]
    embedding: np.ndarray  # fixed, rows indexed by input_vocab ids
    input_vocab: Vocabulary
    output_vocab: Vocabulary
    frozen: frozenset = field(default_factory=frozenset)
    scheme: str = "init"

    @property
    def embedding_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.params["enc_l2.W_h"].shape[1]

    @property
    def freeze_mask(self) -> dict[str, bool]:
        return {n: n in self.frozen for n in PARAM_ORDER}

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> Seq2SeqModel:
        return copy.deepcopy(self)

    def validate(self) -> None:
        shapes = param_shapes(self.embedding_dim, self.hidden_dim, len(self.output_vocab))
        for name in PARAM_ORDER:
            if self.params[name].shape != shapes[name]:
                raise ValueError(f"parameter {name} has shape {self.params[name].shape}, "
                                 f"expected {shapes[name]}")
        if self.embedding.shape[0] != len(self.input_vocab):
            raise ValueError("embedding rows do not match the input vocabulary")


def _uniform_block(rng, name, shape, scale):
    if name.endswith(".b"):
        b = np.zeros(shape)
        if not name.startswith("out."):
            H = shape[0] // 4
            b[H : 2 * H] = 1.0  # forget gate
        return b
    return rng.uniform(-scale, scale, size=shape)


def init_model(
    input_vocab: Vocabulary,
    output_vocab: Vocabulary,
    embedding: np.ndarray,
    hidden_dim: int,
    seed: int,
) -> Seq2SeqModel:
    """Weights ~ U(-1/sqrt(H), 1/sqrt(H)); forget-gate biases 1, other biases 0."""
    if hidden_dim < 1 or embedding.ndim != 2 or embedding.shape[1] < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(hidden_dim)
    shapes = param_shapes(embedding.shape[1], hidden_dim, len(output_vocab))
    params = {n: _uniform_block(rng, n, shapes[n], scale) for n in PARAM_ORDER}
    model = Seq2SeqModel(params, np.asarray(embedding, dtype=np.float64).copy(),
                         input_vocab, output_vocab)
    model.validate()
    return model


def reinit_decoder(model: Seq2SeqModel, seed: int) -> Seq2SeqModel:
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(model.hidden_dim)
    new = model.copy()
    for n in PARAM_ORDER:
        if n in DECODER_BLOCKS:
            new.params[n] = _uniform_block(rng, n, new.params[n].shape, scale)
    return new


def extend_output_vocab(model: Seq2SeqModel, vocab: Vocabulary, seed: int) -> Seq2SeqModel:
    """Grow the output side to ``vocab``, which must extend the current one.

    Existing weights are kept; rows/columns for new tokens are freshly drawn.
    """
    old = model.output_vocab
    if vocab.tokens[: len(old)] != old.tokens:
        raise ValueError("new output vocabulary must extend the current one")
    extra = len(vocab) - len(old)
    new = model.copy()
    new.output_vocab = vocab
    if extra == 0:
        return new
    rng = np.random.default_rng(seed)
    H = model.hidden_dim
    scale = 1.0 / np.sqrt(H)
    new.params["out.W"] = np.vstack([model.params["out.W"], rng.uniform(-scale, scale, (extra, H))])
    new.params["out.b"] = np.concatenate([model.params["out.b"], np.zeros(extra)])
    W = model.params["dec_l1.W_x"]
    new.params["dec_l1.W_x"] = np.hstack([W, rng.uniform(-scale, scale, (W.shape[0], extra))])
    new.validate()
    return new


# ---------------------------------------------------------------- batching

def pad_batch(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Time-major ``(T, B)`` id matrix padded with PAD, plus a float mask."""
    T = max(len(s) for s in seqs)
    ids = np.full((T, len(seqs)), PAD_ID, dtype=np.int64)
    mask = np.zeros((T, len(seqs)))
    for b, s in enumerate(seqs):
        ids[: len(s), b] = s
        mask[: len(s), b] = 1.0
    return ids, mask


def _check_source(model: Seq2SeqModel, ids: Sequence[int]) -> None:
    if len(ids) == 0:
        raise ValueError("empty source sequence")
    n = len(model.input_vocab)
    for i in ids:
        if not 0 <= i < n:
            raise ValueError(f"invalid input token id {i}")


# ---------------------------------------------------------------- encoder

@dataclass
class ContextVector:
    h: np.ndarray
    c: np.ndarray


def _layer(model, name):
    p = model.params
    return p[f"{name}.W_x"], p[f"{name}.W_h"], p[f"{name}.b"]


def encode_batch(model: Seq2SeqModel, sources: Sequence[Sequence[int]]):
    for s in sources:
        _check_source(model, s)
    ids, mask = pad_batch(sources)
    B, H = len(sources), model.hidden_dim
    xs = model.embedding[ids]
    zero = np.zeros((B, H))
    out_f, _, _, cache_f = layer_forward(xs, zero, zero, *_layer(model, "enc_fwd"), mask)
    out_b, _, _, cache_b = layer_forward(xs, zero, zero, *_layer(model, "enc_bwd"), mask, reverse=True)
    x2 = np.concatenate([out_f, out_b], axis=2)
    _, h, c, cache_2 = layer_forward(x2, zero, zero, *_layer(model, "enc_l2"), mask)
    return h, c, (cache_f, cache_b, cache_2)


def encode(model: Seq2SeqModel, source_ids: Sequence[int]) -> ContextVector:
    h, c, _ = encode_batch(model, [list(source_ids)])
    return ContextVector(h[0], c[0])


# ---------------------------------------------------------------- decoder

@dataclass
class DecoderState:
    ctx_h: np.ndarray  # (B, H)
    h1: np.ndarray
    c1: np.ndarray
    h2: np.ndarray
    c2: np.ndarray

    @classmethod
    def from_context(cls, h: np.ndarray, c: np.ndarray) -> DecoderState:
        h, c = np.atleast_2d(h), np.atleast_2d(c)
        return cls(h, h, c, h, c)

    def take(self, rows) -> DecoderState:
        return DecoderState(*(a[rows] for a in (self.ctx_h, self.h1, self.c1, self.h2, self.c2)))


def _one_hot(ids: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(ids.shape + (size,))
    np.put_along_axis(out, ids[..., None], 1.0, axis=-1)
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def step_decoder_log(model: Seq2SeqModel, state: DecoderState, prev_ids) -> tuple[np.ndarray, DecoderState]:
    """Batched decoder step returning log-probabilities ``(B, V)``."""
    prev_ids = np.atleast_1d(np.asarray(prev_ids, dtype=np.int64))
    V = len(model.output_vocab)
    x = np.concatenate([state.ctx_h, _one_hot(prev_ids, V)], axis=1)
    h1, c1, _ = cell_step(x, state.h1, state.c1, *_layer(model, "dec_l1"))
    h2, c2, _ = cell_step(h1, state.h2, state.c2, *_layer(model, "dec_l2"))
    logits = h2 @ model.params["out.W"].T + model.params["out.b"]
    return log_softmax(logits), DecoderState(state.ctx_h, h1, c1, h2, c2)


def step_decoder(model: Seq2SeqModel, state: DecoderState, prev_token_id):
    """Next-token distribution and the updated state."""
    logp, new_state = step_decoder_log(model, state, prev_token_id)
    return np.exp(logp), new_state


def initial_state(model: Seq2SeqModel, source_ids: Sequence[int]) -> DecoderState:
    ctx = encode(model, source_ids)
    return DecoderState.from_context(ctx.h, ctx.c)


# ---------------------------------------------------------------- loss and gradients

def wrap_target(ids: Sequence[int]) -> list[int]:
    return [BOS_ID, *ids, EOS_ID]


def _forward(model: Seq2SeqModel, sources, targets):
    """Teacher-forced forward pass; ``targets`` are BOS ... EOS wrapped."""
    for t in targets:
        if len(t) < 2 or t[0] != BOS_ID or t[-1] != EOS_ID:
            raise ValueError("targets must be wrapped as BOS ... EOS")
    h, c, enc_cache = encode_batch(model, sources)
    B, H = h.shape
    V = len(model.output_vocab)
    tgt, tmask = pad_batch(targets)
    dec_in, dec_out, mask = tgt[:-1], tgt[1:], tmask[1:]
    T = dec_in.shape[0]
    xs = np.concatenate([np.broadcast_to(h, (T, B, H)), _one_hot(dec_in, V)], axis=2)
    out1, _, _, cache1 = layer_forward(xs, h, c, *_layer(model, "dec_l1"), mask)
    out2, _, _, cache2 = layer_forward(out1, h, c, *_layer(model, "dec_l2"), mask)
    logits = out2 @ model.params["out.W"].T + model.params["out.b"]
    logp = log_softmax(logits)
    picked = np.take_along_axis(logp, dec_out[..., None], axis=2)[..., 0]
    per_example = -(picked * mask).sum(axis=0)
    cache = (enc_cache, cache1, cache2, out2, logp, dec_out, mask)
    return per_example, cache


def batch_loss(model: Seq2SeqModel, sources, targets) -> float:
    per_example, _ = _forward(model, sources, targets)
    return float(per_example.mean())


def sequence_loss(model: Seq2SeqModel, source_ids, target_ids) -> float:
    """Negative log-likelihood of a BOS ... EOS wrapped target under teacher forcing."""
    per_example, _ = _forward(model, [list(source_ids)], [list(target_ids)])
    return float(per_example[0])


def gradients(model: Seq2SeqModel, sources, targets) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch loss and its exact gradient; frozen blocks get zeros."""
    if len(sources) == 0 or len(sources) != len(targets):
        raise ValueError("batch must be non-empty with matching sources and targets")
    per_example, cache = _forward(model, sources, targets)
    (cache_f, cache_b, cache_2), cache1, cache2, out2, logp, dec_out, mask = cache
    B = len(sources)
    H = model.hidden_dim
    p = model.params
    grads: dict[str, np.ndarray] = {}

    dlogits = np.exp(logp)
    np.put_along_axis(dlogits, dec_out[..., None],
                      np.take_along_axis(dlogits, dec_out[..., None], axis=2) - 1.0, axis=2)
    dlogits *= mask[..., None] / B
    grads["out.W"] = np.einsum("tbv,tbh->vh", dlogits, out2)
    grads["out.b"] = dlogits.sum(axis=(0, 1))
    d_out2 = dlogits @ p["out.W"]

    d_out1, dh2, dc2, *g2 = layer_backward(cache2, p["dec_l2.W_x"], p["dec_l2.W_h"], d_outs=d_out2)
    grads["dec_l2.W_x"], grads["dec_l2.W_h"], grads["dec_l2.b"] = g2
    dxs, dh1, dc1, *g1 = layer_backward(cache1, p["dec_l1.W_x"], p["dec_l1.W_h"], d_outs=d_out1, dx_cols=H)
    grads["dec_l1.W_x"], grads["dec_l1.W_h"], grads["dec_l1.b"] = g1

    dctx_h = dxs.sum(axis=0) + dh1 + dh2
    dctx_c = dc1 + dc2

    encoder_frozen = ENCODER_BLOCKS <= model.frozen
    if encoder_frozen:
        for n in ENCODER_BLOCKS:
            grads[n] = np.zeros_like(p[n])
    else:
        dx2, _, _, *g = layer_backward(cache_2, p["enc_l2.W_x"], p["enc_l2.W_h"],
                                       dh_final=dctx_h, dc_final=dctx_c)
        grads["enc_l2.W_x"], grads["enc_l2.W_h"], grads["enc_l2.b"] = g
        _, _, _, *g = layer_backward(cache_f, p["enc_fwd.W_x"], p["enc_fwd.W_h"],
                                     d_outs=dx2[:, :, :H], need_dx=False)
        grads["enc_fwd.W_x"], grads["enc_fwd.W_h"], grads["enc_fwd.b"] = g
        _, _, _, *g = layer_backward(cache_b, p["enc_bwd.W_x"], p["enc_bwd.W_h"],
                                     d_outs=dx2[:, :, H:], need_dx=False)
        grads["enc_bwd.W_x"], grads["enc_bwd.W_h"], grads["enc_bwd.b"] = g

    for n in model.frozen:
        grads[n] = np.zeros_like(p[n])
    return float(per_example.mean()), grads

"""Masked, batched LSTM layer with an exact backward pass.

Shapes: inputs ``(T, B, n_in)``, mask ``(T, B)``, states ``(B, H)``.
Gate order in the stacked weights is input, forget, output, candidate.
Where ``mask[t, b] == 0`` the state of row ``b`` is carried over unchanged,
which lets variable-length sequences share one padded batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def cell_step(x, h, c, W_x, W_h, b):
    """One unmasked LSTM step. Returns new (h, c) plus the activations."""
    H = h.shape[1]
    z = x @ W_x.T + h @ W_h.T + b
    i = sigmoid(z[:, :H])
    f = sigmoid(z[:, H : 2 * H])
    o = sigmoid(z[:, 2 * H : 3 * H])
    g = np.tanh(z[:, 3 * H :])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return o * tc, c_new, (i, f, o, g, tc)


@dataclass
class LayerCache:
    xs: np.ndarray
    mask: np.ndarray
    order: list
    steps: list  # per processed step: (h_prev, c_prev, i, f, o, g, tc)


def layer_forward(xs, h0, c0, W_x, W_h, b, mask, reverse=False):
    """Run the layer over all steps.

    Returns per-step outputs ``(T, B, H)``, final ``(h, c)`` and a cache.
    """
    T = xs.shape[0]
    order = list(range(T - 1, -1, -1)) if reverse else list(range(T))
    h, c = h0, c0
    outs = np.zeros((T,) + h0.shape)
    steps = []
    for t in order:
        h_new, c_new, act = cell_step(xs[t], h, c, W_x, W_h, b)
        m = mask[t][:, None]
        steps.append((h, c) + act)
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c
        outs[t] = h
    return outs, h, c, LayerCache(xs, mask, order, steps)


def layer_backward(cache: LayerCache, W_x, W_h, d_outs=None, dh_final=None, dc_final=None,
                   need_dx=True, dx_cols=None):
    """Backpropagate through a ``layer_forward`` call.

    ``d_outs`` is the loss gradient w.r.t. every per-step output; ``dh_final``
    and ``dc_final`` w.r.t. the final state. Returns
    ``(dxs, dh0, dc0, dW_x, dW_h, db)``. ``dx_cols`` limits the input gradient
    to the leading input columns.
    """
    T, B, _ = cache.xs.shape
    H = W_h.shape[1]
    dh = np.zeros((B, H)) if dh_final is None else dh_final.copy()
    dc = np.zeros((B, H)) if dc_final is None else dc_final.copy()
    dW_x = np.zeros_like(W_x)
    dW_h = np.zeros_like(W_h)
    db = np.zeros(W_x.shape[0])
    W_in = W_x if dx_cols is None else W_x[:, :dx_cols]
    dxs = np.zeros((T, B, W_in.shape[1])) if need_dx else None
    dz = np.empty((B, 4 * H))

    for t, (h_prev, c_prev, i, f, o, g, tc) in zip(reversed(cache.order), reversed(cache.steps)):
        if d_outs is not None:
            dh = dh + d_outs[t]
        m = cache.mask[t][:, None]
        dh_new = m * dh
        dc_new = m * dc
        dc_tot = dc_new + dh_new * o * (1.0 - tc * tc)
        dz[:, :H] = dc_tot * g * i * (1.0 - i)
        dz[:, H : 2 * H] = dc_tot * c_prev * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dh_new * tc * o * (1.0 - o)
        dz[:, 3 * H :] = dc_tot * i * (1.0 - g * g)
        dW_x += dz.T @ cache.xs[t]
        dW_h += dz.T @ h_prev
        db += dz.sum(axis=0)
        if need_dx:
            dxs[t] = dz @ W_in
        dh = dz @ W_h + (1.0 - m) * dh
        dc = dc_tot * f + (1.0 - m) * dc
    return dxs, dh, dc, dW_x, dW_h, db

"""Functional building blocks for the sequence models.

Parameters live in a flat ``dict`` of name -> :class:`Tensor`; each function
takes the dict and a name prefix. Inputs are ``(B, T, F)`` or ``(T, F)``.
"""

from __future__ import annotations

import numpy as np

from imuplace.errors import ValidationError
from imuplace.neuralseq.tensor import (
    Tensor,
    as_tensor,
    concat,
    layer_norm,
    lstm_cell,
    softmax,
    stack,
)


def linear(x, W, b):
    """``x @ W + b`` over the last axis."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.shape[-1] != W.shape[0] or W.shape[1] != b.shape[-1]:
        raise ValidationError(
            f"linear shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}")
    return x @ W + b


def lstm_direction(x, W_ih, W_hh, b, reverse=False):
    """Run one LSTM direction over ``x`` of shape ``(B, T, F)`` -> ``(B, T, H)``.

    Gate layout along the last weight axis is ``[input, forget, cell, output]``.
    """
    bsz, t_len, _ = x.shape
    hdim = W_hh.shape[0]
    proj = x @ W_ih + b  # (B, T, 4H), all input projections at once
    h = Tensor(np.zeros((bsz, hdim)))
    c = Tensor(np.zeros((bsz, hdim)))
    outs = [None] * t_len
    steps = range(t_len - 1, -1, -1) if reverse else range(t_len)
    for t in steps:
        gates = proj[:, t, :] + h @ W_hh
        h, c = lstm_cell(gates, c)
        outs[t] = h
    return stack(outs, axis=1)


def bilstm_forward(x, params, prefix="lstm", layers=2):
    """Stacked bidirectional LSTM; output width is ``2 * hidden``."""
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    h = x
    for layer in range(layers):
        p = f"{prefix}.l{layer}"
        fwd = lstm_direction(h, params[f"{p}.fwd.W_ih"], params[f"{p}.fwd.W_hh"],
                             params[f"{p}.fwd.b"])
        bwd = lstm_direction(h, params[f"{p}.bwd.W_ih"], params[f"{p}.bwd.W_hh"],
                             params[f"{p}.bwd.b"], reverse=True)
        h = concat([fwd, bwd], axis=-1)
    return h.reshape(*h.shape[1:]) if squeeze else h


def positional_encoding(t_len, d):
    """Sinusoidal position table of shape ``(t_len, d)``.

    Even columns hold ``sin(pos / 10000**(2i/d))``, odd columns the cosine.
    """
    if d % 2:
        raise ValidationError(f"positional encoding needs an even width, got {d}")
    pos = np.arange(t_len, dtype=np.float64)[:, None]
    div = 10000.0 ** (np.arange(0, d, 2, dtype=np.float64) / d)
    pe = np.empty((t_len, d))
    pe[:, 0::2] = np.sin(pos / div)
    pe[:, 1::2] = np.cos(pos / div)
    return pe


def attention_weights(q, k):
    """Scaled dot-product attention weights, ``softmax(q k^T / sqrt(d))``."""
    scale = 1.0 / np.sqrt(q.shape[-1])
    return softmax((q @ k.swapaxes(-1, -2)) * scale, axis=-1)


def multi_head_attention(x, params, prefix, heads, return_weights=False):
    """Full (non-causal) multi-head self-attention over ``(B, T, d)``."""
    bsz, t_len, d = x.shape
    if d % heads:
        raise ValidationError(f"width {d} not divisible by {heads} heads")
    dh = d // heads

    def split(z):
        return z.reshape(bsz, t_len, heads, dh).transpose(0, 2, 1, 3)

    q = split(linear(x, params[f"{prefix}.Wq"], params[f"{prefix}.bq"]))
    k = split(linear(x, params[f"{prefix}.Wk"], params[f"{prefix}.bk"]))
    v = split(linear(x, params[f"{prefix}.Wv"], params[f"{prefix}.bv"]))
    w = attention_weights(q, k)  # (B, heads, T, T)
    ctx = (w @ v).transpose(0, 2, 1, 3).reshape(bsz, t_len, d)
    out = linear(ctx, params[f"{prefix}.Wo"], params[f"{prefix}.bo"])
    return (out, w) if return_weights else out


def encoder_layer(x, params, prefix, heads):
    """Post-norm encoder block: attention + residual + norm, then FFN + residual + norm."""
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    a = multi_head_attention(x, params, f"{prefix}.attn", heads)
    x = layer_norm(x + a, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    f = linear(x, params[f"{prefix}.ff.W1"], params[f"{prefix}.ff.b1"]).relu()
    f = linear(f, params[f"{prefix}.ff.W2"], params[f"{prefix}.ff.b2"])
    x = layer_norm(x + f, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])
    return x.reshape(*x.shape[1:]) if squeeze else x


def mse_loss(pred, target):
    """Mean of squared elementwise differences."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ValidationError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return (diff * diff).mean()

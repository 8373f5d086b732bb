"""Dense and LSTM layers with hand-written backward passes (float64, numpy).

Layers are functional: parameters are passed in explicitly, ``*_forward``
returns the output plus a cache, and ``*_backward`` consumes the cache and
an upstream gradient.

LSTM weights are fused: ``W`` has shape ``[n + h, 4h]`` with the input rows
first and the recurrent rows last; gate columns are ordered
``forget | input | output | candidate``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import DataError, ShapeError

ACTIVATIONS = ("tanh", "sigmoid", "identity")


def sigmoid(z):
    return expit(z)


def _activate(z, act):
    if act == "tanh":
        return np.tanh(z)
    if act == "sigmoid":
        return sigmoid(z)
    if act == "identity":
        return z
    raise ValueError(f"unknown activation {act!r}")


def _activation_grad(y, act):
    """Derivative expressed through the activation's output ``y``."""
    if act == "tanh":
        return 1.0 - y * y
    if act == "sigmoid":
        return y * (1.0 - y)
    return np.ones_like(y)


def dense_forward(W, b, x, act="identity"):
    """``y = act(x @ W + b)`` for ``x`` of shape ``[..., in]``."""
    if x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeError("dense input does not match weights", expected=(W.shape[0],), found=x.shape)
    y = _activate(x @ W + b, act)
    return y, (x, y, act)


def dense_backward(W, cache, dy):
    x, y, act = cache
    dz = dy * _activation_grad(y, act)
    x2 = x.reshape(-1, x.shape[-1])
    dz2 = dz.reshape(-1, dz.shape[-1])
    dW = x2.T @ dz2
    db = dz2.sum(axis=0)
    dx = dz @ W.T
    return dx, dW, db


def step_mask(x, mask_value=-1.0):
    """True where every feature of a time-step equals ``mask_value``."""
    return np.all(x == mask_value, axis=-1)


def lstm_forward(W, b, x, mask=None):
    """Run an LSTM over ``x`` of shape ``[B, T, n]`` from zero state.

    ``mask[B, T]`` marks steps to skip: on those steps the hidden and cell
    state are carried over untouched, so trailing masked steps cannot change
    the final state. Returns ``(hs [B, T, h], h_last [B, h], cache)``.
    """
    B, T, n = x.shape
    h_dim = W.shape[1] // 4
    if W.shape != (n + h_dim, 4 * h_dim) or b.shape != (4 * h_dim,):
        raise ShapeError("LSTM input does not match weights", expected=(n + h_dim, 4 * h_dim),
                         found=W.shape)
    Wx, Wh = W[:n], W[n:]
    xp = x @ Wx + b
    h = np.zeros((B, h_dim))
    c = np.zeros((B, h_dim))
    hs = np.empty((B, T, h_dim))
    gates = np.empty((T, B, 4 * h_dim))
    cs_prev = np.empty((T, B, h_dim))
    tanh_c = np.empty((T, B, h_dim))
    hs_prev = np.empty((T, B, h_dim))
    for t in range(T):
        z = xp[:, t] + h @ Wh
        a = np.empty_like(z)
        a[:, :3 * h_dim] = sigmoid(z[:, :3 * h_dim])
        a[:, 3 * h_dim:] = np.tanh(z[:, 3 * h_dim:])
        f, i, o, g = a[:, :h_dim], a[:, h_dim:2 * h_dim], a[:, 2 * h_dim:3 * h_dim], a[:, 3 * h_dim:]
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        gates[t], cs_prev[t], tanh_c[t], hs_prev[t] = a, c, tc, h
        if mask is not None:
            keep = mask[:, t, None]
            c_new = np.where(keep, c, c_new)
            h_new = np.where(keep, h, h_new)
        h, c = h_new, c_new
        hs[:, t] = h
    cache = (x, mask, gates, cs_prev, tanh_c, hs_prev)
    return hs, h, cache


def lstm_backward(W, cache, dhs=None, dh_last=None):
    """Backpropagation through time. Returns ``(dx, dW, db)``."""
    x, mask, gates, cs_prev, tanh_c, hs_prev = cache
    B, T, n = x.shape
    h_dim = W.shape[1] // 4
    Wx, Wh = W[:n], W[n:]
    dh = np.zeros((B, h_dim)) if dh_last is None else dh_last.copy()
    dc = np.zeros((B, h_dim))
    dz_all = np.empty((T, B, 4 * h_dim))
    for t in range(T - 1, -1, -1):
        if dhs is not None:
            dh = dh + dhs[:, t]
        a = gates[t]
        f, i, o, g = a[:, :h_dim], a[:, h_dim:2 * h_dim], a[:, 2 * h_dim:3 * h_dim], a[:, 3 * h_dim:]
        tc = tanh_c[t]
        dct = dc + dh * o * (1.0 - tc * tc)
        dz = np.empty((B, 4 * h_dim))
        dz[:, :h_dim] = dct * cs_prev[t] * f * (1.0 - f)
        dz[:, h_dim:2 * h_dim] = dct * g * i * (1.0 - i)
        dz[:, 2 * h_dim:3 * h_dim] = dh * tc * o * (1.0 - o)
        dz[:, 3 * h_dim:] = dct * i * (1.0 - g * g)
        dc_prev = dct * f
        if mask is not None:
            keep = mask[:, t, None]
            dz = np.where(keep, 0.0, dz)
            dh_prev = np.where(keep, dh, dz @ Wh.T)
            dc_prev = np.where(keep, dc, dc_prev)
        else:
            dh_prev = dz @ Wh.T
        dz_all[t] = dz
        dh, dc = dh_prev, dc_prev
    dz2 = dz_all.reshape(-1, 4 * h_dim)
    dWh = hs_prev.reshape(-1, h_dim).T @ dz2
    dWx = x.transpose(1, 0, 2).reshape(-1, n).T @ dz2
    db = dz2.sum(axis=0)
    dx = (dz_all @ Wx.T).transpose(1, 0, 2)
    return dx, np.concatenate([dWx, dWh]), db


def trim_masked_tail(x, mask):
    """Drop trailing steps that are masked for every sequence in the batch.

    Exact: masked steps never touch the state, so the final hidden state is
    unchanged. Raises if some sequence has no unmasked step at all.
    """
    live = ~mask
    if not live.any(axis=1).all():
        raise DataError("sequence with every time-step masked")
    last = int(np.flatnonzero(live.any(axis=0))[-1]) + 1
    return x[:, :last], mask[:, :last]

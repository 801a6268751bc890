"""Differentiable ops.

Each op accepts either a single example or a batch with a leading batch axis.
Batched sequence ops take ``lengths`` so padded positions never influence the
result. The LSTM and the convolution are fused: one graph node each, with
hand-written backward passes.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, accumulate, record

PROB_FLOOR = 1e-12


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def embed_sequence(token_ids, embedding_matrix: Tensor) -> Tensor:
    """Gather rows of ``embedding_matrix``: ids [T] -> [T, d], ids [B, T] -> [B, T, d]."""
    ids = np.asarray(token_ids)
    if ids.size == 0:
        raise ValueError("embed_sequence needs at least one token id")
    if not np.issubdtype(ids.dtype, np.integer):
        raise TypeError("token ids must be integers")
    vocab = embedding_matrix.shape[0]
    if ids.min() < 0 or ids.max() >= vocab:
        bad = ids[(ids < 0) | (ids >= vocab)][0]
        raise IndexError(f"token id {bad} outside [0, {vocab})")
    data = embedding_matrix.data[ids]

    def _back(g):
        if embedding_matrix.requires_grad:
            acc = np.zeros_like(embedding_matrix.data)
            np.add.at(acc, ids.reshape(-1), g.reshape(-1, g.shape[-1]))
            accumulate(embedding_matrix, acc)

    return record(data, (embedding_matrix,), _back)


def lstm_forward(inputs: Tensor, params, hidden: int, lengths=None, prefix: str = "lstm") -> Tensor:
    """Run an LSTM and return the hidden state after the last real step.

    Parameters are read from ``params`` as ``{prefix}.W`` [d, 4h],
    ``{prefix}.U`` [h, 4h] and ``{prefix}.b`` [4h]. The gate blocks along the
    last axis are ordered input, forget, cell candidate, output:

        i = sigmoid(.), f = sigmoid(.), g = tanh(.), o = sigmoid(.)
        c_t = f * c_{t-1} + i * g,   h_t = o * tanh(c_t)

    State starts at zero. For batched input [B, T, d], steps at or beyond
    ``lengths[b]`` leave row b's state untouched.
    """
    W, U, b = params[f"{prefix}.W"], params[f"{prefix}.U"], params[f"{prefix}.b"]
    x = inputs.data
    single = x.ndim == 2
    if single:
        x = x[None]
    B, T, d = x.shape
    h = hidden
    if W.shape != (d, 4 * h) or U.shape != (h, 4 * h) or b.shape != (4 * h,):
        raise ValueError(
            f"LSTM shape mismatch: input dim {d}, hidden {h}, got W{W.shape} U{U.shape} b{b.shape}"
        )
    lens = np.full(B, T) if lengths is None else np.asarray(lengths, dtype=int)
    if lens.shape != (B,) or (lens < 0).any() or (lens > T).any():
        raise ValueError("lengths must give one value in [0, T] per batch row")

    xw = (x.reshape(B * T, d) @ W.data).reshape(B, T, 4 * h) + b.data
    hs = np.zeros((T + 1, B, h))
    cs = np.zeros((T + 1, B, h))
    gates = np.zeros((T, B, 4 * h))
    tanh_c = np.zeros((T, B, h))
    masks = (np.arange(T)[:, None] < lens[None, :]).astype(np.float64)[..., None]
    for t in range(T):
        z = xw[:, t] + hs[t] @ U.data
        i = _sigmoid(z[:, :h])
        f = _sigmoid(z[:, h:2 * h])
        g = np.tanh(z[:, 2 * h:3 * h])
        o = _sigmoid(z[:, 3 * h:])
        c_new = f * cs[t] + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = masks[t]
        cs[t + 1] = m * c_new + (1 - m) * cs[t]
        hs[t + 1] = m * h_new + (1 - m) * hs[t]
        gates[t] = np.concatenate([i, f, g, o], axis=1)
        tanh_c[t] = tc
    out = hs[T].copy()

    def _back(grad):
        gh = grad[None].copy() if single else grad.copy()
        gc = np.zeros((B, h))
        dxw = np.zeros((B, T, 4 * h))
        dU = np.zeros_like(U.data)
        for t in range(T - 1, -1, -1):
            m = masks[t]
            i, f, g, o = (gates[t][:, k * h:(k + 1) * h] for k in range(4))
            tc = tanh_c[t]
            gh_new = gh * m
            gc_new = gc * m
            do = gh_new * tc
            dc = gc_new + gh_new * o * (1 - tc ** 2)
            di = dc * g
            dg = dc * i
            df = dc * cs[t]
            dz = np.concatenate(
                [di * i * (1 - i), df * f * (1 - f), dg * (1 - g ** 2), do * o * (1 - o)], axis=1
            )
            dxw[:, t] = dz
            dU += hs[t].T @ dz
            gh = gh * (1 - m) + dz @ U.data.T
            gc = gc * (1 - m) + dc * f
        flat = dxw.reshape(B * T, 4 * h)
        accumulate(W, x.reshape(B * T, d).T @ flat)
        accumulate(U, dU)
        accumulate(b, flat.sum(axis=0))
        if inputs.requires_grad:
            dx = (flat @ W.data.T).reshape(B, T, d)
            accumulate(inputs, dx[0] if single else dx)

    return record(out[0] if single else out, (inputs, W, U, b), _back)


def conv1d_maxpool(inputs: Tensor, filters: Tensor, bias: Tensor, lengths=None) -> Tensor:
    """Valid 1-D convolution over time, ReLU, then max over time per filter.

    ``inputs`` is [T, c] or [B, T, c]; ``filters`` is [K, w, c]. With
    ``lengths``, only windows starting before ``lengths[b]`` take part in
    the max, so windows made entirely of padding are ignored. Callers pad
    with at least ``w - 1`` zero rows so every real window exists.
    """
    x = inputs.data
    single = x.ndim == 2
    if single:
        x = x[None]
    B, T, C = x.shape
    K, w, c2 = filters.shape
    if c2 != C or bias.shape != (K,):
        raise ValueError(f"conv shape mismatch: input channels {C}, filters {filters.shape}, bias {bias.shape}")
    if T < w:
        raise ValueError(f"sequence length {T} shorter than filter width {w}")
    L = T - w + 1
    pre = np.zeros((B, L, K)) + bias.data
    for j in range(w):
        pre += x[:, j:j + L, :] @ filters.data[:, j, :].T
    act = np.maximum(pre, 0.0)
    if lengths is None:
        valid = np.ones((B, L), dtype=bool)
    else:
        lens = np.asarray(lengths, dtype=int)
        if (lens < 1).any():
            raise ValueError("every sequence needs at least one real position")
        valid = np.arange(L)[None, :] < lens[:, None]
    masked = np.where(valid[:, :, None], act, -np.inf)
    arg = masked.argmax(axis=1)  # [B, K]
    bi = np.arange(B)[:, None]
    ki = np.arange(K)[None, :]
    out = act[bi, arg, ki]

    def _back(grad):
        g = grad[None] if single else grad
        g_pre = np.zeros((B, L, K))
        g_pre[bi, arg, ki] = g * (pre[bi, arg, ki] > 0)
        accumulate(bias, g_pre.sum(axis=(0, 1)))
        flat_g = g_pre.reshape(B * L, K)
        df = np.zeros_like(filters.data)
        dx = np.zeros_like(x) if inputs.requires_grad else None
        for j in range(w):
            df[:, j, :] = flat_g.T @ x[:, j:j + L, :].reshape(B * L, C)
            if dx is not None:
                dx[:, j:j + L, :] += g_pre @ filters.data[:, j, :]
        accumulate(filters, df)
        if dx is not None:
            accumulate(inputs, dx[0] if single else dx)

    return record(out[0] if single else out, (inputs, filters, bias), _back)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _back(g):
        for t, part in zip(tensors, np.split(g, sizes, axis=axis)):
            accumulate(t, part)

    return record(data, tuple(tensors), _back)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity outside training."""
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def _back(g):
        accumulate(x, g * keep)

    return record(x.data * keep, (x,), _back)


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``W x + b`` for x [n] or [B, n]; weights are [m, n]."""
    if weights.shape[1] != x.shape[-1] or bias.shape != (weights.shape[0],):
        raise ValueError(f"dense shape mismatch: x{x.shape} W{weights.shape} b{bias.shape}")
    data = x.data @ weights.data.T + bias.data

    def _back(g):
        g2 = g.reshape(-1, g.shape[-1])
        accumulate(weights, g2.T @ x.data.reshape(-1, x.shape[-1]))
        accumulate(bias, g2.sum(axis=0))
        accumulate(x, g @ weights.data)

    return record(data, (x, weights, bias), _back)


def softmax(logits: Tensor) -> Tensor:
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def _back(g):
        accumulate(logits, p * (g - (g * p).sum(axis=-1, keepdims=True)))

    return record(p, (logits,), _back)


def dense_softmax(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    return softmax(dense(x, weights, bias))


def cross_entropy(pred: Tensor, target, class_weights=None) -> Tensor:
    """``-log(max(pred[target], 1e-12))``; batches reduce to a weighted mean.

    With ``class_weights`` the batch mean is ``sum(w_y * ce) / sum(w_y)``.
    """
    p = pred.data
    if p.ndim == 1:
        t = int(target)
        if not 0 <= t < p.shape[0]:
            raise IndexError(f"target class {t} outside [0, {p.shape[0]})")
        val = max(p[t], PROB_FLOOR)

        def _back1(g):
            grad = np.zeros_like(p)
            if p[t] > PROB_FLOOR:
                grad[t] = -g / p[t]
            accumulate(pred, grad)

        return record(np.array(-np.log(val)), (pred,), _back1)

    targets = np.asarray(target, dtype=int)
    B, m = p.shape
    if targets.shape != (B,) or (targets < 0).any() or (targets >= m).any():
        raise IndexError("targets must hold one class index in range per batch row")
    w = np.ones(B) if class_weights is None else np.asarray(class_weights, dtype=np.float64)[targets]
    rows = np.arange(B)
    picked = p[rows, targets]
    ce = -np.log(np.maximum(picked, PROB_FLOOR))
    total = w.sum()
    value = (w * ce).sum() / total

    def _back(g):
        grad = np.zeros_like(p)
        live = picked > PROB_FLOOR
        grad[rows[live], targets[live]] = -g * w[live] / (total * picked[live])
        accumulate(pred, grad)

    return record(np.array(value), (pred,), _back)

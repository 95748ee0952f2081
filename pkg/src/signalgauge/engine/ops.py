"""Forward/backward kernels on NCHW numpy arrays.

Every function is dtype-preserving: the network runs them in float32 and the
gradient checks run the same code in float64.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import BadLabel, ShapeMismatch


def conv_output_dim(size: int, kernel: int, stride: int, padding: int = 0) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Patches of ``x`` (N, C, H, W) as (N, Ho, Wo, C*kh*kw)."""
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # win: (N, C, Ho, Wo, kh, kw)
    n, c, ho, wo = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho, wo, c * kh * kw)


def conv_forward(x, weights, bias, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation of ``x`` (N, C, H, W) with ``weights`` (K, C, kh, kw)."""
    if x.ndim != 4 or weights.ndim != 4:
        raise ShapeMismatch(f"conv expects 4-D input and weights, got {x.shape}, {weights.shape}")
    n, c, h, w = x.shape
    k, wc, kh, kw = weights.shape
    if wc != c:
        raise ShapeMismatch(f"input has {c} channels, weights expect {wc}")
    if bias.shape != (k,):
        raise ShapeMismatch(f"bias shape {bias.shape} != ({k},)")
    if conv_output_dim(h, kh, stride, padding) < 1 or conv_output_dim(w, kw, stride, padding) < 1:
        raise ShapeMismatch(f"{kh}x{kw} kernel does not fit a {h}x{w} input")
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = im2col(x, kh, kw, stride)
    out = cols @ weights.reshape(k, -1).T + bias  # (N, Ho, Wo, K)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv_backward(grad_out, x, weights, stride: int = 1, padding: int = 0, input_grad: bool = True):
    """Gradients of :func:`conv_forward` w.r.t. input, weights and bias.

    With ``input_grad=False`` the input gradient is skipped and returned as
    ``None`` (first layer of a network).
    """
    n, c, h, w = x.shape
    k, _, kh, kw = weights.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    _, _, ho, wo = grad_out.shape
    g = grad_out.transpose(0, 2, 3, 1).reshape(-1, k)  # (N*Ho*Wo, K)
    cols = im2col(xp, kh, kw, stride).reshape(-1, c * kh * kw)
    grad_w = (g.T @ cols).reshape(weights.shape)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    if not input_grad:
        return None, grad_w, grad_b
    dcols = (g @ weights.reshape(k, -1)).reshape(n, ho, wo, c, kh, kw)
    dxp = np.zeros(xp.shape, dtype=np.result_type(grad_out, weights))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    if padding:
        dxp = dxp[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(dxp), grad_w, grad_b


def maxpool_forward(x, side: int):
    """Non-overlapping ``side`` x ``side`` max-pool.

    Returns the pooled map and, per output cell, the row-major index of the
    winning input inside its window (first maximum wins on ties). The index
    array is what :func:`maxpool_backward` consumes.
    """
    n, c, h, w = x.shape
    if side < 1 or h % side or w % side:
        raise ShapeMismatch(f"{h}x{w} map is not divisible by pool side {side}")
    views = [x[:, :, i::side, j::side] for i in range(side) for j in range(side)]
    out = views[0].copy()
    for v in views[1:]:
        np.maximum(out, v, out=out)
    arg = np.zeros(out.shape, dtype=np.int8)
    # walk backwards so the first maximum in row-major order is the one kept
    for k in range(side * side - 1, 0, -1):
        arg[views[k] == out] = k
    arg[views[0] == out] = 0
    return out, arg


def maxpool_backward(grad_out, argmax, side: int) -> np.ndarray:
    n, c, ho, wo = grad_out.shape
    if argmax.shape != grad_out.shape:
        raise ShapeMismatch(f"argmax shape {argmax.shape} != grad shape {grad_out.shape}")
    dx = np.zeros((n, c, ho * side, wo * side), dtype=grad_out.dtype)
    for k in range(side * side):
        i, j = divmod(k, side)
        dx[:, :, i::side, j::side] = np.where(argmax == k, grad_out, 0)
    return dx


def dense_forward(x, weights, bias) -> np.ndarray:
    """``y = W x + b`` for each row of ``x``; ``weights`` is (out, in)."""
    if x.shape[-1] != weights.shape[1] or bias.shape != (weights.shape[0],):
        raise ShapeMismatch(
            f"dense: input {x.shape}, weights {weights.shape}, bias {bias.shape}"
        )
    return x @ weights.T + bias


def dense_backward(grad_out, x, weights):
    grad_x = grad_out @ weights
    grad_w = grad_out.T @ x if x.ndim == 2 else np.outer(grad_out, x)
    grad_b = grad_out.sum(axis=0) if grad_out.ndim == 2 else grad_out
    return grad_x, grad_w, grad_b


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    return grad_out * (x > 0)


def dropout(x, rate: float, mode: str = "train", seed=None):
    """Inverted dropout. Returns ``(output, mask)``; the mask is ``None`` in eval mode.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x, None
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, label):
    """Loss and logit gradient; batched input averages over the batch.

    ``logits`` is (C,) with an int ``label`` or (N, C) with an int array.
    """
    logits = np.asarray(logits)
    single = logits.ndim == 1
    z = logits[None] if single else logits
    labels = np.atleast_1d(np.asarray(label))
    if labels.shape[0] != z.shape[0]:
        raise ShapeMismatch(f"{z.shape[0]} logit rows but {labels.shape[0]} labels")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= z.shape[1]:
        raise BadLabel(f"labels must be integers in [0, {z.shape[1]})")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    loss = float(np.mean(log_norm - shifted[rows, labels]))
    grad = np.exp(shifted - log_norm[:, None])
    grad[rows, labels] -= 1
    grad /= z.shape[0]
    return loss, (grad[0] if single else grad)

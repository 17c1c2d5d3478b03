"""Pure-numpy implementations of the hot kernels.

Semantically identical to the numba twins in ``numba_impl``; used when the
numpy backend is selected (see ``inrstore.backend``).
"""

import numpy as np


def gather_rows(table, idx, w):
    """Weighted gather: out[b] = sum_c w[b,c] * table[idx[b,c]].

    idx entries of -1 contribute nothing (missing sparse voxels).
    """
    valid = idx >= 0
    safe = np.where(valid, idx, 0)
    contrib = table[safe] * (w * valid)[:, :, None]
    return contrib.sum(axis=1)


def scatter_rows(grad_table, idx, w, gout):
    """Transpose of gather_rows: accumulate gout into grad_table rows in place."""
    b, c = idx.shape
    valid = idx >= 0
    safe = np.where(valid, idx, 0)
    contrib = (w * valid)[:, :, None] * gout[:, None, :]
    np.add.at(grad_table, safe.reshape(-1), contrib.reshape(b * c, -1))


def conv3d_down_forward(x, kern, bias):
    """Non-overlapping 2x2x2 stride-2 convolution; channels C -> O."""
    c, d = x.shape[0], x.shape[1]
    h = d // 2
    xr = x.reshape(c, h, 2, h, 2, h, 2)
    out = np.einsum("ciajbkd,ocabd->oijk", xr, kern, optimize=True)
    return out + bias[:, None, None, None]


def conv3d_down_backward(x, kern, gout):
    """Gradients of conv3d_down_forward w.r.t. input, kernel and bias."""
    c, d = x.shape[0], x.shape[1]
    h = d // 2
    xr = x.reshape(c, h, 2, h, 2, h, 2)
    gb = gout.sum(axis=(1, 2, 3))
    gk = np.einsum("oijk,ciajbkd->ocabd", gout, xr, optimize=True)
    gx = np.einsum("oijk,ocabd->ciajbkd", gout, kern, optimize=True)
    return gx.reshape(c, d, d, d), gk, gb


def nn_min_dists(p, q, block=128):
    """Per-point Euclidean distance from each row of p to its nearest row of q."""
    n = p.shape[0]
    out = np.empty(n, dtype=p.dtype)
    for s in range(0, n, block):
        pb = p[s : s + block]
        d2 = ((pb[:, None, :] - q[None, :, :]) ** 2).sum(axis=2)
        out[s : s + block] = np.sqrt(d2.min(axis=1))
    return out


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, step, weight_decay):
    """Fused in-place Adam/AdamW update with bias correction.

    Decoupled weight decay (p <- p * (1 - lr*wd)) is applied before the
    Adam delta; weight_decay = 0 gives plain Adam.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    if weight_decay != 0.0:
        param *= 1.0 - lr * weight_decay
    param -= lr * mhat / (np.sqrt(vhat) + eps)

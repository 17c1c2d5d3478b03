"""Numba-compiled twins of the hot kernels (see ``numpy_impl`` for contracts)."""

import numpy as np
from numba import njit


@njit(cache=True)
def gather_rows(table, idx, w):
    b, c = idx.shape
    f = table.shape[1]
    out = np.zeros((b, f), dtype=table.dtype)
    for i in range(b):
        for j in range(c):
            k = idx[i, j]
            if k < 0:
                continue
            wij = w[i, j]
            for t in range(f):
                out[i, t] += wij * table[k, t]
    return out


@njit(cache=True)
def scatter_rows(grad_table, idx, w, gout):
    b, c = idx.shape
    f = grad_table.shape[1]
    for i in range(b):
        for j in range(c):
            k = idx[i, j]
            if k < 0:
                continue
            wij = w[i, j]
            for t in range(f):
                grad_table[k, t] += wij * gout[i, t]


@njit(cache=True)
def _im2col(x, h):
    """Non-overlapping 2x2x2 windows as rows: (h^3, C*8)."""
    c = x.shape[0]
    cols = np.empty((h * h * h, c * 8), dtype=x.dtype)
    for i in range(h):
        for j in range(h):
            for k in range(h):
                row = (i * h + j) * h + k
                col = 0
                for ic in range(c):
                    for a in range(2):
                        for b2 in range(2):
                            for c2 in range(2):
                                cols[row, col] = x[ic, 2 * i + a, 2 * j + b2, 2 * k + c2]
                                col += 1
    return cols


@njit(cache=True)
def conv3d_down_forward(x, kern, bias):
    c, d = x.shape[0], x.shape[1]
    o = kern.shape[0]
    h = d // 2
    cols = _im2col(x, h)
    kmat_t = np.ascontiguousarray(kern.reshape(o, c * 8).T)
    out_mat = np.dot(cols, kmat_t)  # (h^3, O)
    out = np.empty((o, h, h, h), dtype=x.dtype)
    for oc in range(o):
        for i in range(h):
            for j in range(h):
                for k in range(h):
                    out[oc, i, j, k] = out_mat[(i * h + j) * h + k, oc] + bias[oc]
    return out


@njit(cache=True)
def conv3d_down_backward(x, kern, gout):
    c, d = x.shape[0], x.shape[1]
    o = kern.shape[0]
    h = d // 2
    n = h * h * h
    gout_mat = np.empty((n, o), dtype=x.dtype)
    gb = np.zeros(o, dtype=x.dtype)
    for oc in range(o):
        acc = 0.0
        for i in range(h):
            for j in range(h):
                for k in range(h):
                    g = gout[oc, i, j, k]
                    gout_mat[(i * h + j) * h + k, oc] = g
                    acc += g
        gb[oc] = acc
    cols = _im2col(x, h)
    gk = np.dot(gout_mat.T.copy(), cols).reshape(kern.shape)
    gcols = np.dot(gout_mat, kern.reshape(o, c * 8))  # (n, C*8)
    # windows are disjoint, so col2im is a plain copy
    gx = np.empty_like(x)
    for i in range(h):
        for j in range(h):
            for k in range(h):
                row = (i * h + j) * h + k
                col = 0
                for ic in range(c):
                    for a in range(2):
                        for b2 in range(2):
                            for c2 in range(2):
                                gx[ic, 2 * i + a, 2 * j + b2, 2 * k + c2] = gcols[row, col]
                                col += 1
    return gx, gk, gb


@njit(cache=True)
def nn_min_dists(p, q):
    n = p.shape[0]
    m = q.shape[0]
    out = np.empty(n, dtype=p.dtype)
    for i in range(n):
        best = np.inf
        px, py, pz = p[i, 0], p[i, 1], p[i, 2]
        for j in range(m):
            dx = px - q[j, 0]
            dy = py - q[j, 1]
            dz = pz - q[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < best:
                best = d2
        out[i] = np.sqrt(best)
    return out


@njit(cache=True)
def adam_update(param, grad, m, v, lr, beta1, beta2, eps, step, weight_decay):
    pf = param.reshape(-1)
    gf = grad.reshape(-1)
    mf = m.reshape(-1)
    vf = v.reshape(-1)
    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    decay = 1.0 - lr * weight_decay
    for i in range(pf.shape[0]):
        g = gf[i]
        mf[i] = beta1 * mf[i] + (1.0 - beta1) * g
        vf[i] = beta2 * vf[i] + (1.0 - beta2) * g * g
        mhat = mf[i] / c1
        vhat = vf[i] / c2
        if weight_decay != 0.0:
            pf[i] *= decay
        pf[i] -= lr * mhat / (np.sqrt(vhat) + eps)

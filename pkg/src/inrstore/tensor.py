"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a row-major numpy array (float32 for training, float64
for gradient checking). Operations executed while gradients are enabled
record themselves on an implicit tape: each output keeps references to its
parents plus a closure that propagates the output gradient. ``backward()``
on a scalar replays the tape once in reverse topological order; the tape is
consumed afterwards and a second backward raises.

Only the shapes this package needs are supported; there is no general
broadcasting beyond "numpy-compatible with gradient reduction" and no GPU
path.
"""

import contextlib

import numpy as np

from . import kernels
from .errors import ContractError, ShapeMismatchError, TapeConsumedError

_grad_enabled = True


def is_grad_enabled():
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (pure evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bw", "_spent", "_is_leaf")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None and not isinstance(data, (np.ndarray, np.generic)):
            dtype = np.float32  # python lists/scalars default to training dtype
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._bw = None
        self._spent = False
        self._is_leaf = True

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def assert_finite(self, what="tensor"):
        if not np.all(np.isfinite(self.data)):
            from .errors import NumericError

            raise NumericError(f"{what} contains NaN/Inf")
        return self

    # -- gradient bookkeeping --------------------------------------------------

    def _accum(self, g, own=False):
        # own=True means g is freshly allocated and safe to adopt without copy
        if self.grad is None:
            self.grad = g if own and g.flags.writeable else g.copy()
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Propagate gradients from this scalar to all requires_grad leaves."""
        if self.data.size != 1:
            raise ContractError("backward requires a single-element tensor")
        if self._spent:
            raise TapeConsumedError("backward already ran on this recorded pass")

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            if not node._is_leaf and node._spent:
                raise TapeConsumedError("graph reuses an intermediate from a consumed tape")
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._bw is not None and node.grad is not None:
                node._bw(node.grad)
            # consume: free closures, keep leaf grads
            if not node._is_leaf:
                node._bw = None
                node._parents = ()
                node._spent = True
                if not node.requires_grad:
                    node.grad = None
        self._spent = True


def as_tensor(x, dtype=np.float32):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def parameter(data, dtype=np.float32):
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


def _record(data, parents, bw):
    """Create an op output; attach tape edges when gradients are flowing."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bw = bw
        out._is_leaf = False
    return out


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _accum_unbroadcast(t, g, own=False):
    u = _unbroadcast(g, t.data.shape)
    t._accum(u, own=own or u is not g)


def _check_dtypes(a, b):
    if a.data.dtype != b.data.dtype:
        raise ShapeMismatchError(
            f"mixed dtypes {a.data.dtype} vs {b.data.dtype}; cast explicitly"
        )


def _coerce_pair(a, b):
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise TypeError("at least one operand must be a Tensor")
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.data.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.data.dtype))
    _check_dtypes(a, b)
    return a, b


# -- elementwise arithmetic ----------------------------------------------------


def add(a, b):
    a, b = _coerce_pair(a, b)
    out_data = a.data + b.data

    def bw(g):
        if a.requires_grad:
            _accum_unbroadcast(a, g)
        if b.requires_grad:
            _accum_unbroadcast(b, g)

    return _record(out_data, (a, b), bw)


def sub(a, b):
    a, b = _coerce_pair(a, b)
    out_data = a.data - b.data

    def bw(g):
        if a.requires_grad:
            _accum_unbroadcast(a, g)
        if b.requires_grad:
            _accum_unbroadcast(b, -g, own=True)

    return _record(out_data, (a, b), bw)


def mul(a, b):
    a, b = _coerce_pair(a, b)
    out_data = a.data * b.data

    def bw(g):
        if a.requires_grad:
            _accum_unbroadcast(a, g * b.data, own=True)
        if b.requires_grad:
            _accum_unbroadcast(b, g * a.data, own=True)

    return _record(out_data, (a, b), bw)


def div(a, b):
    a, b = _coerce_pair(a, b)
    out_data = a.data / b.data

    def bw(g):
        if a.requires_grad:
            _accum_unbroadcast(a, g / b.data, own=True)
        if b.requires_grad:
            _accum_unbroadcast(b, -g * a.data / (b.data * b.data), own=True)

    return _record(out_data, (a, b), bw)


def neg(a):
    def bw(g):
        if a.requires_grad:
            a._accum(-g, own=True)

    return _record(-a.data, (a,), bw)


# -- matrix ops ------------------------------------------------------------------


def matmul(a, b):
    _check_dtypes(a, b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatchError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatchError(
            f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}"
        )
    out_data = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            a._accum(g @ b.data.T, own=True)
        if b.requires_grad:
            b._accum(a.data.T @ g, own=True)

    return _record(out_data, (a, b), bw)


def linear(x, weight, bias):
    """x (B,I) @ weight (I,O) + bias (O,)."""
    if bias.data.ndim != 1 or bias.data.shape[0] != weight.data.shape[1]:
        raise ShapeMismatchError(
            f"bias shape {bias.data.shape} does not match weight {weight.data.shape}"
        )
    return add(matmul(x, weight), bias)


# -- nonlinearities ----------------------------------------------------------------


def relu(a):
    out_data = np.maximum(a.data, 0)

    def bw(g):
        if a.requires_grad:
            a._accum(g * (a.data > 0), own=True)

    return _record(out_data, (a,), bw)


def sin(a):
    out_data = np.sin(a.data)

    def bw(g):
        if a.requires_grad:
            a._accum(g * np.cos(a.data), own=True)

    return _record(out_data, (a,), bw)


def absolute(a):
    out_data = np.abs(a.data)

    def bw(g):
        if a.requires_grad:
            a._accum(g * np.sign(a.data), own=True)

    return _record(out_data, (a,), bw)


def square(a):
    out_data = a.data * a.data

    def bw(g):
        if a.requires_grad:
            a._accum(g * (2.0 * a.data), own=True)

    return _record(out_data, (a,), bw)


def sqrt(a):
    out_data = np.sqrt(a.data)

    def bw(g):
        if a.requires_grad:
            a._accum(g * (0.5 / out_data), own=True)

    return _record(out_data, (a,), bw)


# -- reductions -------------------------------------------------------------------


def tsum(a, axis=None):
    out_data = a.data.sum(axis=axis)

    def bw(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accum(np.broadcast_to(g, a.data.shape).copy(), own=True)
        else:
            a._accum(np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy(), own=True)

    return _record(out_data, (a,), bw)


def tmean(a, axis=None):
    count = a.data.size if axis is None else a.data.shape[axis]
    out_data = a.data.mean(axis=axis)

    def bw(g):
        if not a.requires_grad:
            return
        scale = np.asarray(1.0 / count, dtype=a.data.dtype)
        if axis is None:
            a._accum(np.broadcast_to(g * scale, a.data.shape).copy(), own=True)
        else:
            a._accum(
                np.broadcast_to(np.expand_dims(g * scale, axis), a.data.shape).copy(),
                own=True,
            )

    return _record(out_data, (a,), bw)


def max_rows(a):
    """Elementwise max over rows of a 2-D tensor: (R,C) -> (C,).

    Gradient routes to the first maximal row per column.
    """
    if a.data.ndim != 2:
        raise ShapeMismatchError("max_rows expects a 2-D tensor")
    arg = a.data.argmax(axis=0)
    out_data = a.data[arg, np.arange(a.data.shape[1])]

    def bw(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            ga[arg, np.arange(a.data.shape[1])] = g
            a._accum(ga, own=True)

    return _record(out_data, (a,), bw)


# -- shape ops ----------------------------------------------------------------------


def reshape(a, shape):
    out_data = a.data.reshape(shape)

    def bw(g):
        if a.requires_grad:
            a._accum(g.reshape(a.data.shape), own=False)

    return _record(out_data, (a,), bw)


def concat(tensors, axis=-1):
    tensors = list(tensors)
    for t in tensors[1:]:
        _check_dtypes(tensors[0], t)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, s, e in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(s, e)
                t._accum(g[tuple(sl)])

    return _record(out_data, tuple(tensors), bw)


def slice_rows(a, start, stop):
    """Rows [start:stop) of a 2-D tensor; gradient scatters back in place."""
    if a.data.ndim != 2:
        raise ShapeMismatchError("slice_rows expects a 2-D tensor")
    out_data = a.data[start:stop]

    def bw(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            ga[start:stop] = g
            a._accum(ga, own=True)

    return _record(out_data, (a,), bw)


def expand_rows(v, n):
    """Tile a vector (F,) into (n,F); gradient sums over rows."""
    if v.data.ndim != 1:
        raise ShapeMismatchError("expand_rows expects a 1-D tensor")
    out_data = np.broadcast_to(v.data, (n, v.data.shape[0])).copy()

    def bw(g):
        if v.requires_grad:
            v._accum(g.sum(axis=0), own=True)

    return _record(out_data, (v,), bw)


# -- structured ops ---------------------------------------------------------------


def conv3d_down(x, kern, bias):
    """Stride-2, kernel-2, non-overlapping 3-D convolution.

    x: (C,D,D,D) with D even; kern: (O,C,2,2,2); bias: (O,). Output
    (O,D/2,D/2,D/2).
    """
    _check_dtypes(x, kern)
    _check_dtypes(x, bias)
    if x.data.ndim != 4:
        raise ShapeMismatchError("conv3d_down expects input (C,D,D,D)")
    c, d = x.data.shape[0], x.data.shape[1]
    if x.data.shape[2] != d or x.data.shape[3] != d:
        raise ShapeMismatchError("conv3d_down expects cubic input")
    if d % 2 != 0 or d < 2:
        raise ShapeMismatchError(f"spatial size must be even and >= 2, got {d}")
    if kern.data.ndim != 5 or kern.data.shape[1:] != (c, 2, 2, 2):
        raise ShapeMismatchError(
            f"kernel shape {kern.data.shape} incompatible with input channels {c}"
        )
    o = kern.data.shape[0]
    if bias.data.shape != (o,):
        raise ShapeMismatchError("bias must have one entry per output channel")

    out_data = kernels.conv3d_down_forward(x.data, kern.data, bias.data)

    def bw(g):
        g = np.ascontiguousarray(g)
        gx, gk, gb = kernels.conv3d_down_backward(x.data, kern.data, g)
        if x.requires_grad:
            x._accum(gx, own=True)
        if kern.requires_grad:
            kern._accum(gk, own=True)
        if bias.requires_grad:
            bias._accum(gb, own=True)

    return _record(out_data, (x, kern, bias), bw)


def softmax_cross_entropy(logits, onehot):
    """Mean cross entropy between row-softmax(logits) and one-hot targets."""
    if logits.data.shape != onehot.data.shape:
        raise ShapeMismatchError("logits and targets must share a shape")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    b = logits.data.shape[0]
    eps = np.finfo(logits.data.dtype).tiny
    loss = -(onehot.data * np.log(p + eps)).sum() / b

    def bw(g):
        if logits.requires_grad:
            logits._accum(g * (p - onehot.data) / b, own=True)

    return _record(np.asarray(loss, dtype=logits.data.dtype), (logits, onehot), bw)


# -- operator sugar -----------------------------------------------------------------

Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = lambda self, other: div(self, other)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__matmul__ = lambda self, other: matmul(self, other)

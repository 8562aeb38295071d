"""Reverse-mode autodiff over numpy arrays.

Small tape-based engine: coarse ops (matmul, recurrent cell, fused
cross-entropy) keep graphs short, and the LSTM cell is backed by the
compiled kernel when available. Everything runs in float64 by default so
finite-difference checks are meaningful.
"""

import numpy as np

from . import _core


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)  # own a copy
        else:
            self.grad += g

    def _accumulate_at(self, idx, g):
        """Accumulate into a slice; allocates the zero buffer once."""
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad[idx] += g

    def backward(self, grad=None):
        """Backpropagate from this node (default seed: ones)."""
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        if grad is None:
            grad = np.ones_like(self.data)
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division unsupported; use mul+pow")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _make(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(-g, b.data.shape))

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b):
    a = _as_tensor(a)
    if not isinstance(b, Tensor):
        s = float(b)

        def bw_s(g):
            a._accumulate(g * s)

        return _make(a.data * s, (a,), bw_s)

    def bw(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), bw)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return _make(a.data @ b.data, (a, b), bw)


def tanh(a):
    out_data = np.tanh(a.data)

    def bw(g):
        a._accumulate(g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), bw)


def sigmoid(a):
    out_data = np.empty_like(a.data)
    pos = a.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ex = np.exp(a.data[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def bw(g):
        a._accumulate(g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), bw)


def exp(a):
    out_data = np.exp(a.data)

    def bw(g):
        a._accumulate(g * out_data)

    return _make(out_data, (a,), bw)


def log(a):
    def bw(g):
        a._accumulate(g / a.data)

    return _make(np.log(a.data), (a,), bw)


def tsum(a, axis=None, keepdims=False):
    def bw(g):
        if axis is None or keepdims:
            gg = g
        else:
            gg = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(gg, a.data.shape).copy())

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def tmean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    def bw(g):
        a._accumulate(g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), bw)


def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, s, e in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(s, e)
            t._accumulate(g[tuple(idx)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis),
                 tensors, bw)


def narrow(a, axis, start, length):
    """Contiguous slice [start, start+length) along `axis`."""
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def bw(g):
        a._accumulate_at(idx, g)

    return _make(a.data[idx], (a,), bw)


def stack(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]

    def bw(g):
        for k, t in enumerate(tensors):
            t._accumulate(np.take(g, k, axis=axis))

    return _make(np.stack([t.data for t in tensors], axis=axis), tensors, bw)


def embedding(table, ids):
    """Row gather: table (V, E), integer ids of any shape -> (..., E)."""
    ids = np.asarray(ids, dtype=np.int64)

    def bw(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids.reshape(-1),
                  g.reshape(-1, table.data.shape[1]))

    return _make(table.data[ids], (table,), bw)


def gather_bt(stacked, steps):
    """stacked (T, B, H), steps (B,) -> (B, H) picking stacked[steps[b], b]."""
    steps = np.asarray(steps, dtype=np.int64)
    batch = np.arange(steps.shape[0])

    def bw(g):
        stacked._accumulate_at((steps, batch), g)

    return _make(stacked.data[steps, batch], (stacked,), bw)


def l2_normalize(a, eps=1e-8):
    """Normalize along the last axis; gradient treats a floored norm as
    constant below eps."""
    norm = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=True))
    denom = np.maximum(norm, eps)
    out_data = a.data / denom

    def bw(g):
        live = (norm > eps).astype(np.float64)
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        a._accumulate((g - live * out_data * dot) / denom)

    return _make(out_data, (a,), bw)


def softmax_cross_entropy(logits, targets):
    """Per-row NLL of integer `targets` under softmax(logits).

    logits (N, V), targets (N,) -> (N,) tensor. Fused for stability.
    """
    targets = np.asarray(targets, dtype=np.int64)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sez = ez.sum(axis=1, keepdims=True)
    logp = z - np.log(sez)
    rows = np.arange(targets.shape[0])
    nll = -logp[rows, targets]

    def bw(g):
        soft = ez / sez
        soft[rows, targets] -= 1.0
        logits._accumulate(soft * g[:, None])

    return _make(nll, (logits,), bw)


def lstm_cell(pre, c_prev):
    """LSTM cell step; returns [h; c] concatenated as (B, 2H)."""
    h, c, gates = _core.lstm_cell_forward(
        np.ascontiguousarray(pre.data), np.ascontiguousarray(c_prev.data))
    hdim = c.shape[1]

    def bw(g):
        dh = np.ascontiguousarray(g[:, :hdim])
        dc = np.ascontiguousarray(g[:, hdim:])
        dpre, dc_prev = _core.lstm_cell_backward(
            dh, dc, gates, np.ascontiguousarray(c_prev.data), c)
        pre._accumulate(dpre)
        c_prev._accumulate(dc_prev)

    return _make(np.concatenate([h, c], axis=1), (pre, c_prev), bw)

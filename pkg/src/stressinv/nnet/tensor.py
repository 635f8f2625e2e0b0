"""Reverse-mode automatic differentiation over dense float64 arrays.

Every differentiable primitive records its inputs and a backward closure on
an implicit tape (the node graph). Calling ``backward()`` on a scalar result
topologically sorts the graph and accumulates gradients into every node with
``requires_grad`` set.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

# Recording state is thread-local so concurrent inference (e.g. parallel
# comparison cells) cannot clobber another thread's gradient mode.
_state = threading.local()


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def grad_enabled():
    return getattr(_state, "enabled", True)


class NumericError(ArithmeticError):
    """Raised when a forward value leaves the finite range."""


def _unbroadcast(grad, shape):
    """Reduce ``grad`` back to ``shape`` by summing over broadcast axes."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _as_array(x):
    if isinstance(x, np.ndarray) and x.dtype == np.float64:
        return x
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """A float64 array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def _accumulate(self, grad):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self):
        """Backpropagate from this scalar through the recorded tape."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        if self._consumed:
            raise RuntimeError("tape already consumed by a previous backward()")
        self._consumed = True
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    """Build an output node; record the tape edge only when needed."""
    track = grad_enabled() and any(p.requires_grad for p in parents)
    if track:
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


def _binary(a, b, out_data, da, db):
    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(da(g), a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(db(g), b.data.shape))

    return _make(out_data, (a, b), bw)


def add(a, b):
    a, b = _lift(a), _lift(b)
    return _binary(a, b, a.data + b.data, lambda g: g, lambda g: g)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    return _binary(a, b, a.data - b.data, lambda g: g, lambda g: -g)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    return _binary(a, b, a.data * b.data, lambda g: g * b.data, lambda g: g * a.data)


def div(a, b):
    a, b = _lift(a), _lift(b)
    out = a.data / b.data
    return _binary(a, b, out, lambda g: g / b.data, lambda g: -g * out / b.data)


def matmul(a, b):
    a, b = _lift(a), _lift(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(a.data @ b.data, (a, b), bw)


def neg(a):
    a = _lift(a)
    return _make(-a.data, (a,), lambda g: a._accumulate(-g))


def pow_(a, exponent):
    a = _lift(a)
    e = float(exponent)
    out = a.data ** e
    return _make(out, (a,), lambda g: a._accumulate(g * e * a.data ** (e - 1.0)))


def exp(a):
    a = _lift(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: a._accumulate(g * out))


def log(a):
    a = _lift(a)
    return _make(np.log(a.data), (a,), lambda g: a._accumulate(g / a.data))


def sqrt(a):
    a = _lift(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: a._accumulate(g * 0.5 / out))


def tanh(a):
    a = _lift(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: a._accumulate(g * (1.0 - out * out)))


def sigmoid(a):
    a = _lift(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, (a,), lambda g: a._accumulate(g * out * (1.0 - out)))


def leaky_relu(a, slope=0.01):
    a = _lift(a)
    pos = a.data >= 0
    out = np.where(pos, a.data, slope * a.data)
    return _make(out, (a,), lambda g: a._accumulate(g * np.where(pos, 1.0, slope)))


def elu(a, alpha=1.0):
    a = _lift(a)
    pos = a.data >= 0
    expm1 = alpha * np.expm1(a.data)
    out = np.where(pos, a.data, expm1)
    return _make(out, (a,), lambda g: a._accumulate(g * np.where(pos, 1.0, expm1 + alpha)))


def sum_(a, axis=None, keepdims=False):
    a = _lift(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _make(out, (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = _lift(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def getitem(a, key):
    a = _lift(a)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        a._accumulate(full)

    return _make(a.data[key], (a,), bw)


def reshape(a, shape):
    a = _lift(a)
    return _make(a.data.reshape(shape), (a,), lambda g: a._accumulate(g.reshape(a.data.shape)))


def concat(tensors, axis=1):
    tensors = [_lift(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def conv1d(x, w, b):
    """Valid-mode 1-D convolution: x (N,C,L), w (O,C,K), b (O,) -> (N,O,L-K+1)."""
    x, w, b = _lift(x), _lift(w), _lift(b)
    k = w.data.shape[2]
    cols = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=2)  # (N,C,Lout,K)
    out = np.einsum("nclk,ock->nol", cols, w.data) + b.data[None, :, None]

    def bw(g):
        if w.requires_grad:
            w._accumulate(np.einsum("nclk,nol->ock", cols, g))
        if b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2)))
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            lout = g.shape[2]
            for j in range(k):
                gx[:, :, j : j + lout] += np.einsum("nol,oc->ncl", g, w.data[:, :, j])
            x._accumulate(gx)

    return _make(out, (x, w, b), bw)


def maxpool1d(x, size):
    """Non-overlapping max pooling over the last axis; remainder truncated."""
    x = _lift(x)
    n, c, length = x.data.shape
    lout = length // size
    window = x.data[:, :, : lout * size].reshape(n, c, lout, size)
    arg = window.argmax(axis=3)
    out = np.take_along_axis(window, arg[..., None], axis=3)[..., 0]

    def bw(g):
        gw = np.zeros((n, c, lout, size))
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=3)
        gx = np.zeros_like(x.data)
        gx[:, :, : lout * size] = gw.reshape(n, c, lout * size)
        x._accumulate(gx)

    return _make(out, (x,), bw)


def dropout(x, p, rng, training):
    """Inverted dropout: zero entries with probability p, scale survivors."""
    x = _lift(x)
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= p) / (1.0 - p)
    return _make(x.data * keep, (x,), lambda g: x._accumulate(g * keep))


def mse_loss(pred, target):
    """Mean over all entries of squared differences."""
    pred, target = _lift(pred), _lift(target)
    if pred.data.shape != target.data.shape:
        raise ValueError(f"shape mismatch: {pred.data.shape} vs {target.data.shape}")
    diff = sub(pred, target)
    return mean(mul(diff, diff))


def _install_operators():
    Tensor.__add__ = lambda self, o: add(self, o)
    Tensor.__radd__ = lambda self, o: add(o, self)
    Tensor.__sub__ = lambda self, o: sub(self, o)
    Tensor.__rsub__ = lambda self, o: sub(o, self)
    Tensor.__mul__ = lambda self, o: mul(self, o)
    Tensor.__rmul__ = lambda self, o: mul(o, self)
    Tensor.__truediv__ = lambda self, o: div(self, o)
    Tensor.__rtruediv__ = lambda self, o: div(o, self)
    Tensor.__neg__ = neg
    Tensor.__pow__ = pow_
    Tensor.__matmul__ = matmul
    Tensor.__getitem__ = getitem
    Tensor.sum = sum_
    Tensor.mean = mean
    Tensor.reshape = reshape


_install_operators()

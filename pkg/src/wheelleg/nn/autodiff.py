"""Reverse-mode gradients over numpy arrays, scoped to the ops this stack needs.

A Tensor wraps an ndarray and remembers how it was produced; calling
`backward()` on a scalar loss walks the tape in reverse topological order and
accumulates gradients into every reachable tensor with requires_grad set.
Accumulation order is fixed by construction order, so gradients are
bit-deterministic. Tensors that never enter the graph keep grad=None, which
downstream code reads as exactly zero.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    # --- bookkeeping ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def detach(self) -> "Tensor":
        """Cut the tape: same values, no gradient flow."""
        return Tensor(self.data)

    def _track(self, *parents) -> bool:
        return any(p.requires_grad or p._parents for p in parents)

    # --- arithmetic ------------------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other, self.dtype)
        out_data = self.data + other.data

        def bw(g):
            return _unbroadcast(g, self.data.shape), _unbroadcast(g, other.data.shape)

        return _make(out_data, (self, other), bw)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_tensor(other, self.dtype)
        out_data = self.data - other.data

        def bw(g):
            return _unbroadcast(g, self.data.shape), _unbroadcast(-g, other.data.shape)

        return _make(out_data, (self, other), bw)

    def __rsub__(self, other):
        return _as_tensor(other, self.dtype) - self

    def __mul__(self, other):
        other = _as_tensor(other, self.dtype)
        a, b = self.data, other.data
        out_data = a * b

        def bw(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return _make(out_data, (self, other), bw)

    __rmul__ = __mul__

    def __neg__(self):
        def bw(g):
            return (-g,)

        return _make(-self.data, (self,), bw)

    def __matmul__(self, other):
        a, b = self.data, other.data
        out_data = a @ b
        need_a = self.requires_grad or bool(self._parents)
        need_b = other.requires_grad or bool(other._parents)

        def bw(g):
            return (g @ b.T if need_a else None,
                    a.T @ g if need_b else None)

        return _make(out_data, (self, other), bw)

    # --- elementwise nonlinearities ---------------------------------------------

    def exp(self):
        out_data = np.exp(self.data)

        def bw(g):
            return (g * out_data,)

        return _make(out_data, (self,), bw)

    def log(self):
        x = self.data
        out_data = np.log(x)

        def bw(g):
            return (g / x,)

        return _make(out_data, (self,), bw)

    def tanh(self):
        out_data = np.tanh(self.data)

        def bw(g):
            return (g * (1.0 - out_data * out_data),)

        return _make(out_data, (self,), bw)

    def elu(self):
        # elu(x) = max(x,0) + exp(min(x,0)) - 1; the exponential doubles as the
        # derivative, since exp(min(x,0)) is exactly 1 on the linear branch
        x = self.data
        e = np.minimum(x, 0.0)
        np.exp(e, out=e)
        out_data = np.maximum(x, 0.0)
        out_data += e
        out_data -= 1.0

        def bw(g):
            return (g * e,)

        return _make(out_data, (self,), bw)

    def square(self):
        x = self.data
        out_data = x * x

        def bw(g):
            return (g * (2.0 * x),)

        return _make(out_data, (self,), bw)

    def clip(self, lo, hi):
        """Clamp values; gradient passes through only inside the interval."""
        x = self.data
        out_data = np.clip(x, lo, hi)
        inside = (x >= lo) & (x <= hi)

        def bw(g):
            return (g * inside,)

        return _make(out_data, (self,), bw)

    # --- reductions / shaping -----------------------------------------------------

    def sum(self, axis=None):
        x = self.data
        out_data = x.sum(axis=axis)

        def bw(g):
            if axis is None:
                return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)
            ge = np.expand_dims(g, axis)
            return (np.broadcast_to(ge, x.shape).astype(x.dtype, copy=True),)

        return _make(out_data, (self,), bw)

    def mean(self, axis=None):
        x = self.data
        count = x.size if axis is None else x.shape[axis]
        out_data = x.mean(axis=axis)

        def bw(g):
            scale = np.asarray(1.0 / count, dtype=x.dtype)
            if axis is None:
                return (np.broadcast_to(g * scale, x.shape).astype(x.dtype, copy=True),)
            ge = np.expand_dims(g * scale, axis)
            return (np.broadcast_to(ge, x.shape).astype(x.dtype, copy=True),)

        return _make(out_data, (self,), bw)

    def cols(self, start, stop):
        """Column slice of a 2-d tensor."""
        x = self.data
        out_data = x[:, start:stop]

        def bw(g):
            full = np.zeros_like(x)
            full[:, start:stop] = g
            return (full,)

        return _make(out_data, (self,), bw)

    # --- backprop -----------------------------------------------------------------

    def backward(self):
        """Reverse pass from a scalar; fills .grad on every reachable tensor."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        for node in topo:
            if node.requires_grad or node._parents:
                node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is not None and (parent.requires_grad or parent._parents):
                    parent.grad += g


def _make(data, parents, bw) -> Tensor:
    track = any(p.requires_grad or p._parents for p in parents)
    if not track:
        return Tensor(data)
    return Tensor(data, _parents=parents, _backward=bw)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to the parent shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def tensor(data, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise minimum; ties route the gradient to the first argument."""
    take_a = a.data <= b.data
    out_data = np.where(take_a, a.data, b.data)

    def bw(g):
        return g * take_a, g * ~take_a

    return _make(out_data, (a, b), bw)


def concat(tensors, axis: int = 1) -> Tensor:
    datas = [t.data for t in tensors]
    out_data = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out_data, tuple(tensors), bw)

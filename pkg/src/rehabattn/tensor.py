"""Dense float64 tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array together with an accumulated gradient and a
closure implementing the local backward rule of the op that produced it.
Calling ``backward()`` on a scalar output walks the graph in reverse
topological order and accumulates gradients into every reachable tensor
that has ``requires_grad`` set.

Gradients accumulate across repeated backward calls until explicitly
zeroed (see ``zero_grad``); optimizers must zero between steps.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatchError(ValueError):
    """Raised when operand shapes are incompatible for an op."""


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum-reduce a gradient back to the shape of a broadcast operand."""
    if grad.shape == shape:
        return grad
    # collapse leading axes introduced by broadcasting
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # sum over axes that were size-1 in the original shape
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None,
                 name: str | None = None):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    # -- bookkeeping ---------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # -- backward pass ---------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.data.shape}")
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
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, -1.0))

    def __truediv__(self, other):
        other = _wrap(other)
        return mul(self, power(other, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_reduce(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_reduce(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _needs_grad(*ts: Tensor) -> bool:
    return any(t.requires_grad or t._parents for t in ts)


# -- elementwise ops -------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data
    if not _needs_grad(a, b):
        return Tensor(out_data)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data
    if not _needs_grad(a, b):
        return Tensor(out_data)

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def power(a, exponent: float) -> Tensor:
    a = _wrap(a)
    out_data = a.data ** exponent
    if not _needs_grad(a):
        return Tensor(out_data)

    def backward(g):
        a._accumulate(g * exponent * a.data ** (exponent - 1.0))

    return Tensor(out_data, parents=(a,), backward=backward)


def sqrt(a) -> Tensor:
    return power(a, 0.5)


def exp(a) -> Tensor:
    a = _wrap(a)
    out_data = np.exp(a.data)
    if not _needs_grad(a):
        return Tensor(out_data)

    def backward(g):
        a._accumulate(g * out_data)

    return Tensor(out_data, parents=(a,), backward=backward)


def log(a) -> Tensor:
    a = _wrap(a)
    out_data = np.log(a.data)
    if not _needs_grad(a):
        return Tensor(out_data)

    def backward(g):
        a._accumulate(g / a.data)

    return Tensor(out_data, parents=(a,), backward=backward)


def relu(a) -> Tensor:
    a = _wrap(a)
    out_data = np.maximum(a.data, 0.0)
    if not _needs_grad(a):
        return Tensor(out_data)

    mask = a.data > 0.0

    def backward(g):
        a._accumulate(g * mask)

    return Tensor(out_data, parents=(a,), backward=backward)


# -- shape ops ---------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out_data = a.data.reshape(shape)
    if not _needs_grad(a):
        return Tensor(out_data)

    def backward(g):
        a._accumulate(g.reshape(a.data.shape))

    return Tensor(out_data, parents=(a,), backward=backward)


def transpose(a, axes) -> Tensor:
    a = _wrap(a)
    axes = tuple(axes)
    out_data = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))
    if not _needs_grad(a):
        return Tensor(out_data)

    def backward(g):
        a._accumulate(np.transpose(g, inverse))

    return Tensor(out_data, parents=(a,), backward=backward)


def concat(tensors, axis: int) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    if not any(_needs_grad(t) for t in tensors):
        return Tensor(out_data)

    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t._accumulate(g[tuple(idx)])

    return Tensor(out_data, parents=tuple(tensors), backward=backward)


# -- reductions ----------------------------------------------------------

def sum_reduce(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)
    if not _needs_grad(a):
        return Tensor(out_data)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(gg, a.data.shape).copy())

    return Tensor(out_data, parents=(a,), backward=backward)


def mean_reduce(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    if axis is None:
        n = a.data.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.data.shape[i] for i in ax]))
    return mul(sum_reduce(a, axis=axis, keepdims=keepdims), 1.0 / n)


# -- linear algebra ----------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product with broadcasting over leading dimensions."""
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeMismatchError(
            f"matmul needs >=2-d operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatchError(
            f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}")
    out_data = np.matmul(a.data, b.data)
    if not _needs_grad(a, b):
        return Tensor(out_data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        a._accumulate(_unbroadcast(ga, a.data.shape))
        b._accumulate(_unbroadcast(gb, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


# -- softmax family ----------------------------------------------------

def softmax(a, axis: int = -1) -> Tensor:
    a = _wrap(a)
    if not (-a.data.ndim <= axis < a.data.ndim):
        raise ValueError(f"axis {axis} invalid for shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)
    if not _needs_grad(a):
        return Tensor(out_data)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        a._accumulate(out_data * (g - dot))

    return Tensor(out_data, parents=(a,), backward=backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = _wrap(a)
    if not (-a.data.ndim <= axis < a.data.ndim):
        raise ValueError(f"axis {axis} invalid for shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse
    if not _needs_grad(a):
        return Tensor(out_data)

    soft = np.exp(out_data)

    def backward(g):
        a._accumulate(g - soft * g.sum(axis=axis, keepdims=True))

    return Tensor(out_data, parents=(a,), backward=backward)


# -- convolution and pooling ----------------------------------------------

def _pair(v):
    return tuple(v) if isinstance(v, (tuple, list)) else (v, v)


def conv2d(x, kernel, stride=1, dilation=1, padding=0) -> Tensor:
    """2-d cross-correlation of x [N,Cin,H,W] with kernel [Cout,Cin,kh,kw]."""
    x, kernel = _wrap(x), _wrap(kernel)
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeMismatchError(
            f"conv2d expects 4-d input and kernel, got {x.data.shape} and {kernel.data.shape}")
    if x.data.shape[1] != kernel.data.shape[1]:
        raise ShapeMismatchError(
            f"conv2d channel mismatch: input {x.data.shape} vs kernel {kernel.data.shape}")
    sh, sw = _pair(stride)
    dh, dw = _pair(dilation)
    ph, pw = _pair(padding)
    n, cin, h, w = x.data.shape
    cout, _, kh, kw = kernel.data.shape
    ho = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    wo = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    if ho < 1 or wo < 1:
        raise ShapeMismatchError(
            f"kernel {kernel.data.shape} (dilation {dh},{dw}) does not fit padded input {x.data.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out_data = np.zeros((n, cout, ho, wo))
    # accumulate one kernel tap at a time; each tap is a strided slice
    taps = []
    for u in range(kh):
        for v in range(kw):
            sl = xp[:, :, u * dh: u * dh + sh * ho: sh, v * dw: v * dw + sw * wo: sw]
            taps.append(sl)
            out_data += np.einsum("ncij,oc->noij", sl, kernel.data[:, :, u, v])
    if not _needs_grad(x, kernel):
        return Tensor(out_data)

    def backward(g):
        if kernel.requires_grad or kernel._parents:
            gk = np.empty_like(kernel.data)
            for i, (u, v) in enumerate((u, v) for u in range(kh) for v in range(kw)):
                gk[:, :, u, v] = np.einsum("noij,ncij->oc", g, taps[i])
            kernel._accumulate(gk)
        if x.requires_grad or x._parents:
            gxp = np.zeros_like(xp)
            for i, (u, v) in enumerate((u, v) for u in range(kh) for v in range(kw)):
                gxp[:, :, u * dh: u * dh + sh * ho: sh, v * dw: v * dw + sw * wo: sw] += \
                    np.einsum("noij,oc->ncij", g, kernel.data[:, :, u, v])
            x._accumulate(gxp[:, :, ph: ph + h, pw: pw + w])

    return Tensor(out_data, parents=(x, kernel), backward=backward)


def max_pool_time(x, kernel: int = 3, stride: int = 1, padding: int = 1) -> Tensor:
    """Max pooling along the time axis of x [N,C,T,V]."""
    x = _wrap(x)
    n, c, t, v = x.data.shape
    to = (t + 2 * padding - kernel) // stride + 1
    if to < 1:
        raise ShapeMismatchError(f"pool kernel {kernel} does not fit T={t} with padding {padding}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (0, 0)),
                constant_values=-np.inf)
    windows = np.stack([xp[:, :, i * stride: i * stride + kernel, :] for i in range(to)], axis=2)
    # windows: [N,C,To,kernel,V]
    arg = windows.argmax(axis=3)
    out_data = windows.max(axis=3)
    if not _needs_grad(x):
        return Tensor(out_data)

    def backward(g):
        gxp = np.zeros((n, c, t + 2 * padding, v))
        ni, ci, oi, vi = np.indices(out_data.shape)
        np.add.at(gxp, (ni, ci, oi * stride + arg, vi), g)
        x._accumulate(gxp[:, :, padding: padding + t, :])

    return Tensor(out_data, parents=(x,), backward=backward)


def embedding_lookup(table, index) -> Tensor:
    """Gather table[..., index[i,j]] -> out[..., i, j] for an integer index matrix."""
    table = _wrap(table)
    index = np.asarray(index)
    if index.max() >= table.data.shape[-1] or index.min() < 0:
        raise IndexError(
            f"index values in [{index.min()}, {index.max()}] exceed table size {table.data.shape[-1]}")
    out_data = table.data[..., index]
    if not _needs_grad(table):
        return Tensor(out_data)

    def backward(g):
        gt = np.zeros_like(table.data)
        lead = int(np.prod(table.data.shape[:-1])) if table.data.ndim > 1 else 1
        gt2 = gt.reshape(lead, -1)
        g2 = g.reshape(lead, -1)
        rows = np.repeat(np.arange(lead), index.size)
        cols = np.tile(index.ravel(), lead)
        np.add.at(gt2, (rows, cols), g2.ravel())
        table._accumulate(gt2.reshape(table.data.shape))

    return Tensor(out_data, parents=(table,), backward=backward)


def batch_norm(x, gamma, beta, axes=(0, 2, 3), eps: float = 1e-5,
               running_mean=None, running_var=None, training: bool = True) -> Tensor:
    """Normalization over the given axes, per remaining (channel) axis.

    In training mode uses batch statistics; in inference mode uses the
    provided running statistics (plain arrays, updated in place by the
    training loop, not here).
    """
    x = _wrap(x)
    shape = [1] * x.data.ndim
    shape[1] = x.data.shape[1]
    if training:
        m = mean_reduce(x, axis=axes, keepdims=True)
        centered = x - m
        var = mean_reduce(mul(centered, centered), axis=axes, keepdims=True)
        inv = power(var + eps, -0.5)
        xhat = mul(centered, inv)
    else:
        m = running_mean.reshape(shape)
        inv = 1.0 / np.sqrt(running_var.reshape(shape) + eps)
        xhat = mul(x - Tensor(m), Tensor(inv))
    return add(mul(xhat, reshape(gamma, shape)), reshape(beta, shape))

"""Reverse-mode autodiff over dense float64 tensors.

A :class:`Tape` records operations in creation order; :meth:`Tape.backward`
replays them once, in reverse, accumulating gradients additively.  The op set
is deliberately small: elementwise arithmetic (same-shape or scalar operand,
no general broadcasting), matmul, whole-tensor reductions, and a handful of
dedicated network ops (row gather, row-vector bias, causal softmax, cross
entropy) with hand-written backward rules.  Custom-gradient operations such
as fake quantization register themselves through :meth:`Tape.record`.
"""

from __future__ import annotations

import threading

import numpy as np

from .numerics import sigmoid as _sigmoid

_local = threading.local()


def _active_tape():
    stack = getattr(_local, "tape_stack", None)
    return stack[-1] if stack else None


class Tensor:
    """Dense n-dimensional array of float64 with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sigmoid(self):
        return sigmoid(self)

    def silu(self):
        return silu(self)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def max(self):
        return tmax(self)

    def amax(self):
        return tamax(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose_last2(self):
        return transpose_last2(self)


class _Node:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Operation record for one forward pass; creation order is topological."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        stack = getattr(_local, "tape_stack", None)
        if stack is None:
            stack = _local.tape_stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.tape_stack.pop()
        return False

    def record(self, inputs, output: Tensor, backward_fn):
        """Register a custom op: backward_fn(out_grad) -> one grad (or None) per input."""
        self.nodes.append(_Node(tuple(inputs), output, backward_fn))

    def backward(self, loss: Tensor):
        """Seed d(loss)/d(loss) = 1 and accumulate gradients along the tape."""
        if loss.data.size != 1:
            raise ValueError(
                f"backward seed must be scalar, got shape {loss.data.shape}"
            )
        loss.accumulate_grad(np.ones_like(loss.data))
        for node in reversed(self.nodes):
            out_grad = node.output.grad
            if out_grad is None:
                continue
            grads = node.backward_fn(out_grad)
            for tensor, grad in zip(node.inputs, grads):
                if grad is not None and tensor.requires_grad:
                    tensor.accumulate_grad(grad)


def _record(inputs, out_data, backward_fn) -> Tensor:
    tape = _active_tape()
    needs_grad = any(isinstance(t, Tensor) and t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs_grad and tape is not None)
    if tape is not None and needs_grad:
        tape.record([t for t in inputs if isinstance(t, Tensor)], out, backward_fn)
    return out


def _check_elementwise(a: Tensor, b: Tensor, op: str):
    """Same shape required, except a 0-d tensor acts as a scalar operand."""
    if b.data.ndim != 0 and a.data.shape != b.data.shape:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def _reduce_for(b: Tensor, g: np.ndarray):
    return np.sum(g) if b.data.ndim == 0 else g


# --- elementwise -----------------------------------------------------------


def add(a: Tensor, b):
    if not isinstance(b, Tensor):
        return _record([a], a.data + float(b), lambda g: (g,))
    _check_elementwise(a, b, "add")
    return _record([a, b], a.data + b.data, lambda g: (g, _reduce_for(b, g)))


def sub(a: Tensor, b):
    if not isinstance(b, Tensor):
        return _record([a], a.data - float(b), lambda g: (g,))
    _check_elementwise(a, b, "sub")
    return _record([a, b], a.data - b.data, lambda g: (g, _reduce_for(b, -g)))


def mul(a: Tensor, b):
    ad = a.data
    if not isinstance(b, Tensor):
        c = float(b)
        return _record([a], ad * c, lambda g: (g * c,))
    _check_elementwise(a, b, "mul")
    bd = b.data
    return _record(
        [a, b], ad * bd, lambda g: (g * bd, _reduce_for(b, g * ad))
    )


def div(a: Tensor, b):
    ad = a.data
    if not isinstance(b, Tensor):
        c = float(b)
        return _record([a], ad / c, lambda g: (g / c,))
    _check_elementwise(a, b, "div")
    bd = b.data
    return _record(
        [a, b],
        ad / bd,
        lambda g: (g / bd, _reduce_for(b, -g * ad / (bd * bd))),
    )


def neg(a: Tensor):
    return _record([a], -a.data, lambda g: (-g,))


def exp(a: Tensor):
    out_data = np.exp(a.data)
    return _record([a], out_data, lambda g: (g * out_data,))


def log(a: Tensor):
    ad = a.data
    return _record([a], np.log(ad), lambda g: (g / ad,))


def sigmoid(a: Tensor):
    s = _sigmoid(a.data)
    return _record([a], s, lambda g: (g * s * (1.0 - s),))


def silu(a: Tensor):
    ad = a.data
    s = _sigmoid(ad)
    return _record([a], ad * s, lambda g: (g * (s + ad * s * (1.0 - s)),))


# --- matmul and shape ops --------------------------------------------------


def matmul(a: Tensor, b: Tensor):
    """Matrix product; stacked inputs must share identical leading dims."""
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ValueError(f"matmul: inputs must be >=2-D, got {ad.shape} and {bd.shape}")
    if ad.shape[-1] != bd.shape[-2] or ad.shape[:-2] != bd.shape[:-2]:
        raise ValueError(f"matmul: shape mismatch {ad.shape} vs {bd.shape}")

    def backward(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return ga, gb

    return _record([a, b], np.matmul(ad, bd), backward)


def reshape(a: Tensor, shape):
    old = a.data.shape
    return _record([a], a.data.reshape(shape), lambda g: (g.reshape(old),))


def transpose_last2(a: Tensor):
    if a.data.ndim < 2:
        raise ValueError(f"transpose_last2: need >=2-D, got {a.data.shape}")
    return _record(
        [a], np.swapaxes(a.data, -1, -2), lambda g: (np.swapaxes(g, -1, -2),)
    )


# --- reductions ------------------------------------------------------------


def _check_nonempty(a: Tensor, op: str):
    if a.data.size == 0:
        raise ValueError(f"{op}: empty tensor")


def tsum(a: Tensor):
    _check_nonempty(a, "sum")
    shape = a.data.shape
    return _record([a], np.sum(a.data), lambda g: (np.full(shape, g),))


def tmean(a: Tensor):
    _check_nonempty(a, "mean")
    shape = a.data.shape
    n = a.data.size
    return _record([a], np.mean(a.data), lambda g: (np.full(shape, g / n),))


def tmax(a: Tensor):
    """Maximum over all elements; gradient flows to the first argmax only."""
    _check_nonempty(a, "max")
    ad = a.data
    idx = np.unravel_index(np.argmax(ad), ad.shape)

    def backward(g):
        ga = np.zeros_like(ad)
        ga[idx] = g
        return (ga,)

    return _record([a], ad[idx].copy(), backward)


def tamax(a: Tensor):
    """Maximum of absolute values; gradient = sign at the first |.|-argmax."""
    _check_nonempty(a, "amax")
    ad = a.data
    idx = np.unravel_index(np.argmax(np.abs(ad)), ad.shape)
    sign = np.sign(ad[idx])

    def backward(g):
        ga = np.zeros_like(ad)
        ga[idx] = g * sign
        return (ga,)

    return _record([a], np.abs(ad[idx]), backward)


# --- network ops -----------------------------------------------------------


def gather_rows(table: Tensor, ids: np.ndarray):
    """Embedding lookup: out[..., :] = table[ids[...], :]; backward scatter-adds."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValueError("gather_rows: ids must be integers")
    nrows = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= nrows):
        raise IndexError(
            f"gather_rows: id out of range [0, {nrows}): min={ids.min()}, max={ids.max()}"
        )
    tshape = table.data.shape

    def backward(g):
        gt = np.zeros(tshape)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, tshape[-1]))
        return (gt,)

    return _record([table], table.data[ids], backward)


def add_rowvec(a: Tensor, v: Tensor):
    """Add a length-n vector to every row of a[..., n]."""
    if v.data.ndim != 1 or a.data.shape[-1] != v.data.shape[0]:
        raise ValueError(
            f"add_rowvec: shape mismatch {a.data.shape} vs {v.data.shape}"
        )
    n = v.data.shape[0]

    def backward(g):
        return g, g.reshape(-1, n).sum(axis=0)

    return _record([a, v], a.data + v.data, backward)


def causal_softmax(scores: Tensor):
    """Row softmax over the last axis with positions j > i masked out.

    scores has shape [..., T, T]; entry (i, j) may attend only to j <= i.
    """
    sd = scores.data
    if sd.ndim < 2 or sd.shape[-1] != sd.shape[-2]:
        raise ValueError(f"causal_softmax: need [..., T, T], got {sd.shape}")
    t = sd.shape[-1]
    allowed = np.tril(np.ones((t, t), dtype=bool))
    shifted = np.where(allowed, sd, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.where(allowed, np.exp(shifted), 0.0)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - inner),)

    return _record([scores], p, backward)


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray):
    """Mean negative log-likelihood of integer targets under row softmax."""
    ld = logits.data
    if ld.ndim != 2:
        raise ValueError(f"softmax_cross_entropy: logits must be 2-D, got {ld.shape}")
    targets = np.asarray(targets)
    if targets.ndim != 1 or targets.shape[0] != ld.shape[0]:
        raise ValueError(
            f"softmax_cross_entropy: targets shape {targets.shape} "
            f"does not match logits {ld.shape}"
        )
    vocab = ld.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise IndexError(
            f"softmax_cross_entropy: target out of range [0, {vocab})"
        )
    batch = ld.shape[0]
    shifted = ld - ld.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(batch)
    loss = float(np.mean(lse - shifted[rows, targets]))

    def backward(g):
        p = np.exp(shifted)
        p /= p.sum(axis=1, keepdims=True)
        p[rows, targets] -= 1.0
        return (g * p / batch,)

    return _record([logits], np.float64(loss), backward)


def scale(a: Tensor, c: float):
    """Multiply by a python scalar constant (alias of mul for readability)."""
    return mul(a, float(c))

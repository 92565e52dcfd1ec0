"""Dense array operations with reverse-mode gradients recorded on a tape.

Every differentiable operation lives on :class:`Tape`.  A tape built with
``record=False`` only evaluates values, which is what inference and the
perturbed passes of :func:`grad_check` use.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np


class DimensionError(ValueError):
    pass


class NumericFault(FloatingPointError):
    pass


class DegenerateBatchError(ValueError):
    pass


class Node:
    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value: np.ndarray, requires_grad: bool = False):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(shape={self.value.shape})"


class Parameter(Node):
    """A trainable array with a persistent gradient buffer."""

    __slots__ = ("name",)

    def __init__(self, value: np.ndarray, name: str = ""):
        super().__init__(np.ascontiguousarray(value), requires_grad=True)
        self.grad = np.zeros_like(self.value)
        self.name = name

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def tanh_map(x):
    return np.tanh(x)


def softmax_rows(x, mask=None):
    """Row-wise softmax along the last axis; ``mask`` zeros excluded entries."""
    x = np.asarray(x)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_rows(x):
    x = np.asarray(x)
    m = np.max(x, axis=-1, keepdims=True)
    z = x - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits, targets, mask=None):
    """Masked mean softmax cross-entropy over the rows of ``logits``.

    Returns ``(loss, dlogits)``; rows with mask 0 get zero gradient.
    """
    logits = np.asarray(logits)
    targets = np.asarray(targets, dtype=np.int64)
    rows, vocab = logits.shape
    if targets.shape != (rows,):
        raise DimensionError(f"targets shape {targets.shape} does not match logits {logits.shape}")
    if np.any(targets < 0) or np.any(targets >= vocab):
        raise IndexError("target id out of range")
    mask = np.ones(rows, dtype=logits.dtype) if mask is None else np.asarray(mask, dtype=logits.dtype)
    total = mask.sum()
    if total == 0:
        raise DegenerateBatchError("cross_entropy: mask selects no rows")
    logp = log_softmax_rows(logits)
    picked = logp[np.arange(rows), targets]
    loss = -(picked * mask).sum() / total
    dlogits = np.exp(logp)
    dlogits[np.arange(rows), targets] -= 1.0
    dlogits *= (mask / total)[:, None]
    return float(loss), dlogits


def dropout_mask(shape, p: float, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Inverted dropout mask: 0 with probability ``p``, else ``1/(1-p)``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    keep = rng.random(shape) >= p
    return (keep / (1.0 - p)).astype(dtype)


class Tape:
    """Records operations so gradients can be propagated in reverse order."""

    def __init__(self, record: bool = True):
        self.record = record
        self._ops: list = []

    def __len__(self):
        return len(self._ops)

    def constant(self, value, dtype=None) -> Node:
        return Node(np.asarray(value, dtype=dtype))

    def op(self, values, parents: Sequence[Node], backward: Callable):
        """Record a custom operation.

        ``values`` is one array or a tuple of arrays (multi-output op).
        ``backward`` receives the output gradients (one per output, zeros
        for unused outputs) and returns one gradient or ``None`` per parent.
        """
        multi = isinstance(values, tuple)
        outs = tuple(values) if multi else (values,)
        req = self.record and any(p.requires_grad for p in parents)
        nodes = tuple(Node(v, req) for v in outs)
        if req:
            self._ops.append((nodes, tuple(parents), backward))
        return nodes if multi else nodes[0]

    def backward(self, loss: Node, seed=None) -> None:
        if seed is None:
            if loss.value.size != 1:
                raise DimensionError("backward needs a scalar loss or an explicit seed")
            seed = np.ones_like(loss.value)
        loss.grad = np.asarray(seed, dtype=loss.value.dtype)
        for outs, parents, fn in reversed(self._ops):
            if all(o.grad is None for o in outs):
                continue
            if len(outs) == 1:
                grads = fn(outs[0].grad)
            else:
                grads = fn(*(np.zeros_like(o.value) if o.grad is None else o.grad for o in outs))
            for p, g in zip(parents, grads):
                if g is None or not p.requires_grad:
                    continue
                if isinstance(p, Parameter):
                    p.grad += g
                elif p.grad is None:
                    p.grad = g
                else:
                    p.grad = p.grad + g
        self._ops.clear()

    # -- linear algebra -------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        """``a @ b`` for ``a`` of any rank >= 1 against a 2-D ``b``."""
        av, bv = a.value, b.value
        if bv.ndim != 2 or av.shape[-1] != bv.shape[0]:
            raise DimensionError(f"matmul shape mismatch: {av.shape} @ {bv.shape}")

        def back(g):
            da = g @ bv.T
            db = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return da, db

        return self.op(av @ bv, (a, b), back)

    def add(self, a: Node, b: Node) -> Node:
        try:
            out = a.value + b.value
        except ValueError:
            raise DimensionError(f"add shape mismatch: {a.shape} + {b.shape}") from None
        sa, sb = a.shape, b.shape
        return self.op(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    def mul(self, a: Node, b: Node) -> Node:
        """Element-wise (Hadamard) product with broadcasting."""
        av, bv = a.value, b.value
        try:
            out = av * bv
        except ValueError:
            raise DimensionError(f"hadamard shape mismatch: {a.shape} * {b.shape}") from None
        return self.op(out, (a, b),
                       lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))

    hadamard = mul

    def affine(self, x: Node, w: Node, b: Node) -> Node:
        return self.add(self.matmul(x, w), b)

    def scale(self, a: Node, c: float) -> Node:
        return self.op(a.value * c, (a,), lambda g: (g * c,))

    def blend(self, mask: np.ndarray, a: Node, b: Node) -> Node:
        """``mask * a + (1 - mask) * b`` for a constant 0/1 ``mask``."""
        m = np.asarray(mask, dtype=a.value.dtype)
        out = np.where(m > 0, a.value, b.value)
        return self.op(out, (a, b), lambda g: (g * m, g * (1.0 - m)))

    # -- shape ----------------------------------------------------------

    def concat(self, nodes: Sequence[Node], axis: int = -1) -> Node:
        values = [n.value for n in nodes]
        try:
            out = np.concatenate(values, axis=axis)
        except ValueError:
            raise DimensionError(
                f"concat shape mismatch: {[v.shape for v in values]}") from None
        bounds = np.cumsum([v.shape[axis] for v in values])[:-1]
        return self.op(out, tuple(nodes), lambda g: tuple(np.split(g, bounds, axis=axis)))

    def stack(self, nodes: Sequence[Node], axis: int = 1) -> Node:
        out = np.stack([n.value for n in nodes], axis=axis)
        n = len(nodes)
        return self.op(out, tuple(nodes),
                       lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))

    def slice(self, a: Node, start: int, stop: int) -> Node:
        """Slice the last axis."""
        av = a.value

        def back(g):
            full = np.zeros_like(av)
            full[..., start:stop] = g
            return (full,)

        return self.op(av[..., start:stop], (a,), back)

    def reshape(self, a: Node, shape) -> Node:
        old = a.shape
        return self.op(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))

    def sum(self, a: Node, axis=None) -> Node:
        av = a.value

        def back(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, av.shape).copy(),)

        return self.op(np.asarray(av.sum(axis=axis)), (a,), back)

    def gather_rows(self, table: Node, ids) -> Node:
        """Embedding lookup: ``table[ids]`` for an integer array ``ids``."""
        ids = np.asarray(ids, dtype=np.int64)
        tv = table.value

        def back(g):
            full = np.zeros_like(tv)
            np.add.at(full, ids.reshape(-1), g.reshape(-1, tv.shape[1]))
            return (full,)

        return self.op(tv[ids], (table,), back)

    # -- nonlinearities -------------------------------------------------

    def sigmoid(self, a: Node) -> Node:
        y = sigmoid(a.value)
        return self.op(y, (a,), lambda g: (g * y * (1.0 - y),))

    def tanh(self, a: Node) -> Node:
        y = np.tanh(a.value)
        return self.op(y, (a,), lambda g: (g * (1.0 - y * y),))

    def softmax(self, a: Node, mask=None) -> Node:
        """Softmax over the last axis; masked-out entries get weight 0."""
        y = softmax_rows(a.value, mask)

        def back(g):
            return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

        return self.op(y, (a,), back)

    def cross_entropy(self, logits: Node, targets, mask=None) -> Node:
        loss, dlogits = cross_entropy(logits.value, targets, mask)
        out = np.asarray(loss, dtype=logits.value.dtype)
        return self.op(out, (logits,), lambda g: (dlogits * g,))

    def lstm_cell(self, z: Node, c_prev: Node):
        """Gate activations and state update from pre-activations ``z``.

        ``z`` holds the input, forget, output and candidate blocks side by
        side (B x 4H).  Returns the nodes ``(h, c)``.
        """
        zv, cp = z.value, c_prev.value
        hdim = cp.shape[-1]
        if zv.shape[-1] != 4 * hdim:
            raise DimensionError(f"lstm_cell: pre-activation {zv.shape} vs cell {cp.shape}")
        gates = sigmoid(zv[..., :3 * hdim])
        i = gates[..., :hdim]
        f = gates[..., hdim:2 * hdim]
        o = gates[..., 2 * hdim:]
        gt = np.tanh(zv[..., 3 * hdim:])
        c = f * cp + i * gt
        tc = np.tanh(c)
        h = o * tc

        def back(gh, gc):
            dc = gc + gh * o * (1.0 - tc * tc)
            dz = np.concatenate([
                dc * gt * i * (1.0 - i),
                dc * cp * f * (1.0 - f),
                gh * tc * o * (1.0 - o),
                dc * i * (1.0 - gt * gt),
            ], axis=-1)
            return dz, dc * f

        return self.op((h, c), (z, c_prev), back)


def global_grad_norm(params: Sequence[Parameter]) -> float:
    return math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params))


def sgd_step(params: Sequence[Parameter], lr: float, clip_norm: float | None = 5.0) -> float:
    """One SGD update with global-norm clipping; gradients are zeroed after.

    Returns the gradient norm measured before clipping.
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericFault(f"non-finite gradient in parameter {p.name!r}")
    norm = global_grad_norm(params)
    scale = 1.0
    if clip_norm is not None and norm > clip_norm:
        scale = clip_norm / norm
    for p in params:
        p.value -= (lr * scale) * p.grad
        p.zero_grad()
    return norm


def grad_check(loss_fn: Callable[[Tape], Node], params: Sequence[Parameter],
               eps: float = 1e-5) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``loss_fn(tape)`` must build a deterministic scalar loss on ``tape``.
    """
    zero_grads(params)
    tape = Tape()
    tape.backward(loss_fn(tape))
    analytic = [p.grad.copy() for p in params]
    zero_grads(params)

    def value() -> float:
        return float(loss_fn(Tape(record=False)).value)

    worst = 0.0
    for p, a_grad in zip(params, analytic):
        flat = p.value.reshape(-1)
        a_flat = a_grad.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = value()
            flat[k] = orig - eps
            down = value()
            flat[k] = orig
            num = (up - down) / (2.0 * eps)
            a = float(a_flat[k])
            err = abs(a - num) / max(1e-8, abs(a) + abs(num))
            worst = max(worst, err)
    return worst

"""Dense float64 tensors with a reverse-mode tape.

Every op that touches a tracked tensor appends a node to a :class:`Tape`.
``backward`` walks the tape from the loss node back to the first node, so
several task losses built on one forward pass can each be differentiated
without rebuilding the graph.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested op."""


class ContractError(ValueError):
    """A documented precondition was violated."""


_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def _default_tape() -> Tape:
    tape = getattr(_local, "default", None)
    if tape is None:
        tape = _local.default = Tape()
    return tape


def reset_default_tape() -> None:
    _local.default = Tape()


@dataclass(eq=False)
class _Node:
    kind: str
    inputs: tuple
    output: "Tensor"
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass(eq=False)
class Tape:
    """Ordered record of ops. Use as a context manager to scope one forward pass."""

    nodes: list = field(default_factory=list)

    def __enter__(self) -> Tape:
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack().pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, kind, inputs, output, vjp) -> None:
        output.tape_id = (self, len(self.nodes))
        self.nodes.append(_Node(kind, tuple(inputs), output, vjp))


class Tensor:
    """A float64 array plus an optional gradient and tape handle.

    ``requires_grad`` marks a leaf (a parameter). Non-leaf tensors produced by
    tracked ops carry ``tape_id = (tape, index)``.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tape_id: tuple[Tape, int] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def tracked(self) -> bool:
        return self.requires_grad or self.tape_id is not None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _pick_tape(inputs: Sequence[Tensor]) -> Tape | None:
    if not any(t.tracked for t in inputs):
        return None
    tapes = {id(t.tape_id[0]): t.tape_id[0] for t in inputs if t.tape_id is not None}
    if len(tapes) > 1:
        raise ContractError("inputs were recorded on different tapes")
    if tapes:
        return next(iter(tapes.values()))
    stack = _tape_stack()
    return stack[-1] if stack else _default_tape()


def _make(kind: str, inputs: Sequence[Tensor], value: np.ndarray, vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = value
    out.requires_grad = False
    out.grad = None
    out.tape_id = None
    out.name = None
    tape = _pick_tape(inputs)
    if tape is not None:
        tape.record(kind, inputs, out, vjp)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(kind: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot broadcast {a.shape} with {b.shape}") from None


# -- ops -------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _make("add", (a, b), a.data + b.data,
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make("sub", (a, b), a.data - b.data,
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    av, bv = a.data, b.data
    return _make("mul", (a, b), av * bv,
                 lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.data, b.data
    return _make("matmul", (a, b), av @ bv, lambda g: (g @ bv.T, av.T @ g))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _make("relu", (x,), np.where(mask, x.data, 0.0), lambda g: (g * mask,))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return _make("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))


def softmax(x) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _make("softmax", (x,), p, vjp)


def mean(x) -> Tensor:
    x = as_tensor(x)
    n, shape = x.size, x.shape
    if n == 0:
        raise ShapeError("mean of an empty tensor")
    return _make("mean", (x,), np.array(x.data.mean()),
                 lambda g: (np.full(shape, float(g) / n),))


def sum_(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    if axis is None:
        return _make("sum", (x,), np.array(x.data.sum()), lambda g: (np.full(shape, float(g)),))
    return _make("sum", (x,), x.data.sum(axis=axis),
                 lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    try:
        value = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: {old} -> {shape}") from None
    return _make("reshape", (x,), value, lambda g: (g.reshape(old),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of nothing")
    try:
        value = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[t.shape for t in ts]} on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _make("concat", ts, value, lambda g: tuple(np.split(g, bounds, axis=axis)))


def slice_(x, index) -> Tensor:
    x = as_tensor(x)
    try:
        value = x.data[index]
    except IndexError as err:
        raise ShapeError(f"slice {index!r} of shape {x.shape}: {err}") from None
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return _make("slice", (x,), np.array(value), vjp)


def bce_with_logits(logits, targets) -> Tensor:
    """Mean binary cross-entropy on raw logits; targets are untracked."""
    z = as_tensor(logits)
    y = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise ShapeError(f"bce_with_logits: logits {z.shape} vs targets {y.shape}")
    zv = z.data
    loss = np.maximum(zv, 0.0) - zv * y + np.log1p(np.exp(-np.abs(zv)))
    n = zv.size
    s = _sigmoid(zv)
    return _make("bce_with_logits", (z,), np.array(loss.mean()),
                 lambda g: (float(g) * (s - y) / n,))


def mse(pred, targets) -> Tensor:
    p = as_tensor(pred)
    y = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"mse: pred {p.shape} vs targets {y.shape}")
    r = p.data - y
    n = r.size
    return _make("mse", (p,), np.array((r * r).mean()), lambda g: (float(g) * 2.0 * r / n,))


OPS: dict[str, Callable] = {
    "matmul": matmul, "add": add, "sub": sub, "mul": mul, "relu": relu,
    "sigmoid": sigmoid, "softmax": softmax, "mean": mean, "sum": sum_,
    "bce_with_logits": bce_with_logits, "mse": mse, "concat": concat,
    "slice": slice_, "reshape": reshape,
}


def op_forward(kind: str, *inputs, **kwargs) -> Tensor:
    try:
        fn = OPS[kind]
    except KeyError:
        raise ContractError(f"unknown op {kind!r}") from None
    if kind == "concat":
        return fn(inputs, **kwargs)
    return fn(*inputs, **kwargs)


# -- differentiation ----------------------------------------------------------


def backward(loss: Tensor, params: Sequence[Tensor] | None = None,
             set_grad: bool = True) -> dict[Tensor, np.ndarray]:
    """Gradient of a scalar ``loss`` with respect to every tracked leaf.

    The tape is left intact so other losses from the same forward pass can be
    differentiated afterwards. Leaves the loss does not depend on get zeros when
    listed in ``params``.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    leaves: dict[int, Tensor] = {}
    if loss.tape_id is None:
        if not loss.requires_grad:
            raise ContractError("loss is not connected to any tracked tensor")
        grads[id(loss)] = np.ones(loss.shape)
        leaves[id(loss)] = loss
    else:
        tape, idx = loss.tape_id
        grads[id(loss)] = np.ones(loss.shape)
        for node in reversed(tape.nodes[: idx + 1]):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.vjp(g)):
                if gi is None or not inp.tracked:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if inp.requires_grad:
                    leaves[key] = inp
    out = {leaves[k]: grads[k] for k in leaves}
    if params is not None:
        out = {p: out.get(p, np.zeros(p.shape)) for p in params}
    if set_grad:
        for p, g in out.items():
            p.grad = g
    return out


def finite_diff_grad(f: Callable[[], float], params: Sequence[Tensor],
                     h: float = 1e-6) -> dict[Tensor, np.ndarray]:
    """Central differences of a scalar function of ``params`` (mutated in place, then restored)."""
    out = {}
    for p in params:
        g = np.zeros(p.shape)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            fp = float(f())
            flat[k] = old - h
            fm = float(f())
            flat[k] = old
            gflat[k] = (fp - fm) / (2.0 * h)
        out[p] = g
    return out

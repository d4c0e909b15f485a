"""A small reverse-mode differentiation tape over numpy arrays.

Only the primitives this model needs are provided. Every op accepts plain
arrays or :class:`Tensor` values; if no input is a tensor the op just returns
the numpy result and nothing is recorded, so the same model code serves both
taped training and tape-free inference.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("value", "tape", "name")
    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, value, tape: "Tape", name: str | None = None):
        self.value = value
        self.tape = tape
        self.name = name

    @property
    def shape(self):
        return np.shape(self.value)

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

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __repr__(self):
        return f"Tensor(name={self.name!r}, shape={self.shape})"


class Tape:
    """Ordered record of primitive ops; :meth:`backward` replays it in reverse."""

    def __init__(self):
        self.records: list = []
        self.params: dict[str, Tensor] = {}

    def param(self, name: str, value) -> Tensor:
        """Register (or fetch) a named leaf whose gradient is wanted."""
        if name not in self.params:
            self.params[name] = Tensor(np.asarray(value, dtype=np.float64), self, name)
        return self.params[name]

    def record(self, value, inputs, backward, op: str = "") -> Tensor:
        out = Tensor(value, self)
        self.records.append((out, inputs, backward, op))
        return out

    def ops(self) -> list:
        """Names of the recorded primitives, in execution order."""
        return [r[3] for r in self.records]

    def inputs_of(self, op: str) -> list:
        """Input values of every recorded ``op`` (e.g. ReLU pre-activations)."""
        return [[value(x) for x in r[1]] for r in self.records if r[3] == op]

    def backward(self, loss: Tensor, seed: float = 1.0) -> dict[str, np.ndarray]:
        if not isinstance(loss, Tensor) or loss.tape is not self:
            raise TapeError("loss was not produced on this tape")
        if not self.records or self.records[-1][0] is not loss:
            raise TapeError("tape not finalized: loss must be the last recorded op")
        if np.ndim(loss.value) != 0:
            raise TapeError("backward needs a scalar loss")
        grads = {id(loss): np.asarray(seed, dtype=np.float64)}
        for out, inputs, back, _ in reversed(self.records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, back(g)):
                if isinstance(inp, Tensor) and gi is not None:
                    key = id(inp)
                    grads[key] = grads[key] + gi if key in grads else gi
        return {name: np.broadcast_to(grads.get(id(t), 0.0), t.shape).copy()
                for name, t in self.params.items()}


def value(x):
    return x.value if isinstance(x, Tensor) else x


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Tensor):
            return x.tape
    return None


def _unbroadcast(g, shape):
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    va, vb = value(a), value(b)
    out = va + vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return tape.record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), op="add")


def sub(a, b):
    va, vb = value(a), value(b)
    out = va - vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return tape.record(out, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), op="sub")


def mul(a, b):
    va, vb = value(a), value(b)
    out = va * vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return tape.record(out, (a, b),
                       lambda g: (_unbroadcast(g * vb, sa), _unbroadcast(g * va, sb)), op="mul")


def div(a, b):
    va, vb = value(a), value(b)
    out = va / vb
    tape = _tape_of(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(va), np.shape(vb)
    return tape.record(out, (a, b),
                       lambda g: (_unbroadcast(g / vb, sa), _unbroadcast(-g * va / (vb * vb), sb)), op="div")


def matmul(a, b):
    va, vb = value(a), value(b)
    out = va @ vb
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def back(g):
        if np.ndim(va) == 1 and np.ndim(vb) == 1:
            return g * vb, g * va
        if np.ndim(vb) == 1:
            ga = np.outer(g, vb)
            gb = va.T @ g
        else:
            ga = g @ vb.T
            gb = va.T @ g if np.ndim(va) == 2 else np.outer(va, g)
        return ga, gb

    return tape.record(out, (a, b), back, op="matmul")


def total(a):
    va = value(a)
    out = np.sum(va)
    tape = _tape_of(a)
    if tape is None:
        return out
    shape = np.shape(va)
    return tape.record(out, (a,), lambda g: (np.broadcast_to(g, shape),), op="total")


def mean(a):
    return mul(total(a), 1.0 / np.size(value(a)))


def reshape(a, shape):
    va = value(a)
    out = np.reshape(va, shape)
    tape = _tape_of(a)
    if tape is None:
        return out
    old = np.shape(va)
    return tape.record(out, (a,), lambda g: (np.reshape(g, old),), op="reshape")


def index(a, k):
    """Element or sub-array ``a[k]``."""
    va = value(a)
    out = va[k]
    tape = _tape_of(a)
    if tape is None:
        return out
    shape = np.shape(va)

    def back(g):
        full = np.zeros(shape)
        np.add.at(full, k, g)
        return (full,)

    return tape.record(out, (a,), back, op="index")


def take_rows(a, idx):
    """Gather rows ``a[idx]``; gradient scatters back with accumulation."""
    va = value(a)
    idx = np.asarray(idx)
    out = va[idx]
    tape = _tape_of(a)
    if tape is None:
        return out
    shape = np.shape(va)

    def back(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return tape.record(out, (a,), back, op="take_rows")


def relu(a):
    va = value(a)
    mask = va > 0
    out = va * mask
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (g * mask,), op="relu")


def sigmoid_value(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus_value(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(a):
    va = value(a)
    out = sigmoid_value(va)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (g * out * (1.0 - out),), op="sigmoid")


def softplus(a):
    va = value(a)
    out = softplus_value(va)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (g * sigmoid_value(va),), op="softplus")


def log_sigmoid(a):
    """log(sigmoid(a)) = -softplus(-a)."""
    va = value(a)
    out = -softplus_value(-va)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (g * sigmoid_value(-va),), op="log_sigmoid")


def spmm(M, a):
    """Product of a fixed sparse matrix with a dense operand."""
    va = value(a)
    out = M @ va
    tape = _tape_of(a)
    if tape is None:
        return out
    Mt = M.T.tocsr() if sp.issparse(M) else M.T
    return tape.record(out, (a,), lambda g: (Mt @ g,), op="spmm")


def trace_quadratic(M, a):
    """tr(a^T M a) for a fixed symmetric sparse matrix ``M``."""
    va = value(a)
    Ma = M @ va
    out = np.sum(va * Ma)
    tape = _tape_of(a)
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (2.0 * g * Ma,), op="trace_quadratic")

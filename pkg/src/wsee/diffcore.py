"""Reverse-mode differentiation over dense 2-D float64 matrices, plus Adam.

A small eager engine: every operation computes its result immediately
and records a vector-Jacobian closure.  backward() then walks the
recorded graph once in reverse topological order.  Tensors are always
two-dimensional; column vectors are (n, 1) and scalars (1, 1).  Graphs
are acyclic by construction since parents exist before their children
and are never rewired.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class Tensor:
    """Graph node holding a value, an optional gradient, and its provenance."""

    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_vjp", "_done")

    def __init__(self, value, requires_grad=False, name="", _parents=(), _vjp=None,
                 _check=True):
        v = np.asarray(value, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"tensors are 2-D; got shape {v.shape}")
        if _check and not np.all(np.isfinite(v)):
            raise ValueError("non-finite values entering the graph")
        self.value = v
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = _parents
        self._vjp = _vjp
        self._done = False

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = "param" if self.requires_grad and not self._parents else "node"
        return f"Tensor({tag} {self.name!r} shape={self.value.shape})"


def constant(value, name=""):
    return Tensor(value, requires_grad=False, name=name)


def parameter(value, name=""):
    return Tensor(value, requires_grad=True, name=name)


def _node(value, parents, vjp):
    rg = any(p.requires_grad for p in parents)
    return Tensor(value, requires_grad=rg, _parents=tuple(parents),
                  _vjp=vjp if rg else None, _check=False)


def _expect_same_shape(a, b, op):
    if a.value.shape != b.value.shape:
        raise ValueError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape[1] != b.value.shape[0]:
        raise ValueError(f"matmul: inner dimensions {a.value.shape} @ {b.value.shape}")

    def vjp(g):
        return g @ b.value.T, a.value.T @ g

    return _node(a.value @ b.value, (a, b), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    _expect_same_shape(a, b, "add")
    return _node(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _expect_same_shape(a, b, "sub")
    return _node(a.value - b.value, (a, b), lambda g: (g, -g))


def neg(a: Tensor) -> Tensor:
    return _node(-a.value, (a,), lambda g: (-g,))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _expect_same_shape(a, b, "hadamard")
    return _node(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value))


def scalar_mul(c: float, a: Tensor) -> Tensor:
    c = float(c)
    return _node(c * a.value, (a,), lambda g: (c * g,))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0.0  # subgradient 0 at the kink

    def vjp(g):
        return (g * mask,)

    return _node(np.where(mask, a.value, 0.0), (a,), vjp)


def clamp(a: Tensor, lo, hi) -> Tensor:
    """Clip into [lo, hi]; bounds may be scalars or arrays broadcastable to a.

    The gradient is 1 strictly inside the interval and 0 at and beyond
    the boundaries, so saturated entries stop propagating.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    mask = (a.value > lo) & (a.value < hi)

    def vjp(g):
        return (g * mask,)

    return _node(np.clip(a.value, lo, hi), (a,), vjp)


def huber(a: Tensor, b: Tensor, delta: float = 1.0) -> Tensor:
    """Elementwise robust loss of the residual a - b, quadratic within delta."""
    _expect_same_shape(a, b, "huber")
    delta = float(delta)
    r = a.value - b.value
    absr = np.abs(r)
    out = np.where(absr <= delta, 0.5 * r * r, delta * (absr - 0.5 * delta))
    dr = np.clip(r, -delta, delta)

    def vjp(g):
        return g * dr, -(g * dr)

    return _node(out, (a, b), vjp)


def row_concat(*tensors: Tensor) -> Tensor:
    """Concatenate along columns, extending every row."""
    rows = tensors[0].value.shape[0]
    if any(t.value.shape[0] != rows for t in tensors):
        raise ValueError("row_concat: row counts differ")
    widths = [t.value.shape[1] for t in tensors]
    splits = np.cumsum(widths)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(part) for part in np.split(g, splits, axis=1))

    return _node(np.concatenate([t.value for t in tensors], axis=1), tensors, vjp)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def vjp(g):
        out = np.zeros_like(a.value)
        out[:, start:stop] = g
        return (out,)

    return _node(a.value[:, start:stop].copy(), (a,), vjp)


def reshape(a: Tensor, rows: int, cols: int) -> Tensor:
    if a.value.size != rows * cols:
        raise ValueError(f"reshape: cannot view {a.value.shape} as ({rows}, {cols})")

    def vjp(g):
        return (g.reshape(a.value.shape),)

    return _node(a.value.reshape(rows, cols).copy(), (a,), vjp)


def add_rowvec(a: Tensor, b: Tensor) -> Tensor:
    """Add a (1, d) row vector to every row of a."""
    if b.value.shape != (1, a.value.shape[1]):
        raise ValueError(f"add_rowvec: bias shape {b.value.shape} for {a.value.shape}")

    def vjp(g):
        return g, g.sum(axis=0, keepdims=True)

    return _node(a.value + b.value, (a, b), vjp)


def log(a: Tensor) -> Tensor:
    if np.any(a.value <= 0.0):
        raise ValueError("log: nonpositive input")

    def vjp(g):
        return (g / a.value,)

    return _node(np.log(a.value), (a,), vjp)


def reciprocal(a: Tensor) -> Tensor:
    if np.any(a.value == 0.0):
        raise ValueError("reciprocal: zero input")
    inv = 1.0 / a.value

    def vjp(g):
        return (-g * inv * inv,)

    return _node(inv, (a,), vjp)


def reduce_mean(a: Tensor) -> Tensor:
    n = a.value.size

    def vjp(g):
        return (np.full_like(a.value, g[0, 0] / n),)

    return _node(np.array([[a.value.mean()]]), (a,), vjp)


def reduce_sum(a: Tensor) -> Tensor:
    def vjp(g):
        return (np.full_like(a.value, g[0, 0]),)

    return _node(np.array([[a.value.sum()]]), (a,), vjp)


def backward(loss: Tensor) -> None:
    """Accumulate d loss / d t into t.grad for every reachable tensor
    with requires_grad.  Running twice on the same loss node is an error;
    gradients from separate graphs add up until cleared."""
    if loss.value.shape != (1, 1):
        raise ValueError("backward requires a scalar (1, 1) loss")
    if loss._done:
        raise RuntimeError("backward already ran on this loss node")
    loss._done = True
    if not loss.requires_grad:
        return
    order = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        nid = id(node)
        if nid in visited:
            continue
        visited.add(nid)
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    adjoint = {id(loss): np.ones((1, 1))}
    for node in reversed(order):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            pid = id(parent)
            adjoint[pid] = pg if pid not in adjoint else adjoint[pid] + pg


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


@dataclass
class AdamState:
    """Moment accumulators for one parameter list, in list order."""

    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def for_params(cls, params, weight_decay: float = 0.0):
        return cls(m=[np.zeros_like(p.value) for p in params],
                   v=[np.zeros_like(p.value) for p in params],
                   weight_decay=weight_decay)


def adam_step(params, grads, state: AdamState, lr: float):
    """One Adam update with the L2 term folded into the gradient.

    Parameter values are updated in place so that views shared with the
    surrounding model structures stay current.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must align")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.value.shape:
            raise ValueError("gradient shape mismatch")
        if state.weight_decay:
            g = g + state.weight_decay * p.value
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if not np.all(np.isfinite(p.value)):
            raise FloatingPointError("non-finite parameter after Adam step")
    return params


CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(path, tensors: dict, meta: dict | None = None) -> None:
    """Write named arrays plus a JSON header; round-trips bit-exactly."""
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "names": list(tensors.keys()),
        "meta": meta or {},
    }
    arrays = {f"a{i}": np.asarray(v, dtype=np.float64) for i, v in enumerate(tensors.values())}
    np.savez(path, header=json.dumps(header), **arrays)


def load_checkpoint(path):
    """Read back (named arrays, meta) from save_checkpoint output."""
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {header.get('format_version')!r}")
        tensors = {name: np.array(data[f"a{i}"]) for i, name in enumerate(header["names"])}
    return tensors, header["meta"]

"""Reverse-mode automatic differentiation on numpy arrays.

Every op accepts a mix of ``Var`` and plain ``ndarray`` arguments.  If no
argument is a ``Var`` the op returns a plain array, so the same code path
serves both fast inference and tape building.  ``backward`` walks the tape
once in reverse topological order and accumulates ``.grad`` on every
reachable ``Var``.
"""

from __future__ import annotations

import numpy as np


class ADError(ValueError):
    pass


class Var:
    """A tape node: value plus the parent edges that built it."""

    __slots__ = ("value", "parents", "grad")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=float)
        self.parents = tuple(parents)
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, parents={len(self.parents)})"


def value(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def is_var(x) -> bool:
    return isinstance(x, Var)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _maybe(out_value, parents):
    if not parents:
        return out_value
    return Var(out_value, parents)


def add(a, b):
    av, bv = value(a), value(b)
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: _unbroadcast(g, av.shape)))
    if isinstance(b, Var):
        parents.append((b, lambda g: _unbroadcast(g, bv.shape)))
    return _maybe(av + bv, parents)


def sub(a, b):
    av, bv = value(a), value(b)
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: _unbroadcast(g, av.shape)))
    if isinstance(b, Var):
        parents.append((b, lambda g: _unbroadcast(-g, bv.shape)))
    return _maybe(av - bv, parents)


def mul(a, b):
    av, bv = value(a), value(b)
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: _unbroadcast(g * bv, av.shape)))
    if isinstance(b, Var):
        parents.append((b, lambda g: _unbroadcast(g * av, bv.shape)))
    return _maybe(av * bv, parents)


def einsum(subscripts: str, *operands):
    """np.einsum with reverse-mode support.

    Restricted to explicit subscripts without ellipsis where every index of
    each differentiable operand also appears among the other operands or the
    output; the VJP is then the same einsum with that operand and the output
    swapped.
    """
    if "->" not in subscripts or "." in subscripts:
        raise ADError(f"einsum requires explicit subscripts without ellipsis: {subscripts!r}")
    in_part, out_sub = subscripts.replace(" ", "").split("->")
    in_subs = in_part.split(",")
    if len(in_subs) != len(operands):
        raise ADError(f"{len(operands)} operands for subscripts {subscripts!r}")
    vals = [value(o) for o in operands]
    out = np.einsum(subscripts, *vals)
    parents = []
    for i, o in enumerate(operands):
        if not isinstance(o, Var):
            continue
        others = in_subs[:i] + in_subs[i + 1 :]
        covered = set("".join(others)) | set(out_sub)
        if not set(in_subs[i]) <= covered:
            raise ADError(
                f"cannot differentiate operand {i} of {subscripts!r}: "
                "its indices must appear in the other operands or the output"
            )
        other_vals = vals[:i] + vals[i + 1 :]
        vjp_subs = ",".join(others + [out_sub]) + "->" + in_subs[i]

        def vjp(g, vjp_subs=vjp_subs, other_vals=other_vals):
            return np.einsum(vjp_subs, *other_vals, g)

        parents.append((o, vjp))
    return _maybe(out, parents)


def tanh(x):
    xv = value(x)
    out = np.tanh(xv)
    if not isinstance(x, Var):
        return out
    return Var(out, [(x, lambda g: g * (1.0 - out * out))])


def sigmoid(x):
    xv = value(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * xv))
    if not isinstance(x, Var):
        return out
    return Var(out, [(x, lambda g: g * out * (1.0 - out))])


def gather(x, indices):
    """Rows of x selected along axis 0."""
    indices = np.asarray(indices, dtype=int)
    xv = value(x)
    out = xv[indices]
    if not isinstance(x, Var):
        return out

    def vjp(g):
        acc = np.zeros_like(xv)
        np.add.at(acc, indices, g)
        return acc

    return Var(out, [(x, vjp)])


def segment_sum(x, segment_ids, num_segments: int):
    """Sum rows of x into num_segments bins along axis 0."""
    segment_ids = np.asarray(segment_ids, dtype=int)
    xv = value(x)
    out = np.zeros((num_segments,) + xv.shape[1:], dtype=float)
    np.add.at(out, segment_ids, xv)
    if not isinstance(x, Var):
        return out
    return Var(out, [(x, lambda g: g[segment_ids])])


def concat(xs, axis: int = 0):
    vals = [value(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    parents = []
    offset = 0
    for x, v in zip(xs, vals):
        width = v.shape[axis]
        if isinstance(x, Var):
            sl = (slice(None),) * (axis % out.ndim) + (slice(offset, offset + width),)
            parents.append((x, lambda g, sl=sl: g[sl]))
        offset += width
    return _maybe(out, parents)


def narrow(x, axis: int, start: int, length: int):
    """Contiguous slice [start, start+length) along one axis."""
    xv = value(x)
    sl = (slice(None),) * (axis % xv.ndim) + (slice(start, start + length),)
    out = xv[sl]
    if not isinstance(x, Var):
        return out

    def vjp(g):
        acc = np.zeros_like(xv)
        acc[sl] = g
        return acc

    return Var(out, [(x, vjp)])


def reshape(x, shape):
    xv = value(x)
    out = xv.reshape(shape)
    if not isinstance(x, Var):
        return out
    return Var(out, [(x, lambda g: g.reshape(xv.shape))])


def sum_all(x):
    xv = value(x)
    out = np.asarray(xv.sum())
    if not isinstance(x, Var):
        return out
    return Var(out, [(x, lambda g: np.broadcast_to(g, xv.shape).copy())])


def mean_all(x):
    xv = value(x)
    out = np.asarray(xv.mean())
    if not isinstance(x, Var):
        return out
    size = xv.size
    return Var(out, [(x, lambda g: np.broadcast_to(g / size, xv.shape).copy())])


def _topo_order(root: Var) -> list:
    """Parents-before-children ordering, iterative to spare the stack."""
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(out: Var) -> None:
    """Accumulate d(out)/d(node) into .grad for every Var reachable from out.

    ``out`` must hold a single scalar; the seed gradient is 1.
    """
    if not isinstance(out, Var):
        raise ADError("backward expects a Var")
    if out.value.size != 1:
        raise ADError(f"backward expects a scalar, got shape {out.value.shape}")
    order = _topo_order(out)
    for node in order:
        node.grad = np.zeros_like(node.value)
    out.grad = np.ones_like(out.value)
    for node in reversed(order):
        g = node.grad
        for parent, vjp in node.parents:
            parent.grad = parent.grad + vjp(g)

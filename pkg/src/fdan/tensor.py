"""Dense float64 matrices with tape-based reverse-mode differentiation.

Every value is a 2-D ``numpy.float64`` array wrapped in a :class:`Tensor`.
Operations record their parents and a backward closure; node ids come from a
global counter, so creation order is a topological order of the graph and
:func:`backward` only needs to walk ids in decreasing order.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import ContractError, ParameterError, ShapeError

_ids = itertools.count()


class Tensor:
    """A node of the computation graph.

    ``op`` names the operation that produced the node (``"leaf"`` for inputs
    and parameters).  Leaves created with ``requires_grad=True`` are the
    things gradients are reported for.
    """

    __slots__ = ("data", "op", "parents", "id", "requires_grad", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        op: str = "leaf",
        parents: tuple[Tensor, ...] = (),
        backward: Callable[[np.ndarray], tuple[np.ndarray | None, ...]] | None = None,
    ):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"Tensor must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.op = op
        self.parents = parents
        self.id = next(_ids)
        self.requires_grad = requires_grad
        self._backward = backward

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.shape})"

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not np.isscalar(other):
            raise TypeError("only division by a scalar is supported")
        return scale(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def param(data) -> Tensor:
    """A trainable leaf."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _node(data, op, parents, backward) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, op=op, parents=parents,
                  backward=backward if needs else None)


# -- operations -------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    A, B = a.data, b.data

    def back(g):
        return g @ B.T, A.T @ g

    return _node(A @ B, "matmul", (a, b), back)


def transpose(a: Tensor) -> Tensor:
    return _node(a.data.T.copy(), "transpose", (a,), lambda g: (g.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a 1xN row broadcast over the rows of ``a``."""
    if a.shape == b.shape:
        return _node(a.data + b.data, "add", (a, b), lambda g: (g, g))
    if b.shape == (1, a.shape[1]):
        return _node(a.data + b.data, "add_row", (a, b),
                     lambda g: (g, g.sum(axis=0, keepdims=True)))
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    return _node(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    A, B = a.data, b.data
    return _node(A * B, "mul", (a, b), lambda g: (g * B, g * A))


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.data * c, "scale", (a,), lambda g: (g * c,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _node(out, "exp", (a,), lambda g: (g * out,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), "relu", (a,), lambda g: (g * mask,))


def total(a: Tensor) -> Tensor:
    """Sum of all entries as a 1x1 tensor."""
    shape = a.shape
    return _node(a.data.sum(), "sum", (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean(a: Tensor) -> Tensor:
    return scale(total(a), 1.0 / a.data.size)


def softmax_rows(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _node(s, "softmax_rows", (a,), back)


def log_softmax_rows(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def back(g):
        return (g - s * g.sum(axis=1, keepdims=True),)

    return _node(out, "log_softmax_rows", (a,), back)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize each row (population variance, ``eps`` inside the root),
    then apply a per-column gain and bias."""
    m, n = a.shape
    if n < 2:
        raise ShapeError(f"layer_norm needs at least 2 columns, got {a.shape}")
    if eps <= 0:
        raise ParameterError(f"layer_norm eps must be positive, got {eps}")
    if gain.shape != (1, n) or bias.shape != (1, n):
        raise ShapeError(
            f"layer_norm: gain {gain.shape} and bias {bias.shape} must be (1, {n})")
    x = a.data
    centered = x - x.mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=1, keepdims=True) + eps)
    xhat = centered * inv_std
    G = gain.data

    def back(g):
        dxhat = g * G
        dx = inv_std * (dxhat - dxhat.mean(axis=1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        return (dx, (g * xhat).sum(axis=0, keepdims=True),
                g.sum(axis=0, keepdims=True))

    return _node(xhat * G + bias.data, "layer_norm", (a, gain, bias), back)


def sq_dist(x: Tensor, y: Tensor) -> Tensor:
    """Pairwise squared Euclidean distances between the rows of x and y."""
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"sq_dist: feature widths differ, {x.shape} vs {y.shape}")
    X, Y = x.data, y.data
    diff = X[:, None, :] - Y[None, :, :]
    out = np.einsum("ijk,ijk->ij", diff, diff)

    def back(g):
        gx = 2.0 * (g.sum(axis=1, keepdims=True) * X - g @ Y)
        gy = 2.0 * (g.sum(axis=0)[:, None] * Y - g.T @ X)
        return gx, gy

    return _node(out, "sq_dist", (x, y), back)


# -- reverse pass -----------------------------------------------------------

def backward(loss: Tensor, wrt: Mapping[str, Tensor] | Iterable[Tensor]):
    """Gradients of a scalar ``loss`` with respect to the leaves in ``wrt``.

    Returns a dict with the same keys as ``wrt`` (or a list, for an iterable).
    Leaves the loss does not depend on get zero matrices.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a scalar (1x1) root, got {loss.shape}")
    named = isinstance(wrt, Mapping)
    targets = list(wrt.values()) if named else list(wrt)

    # collect every node reachable from the root that carries gradient
    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t.id in nodes or not t.requires_grad:
            continue
        nodes[t.id] = t
        stack.extend(t.parents)

    grads: dict[int, np.ndarray] = {loss.id: np.ones((1, 1))}
    for nid in sorted(nodes, reverse=True):
        t = nodes[nid]
        g = grads.get(nid)
        if g is None or t._backward is None:
            continue
        for parent, pg in zip(t.parents, t._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.id in grads:
                grads[parent.id] = grads[parent.id] + pg
            else:
                grads[parent.id] = pg

    out = [np.array(grads[t.id]) if t.id in grads else np.zeros(t.shape)
           for t in targets]
    if named:
        return dict(zip(wrt.keys(), out))
    return out

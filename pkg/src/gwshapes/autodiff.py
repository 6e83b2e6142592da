"""Minimal dense reverse-mode automatic differentiation.

Everything is float64 and numpy-backed. A :class:`Tensor` wraps an array
together with parent links and a backward closure, so each op call extends a
dynamically built acyclic graph. ``backward(loss)`` walks that graph once in
reverse topological order and accumulates gradients into ``Tensor.grad``.

Shapes are restricted to what the networks in this project need: scalars
(0-d), vectors ``(n,)`` and row-batches ``(B, n)``. The only broadcasting rule
is ``bias_add`` adding a vector to every row. Forward passes never mutate
their inputs.
"""

from __future__ import annotations

import itertools

import numpy as np

__all__ = [
    "Tensor",
    "GraphError",
    "NumericFailure",
    "tensor",
    "parameter",
    "backward",
    "gradients",
    "matmul",
    "bias_add",
    "add",
    "sub",
    "mul",
    "scale",
    "tanh",
    "relu",
    "clamp",
    "log",
    "transpose",
    "slice_cols",
    "total_sum",
    "mean_squared_error",
    "softmax_cross_entropy",
    "l2_norm",
    "dot",
    "cosine",
    "cosine_matrix",
    "SUPPORTED_OPS",
]

_node_ids = itertools.count()


class GraphError(ValueError):
    """Contract violation: bad shapes or a non-scalar loss."""


class NumericFailure(FloatingPointError):
    """A non-finite value appeared in a forward pass."""

    def __init__(self, node_id: int, op: str):
        super().__init__(f"non-finite value in forward pass at node {node_id} (op {op!r})")
        self.node_id = node_id
        self.op = op


class Tensor:
    """A value node in the computation graph.

    ``requires_grad`` marks trainable leaf parameters; ``frozen`` marks leaves
    that must never be updated by an optimizer (specialist weights).
    """

    __slots__ = ("value", "grad", "requires_grad", "frozen", "node_id", "op", "_parents", "_backward")

    def __init__(self, value, *, requires_grad=False, frozen=False, op="leaf", parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.frozen = bool(frozen)
        self.node_id = next(_node_ids)
        self.op = op
        self._parents = parents
        self._backward = backward
        if op != "leaf" and not np.isfinite(np.sum(self.value)):
            raise NumericFailure(self.node_id, op)

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.value.shape}, id={self.node_id})"


def tensor(value, requires_grad: bool = False) -> Tensor:
    """Wrap an array or scalar as a leaf node."""
    return Tensor(value, requires_grad=requires_grad)


def parameter(value, *, frozen: bool = False) -> Tensor:
    """A trainable leaf (or a frozen one that optimizers must reject)."""
    return Tensor(value, requires_grad=not frozen, frozen=frozen)


def _needs_grad(*tensors: Tensor) -> bool:
    return any(t.requires_grad or t._parents for t in tensors)


def _accum(t: Tensor, g: np.ndarray, fresh: bool = False) -> None:
    # `fresh` marks arrays the caller just allocated and will not reuse, so
    # they can be adopted without a defensive copy.
    if t.grad is None:
        t.grad = g if fresh else g.copy()
    else:
        t.grad += g


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.node_id in seen:
            continue
        seen.add(node.node_id)
        stack.append((node, True))
        for p in node._parents:
            if p.node_id not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` for every reachable leaf.

    The loss must be scalar. Each graph node's backward closure runs exactly
    once, in reverse topological order.
    """
    if loss.value.shape != ():
        raise GraphError(f"loss must be scalar, got shape {loss.value.shape}")
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones(())
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def gradients(loss: Tensor, params: list[Tensor]) -> list[np.ndarray]:
    """Run backward and return d(loss)/dp for each requested parameter."""
    backward(loss)
    return [p.grad if p.grad is not None else np.zeros_like(p.value) for p in params]


# ---------------------------------------------------------------------------
# Operators. Each builds one graph node with a fused backward rule.
# ---------------------------------------------------------------------------


def matmul(a: Tensor, w: Tensor) -> Tensor:
    """Matrix product ``(B, n) @ (n, m)``; covers matrix-vector via B=1 or m=1."""
    if a.value.ndim != 2 or w.value.ndim != 2 or a.value.shape[1] != w.value.shape[0]:
        raise GraphError(f"matmul shapes {a.value.shape} @ {w.value.shape}")
    av, wv = a.value, w.value
    out = Tensor(av @ wv, op="matmul", parents=(a, w) if _needs_grad(a, w) else ())

    def bw(g):
        _accum(a, g @ wv.T, fresh=True)
        _accum(w, av.T @ g, fresh=True)

    out._backward = bw if out._parents else None
    return out


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Add a bias vector to every row of a batch (the one allowed broadcast)."""
    if b.value.ndim != 1 or x.value.shape[-1] != b.value.shape[0]:
        raise GraphError(f"bias_add shapes {x.value.shape} + {b.value.shape}")
    out = Tensor(x.value + b.value, op="bias_add", parents=(x, b) if _needs_grad(x, b) else ())

    def bw(g):
        _accum(x, g)
        _accum(b, g.sum(axis=0), fresh=True) if g.ndim == 2 else _accum(b, g)

    out._backward = bw if out._parents else None
    return out


def _elementwise(op_name, fn, dfa, dfb, fresh=(False, False)):
    def op(a: Tensor, b: Tensor) -> Tensor:
        if a.value.shape != b.value.shape:
            raise GraphError(f"{op_name} shapes {a.value.shape} vs {b.value.shape}")
        out = Tensor(fn(a.value, b.value), op=op_name, parents=(a, b) if _needs_grad(a, b) else ())

        def bw(g):
            _accum(a, dfa(g, a.value, b.value), fresh=fresh[0])
            _accum(b, dfb(g, a.value, b.value), fresh=fresh[1])

        out._backward = bw if out._parents else None
        return out

    op.__name__ = op_name
    return op


add = _elementwise("add", lambda a, b: a + b, lambda g, a, b: g, lambda g, a, b: g)
sub = _elementwise("sub", lambda a, b: a - b, lambda g, a, b: g, lambda g, a, b: -g, fresh=(False, True))
mul = _elementwise("mul", lambda a, b: a * b, lambda g, a, b: g * b, lambda g, a, b: g * a, fresh=(True, True))


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python constant."""
    c = float(c)
    out = Tensor(x.value * c, op="scale", parents=(x,) if _needs_grad(x) else ())
    out._backward = (lambda g: _accum(x, g * c, fresh=True)) if out._parents else None
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)
    out = Tensor(y, op="tanh", parents=(x,) if _needs_grad(x) else ())
    out._backward = (lambda g: _accum(x, g * (1.0 - y * y), fresh=True)) if out._parents else None
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.value, 0.0), op="relu", parents=(x,) if _needs_grad(x) else ())
    out._backward = (lambda g: _accum(x, g * (x.value > 0.0), fresh=True)) if out._parents else None
    return out


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip into [lo, hi]; gradient is identity inside the interval, zero outside."""
    mask = (x.value >= lo) & (x.value <= hi)
    out = Tensor(np.clip(x.value, lo, hi), op="clamp", parents=(x,) if _needs_grad(x) else ())
    out._backward = (lambda g: _accum(x, g * mask, fresh=True)) if out._parents else None
    return out


def log(x: Tensor) -> Tensor:
    with np.errstate(invalid="ignore", divide="ignore"):
        y = np.log(x.value)
    out = Tensor(y, op="log", parents=(x,) if _needs_grad(x) else ())
    out._backward = (lambda g: _accum(x, g / x.value, fresh=True)) if out._parents else None
    return out


def transpose(x: Tensor) -> Tensor:
    out = Tensor(x.value.T, op="transpose", parents=(x,) if _needs_grad(x) else ())
    out._backward = (lambda g: _accum(x, g.T)) if out._parents else None
    return out


def slice_cols(x: Tensor, lo: int, hi: int) -> Tensor:
    """Columns [lo, hi) of a 2-d tensor; backward scatters into place."""
    if x.value.ndim != 2:
        raise GraphError(f"slice_cols needs a 2-d tensor, got {x.value.shape}")
    out = Tensor(x.value[:, lo:hi], op="slice_cols", parents=(x,) if _needs_grad(x) else ())

    def bw(g):
        full = np.zeros_like(x.value)
        full[:, lo:hi] = g
        _accum(x, full, fresh=True)

    out._backward = bw if out._parents else None
    return out


def concat_cols(parts: list[Tensor]) -> Tensor:
    """Column-wise concatenation of 2-d tensors with equal row counts."""
    if not parts or any(p.value.ndim != 2 for p in parts):
        raise GraphError("concat_cols needs a non-empty list of 2-d tensors")
    out = Tensor(np.concatenate([p.value for p in parts], axis=1), op="concat_cols",
                 parents=tuple(parts) if _needs_grad(*parts) else ())

    def bw(g):
        lo = 0
        for p in parts:
            hi = lo + p.value.shape[1]
            _accum(p, g[:, lo:hi])
            lo = hi

    out._backward = bw if out._parents else None
    return out


def total_sum(x: Tensor) -> Tensor:
    out = Tensor(x.value.sum(), op="sum", parents=(x,) if _needs_grad(x) else ())
    out._backward = (lambda g: _accum(x, np.full_like(x.value, float(g)), fresh=True)) if out._parents else None
    return out


def mean_squared_error(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared differences over every element."""
    if pred.value.shape != target.value.shape:
        raise GraphError(f"mse shapes {pred.value.shape} vs {target.value.shape}")
    diff = pred.value - target.value
    n = diff.size
    out = Tensor(np.sum(diff * diff) / n, op="mse", parents=(pred, target) if _needs_grad(pred, target) else ())

    def bw(g):
        _accum(pred, (2.0 * float(g) / n) * diff, fresh=True)
        _accum(target, (-2.0 * float(g) / n) * diff, fresh=True)

    out._backward = bw if out._parents else None
    return out


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean categorical cross-entropy of row softmaxes against integer labels."""
    if logits.value.ndim != 2:
        raise GraphError(f"softmax_cross_entropy needs (B, k) logits, got {logits.value.shape}")
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (logits.value.shape[0],):
        raise GraphError(f"targets shape {targets.shape} for logits {logits.value.shape}")
    z = logits.value - logits.value.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    b = targets.shape[0]
    nll = -(z[np.arange(b), targets] - np.log(ez.sum(axis=1)))
    out = Tensor(nll.mean(), op="softmax_ce", parents=(logits,) if _needs_grad(logits) else ())

    def bw(g):
        d = probs.copy()
        d[np.arange(b), targets] -= 1.0
        _accum(logits, (float(g) / b) * d, fresh=True)

    out._backward = bw if out._parents else None
    return out


def l2_norm(x: Tensor) -> Tensor:
    """Euclidean norm per row for (B, n), or of the whole vector for (n,)."""
    axis = 1 if x.value.ndim == 2 else 0
    norms = np.sqrt(np.sum(x.value * x.value, axis=axis))
    out = Tensor(norms, op="l2_norm", parents=(x,) if _needs_grad(x) else ())

    def bw(g):
        if x.value.ndim == 2:
            _accum(x, (g / norms)[:, None] * x.value, fresh=True)
        else:
            _accum(x, (float(g) / norms) * x.value, fresh=True)

    out._backward = bw if out._parents else None
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise dot product for (B, n) pairs, or plain dot for vectors."""
    if a.value.shape != b.value.shape:
        raise GraphError(f"dot shapes {a.value.shape} vs {b.value.shape}")
    axis = 1 if a.value.ndim == 2 else 0
    out = Tensor(np.sum(a.value * b.value, axis=axis), op="dot", parents=(a, b) if _needs_grad(a, b) else ())

    def bw(g):
        ge = g[:, None] if a.value.ndim == 2 else g
        _accum(a, ge * b.value, fresh=True)
        _accum(b, ge * a.value, fresh=True)

    out._backward = bw if out._parents else None
    return out


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise cosine similarity. Rows must be nonzero."""
    if a.value.shape != b.value.shape:
        raise GraphError(f"cosine shapes {a.value.shape} vs {b.value.shape}")
    av = a.value if a.value.ndim == 2 else a.value[None, :]
    bv = b.value if b.value.ndim == 2 else b.value[None, :]
    na = np.sqrt(np.sum(av * av, axis=1))
    nb = np.sqrt(np.sum(bv * bv, axis=1))
    cos = np.sum(av * bv, axis=1) / (na * nb)
    val = cos if a.value.ndim == 2 else cos[0]
    out = Tensor(val, op="cosine", parents=(a, b) if _needs_grad(a, b) else ())

    def bw(g):
        ge = np.atleast_1d(g)
        ga = ge[:, None] * (bv / (na * nb)[:, None] - (cos / (na * na))[:, None] * av)
        gb = ge[:, None] * (av / (na * nb)[:, None] - (cos / (nb * nb))[:, None] * bv)
        _accum(a, ga if a.value.ndim == 2 else ga[0], fresh=a.value.ndim == 2)
        _accum(b, gb if b.value.ndim == 2 else gb[0], fresh=b.value.ndim == 2)

    out._backward = bw if out._parents else None
    return out


def cosine_matrix(a: Tensor, b: Tensor) -> Tensor:
    """All-pairs cosine similarity: rows of a (B, d) against rows of b (C, d)."""
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[1]:
        raise GraphError(f"cosine_matrix shapes {a.value.shape} vs {b.value.shape}")
    av, bv = a.value, b.value
    na = np.sqrt(np.sum(av * av, axis=1))
    nb = np.sqrt(np.sum(bv * bv, axis=1))
    cos = (av @ bv.T) / np.outer(na, nb)
    out = Tensor(cos, op="cosine_matrix", parents=(a, b) if _needs_grad(a, b) else ())

    def bw(g):
        gn = g / np.outer(na, nb)
        ga = gn @ bv - (np.sum(g * cos, axis=1) / (na * na))[:, None] * av
        gb = gn.T @ av - (np.sum(g * cos, axis=0) / (nb * nb))[:, None] * bv
        _accum(a, ga, fresh=True)
        _accum(b, gb, fresh=True)

    out._backward = bw if out._parents else None
    return out


# Registry used by the finite-difference suite: name -> op with Tensor args only.
SUPPORTED_OPS = {
    "matmul": matmul,
    "bias_add": bias_add,
    "add": add,
    "sub": sub,
    "mul": mul,
    "tanh": tanh,
    "relu": relu,
    "clamp": clamp,
    "log": log,
    "mean_squared_error": mean_squared_error,
    "softmax_cross_entropy": softmax_cross_entropy,
    "l2_norm": l2_norm,
    "dot": dot,
    "cosine": cosine,
    "cosine_matrix": cosine_matrix,
}

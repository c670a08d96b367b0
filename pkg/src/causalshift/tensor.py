"""Dense float64 tensors with reverse-mode automatic differentiation.

Define-by-run: every kernel application records a node on a thread-local
tape, and ``backward`` sweeps the tape in exact reverse creation order.
The sweep consumes the tape, so the next kernel application starts a
fresh graph. Broadcasting is limited to scalar-with-tensor; anything
richer raises :class:`ShapeError`.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Sequence

import numpy as np

DIVISION_GUARD = 1e-12


class ShapeError(ValueError):
    """Operand shapes violate a kernel's contract."""


class GraphError(RuntimeError):
    """Backward invoked on a stale or foreign graph, or on a non-scalar loss."""


class EvaluationError(ArithmeticError):
    """A forward evaluation produced or received non-finite values."""


class DivisionGuardError(EvaluationError):
    """A denominator entry fell inside the division guard band."""


class LabelError(ValueError):
    """A class label lies outside the valid range for the logits."""


class Tensor:
    """A dense float64 array participating in the differentiable graph."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(value) -> Tensor:
    """Wrap numbers and arrays as constant (non-differentiable) tensors."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class _Node:
    __slots__ = ("kernel", "inputs", "out", "grad_fn")

    def __init__(self, kernel: str, inputs: tuple[Tensor, ...], out: Tensor, grad_fn: Callable):
        self.kernel = kernel
        self.inputs = inputs
        self.out = out
        self.grad_fn = grad_fn


class _Tape(threading.local):
    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False


_tape = _Tape()


def reset_graph() -> None:
    """Discard all recorded nodes; the next kernel starts a fresh graph."""
    _tape.nodes.clear()
    _tape.consumed = False


def graph_size() -> int:
    return len(_tape.nodes)


# ---------------------------------------------------------------------------
# Kernel registry
# ---------------------------------------------------------------------------

# name -> callable(tensors, **params) returning (out_data, grad_fn); grad_fn
# maps the upstream gradient to one gradient array (or None) per input.
_KERNELS: dict[str, Callable] = {}


def register_kernel(name: str, fn: Callable) -> None:
    if name in _KERNELS:
        raise ValueError(f"kernel {name!r} already registered")
    _KERNELS[name] = fn


def kernel_names() -> tuple[str, ...]:
    return tuple(_KERNELS)


def apply(kernel: str, inputs: Sequence, **params) -> Tensor:
    """Run a registered kernel on ``inputs`` and record the graph node."""
    try:
        fn = _KERNELS[kernel]
    except KeyError:
        raise ValueError(f"unknown kernel {kernel!r}") from None
    tensors = tuple(as_tensor(t) for t in inputs)
    with np.errstate(over="ignore", invalid="ignore"):
        out_data, grad_fn = fn(tensors, **params)
    out_data = np.asarray(out_data, dtype=np.float64)
    if not np.all(np.isfinite(out_data)):
        raise EvaluationError(f"kernel {kernel!r} produced non-finite values")
    out = Tensor(out_data, requires_grad=any(t.requires_grad for t in tensors))
    if _tape.consumed:
        _tape.nodes.clear()
        _tape.consumed = False
    _tape.nodes.append(_Node(kernel, tensors, out, grad_fn))
    return out


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Accumulate gradients of a scalar ``loss`` into every requires_grad tensor.

    Visits the recorded nodes in exact reverse creation order and consumes
    the graph: calling backward again without a new forward pass raises
    :class:`GraphError`. Returns a map from each requires_grad leaf that
    participated in the graph to its gradient; leaves that do not reach the
    loss receive zeros.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward requires a scalar loss, got shape {loss.shape}")
    if _tape.consumed or not _tape.nodes:
        raise GraphError("graph already consumed; run a new forward pass before backward")
    produced = {id(node.out) for node in _tape.nodes}
    if id(loss) not in produced:
        raise GraphError("loss is not an output of the active graph")

    leaves: dict[int, Tensor] = {}
    for node in _tape.nodes:
        for t in node.inputs:
            if t.requires_grad and id(t) not in produced:
                leaves.setdefault(id(t), t)

    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.data.shape)}
    for node in reversed(_tape.nodes):
        out_grad = grads.pop(id(node.out), None)
        if node.out.requires_grad:
            node.out.grad = out_grad if out_grad is not None else np.zeros(node.out.data.shape)
        if out_grad is None:
            continue
        for t, g in zip(node.inputs, node.grad_fn(out_grad)):
            if g is None or not t.requires_grad:
                continue
            if id(t) in grads:
                grads[id(t)] = grads[id(t)] + g
            else:
                grads[id(t)] = g

    result: dict[Tensor, np.ndarray] = {}
    for t in leaves.values():
        t.grad = grads.get(id(t), np.zeros(t.data.shape))
        result[t] = t.grad
    _tape.nodes.clear()
    _tape.consumed = True
    return result


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def _binary_shapes(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} are neither equal nor scalar-broadcastable")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


def _k_add(tensors, ):
    a, b = tensors
    _binary_shapes("add", a, b)
    out = a.data + b.data

    def grad_fn(up):
        return _unbroadcast(up, a.shape), _unbroadcast(up, b.shape)

    return out, grad_fn


def _k_subtract(tensors):
    a, b = tensors
    _binary_shapes("subtract", a, b)
    out = a.data - b.data

    def grad_fn(up):
        return _unbroadcast(up, a.shape), _unbroadcast(-up, b.shape)

    return out, grad_fn


def _k_multiply(tensors):
    a, b = tensors
    _binary_shapes("multiply", a, b)
    out = a.data * b.data

    def grad_fn(up):
        return _unbroadcast(up * b.data, a.shape), _unbroadcast(up * a.data, b.shape)

    return out, grad_fn


def _k_divide(tensors):
    a, b = tensors
    _binary_shapes("divide", a, b)
    if np.any(np.abs(b.data) < DIVISION_GUARD):
        raise DivisionGuardError(
            f"divide: denominator entry with |value| < {DIVISION_GUARD:g}"
        )
    out = a.data / b.data

    def grad_fn(up):
        return (
            _unbroadcast(up / b.data, a.shape),
            _unbroadcast(-up * a.data / (b.data * b.data), b.shape),
        )

    return out, grad_fn


def _exact_dot(products: np.ndarray) -> float:
    # exactly rounded, hence independent of summand order
    return math.fsum(products.tolist())


def _k_matmul(tensors):
    a, b = tensors
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: operands must be 1-D or 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}")
    # Reductions involving a 1-D operand run over the sample axis, so they
    # use exactly rounded sums: values then do not depend on sample order.
    if a.data.ndim == 1 and b.data.ndim == 2:
        prods = a.data[:, None] * b.data
        out = np.array([_exact_dot(prods[:, j]) for j in range(b.shape[1])])
    elif a.data.ndim == 2 and b.data.ndim == 1:
        prods = a.data * b.data
        out = np.array([_exact_dot(prods[i]) for i in range(a.shape[0])])
    elif a.data.ndim == 1 and b.data.ndim == 1:
        out = np.asarray(_exact_dot(a.data * b.data))
    else:
        out = a.data @ b.data

    def grad_fn(up):
        ad, bd = a.data, b.data
        if ad.ndim == 2 and bd.ndim == 2:
            return up @ bd.T, ad.T @ up
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ up, np.outer(ad, up)
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(up, bd), ad.T @ up
        return up * bd, up * ad

    return out, grad_fn


def _k_relu(tensors):
    (a,) = tensors
    out = np.maximum(a.data, 0.0)

    def grad_fn(up):
        return (up * (a.data > 0.0),)

    return out, grad_fn


def _k_sum(tensors):
    (a,) = tensors
    # exactly rounded full reduction; independent of element order
    out = np.asarray(_exact_dot(a.data.ravel()))

    def grad_fn(up):
        return (np.full(a.data.shape, float(up)),)

    return out, grad_fn


def _k_square(tensors):
    (a,) = tensors
    out = a.data * a.data

    def grad_fn(up):
        return (up * 2.0 * a.data,)

    return out, grad_fn


def _k_scale(tensors, *, factor: float):
    (a,) = tensors
    factor = float(factor)
    out = a.data * factor

    def grad_fn(up):
        return (up * factor,)

    return out, grad_fn


def _normalize_columns(name: str, a: Tensor, columns) -> tuple[list[int], bool]:
    single = isinstance(columns, (int, np.integer))
    cols = [int(columns)] if single else [int(c) for c in columns]
    if not cols:
        raise ShapeError(f"{name}: needs at least one column index")
    width = a.shape[-1] if a.data.ndim else 0
    for c in cols:
        if not 0 <= c < width:
            raise ShapeError(f"{name}: column {c} out of range for shape {a.shape}")
    return cols, single


def _k_column_select(tensors, *, columns):
    (a,) = tensors
    if a.data.ndim not in (1, 2):
        raise ShapeError(f"column_select: input must be 1-D or 2-D, got shape {a.shape}")
    cols, single = _normalize_columns("column_select", a, columns)
    if a.data.ndim == 2:
        out = a.data[:, cols[0]] if single else a.data[:, cols]
    else:
        out = np.asarray(a.data[cols[0]]) if single else a.data[cols]

    def grad_fn(up):
        g = np.zeros(a.data.shape)
        if a.data.ndim == 2:
            idx = (slice(None), cols[0] if single else cols)
        else:
            idx = cols[0] if single else cols
        np.add.at(g, idx, up)
        return (g,)

    return out, grad_fn


def _k_column_concat(tensors):
    if not tensors:
        raise ShapeError("column_concat: needs at least one input")
    blocks = []
    rows = None
    for t in tensors:
        if t.data.ndim == 1:
            block = t.data.reshape(-1, 1)
        elif t.data.ndim == 2:
            block = t.data
        else:
            raise ShapeError(f"column_concat: inputs must be 1-D or 2-D, got shape {t.shape}")
        if rows is None:
            rows = block.shape[0]
        elif block.shape[0] != rows:
            raise ShapeError(
                f"column_concat: row counts disagree ({rows} vs {block.shape[0]} for shape {t.shape})"
            )
        blocks.append(block)
    out = np.concatenate(blocks, axis=1)

    def grad_fn(up):
        grads = []
        start = 0
        for t, block in zip(tensors, blocks):
            stop = start + block.shape[1]
            piece = up[:, start:stop]
            grads.append(piece[:, 0] if t.data.ndim == 1 else piece)
            start = stop
        return tuple(grads)

    return out, grad_fn


def _k_replicate_rows(tensors, *, rows: int):
    (a,) = tensors
    if a.data.ndim != 1:
        raise ShapeError(f"replicate_rows: input must be 1-D, got shape {a.shape}")
    if rows < 1:
        raise ShapeError(f"replicate_rows: row count must be positive, got {rows}")
    out = np.tile(a.data, (rows, 1))

    def grad_fn(up):
        return (up.sum(axis=0),)

    return out, grad_fn


def _k_softmax_cross_entropy(tensors, *, labels):
    (logits,) = tensors
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be 2-D, got shape {logits.shape}")
    y = np.asarray(labels)
    n, k = logits.shape
    if y.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: expected {n} labels, got shape {y.shape}")
    for i, label in enumerate(y):
        if not 0 <= int(label) < k:
            raise LabelError(f"sample {i}: label {int(label)} outside [0, {k})")
    y = y.astype(np.intp)
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=1, keepdims=True)
    # per-sample negative log-likelihood, computed from the shifted logits
    out = np.log(expd.sum(axis=1)) - shifted[np.arange(n), y]

    def grad_fn(up):
        g = probs.copy()
        g[np.arange(n), y] -= 1.0
        return (g * up[:, None],)

    return out, grad_fn


for _name, _fn in [
    ("matmul", _k_matmul),
    ("add", _k_add),
    ("subtract", _k_subtract),
    ("multiply", _k_multiply),
    ("divide", _k_divide),
    ("relu", _k_relu),
    ("sum", _k_sum),
    ("square", _k_square),
    ("scale", _k_scale),
    ("column_select", _k_column_select),
    ("column_concat", _k_column_concat),
    ("replicate_rows", _k_replicate_rows),
    ("softmax_cross_entropy", _k_softmax_cross_entropy),
]:
    register_kernel(_name, _fn)


# Thin call-site helpers; all graph construction funnels through apply().

def add(a, b) -> Tensor:
    return apply("add", (a, b))


def subtract(a, b) -> Tensor:
    return apply("subtract", (a, b))


def multiply(a, b) -> Tensor:
    return apply("multiply", (a, b))


def divide(a, b) -> Tensor:
    return apply("divide", (a, b))


def matmul(a, b) -> Tensor:
    return apply("matmul", (a, b))


def relu(a) -> Tensor:
    return apply("relu", (a,))


def sum_all(a) -> Tensor:
    return apply("sum", (a,))


def square(a) -> Tensor:
    return apply("square", (a,))


def scale(a, factor: float) -> Tensor:
    return apply("scale", (a,), factor=factor)


def column_select(a, columns) -> Tensor:
    return apply("column_select", (a,), columns=columns)


def column_concat(parts: Sequence) -> Tensor:
    return apply("column_concat", tuple(parts))


def replicate_rows(a, rows: int) -> Tensor:
    return apply("replicate_rows", (a,), rows=rows)


def softmax_cross_entropy(logits, labels) -> Tensor:
    return apply("softmax_cross_entropy", (logits,), labels=labels)


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def finite_diff(f: Callable[[np.ndarray], float], params, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate of ``f`` at ``params``.

    ``f`` receives a parameter array of the same shape as ``params`` and must
    return a finite scalar deterministically.
    """
    if h <= 0:
        raise ValueError(f"finite_diff: step must be positive, got {h}")
    base = np.array(params.data if isinstance(params, Tensor) else params, dtype=np.float64)
    grad = np.zeros(base.size)
    flat = base.ravel()
    for i in range(base.size):
        saved = flat[i]
        flat[i] = saved + h
        hi = _eval_scalar(f, base)
        flat[i] = saved - h
        lo = _eval_scalar(f, base)
        flat[i] = saved
        grad[i] = (hi - lo) / (2.0 * h)
    return grad.reshape(base.shape)


def _eval_scalar(f, x: np.ndarray) -> float:
    value = float(f(x))
    if not np.isfinite(value):
        raise EvaluationError(f"finite_diff: objective returned non-finite value {value}")
    return value

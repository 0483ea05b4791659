"""Dense float64 tensors with taped reverse-mode differentiation.

The model code in this package is written against a small set of array
kernels. Each kernel computes its result eagerly with numpy and, when a
tape is active, records a node holding the inputs, the output, a pure
replay function, and a gradient function. Calling :func:`backward` walks
the tape once in reverse and accumulates gradients for the leaf tensors.

Three properties are load bearing and tested:

* Tensors are immutable. ``Tensor.values`` is a read-only array, so a
  recorded forward pass can never be invalidated by a later mutation.
* Tape order is execution order, which is automatically a topological
  order of the dataflow graph. Replaying every node's forward function
  reproduces every cached output bit for bit.
* Every kernel maps finite inputs to finite outputs. There is no bare
  ``log`` or ``exp`` kernel; losses are built from fused, shift-stable
  forms (:func:`logsumexp`, :func:`softplus`, :func:`softmax`).
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import GradientError, ShapeError

Array = np.ndarray

_SIGMOID_LO = np.finfo(np.float64).tiny
_SIGMOID_HI = np.nextafter(1.0, 0.0)


def _freeze(arr: Array) -> Array:
    arr.flags.writeable = False
    return arr


class Tensor:
    """Immutable dense array of float64 values.

    ``requires_grad`` marks a trainable leaf. Tensors produced by kernels
    instead carry a reference to the tape node that created them; leaves
    never do. The constructor copies its input so external buffers stay
    independent of the recorded graph.
    """

    __slots__ = ("_data", "requires_grad", "node")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.array(values, dtype=np.float64, copy=True)
        self._data = _freeze(arr)
        self.requires_grad = bool(requires_grad)
        self.node: Node | None = None

    @classmethod
    def _wrap(cls, arr: Array) -> "Tensor":
        """Adopt a freshly computed array without copying it.

        Internal: callers must hand over ownership of ``arr``.
        """
        out = cls.__new__(cls)
        out._data = _freeze(np.asarray(arr, dtype=np.float64))
        out.requires_grad = False
        out.node = None
        return out

    @property
    def values(self) -> Array:
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    def item(self) -> float:
        if self._data.shape != ():
            raise ShapeError(f"item: tensor has shape {self._data.shape}, expected scalar")
        return float(self._data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class Node:
    """One recorded operation: inputs, output, replay and gradient closures."""

    __slots__ = ("op", "inputs", "output", "forward_fn", "backward_fn")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], output: Tensor,
                 forward_fn: Callable[..., Array],
                 backward_fn: Callable[[Array], tuple[Array | None, ...]]):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.forward_fn = forward_fn
        self.backward_fn = backward_fn


_LOCAL = threading.local()


def _tape_stack() -> list:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of operations, used as a context manager.

    Entering pushes the tape on a thread-local stack; kernels record to
    the innermost active tape. Nodes are appended in execution order,
    which is a valid topological order of the dataflow graph because an
    operation can only consume tensors that already exist.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise GradientError("tape stack corrupted: exiting a tape that is not innermost")
        stack.pop()

    def replay_max_diff(self) -> float:
        """Re-run every node's forward function and compare to its cached output.

        Returns the largest absolute difference found. Deterministic pure
        kernels must return exactly 0.0.
        """
        worst = 0.0
        for node in self.nodes:
            fresh = node.forward_fn(*[t._data for t in node.inputs])
            diff = np.max(np.abs(fresh - node.output._data)) if fresh.size else 0.0
            worst = max(worst, float(diff))
        return worst


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or t.node is not None


def _record(op: str, inputs: tuple[Tensor, ...], out_arr: Array,
            forward_fn: Callable[..., Array],
            backward_fn: Callable[[Array], tuple[Array | None, ...]]) -> Tensor:
    out = Tensor._wrap(out_arr)
    tape = active_tape()
    if tape is not None and any(_tracked(t) for t in inputs):
        node = Node(op, inputs, out, forward_fn, backward_fn)
        out.node = node
        tape.nodes.append(node)
    return out


def _require(cond: bool, op: str, message: str) -> None:
    if not cond:
        raise ShapeError(f"{op}: {message}")


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64))


def parameter(values) -> Tensor:
    return Tensor(values, requires_grad=True)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for the four shape patterns the model uses.

    (m,n)@(n,p) -> (m,p), (m,n)@(n,) -> (m,), (n,)@(n,p) -> (p,),
    and (n,)@(n,) -> scalar dot product.
    """
    av, bv = a.values, b.values
    if av.ndim == 2 and bv.ndim == 2:
        _require(av.shape[1] == bv.shape[0], "matmul",
                 f"inner dimensions differ for {av.shape} @ {bv.shape}")

        def bwd(g: Array):
            return g @ bv.T, av.T @ g
    elif av.ndim == 2 and bv.ndim == 1:
        _require(av.shape[1] == bv.shape[0], "matmul",
                 f"inner dimensions differ for {av.shape} @ {bv.shape}")

        def bwd(g: Array):
            return np.outer(g, bv), av.T @ g
    elif av.ndim == 1 and bv.ndim == 2:
        _require(av.shape[0] == bv.shape[0], "matmul",
                 f"inner dimensions differ for {av.shape} @ {bv.shape}")

        def bwd(g: Array):
            return bv @ g, np.outer(av, g)
    elif av.ndim == 1 and bv.ndim == 1:
        _require(av.shape[0] == bv.shape[0], "matmul",
                 f"inner dimensions differ for {av.shape} @ {bv.shape}")

        def bwd(g: Array):
            return g * bv, g * av
    else:
        raise ShapeError(f"matmul: unsupported ranks for {av.shape} @ {bv.shape}")
    return _record("matmul", (a, b), av @ bv, lambda x, y: x @ y, bwd)


def outer(u: Tensor, v: Tensor) -> Tensor:
    """Outer product (m,) x (n,) -> (m,n)."""
    uv, vv = u.values, v.values
    _require(uv.ndim == 1 and vv.ndim == 1, "outer",
             f"expected two vectors, got {uv.shape} and {vv.shape}")

    def bwd(g: Array):
        return g @ vv, uv @ g

    return _record("outer", (u, v), np.outer(uv, vv), np.outer, bwd)


def transpose(t: Tensor) -> Tensor:
    _require(t.ndim == 2, "transpose", f"expected a matrix, got shape {t.shape}")

    def bwd(g: Array):
        return (g.T,)

    return _record("transpose", (t,), t.values.T.copy(), lambda x: x.T.copy(), bwd)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum. Same shapes, or (m,n)+(n,) adding a vector to every row."""
    av, bv = a.values, b.values
    if av.shape == bv.shape:
        def bwd(g: Array):
            return g, g
    elif av.ndim == 2 and bv.ndim == 1 and av.shape[1] == bv.shape[0]:
        def bwd(g: Array):
            return g, g.sum(axis=0)
    else:
        raise ShapeError(f"add: cannot combine shapes {av.shape} and {bv.shape}")
    return _record("add", (a, b), av + bv, lambda x, y: x + y, bwd)


def add_scalar(a: Tensor, s: Tensor) -> Tensor:
    """Add a scalar tensor to every entry of ``a``."""
    _require(s.shape == (), "add_scalar", f"second operand has shape {s.shape}, expected scalar")
    av = a.values

    def bwd(g: Array):
        return g, np.asarray(g.sum())

    return _record("add_scalar", (a, s), av + s.values, lambda x, y: x + y, bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, "sub", f"shapes differ: {a.shape} vs {b.shape}")

    def bwd(g: Array):
        return g, -g

    return _record("sub", (a, b), a.values - b.values, lambda x, y: x - y, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, "mul", f"shapes differ: {a.shape} vs {b.shape}")
    av, bv = a.values, b.values

    def bwd(g: Array):
        return g * bv, g * av

    return _record("mul", (a, b), av * bv, lambda x, y: x * y, bwd)


def mul_rowvec(m: Tensor, v: Tensor) -> Tensor:
    """Multiply every row of (r,c) matrix ``m`` elementwise by vector ``v`` of length c."""
    mv, vv = m.values, v.values
    _require(mv.ndim == 2 and vv.ndim == 1 and mv.shape[1] == vv.shape[0], "mul_rowvec",
             f"cannot scale rows of {mv.shape} by vector {vv.shape}")

    def bwd(g: Array):
        return g * vv, (g * mv).sum(axis=0)

    return _record("mul_rowvec", (m, v), mv * vv, lambda x, y: x * y, bwd)


def mul_colvec(m: Tensor, u: Tensor) -> Tensor:
    """Multiply row i of (r,c) matrix ``m`` by scalar ``u[i]``."""
    mv, uv = m.values, u.values
    _require(mv.ndim == 2 and uv.ndim == 1 and mv.shape[0] == uv.shape[0], "mul_colvec",
             f"cannot scale columns of {mv.shape} by vector {uv.shape}")

    def bwd(g: Array):
        return g * uv[:, None], (g * mv).sum(axis=1)

    return _record("mul_colvec", (m, u), mv * uv[:, None],
                   lambda x, y: x * y[:, None], bwd)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bwd(g: Array):
        return (g * c,)

    return _record("scale", (a,), a.values * c, lambda x: x * c, bwd)


# ---------------------------------------------------------------------------
# nonlinearities


def tanh(t: Tensor) -> Tensor:
    out = np.tanh(t.values)

    def bwd(g: Array):
        return (g * (1.0 - out * out),)

    return _record("tanh", (t,), out, np.tanh, bwd)


def _sigmoid_values(x: Array) -> Array:
    # Piecewise form avoids overflow in exp; the clip keeps the output
    # strictly inside (0, 1) so downstream code never sees exact 0 or 1.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, _SIGMOID_LO, _SIGMOID_HI)


def sigmoid(t: Tensor) -> Tensor:
    out = _sigmoid_values(t.values)

    def bwd(g: Array):
        return (g * out * (1.0 - out),)

    return _record("sigmoid", (t,), out, _sigmoid_values, bwd)


def _softplus_values(x: Array) -> Array:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus(t: Tensor) -> Tensor:
    """log(1 + exp(x)) in the shift-stable form max(x,0) + log1p(exp(-|x|))."""
    xv = t.values

    def bwd(g: Array):
        return (g * _sigmoid_values(xv),)

    return _record("softplus", (t,), _softplus_values(xv), _softplus_values, bwd)


def _softmax_values(x: Array, axis: int) -> Array:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    """Shift-stable softmax along one axis of a vector or matrix."""
    xv = t.values
    _require(xv.ndim in (1, 2), "softmax", f"expected vector or matrix, got shape {xv.shape}")
    _require(xv.size > 0, "softmax", "input is empty")
    ax = axis if axis >= 0 else xv.ndim + axis
    _require(0 <= ax < xv.ndim, "softmax", f"axis {axis} out of range for shape {xv.shape}")
    out = _softmax_values(xv, ax)

    def bwd(g: Array):
        dot = (g * out).sum(axis=ax, keepdims=True)
        return (out * (g - dot),)

    return _record("softmax", (t,), out, lambda x: _softmax_values(x, ax), bwd)


def logsumexp(t: Tensor) -> Tensor:
    """Shift-stable log(sum(exp(v))) of a vector, returned as a scalar."""
    xv = t.values
    _require(xv.ndim == 1 and xv.size > 0, "logsumexp",
             f"expected a nonempty vector, got shape {xv.shape}")

    def fwd(x: Array) -> Array:
        m = np.max(x)
        return np.asarray(m + np.log(np.sum(np.exp(x - m))))

    def bwd(g: Array):
        return (float(g) * _softmax_values(xv, 0),)

    return _record("logsumexp", (t,), fwd(xv), fwd, bwd)


def logsumexp_cols(t: Tensor) -> Tensor:
    """Column-wise shift-stable log-sum-exp of an (r,c) matrix, giving (c,)."""
    xv = t.values
    _require(xv.ndim == 2 and xv.size > 0, "logsumexp_cols",
             f"expected a nonempty matrix, got shape {xv.shape}")

    def fwd(x: Array) -> Array:
        m = np.max(x, axis=0)
        return m + np.log(np.sum(np.exp(x - m), axis=0))

    def bwd(g: Array):
        return (_softmax_values(xv, 0) * g,)

    return _record("logsumexp_cols", (t,), fwd(xv), fwd, bwd)


# ---------------------------------------------------------------------------
# indexing and reshaping


def index(t: Tensor, i: int) -> Tensor:
    xv = t.values
    _require(xv.ndim == 1, "index", f"expected a vector, got shape {xv.shape}")
    _require(0 <= i < xv.shape[0], "index", f"index {i} out of range for length {xv.shape[0]}")

    def bwd(g: Array):
        out = np.zeros_like(xv)
        out[i] = g
        return (out,)

    return _record("index", (t,), np.asarray(xv[i]), lambda x: np.asarray(x[i]), bwd)


def row(t: Tensor, i: int) -> Tensor:
    xv = t.values
    _require(xv.ndim == 2, "row", f"expected a matrix, got shape {xv.shape}")
    _require(0 <= i < xv.shape[0], "row", f"row {i} out of range for shape {xv.shape}")

    def bwd(g: Array):
        out = np.zeros_like(xv)
        out[i, :] = g
        return (out,)

    return _record("row", (t,), xv[i, :].copy(), lambda x: x[i, :].copy(), bwd)


def column(t: Tensor, j: int) -> Tensor:
    xv = t.values
    _require(xv.ndim == 2, "column", f"expected a matrix, got shape {xv.shape}")
    _require(0 <= j < xv.shape[1], "column", f"column {j} out of range for shape {xv.shape}")

    def bwd(g: Array):
        out = np.zeros_like(xv)
        out[:, j] = g
        return (out,)

    return _record("column", (t,), xv[:, j].copy(), lambda x: x[:, j].copy(), bwd)


def slice_vec(t: Tensor, start: int, stop: int) -> Tensor:
    xv = t.values
    _require(xv.ndim == 1, "slice_vec", f"expected a vector, got shape {xv.shape}")
    _require(0 <= start <= stop <= xv.shape[0], "slice_vec",
             f"slice [{start}:{stop}] out of range for length {xv.shape[0]}")

    def bwd(g: Array):
        out = np.zeros_like(xv)
        out[start:stop] = g
        return (out,)

    return _record("slice_vec", (t,), xv[start:stop].copy(),
                   lambda x: x[start:stop].copy(), bwd)


def select_per_column(t: Tensor, indices: Sequence[int]) -> Tensor:
    """Pick one entry per column: output[j] = t[indices[j], j]."""
    xv = t.values
    idx = np.asarray(indices, dtype=np.intp)
    _require(xv.ndim == 2, "select_per_column", f"expected a matrix, got shape {xv.shape}")
    _require(idx.shape == (xv.shape[1],), "select_per_column",
             f"need one index per column of {xv.shape}, got {idx.shape[0]} indices")
    _require(bool(np.all((idx >= 0) & (idx < xv.shape[0]))), "select_per_column",
             f"row indices out of range for shape {xv.shape}")
    cols = np.arange(xv.shape[1])

    def fwd(x: Array) -> Array:
        return x[idx, cols].copy()

    def bwd(g: Array):
        out = np.zeros_like(xv)
        out[idx, cols] = g
        return (out,)

    return _record("select_per_column", (t,), fwd(xv), fwd, bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    _require(len(tensors) > 0, "concat", "needs at least one tensor")
    ndim = tensors[0].ndim
    _require(all(t.ndim == ndim for t in tensors), "concat",
             f"mixed ranks: {[t.shape for t in tensors]}")
    _require(ndim in (1, 2), "concat", f"expected vectors or matrices, got rank {ndim}")
    if ndim == 1:
        _require(axis == 0, "concat", f"axis {axis} invalid for vectors")
    else:
        _require(axis in (0, 1), "concat", f"axis {axis} invalid for matrices")
        other = 1 - axis
        first = tensors[0].shape[other]
        _require(all(t.shape[other] == first for t in tensors), "concat",
                 f"off-axis sizes differ: {[t.shape for t in tensors]}")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def fwd(*xs: Array) -> Array:
        return np.concatenate(xs, axis=axis)

    def bwd(g: Array):
        if ndim == 1:
            return tuple(g[offsets[i]:offsets[i + 1]].copy() for i in range(len(sizes)))
        if axis == 0:
            return tuple(g[offsets[i]:offsets[i + 1], :].copy() for i in range(len(sizes)))
        return tuple(g[:, offsets[i]:offsets[i + 1]].copy() for i in range(len(sizes)))

    out = np.concatenate([t.values for t in tensors], axis=axis)
    return _record("concat", tuple(tensors), out, fwd, bwd)


def stack_cols(vectors: Sequence[Tensor]) -> Tensor:
    """Stack equal-length vectors as the columns of a matrix."""
    _require(len(vectors) > 0, "stack_cols", "needs at least one vector")
    n = vectors[0].shape
    _require(all(v.ndim == 1 and v.shape == n for v in vectors), "stack_cols",
             f"expected equal-length vectors, got {[v.shape for v in vectors]}")

    def fwd(*xs: Array) -> Array:
        return np.stack(xs, axis=1)

    def bwd(g: Array):
        return tuple(g[:, j].copy() for j in range(len(vectors)))

    out = np.stack([v.values for v in vectors], axis=1)
    return _record("stack_cols", tuple(vectors), out, fwd, bwd)


def stack_rows(vectors: Sequence[Tensor]) -> Tensor:
    """Stack equal-length vectors as the rows of a matrix."""
    _require(len(vectors) > 0, "stack_rows", "needs at least one vector")
    n = vectors[0].shape
    _require(all(v.ndim == 1 and v.shape == n for v in vectors), "stack_rows",
             f"expected equal-length vectors, got {[v.shape for v in vectors]}")

    def fwd(*xs: Array) -> Array:
        return np.stack(xs, axis=0)

    def bwd(g: Array):
        return tuple(g[i, :].copy() for i in range(len(vectors)))

    out = np.stack([v.values for v in vectors], axis=0)
    return _record("stack_rows", tuple(vectors), out, fwd, bwd)


def mean_pool(t: Tensor, axis: int) -> Tensor:
    """Average a matrix along one axis: axis=0 averages across rows."""
    xv = t.values
    _require(xv.ndim == 2, "mean_pool", f"expected a matrix, got shape {xv.shape}")
    _require(axis in (0, 1), "mean_pool", f"axis {axis} invalid for matrices")
    _require(xv.shape[axis] > 0, "mean_pool", f"axis {axis} of shape {xv.shape} is empty")
    count = xv.shape[axis]

    def bwd(g: Array):
        if axis == 0:
            return (np.repeat(g[None, :], count, axis=0) / count,)
        return (np.repeat(g[:, None], count, axis=1) / count,)

    return _record("mean_pool", (t,), xv.mean(axis=axis),
                   lambda x: x.mean(axis=axis), bwd)


def sum_all(t: Tensor) -> Tensor:
    xv = t.values

    def bwd(g: Array):
        return (np.full_like(xv, float(g)),)

    return _record("sum_all", (t,), np.asarray(xv.sum()),
                   lambda x: np.asarray(x.sum()), bwd)


def dropout_apply(t: Tensor, mask: Array, rate: float) -> Tensor:
    """Apply a precomputed 0/1 keep mask with inverted scaling.

    The mask is supplied by the caller (sampled from the training RNG),
    so the kernel itself stays deterministic and replayable.
    """
    _require(0.0 <= rate < 1.0, "dropout_apply", f"rate {rate} outside [0, 1)")
    mask = np.asarray(mask, dtype=np.float64)
    _require(mask.shape == t.shape, "dropout_apply",
             f"mask shape {mask.shape} does not match input {t.shape}")
    keep = 1.0 - rate

    def fwd(x: Array) -> Array:
        return x * mask / keep

    def bwd(g: Array):
        return (g * mask / keep,)

    return _record("dropout_apply", (t,), fwd(t.values), fwd, bwd)


# ---------------------------------------------------------------------------
# differentiation


def backward(tape: Tape, loss: Tensor,
             leaves: Sequence[Tensor] | None = None) -> dict[Tensor, Array]:
    """Accumulate d(loss)/d(leaf) for every gradient-tracked leaf on the tape.

    The loss must be a scalar produced under ``tape``. Returns a dict keyed
    by leaf tensor identity; leaves present on the tape but unreachable
    from the loss get explicit zero gradients. If ``leaves`` is given, the
    result covers exactly those tensors instead of the discovered set.
    """
    if loss.shape != ():
        raise GradientError(f"backward: loss has shape {loss.shape}, expected a scalar")
    if loss.node is None:
        raise GradientError("backward: loss was not produced by a tracked operation")
    if not any(node is loss.node for node in tape.nodes):
        raise GradientError("backward: loss was not recorded on this tape")

    grads: dict[Tensor, Array] = {loss: np.asarray(1.0)}
    discovered: list[Tensor] = []
    seen: set[int] = set()
    for node in reversed(tape.nodes):
        for inp in node.inputs:
            if inp.requires_grad and id(inp) not in seen:
                seen.add(id(inp))
                discovered.append(inp)
        g_out = grads.get(node.output)
        if g_out is None:
            continue
        input_grads = node.backward_fn(g_out)
        if len(input_grads) != len(node.inputs):
            raise GradientError(f"backward: {node.op} returned {len(input_grads)} "
                                f"gradients for {len(node.inputs)} inputs")
        for inp, ig in zip(node.inputs, input_grads):
            if ig is None or not _tracked(inp):
                continue
            prev = grads.get(inp)
            grads[inp] = ig if prev is None else prev + ig

    targets = leaves if leaves is not None else discovered
    result: dict[Tensor, Array] = {}
    for leaf in targets:
        g = grads.get(leaf)
        result[leaf] = np.zeros(leaf.shape) if g is None else np.asarray(g, dtype=np.float64)
    return result


def finite_difference_check(f: Callable[[list[Tensor]], Tensor],
                            params: Sequence[Tensor], h: float = 1e-4) -> float:
    """Compare taped gradients of ``f`` against central finite differences.

    ``f`` maps a list of parameter tensors to a scalar loss tensor and must
    be deterministic. Returns the worst relative error over every entry of
    every parameter, with the difference normalized by
    max(|analytic| + |numeric|, 1e-6).
    """
    params = list(params)
    with Tape() as tape:
        loss = f(params)
    grads = backward(tape, loss, leaves=params)

    def eval_at(replaced: dict[int, Tensor]) -> float:
        trial = [replaced.get(i, p) for i, p in enumerate(params)]
        return f(trial).item()

    worst = 0.0
    for i, p in enumerate(params):
        g = grads[p]
        flat = p.values.ravel()
        for j in range(flat.size):
            bumped = flat.copy()
            bumped[j] += h
            up = eval_at({i: Tensor(bumped.reshape(p.shape), requires_grad=True)})
            bumped[j] -= 2.0 * h
            down = eval_at({i: Tensor(bumped.reshape(p.shape), requires_grad=True)})
            numeric = (up - down) / (2.0 * h)
            analytic = float(g.ravel()[j])
            err = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst
